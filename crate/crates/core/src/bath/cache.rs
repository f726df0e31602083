//! On-disk cache for kernel tables, keyed by a SHA-256 of the canonical
//! parameter set. A file is a magic tag, the key, the table dimensions and
//! the raw little-endian `f64` arrays.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::quadrature::{OmegaRule, QuadratureSettings};
use super::tables::{KernelTables, TableInfo};
use super::SpatialFactors;
use crate::error::{Error, Result};
use crate::model::{BathSpec, SiteNetwork};

const MAGIC: &[u8; 8] = b"PTCLKRN1";

/// Environment variable naming the default cache directory.
pub const CACHE_ENV: &str = "POLARON_TCL_CACHE";

#[derive(Serialize)]
struct CacheKey<'a> {
    format: u32,
    site_energies_cm: &'a [f64],
    couplings_cm: Vec<Vec<f64>>,
    distances_nm: Option<Vec<Vec<f64>>>,
    bath: &'a BathSpec,
    spacing_fs: f64,
    t_max_fs: f64,
    quadrature: &'a QuadratureSettings,
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Hex digest identifying a table.
pub fn cache_key(
    network: &SiteNetwork,
    bath: &BathSpec,
    spacing_fs: f64,
    t_max_fs: f64,
    settings: &QuadratureSettings,
) -> String {
    let key = CacheKey {
        format: 1,
        site_energies_cm: network.site_energies(),
        couplings_cm: rows(network.coupling_matrix()),
        distances_nm: network.distances().map(rows),
        bath,
        spacing_fs,
        t_max_fs,
        quadrature: settings,
    };
    let text = toml::to_string(&key).expect("cache key serialises");
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone)]
pub struct KernelCache {
    dir: PathBuf,
}

impl KernelCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// Cache rooted at `$POLARON_TCL_CACHE`, if set.
    pub fn from_env() -> Option<Self> {
        std::env::var_os(CACHE_ENV).map(|d| Self::new(PathBuf::from(d)))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("kernels-{key}.bin"))
    }

    /// Loads a matching table or builds and stores a new one.
    pub fn load_or_build(
        &self,
        network: &SiteNetwork,
        bath: &BathSpec,
        spacing_fs: f64,
        t_max_fs: f64,
        settings: &QuadratureSettings,
    ) -> Result<KernelTables> {
        let key = cache_key(network, bath, spacing_fs, t_max_fs, settings);
        let path = self.path(&key);
        if path.exists() {
            match self.read(&path, &key, network, bath, spacing_fs, settings) {
                Ok(t) => {
                    log::info!("kernel cache hit {}", path.display());
                    return Ok(t);
                }
                Err(e) => log::warn!("ignoring unreadable cache file {}: {e}", path.display()),
            }
        }
        let tables = KernelTables::build(network, bath, spacing_fs, t_max_fs, settings)?;
        self.write(&path, &key, &tables)?;
        Ok(tables)
    }

    fn write(&self, path: &Path, key: &str, t: &KernelTables) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let profiles = t.spatial().profiles().len();
        let mut buf = Vec::with_capacity(64 + 16 * profiles * t.len());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&hex::decode(key).expect("hex key"));
        buf.extend_from_slice(&(profiles as u64).to_le_bytes());
        buf.extend_from_slice(&(t.len() as u64).to_le_bytes());
        buf.extend_from_slice(&(t.info().nodes as u64).to_le_bytes());
        buf.extend_from_slice(&(t.info().panels as u64).to_le_bytes());
        for p in 0..profiles {
            for v in t.kc_grid(p).iter().chain(t.ks_grid(p)) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let tmp = path.with_extension("tmp");
        fs::File::create(&tmp)?.write_all(&buf)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    fn read(
        &self,
        path: &Path,
        key: &str,
        network: &SiteNetwork,
        bath: &BathSpec,
        spacing_fs: f64,
        settings: &QuadratureSettings,
    ) -> Result<KernelTables> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        let corrupt = || Error::Cache(format!("corrupt cache file {}", path.display()));
        if bytes.len() < 72 || &bytes[..8] != MAGIC {
            return Err(corrupt());
        }
        if bytes[8..40] != hex::decode(key).expect("hex key")[..] {
            return Err(Error::Cache("cache key mismatch".into()));
        }
        let word = |i: usize| {
            u64::from_le_bytes(bytes[40 + 8 * i..48 + 8 * i].try_into().unwrap()) as usize
        };
        let (profiles, len, nodes, panels) = (word(0), word(1), word(2), word(3));
        let spatial = SpatialFactors::new(network, bath)?;
        if profiles != spatial.profiles().len() || bytes.len() != 72 + 16 * profiles * len {
            return Err(corrupt());
        }
        let mut offset = 72;
        let mut next = |n: usize| -> Vec<f64> {
            let out = bytes[offset..offset + 8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            offset += 8 * n;
            out
        };
        let mut kc = Vec::new();
        let mut ks = Vec::new();
        for _ in 0..profiles {
            kc.push(next(len));
            ks.push(next(len));
        }
        let omega_max = OmegaRule::build(&bath.spectral_density, settings, 0.0).omega_max;
        let info = TableInfo {
            nodes,
            panels,
            omega_max_cm: omega_max,
            gl_order: settings.gl_order,
        };
        Ok(KernelTables::from_parts(spacing_fs, kc, ks, spatial, info))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets::*;

    #[test]
    fn roundtrip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cache = KernelCache::new(dir.path());
        let (net, bath, s) = (fmo4_network(), fmo4_bath(), QuadratureSettings::default());
        let a = cache.load_or_build(&net, &bath, 0.5, 50.0, &s).unwrap();
        let b = cache.load_or_build(&net, &bath, 0.5, 50.0, &s).unwrap();
        for p in 0..a.spatial().profiles().len() {
            assert_eq!(a.kc_grid(p), b.kc_grid(p));
            assert_eq!(a.ks_grid(p), b.ks_grid(p));
        }
        assert_eq!(a.beta_matrix(), b.beta_matrix());
    }

    #[test]
    fn key_depends_on_parameters() {
        let (net, bath, s) = (fmo4_network(), fmo4_bath(), QuadratureSettings::default());
        let a = cache_key(&net, &bath, 0.5, 50.0, &s);
        let b = cache_key(&net, &bath, 0.5, 60.0, &s);
        let c = cache_key(&net, &fmo4_fast_bath(), 0.5, 50.0, &s);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, cache_key(&net, &bath, 0.5, 50.0, &s));
    }

    #[test]
    fn corrupt_file_is_rebuilt() {
        let dir = tempfile::tempdir().unwrap();
        let cache = KernelCache::new(dir.path());
        let (net, bath, s) = (fmo4_network(), fmo4_bath(), QuadratureSettings::default());
        let a = cache.load_or_build(&net, &bath, 0.5, 20.0, &s).unwrap();
        let key = cache_key(&net, &bath, 0.5, 20.0, &s);
        fs::write(cache.path(&key), b"garbage").unwrap();
        let b = cache.load_or_build(&net, &bath, 0.5, 20.0, &s).unwrap();
        assert_eq!(a.kc_grid(0), b.kc_grid(0));
    }
}
