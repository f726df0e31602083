//! Base integrals tabulated on a uniform time grid.
//!
//! The cosine and sine transforms are advanced in time by complex rotation
//! of per-node phasors, resynchronised with exact `sin_cos` at the start of
//! every block, so a table costs one complex multiply per node and time.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use super::quadrature::{OmegaRule, QuadratureSettings};
use super::{beta_from_k0, ProfileIntegrals, SpatialCombination, SpatialFactors};
use crate::error::{Error, Result};
use crate::model::units::KAPPA;
use crate::model::{BathSpec, SiteNetwork};
use crate::numerics::lagrange4;

const BLOCK: usize = 256;

/// Quadrature metadata recorded with a table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableInfo {
    pub nodes: usize,
    pub panels: usize,
    pub omega_max_cm: f64,
    pub gl_order: usize,
}

#[derive(Debug, Clone)]
pub struct KernelTables {
    spacing: f64,
    kc: Vec<Vec<f64>>,
    ks: Vec<Vec<f64>>,
    spatial: SpatialFactors,
    beta: DMatrix<f64>,
    info: TableInfo,
}

impl KernelTables {
    /// Tabulates on `0, spacing, …, t_max` (`t_max` rounded up to the grid).
    pub fn build(
        network: &SiteNetwork,
        bath: &BathSpec,
        spacing_fs: f64,
        t_max_fs: f64,
        settings: &QuadratureSettings,
    ) -> Result<Self> {
        bath.validate()?;
        if !(spacing_fs > 0.0 && spacing_fs.is_finite())
            || !(t_max_fs >= 0.0 && t_max_fs.is_finite())
        {
            return Err(Error::InvalidModel(format!(
                "invalid kernel grid: spacing {spacing_fs} fs, t_max {t_max_fs} fs"
            )));
        }
        let len = grid_len(spacing_fs, t_max_fs);
        let t_end = (len - 1) as f64 * spacing_fs;
        let spatial = SpatialFactors::new(network, bath)?;
        let rule = OmegaRule::build(&bath.spectral_density, settings, t_end);
        let info = TableInfo {
            nodes: rule.len(),
            panels: rule.panels,
            omega_max_cm: rule.omega_max,
            gl_order: settings.gl_order,
        };
        let integrals = ProfileIntegrals::new(bath, &spatial, rule);
        let refined = ProfileIntegrals::new(
            bath,
            &spatial,
            OmegaRule::build(&bath.spectral_density, &settings.doubled(), t_end),
        );
        for p in 0..integrals.profiles() {
            let scale = integrals.at(p, 0.0).0.abs().max(1e-300);
            for t in [0.0, t_end] {
                let (a, b) = (integrals.at(p, t), refined.at(p, t));
                let d = (a.0 - b.0).abs().max((a.1 - b.1).abs());
                if d > 1e-6 * scale {
                    return Err(Error::Quadrature {
                        quantity: format!("kernel profile {p} at t = {t} fs"),
                        nodes: integrals.rule.len(),
                        value: a.0,
                        refined_nodes: refined.rule.len(),
                        refined_value: b.0,
                    });
                }
            }
        }

        let mut kc = Vec::new();
        let mut ks = Vec::new();
        for p in 0..integrals.profiles() {
            let (c, s) = tabulate(&integrals, p, spacing_fs, len);
            kc.push(c);
            ks.push(s);
        }
        Ok(Self::from_parts(spacing_fs, kc, ks, spatial, info))
    }

    pub(crate) fn from_parts(
        spacing: f64,
        kc: Vec<Vec<f64>>,
        ks: Vec<Vec<f64>>,
        spatial: SpatialFactors,
        info: TableInfo,
    ) -> Self {
        let n = spatial.size();
        let mut beta = DMatrix::from_element(n, n, 1.0);
        for m in 0..n {
            for k in 0..n {
                if m != k {
                    let comb = spatial.lambda((m, k), (m, k));
                    let k0: f64 = comb.terms.iter().map(|&(p, c)| c * kc[p][0]).sum();
                    beta[(m, k)] = beta_from_k0(k0);
                }
            }
        }
        Self {
            spacing,
            kc,
            ks,
            spatial,
            beta,
            info,
        }
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.kc[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t_max(&self) -> f64 {
        (self.len() - 1) as f64 * self.spacing
    }

    pub fn time(&self, index: usize) -> f64 {
        index as f64 * self.spacing
    }

    pub fn info(&self) -> TableInfo {
        self.info
    }

    pub fn spatial(&self) -> &SpatialFactors {
        &self.spatial
    }

    pub fn sites(&self) -> usize {
        self.spatial.size()
    }

    pub fn kc_grid(&self, profile: usize) -> &[f64] {
        &self.kc[profile]
    }

    pub fn ks_grid(&self, profile: usize) -> &[f64] {
        &self.ks[profile]
    }

    /// `β_mn`; one on the diagonal.
    pub fn beta(&self, m: usize, n: usize) -> f64 {
        self.beta[(m, n)]
    }

    pub fn beta_matrix(&self) -> &DMatrix<f64> {
        &self.beta
    }

    fn check_range(&self, t_fs: f64) -> Result<()> {
        if !(t_fs.abs() <= self.t_max() * (1.0 + 1e-12)) {
            return Err(Error::Range {
                t_fs,
                t_max_fs: self.t_max(),
            });
        }
        Ok(())
    }

    /// `(kc_p(t), ks_p(t))` by cubic interpolation; negative times use parity.
    pub fn profile_at(&self, p: usize, t_fs: f64) -> Result<(f64, f64)> {
        self.check_range(t_fs)?;
        let sign = if t_fs < 0.0 { -1.0 } else { 1.0 };
        let x = t_fs.abs() / self.spacing;
        let len = self.len();
        let i = (x.floor() as usize).min(len - 1);
        let frac = x - i as f64;
        if frac == 0.0 {
            return Ok((self.kc[p][i], sign * self.ks[p][i]));
        }
        let start = i as isize - 1;
        let start = start.min(len as isize - 4);
        let sample = |arr: &[f64], odd: bool, j: isize| -> f64 {
            if j < 0 {
                let v = arr[(-j) as usize];
                if odd {
                    -v
                } else {
                    v
                }
            } else {
                arr[j as usize]
            }
        };
        let pos = x - (start + 1) as f64;
        let c = lagrange4(
            [0, 1, 2, 3].map(|o| sample(&self.kc[p], false, start + o)),
            pos,
        );
        let s = lagrange4(
            [0, 1, 2, 3].map(|o| sample(&self.ks[p], true, start + o)),
            pos,
        );
        Ok((c, sign * s))
    }

    /// `K(t)` for a spatial combination.
    pub fn k_comb(&self, comb: &SpatialCombination, t_fs: f64) -> Result<Complex64> {
        let mut out = Complex64::new(0.0, 0.0);
        for &(p, c) in &comb.terms {
            let (kc, ks) = self.profile_at(p, t_fs)?;
            out += Complex64::new(c * kc, -c * ks);
        }
        Ok(out)
    }

    /// `K_mn,pq(t)`.
    pub fn k(&self, mn: (usize, usize), pq: (usize, usize), t_fs: f64) -> Result<Complex64> {
        self.k_comb(&self.spatial.lambda(mn, pq), t_fs)
    }

    /// `f_ij,mn(t)`.
    pub fn f(&self, ij: (usize, usize), mn: (usize, usize), t_fs: f64) -> Result<Complex64> {
        let lam = self.spatial.lambda(ij, mn);
        let lam_p = self.spatial.lambda_prime(ij, mn);
        let mut re = 0.0;
        for &(p, c) in &lam.terms {
            re -= c * self.profile_at(p, t_fs)?.0;
        }
        let mut im = 0.0;
        for &(p, c) in &lam_p.terms {
            im += c * self.profile_at(p, t_fs)?.1;
        }
        Ok(Complex64::new(re, im).exp())
    }

    /// `K` on every grid point.
    pub fn k_series(&self, comb: &SpatialCombination) -> Vec<Complex64> {
        (0..self.len())
            .map(|i| {
                comb.terms
                    .iter()
                    .fold(Complex64::new(0.0, 0.0), |acc, &(p, c)| {
                        acc + Complex64::new(c * self.kc[p][i], -c * self.ks[p][i])
                    })
            })
            .collect()
    }

    /// `f_ij,mn` on every grid point; `None` when it is identically one.
    pub fn f_series(&self, ij: (usize, usize), mn: (usize, usize)) -> Option<Vec<Complex64>> {
        let lam = self.spatial.lambda(ij, mn);
        let lam_p = self.spatial.lambda_prime(ij, mn);
        if lam.is_zero() && lam_p.is_zero() {
            return None;
        }
        Some(
            (0..self.len())
                .map(|i| {
                    let re: f64 = lam.terms.iter().map(|&(p, c)| -c * self.kc[p][i]).sum();
                    let im: f64 = lam_p.terms.iter().map(|&(p, c)| c * self.ks[p][i]).sum();
                    Complex64::new(re, im).exp()
                })
                .collect(),
        )
    }
}

pub(crate) fn grid_len(spacing: f64, t_max: f64) -> usize {
    let steps = t_max / spacing;
    let rounded = steps.round();
    let steps = if (steps - rounded).abs() < 1e-9 * rounded.max(1.0) {
        rounded
    } else {
        steps.ceil()
    };
    steps as usize + 1
}

fn tabulate(
    integrals: &ProfileIntegrals,
    p: usize,
    spacing: f64,
    len: usize,
) -> (Vec<f64>, Vec<f64>) {
    let nodes = &integrals.rule.nodes;
    let cw = integrals.cos_weights(p);
    let sw = integrals.sin_weights(p);
    let steps: Vec<Complex64> = nodes
        .iter()
        .map(|&w| Complex64::from_polar(1.0, KAPPA * w * spacing))
        .collect();
    let blocks: Vec<(Vec<f64>, Vec<f64>)> = (0..len.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK;
            let end = (start + BLOCK).min(len);
            let t0 = start as f64 * spacing;
            let mut phasors: Vec<Complex64> = nodes
                .iter()
                .map(|&w| Complex64::from_polar(1.0, KAPPA * w * t0))
                .collect();
            let mut c = Vec::with_capacity(end - start);
            let mut s = Vec::with_capacity(end - start);
            for _ in start..end {
                let mut acc_c = 0.0;
                let mut acc_s = 0.0;
                for j in 0..phasors.len() {
                    acc_c += cw[j] * phasors[j].re;
                    acc_s += sw[j] * phasors[j].im;
                    phasors[j] *= steps[j];
                }
                c.push(acc_c);
                s.push(acc_s);
            }
            (c, s)
        })
        .collect();
    let mut kc = Vec::with_capacity(len);
    let mut ks = Vec::with_capacity(len);
    for (c, s) in blocks {
        kc.extend(c);
        ks.extend(s);
    }
    (kc, ks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::{phonon_correlation, renormalization_factor};
    use crate::model::presets::*;

    #[test]
    fn grid_length_for_typical_run() {
        let t = KernelTables::build(
            &fmo4_network(),
            &fmo4_bath(),
            0.5,
            1000.0,
            &QuadratureSettings::default(),
        )
        .unwrap();
        assert_eq!(t.len(), 2001);
        assert!(t.k((0, 1), (0, 1), 1000.5).is_err());
    }

    #[test]
    fn table_matches_direct_quadrature() {
        let net = fmo4_network();
        let bath = fmo4_bath();
        let s = QuadratureSettings::default();
        let t = KernelTables::build(&net, &bath, 0.25, 400.0, &s).unwrap();
        let k0 = t.k((0, 1), (0, 1), 0.0).unwrap();
        for &time in &[0.0, 0.25, 13.0, 333.25, 400.0] {
            let a = t.k((0, 1), (0, 1), time).unwrap();
            let b = phonon_correlation(&net, &bath, (0, 1), (0, 1), time, &s).unwrap();
            assert!((a - b).norm() < 1e-10 * k0.norm(), "t={time}: {a} vs {b}");
        }
        let beta = renormalization_factor(&net, &bath, (0, 1), &s).unwrap();
        assert!((t.beta(0, 1) - beta).abs() < 1e-12 * beta);
    }

    #[test]
    fn negative_time_is_conjugate() {
        let t = KernelTables::build(
            &fmo4_network(),
            &fmo4_bath(),
            0.25,
            100.0,
            &QuadratureSettings::default(),
        )
        .unwrap();
        for &time in &[0.1, 0.3, 7.7, 55.0] {
            let a = t.k((0, 1), (0, 1), time).unwrap();
            let b = t.k((0, 1), (0, 1), -time).unwrap();
            assert!((a.conj() - b).norm() < 1e-14);
        }
    }
}
