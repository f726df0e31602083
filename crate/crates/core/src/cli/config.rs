//! Run configuration file.
//!
//! Every quantity carries its unit in the key name and unknown keys are
//! rejected. Presets are expanded on resolution, so the resolved file
//! written next to the outputs describes the run without referring to them.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bath::QuadratureSettings;
use crate::dynamics::{PropagationConfig, PropagatorKind};
use crate::error::{Error, Result};
use crate::model::presets::*;
use crate::model::{BathSpec, CorrelationModel, SiteNetwork, SpectralDensity};
use crate::observables::SpectrumConfig;
use crate::polaron::{CouplingTreatment, InitialState, PolaronFrame};
use crate::rates::XiPhase;

/// Amplitude norms further than this from one are rejected rather than rescaled.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_propagator")]
    pub propagator: PropagatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub model: ModelConfig,
    pub bath: BathConfig,
    pub initial: InitialConfig,
    /// Second initial state, used by the trace-distance analysis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_b: Option<InitialConfig>,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareSection>,
}

fn default_propagator() -> PropagatorKind {
    PropagatorKind::Full
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub site_energies_cm: Option<Vec<f64>>,
    /// Full symmetric matrix; the diagonal is ignored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub couplings_cm: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distances_nm: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathConfig {
    /// `fmo4`, `fmo4-fast` or `fmo4-no-mode`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, rename = "kT_cm", skip_serializing_if = "Option::is_none")]
    pub kt_cm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<CorrelationModel>,
    /// Multiplies the whole spectral density.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral_density: Option<SpectralDensity>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// One-based site index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub site: Option<usize>,
    /// Site amplitudes as `[re, im]` pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_re: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_im: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsConfig {
    pub dt_fs: f64,
    pub t_max_fs: f64,
    pub include_inhomogeneous: bool,
    pub xi_phase: XiPhase,
    pub secular_tol_cm: f64,
    pub markov_t_cap_fs: f64,
    pub coupling_treatment: CouplingTreatment,
    pub quadrature: QuadratureSettings,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        let p = PropagationConfig::default();
        Self {
            dt_fs: p.dt_fs,
            t_max_fs: p.t_max_fs,
            include_inhomogeneous: p.include_inhomogeneous,
            xi_phase: p.xi_phase,
            secular_tol_cm: p.secular_tol_cm,
            markov_t_cap_fs: p.markov_t_cap_fs,
            coupling_treatment: CouplingTreatment::Renormalized,
            quadrature: QuadratureSettings::default(),
        }
    }
}

impl NumericsConfig {
    pub fn propagation(&self) -> PropagationConfig {
        PropagationConfig {
            dt_fs: self.dt_fs,
            t_max_fs: self.t_max_fs,
            include_inhomogeneous: self.include_inhomogeneous,
            xi_phase: self.xi_phase,
            secular_tol_cm: self.secular_tol_cm,
            markov_t_cap_fs: self.markov_t_cap_fs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    /// One-based site whose population is transformed.
    pub site: usize,
    pub pad_factor: usize,
    pub peak_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_frequency_cm: Option<f64>,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        let s = SpectrumConfig::default();
        Self {
            site: 1,
            pad_factor: s.pad_factor,
            peak_fraction: s.peak_fraction,
            min_frequency_cm: s.min_frequency_cm,
        }
    }
}

impl SpectrumSection {
    pub fn config(&self) -> SpectrumConfig {
        SpectrumConfig {
            pad_factor: self.pad_factor,
            peak_fraction: self.peak_fraction,
            min_frequency_cm: self.min_frequency_cm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub propagators: Vec<PropagatorKind>,
}

/// Initial state before the frame exists.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    Site(usize),
    Amplitudes(Vec<Complex64>),
    Density(DMatrix<Complex64>),
}

impl InitialSpec {
    pub fn build(&self, frame: &PolaronFrame) -> Result<InitialState> {
        match self {
            InitialSpec::Site(s) => InitialState::localized(*s, frame),
            InitialSpec::Amplitudes(a) => InitialState::superposition(a, frame),
            InitialSpec::Density(d) => InitialState::new(d.clone(), frame),
        }
    }
}

/// Everything needed to run, with presets expanded.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub config: RunConfig,
    pub network: SiteNetwork,
    pub bath: BathSpec,
    pub initial: InitialSpec,
    pub initial_b: Option<InitialSpec>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serialises")
    }

    pub fn resolve(&self) -> Result<ResolvedRun> {
        let network = resolve_model(&self.model)?;
        let bath = resolve_bath(&self.bath)?;
        let n = network.size();
        let initial = resolve_initial(&self.initial, n, "initial")?;
        let initial_b = self
            .initial_b
            .as_ref()
            .map(|c| resolve_initial(c, n, "initial_b"))
            .transpose()?;
        self.numerics.propagation().validate()?;
        if self.spectrum.site == 0 || self.spectrum.site > n {
            return Err(Error::Config(format!(
                "spectrum.site = {} outside 1..={n}",
                self.spectrum.site
            )));
        }
        let mut config = self.clone();
        config.model = ModelConfig {
            preset: None,
            site_energies_cm: Some(network.site_energies().to_vec()),
            couplings_cm: Some(rows(network.coupling_matrix())),
            distances_nm: network.distances().map(rows),
        };
        config.bath = BathConfig {
            preset: None,
            kt_cm: Some(bath.kt_cm),
            correlation: Some(bath.correlation),
            coupling_scale: None,
            spectral_density: Some(bath.spectral_density.clone()),
        };
        Ok(ResolvedRun {
            config,
            network,
            bath,
            initial,
            initial_b,
        })
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn matrix(name: &str, r: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>> {
    if r.len() != n || r.iter().any(|row| row.len() != n) {
        return Err(Error::Config(format!("{name} must be a {n}x{n} matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| r[i][j]))
}

fn resolve_model(m: &ModelConfig) -> Result<SiteNetwork> {
    let explicit = m.site_energies_cm.is_some() || m.couplings_cm.is_some();
    let mut net = match (&m.preset, explicit) {
        (Some(_), true) => {
            return Err(Error::Config(
                "model: give either preset or site_energies_cm/couplings_cm, not both".into(),
            ))
        }
        (Some(p), false) if p == "fmo4" => fmo4_network(),
        (Some(p), false) => {
            return Err(Error::Config(format!(
                "model: unknown preset '{p}' (expected fmo4)"
            )))
        }
        (None, _) => {
            let eps = m
                .site_energies_cm
                .clone()
                .ok_or_else(|| Error::Config("model: site_energies_cm missing".into()))?;
            let n = eps.len();
            let v = m
                .couplings_cm
                .as_ref()
                .ok_or_else(|| Error::Config("model: couplings_cm missing".into()))?;
            SiteNetwork::new(eps, matrix("model.couplings_cm", v, n)?, None)?
        }
    };
    if let Some(d) = &m.distances_nm {
        let n = net.size();
        net = net.with_distances(matrix("model.distances_nm", d, n)?)?;
    }
    Ok(net)
}

fn resolve_bath(b: &BathConfig) -> Result<BathSpec> {
    let base = match b.preset.as_deref() {
        None => None,
        Some("fmo4") => Some(fmo4_bath()),
        Some("fmo4-fast") => Some(fmo4_fast_bath()),
        Some("fmo4-no-mode") => {
            Some(fmo4_bath().with_spectral_density(fmo4_spectral_density().without_mode()))
        }
        Some(p) => {
            return Err(Error::Config(format!(
                "bath: unknown preset '{p}' (expected fmo4, fmo4-fast or fmo4-no-mode)"
            )))
        }
    };
    let sd = match (&b.spectral_density, &base) {
        (Some(sd), _) => sd.clone(),
        (None, Some(base)) => base.spectral_density.clone(),
        (None, None) => {
            return Err(Error::Config(
                "bath: spectral_density or preset required".into(),
            ))
        }
    };
    let kt = b
        .kt_cm
        .or(base.as_ref().map(|x| x.kt_cm))
        .ok_or_else(|| Error::Config("bath: kT_cm required without a preset".into()))?;
    let correlation = b
        .correlation
        .or(base.as_ref().map(|x| x.correlation))
        .unwrap_or(CorrelationModel::Independent);
    let sd = match b.coupling_scale {
        Some(f) if !(f.is_finite() && f >= 0.0) => {
            return Err(Error::Config(format!(
                "bath.coupling_scale must be >= 0, got {f}"
            )))
        }
        Some(f) => sd.scaled(f),
        None => sd,
    };
    BathSpec::new(kt, correlation, sd)
}

fn resolve_initial(c: &InitialConfig, n: usize, name: &str) -> Result<InitialSpec> {
    let forms = [
        c.site.is_some(),
        c.amplitudes.is_some(),
        c.density_re.is_some(),
    ];
    if forms.iter().filter(|&&f| f).count() != 1 {
        return Err(Error::Config(format!(
            "{name}: give exactly one of site, amplitudes or density_re"
        )));
    }
    if c.density_im.is_some() && c.density_re.is_none() {
        return Err(Error::Config(format!(
            "{name}: density_im needs density_re"
        )));
    }
    if let Some(s) = c.site {
        if s == 0 || s > n {
            return Err(Error::Config(format!("{name}.site = {s} outside 1..={n}")));
        }
        return Ok(InitialSpec::Site(s - 1));
    }
    if let Some(a) = &c.amplitudes {
        if a.len() != n {
            return Err(Error::Config(format!(
                "{name}: {} amplitudes for {n} sites",
                a.len()
            )));
        }
        let amps: Vec<Complex64> = a.iter().map(|[re, im]| Complex64::new(*re, *im)).collect();
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Config(format!(
                "{name}: amplitudes have norm {norm}, expected 1"
            )));
        }
        if norm != 1.0 {
            log::warn!("{name}: amplitudes renormalised from norm {norm}");
        }
        return Ok(InitialSpec::Amplitudes(amps));
    }
    let re = matrix(
        &format!("{name}.density_re"),
        c.density_re.as_ref().unwrap(),
        n,
    )?;
    let im = match &c.density_im {
        Some(m) => matrix(&format!("{name}.density_im"), m, n)?,
        None => DMatrix::zeros(n, n),
    };
    Ok(InitialSpec::Density(DMatrix::from_fn(n, n, |i, j| {
        Complex64::new(re[(i, j)], im[(i, j)])
    })))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[model]
preset = "fmo4"

[bath]
preset = "fmo4"

[initial]
site = 1
"#;

    #[test]
    fn minimal_config_resolves_to_presets() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        let r = c.resolve().unwrap();
        assert_eq!(r.network, fmo4_network());
        assert_eq!(r.bath, fmo4_bath());
        assert_eq!(r.initial, InitialSpec::Site(0));
        assert_eq!(c.propagator, PropagatorKind::Full);
    }

    #[test]
    fn resolved_config_round_trips() {
        let r = RunConfig::from_toml(MINIMAL).unwrap().resolve().unwrap();
        let again = RunConfig::from_toml(&r.config.to_toml())
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(again.config, r.config);
        assert_eq!(again.bath, r.bath);
        assert_eq!(again.network, r.network);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("site = 1", "site = 1\ntemperature = 3");
        let e = RunConfig::from_toml(&text).unwrap_err();
        assert!(e.to_string().contains("temperature"), "{e}");
        assert!(e.is_input_error());
    }

    #[test]
    fn site_out_of_range_is_rejected() {
        let text = MINIMAL.replace("site = 1", "site = 9");
        assert!(RunConfig::from_toml(&text).unwrap().resolve().is_err());
    }

    #[test]
    fn amplitude_normalisation() {
        let ok = MINIMAL.replace("site = 1", "amplitudes = [[0.7071067811865476, 0.0], [0.7071067811865476, 0.0], [0.0, 0.0], [0.0, 0.0]]");
        assert!(RunConfig::from_toml(&ok).unwrap().resolve().is_ok());
        let bad = MINIMAL.replace(
            "site = 1",
            "amplitudes = [[0.8, 0.0], [0.7, 0.0], [0.0, 0.0], [0.0, 0.0]]",
        );
        assert!(RunConfig::from_toml(&bad).unwrap().resolve().is_err());
    }

    #[test]
    fn two_initial_forms_are_rejected() {
        let text = MINIMAL.replace("site = 1", "site = 1\ndensity_re = [[1.0]]");
        assert!(RunConfig::from_toml(&text).unwrap().resolve().is_err());
    }

    #[test]
    fn weak_scale_multiplies_the_whole_density() {
        let text = MINIMAL.replace(
            "preset = \"fmo4\"\n\n[initial]",
            "preset = \"fmo4\"\ncoupling_scale = 1e-3\n\n[initial]",
        );
        let r = RunConfig::from_toml(&text).unwrap().resolve().unwrap();
        assert_eq!(r.bath, fmo4_weak_bath(1e-3));
    }
}
