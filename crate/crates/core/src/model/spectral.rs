//! Phonon spectral density.
//!
//! The density is a super-Ohmic continuum plus an optional damped
//! vibrational mode:
//!
//! ```text
//! J(ω) = s0 J0(ω) + sH JH(ω)
//! J0(ω) = (1/N) Σ_i s_i ω⁵ / (7! · 2 · ω_i⁴) · exp(-sqrt(ω/ω_i))
//! JH(ω) = (2 ωH / π) · ω³ ε / ((ω² - ωH²)² + ε² ω²)
//! ```
//!
//! `N` is the continuum normalisation, equal to `Σ s_i` unless frozen
//! explicitly (see [`SpectralDensity::rescaled_continuum`]). Each continuum
//! term peaks at `ω = 100 ω_i` and contributes `72 s_i ω_i / N` to the
//! reorganisation energy `∫ J(ω)/ω dω`; the mode contributes `sH ωH`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

const FACTORIAL_7: f64 = 5040.0;

/// One term of the continuum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuumTerm {
    pub weight: f64,
    pub cutoff_cm: f64,
}

/// Damped vibrational mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LorentzianMode {
    pub weight: f64,
    pub frequency_cm: f64,
    pub broadening_cm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralDensity {
    pub continuum_scale: f64,
    pub continuum_norm: f64,
    pub continuum: Vec<ContinuumTerm>,
    pub mode: Option<LorentzianMode>,
}

impl SpectralDensity {
    /// Builds a density whose continuum normalisation is the sum of the term weights.
    pub fn new(
        continuum_scale: f64,
        continuum: Vec<ContinuumTerm>,
        mode: Option<LorentzianMode>,
    ) -> Result<Self> {
        let norm: f64 = continuum.iter().map(|t| t.weight).sum();
        let norm = if continuum.is_empty() { 1.0 } else { norm };
        Self::with_norm(continuum_scale, norm, continuum, mode)
    }

    pub fn with_norm(
        continuum_scale: f64,
        continuum_norm: f64,
        continuum: Vec<ContinuumTerm>,
        mode: Option<LorentzianMode>,
    ) -> Result<Self> {
        let sd = Self {
            continuum_scale,
            continuum_norm,
            continuum,
            mode,
        };
        sd.validate()?;
        Ok(sd)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        if !(self.continuum_scale.is_finite() && self.continuum_scale >= 0.0) {
            return bad(format!(
                "continuum scale must be >= 0, got {}",
                self.continuum_scale
            ));
        }
        if !(self.continuum_norm.is_finite() && self.continuum_norm > 0.0) {
            return bad(format!(
                "continuum normalisation must be > 0, got {}",
                self.continuum_norm
            ));
        }
        for t in &self.continuum {
            if !(t.weight.is_finite() && t.weight >= 0.0) {
                return bad(format!("continuum weight must be >= 0, got {}", t.weight));
            }
            if !(t.cutoff_cm.is_finite() && t.cutoff_cm > 0.0) {
                return bad(format!("continuum cutoff must be > 0, got {}", t.cutoff_cm));
            }
        }
        if let Some(m) = &self.mode {
            if !(m.weight.is_finite() && m.weight >= 0.0) {
                return bad(format!("mode weight must be >= 0, got {}", m.weight));
            }
            if !(m.frequency_cm.is_finite() && m.frequency_cm > 0.0) {
                return bad(format!(
                    "mode frequency must be > 0, got {}",
                    m.frequency_cm
                ));
            }
            if !(m.broadening_cm.is_finite() && m.broadening_cm > 0.0) {
                return bad(format!(
                    "mode broadening must be > 0, got {}",
                    m.broadening_cm
                ));
            }
        }
        Ok(())
    }

    /// `J(ω)` for `ω >= 0`.
    pub fn eval(&self, omega_cm: f64) -> Result<f64> {
        if !(omega_cm >= 0.0) {
            return Err(Error::Domain(format!(
                "spectral density requires omega >= 0, got {omega_cm}"
            )));
        }
        Ok(self.value(omega_cm))
    }

    /// `J(ω)` without the domain check. Negative arguments return 0.
    #[inline]
    pub fn value(&self, omega_cm: f64) -> f64 {
        if omega_cm <= 0.0 {
            return 0.0;
        }
        self.continuum_value(omega_cm) + self.mode_value(omega_cm)
    }

    /// `J` continued as an odd function of ω.
    #[inline]
    pub fn odd_value(&self, omega_cm: f64) -> f64 {
        omega_cm.signum() * self.value(omega_cm.abs())
    }

    /// Weighted continuum part `s0 J0(ω)`.
    pub fn continuum_value(&self, omega_cm: f64) -> f64 {
        if omega_cm <= 0.0 || self.continuum_scale == 0.0 {
            return 0.0;
        }
        let w5 = omega_cm.powi(5);
        let sum: f64 = self
            .continuum
            .iter()
            .map(|t| {
                t.weight * w5 / (FACTORIAL_7 * 2.0 * t.cutoff_cm.powi(4))
                    * (-(omega_cm / t.cutoff_cm).sqrt()).exp()
            })
            .sum();
        self.continuum_scale * sum / self.continuum_norm
    }

    /// Weighted mode part `sH JH(ω)`.
    pub fn mode_value(&self, omega_cm: f64) -> f64 {
        match &self.mode {
            Some(m) if omega_cm > 0.0 && m.weight != 0.0 => {
                let wh = m.frequency_cm;
                let eps = m.broadening_cm;
                let w2 = omega_cm * omega_cm;
                let den = (w2 - wh * wh).powi(2) + eps * eps * w2;
                m.weight * (2.0 * wh / PI) * omega_cm.powi(3) * eps / den
            }
            _ => 0.0,
        }
    }

    /// `lim_{ω→0} J(ω)/ω³`.
    pub fn cubic_coefficient(&self) -> f64 {
        match &self.mode {
            Some(m) => {
                m.weight * (2.0 * m.frequency_cm / PI) * m.broadening_cm / m.frequency_cm.powi(4)
            }
            None => 0.0,
        }
    }

    /// Closed-form `∫ J(ω)/ω dω`.
    pub fn reorganization_energy_exact(&self) -> f64 {
        let cont: f64 = self
            .continuum
            .iter()
            .map(|t| 72.0 * t.weight * t.cutoff_cm)
            .sum::<f64>()
            * self.continuum_scale
            / self.continuum_norm;
        let mode = self.mode.map(|m| m.weight * m.frequency_cm).unwrap_or(0.0);
        cont + mode
    }

    /// `d(s0 J0)/dω`.
    fn continuum_slope(&self, omega_cm: f64) -> f64 {
        let w4 = omega_cm.powi(4);
        let sum: f64 = self
            .continuum
            .iter()
            .map(|t| {
                let r = (omega_cm / t.cutoff_cm).sqrt();
                t.weight * w4 / (FACTORIAL_7 * 2.0 * t.cutoff_cm.powi(4))
                    * (-r).exp()
                    * (5.0 - 0.5 * r)
            })
            .sum();
        self.continuum_scale * sum / self.continuum_norm
    }

    /// Location of the continuum maximum: coarse log-grid search, then
    /// bisection on the analytic slope.
    pub fn continuum_peak_cm(&self) -> Option<f64> {
        if self.continuum.is_empty() || self.continuum_scale == 0.0 {
            return None;
        }
        let lo = self
            .continuum
            .iter()
            .map(|t| t.cutoff_cm)
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .continuum
            .iter()
            .map(|t| t.cutoff_cm)
            .fold(0.0, f64::max);
        let (a, b) = (lo, 1e4 * hi);
        let n = 4000;
        let ratio = (b / a).ln() / n as f64;
        let mut best = (a, self.continuum_value(a));
        for k in 0..=n {
            let w = a * (ratio * k as f64).exp();
            let v = self.continuum_value(w);
            if v > best.1 {
                best = (w, v);
            }
        }
        let step = ratio.exp();
        let (mut x0, mut x1) = (best.0 / step, best.0 * step);
        for _ in 0..200 {
            let mid = 0.5 * (x0 + x1);
            if self.continuum_slope(mid) > 0.0 {
                x0 = mid;
            } else {
                x1 = mid;
            }
        }
        Some(0.5 * (x0 + x1))
    }

    /// Overall coupling strength scaled by `factor` (continuum and mode alike).
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.continuum_scale *= factor;
        if let Some(m) = out.mode.as_mut() {
            m.weight *= factor;
        }
        out
    }

    pub fn without_mode(&self) -> Self {
        Self {
            mode: None,
            ..self.clone()
        }
    }

    pub fn with_mode_weight(&self, weight: f64) -> Self {
        let mut out = self.clone();
        if let Some(m) = out.mode.as_mut() {
            m.weight = weight;
        }
        out
    }

    /// Shifts every continuum cutoff up by `factor` and divides its weight by
    /// the same factor. The normalisation stays frozen, so the continuum
    /// reorganisation energy is unchanged.
    pub fn rescaled_continuum(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for t in out.continuum.iter_mut() {
            t.cutoff_cm *= factor;
            t.weight /= factor;
        }
        out
    }

    /// Largest characteristic frequency, used to size quadrature ranges.
    pub fn max_cutoff_cm(&self) -> f64 {
        self.continuum
            .iter()
            .map(|t| t.cutoff_cm)
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(cutoff: f64) -> SpectralDensity {
        SpectralDensity::new(
            1.0,
            vec![ContinuumTerm {
                weight: 1.0,
                cutoff_cm: cutoff,
            }],
            None,
        )
        .unwrap()
    }

    #[test]
    fn mode_value_at_resonance() {
        let sd = SpectralDensity::new(
            0.0,
            vec![],
            Some(LorentzianMode {
                weight: 1.0,
                frequency_cm: 180.0,
                broadening_cm: 50.0,
            }),
        )
        .unwrap();
        let expected = 2.0 * 180.0 * 180.0 / (PI * 50.0);
        assert!((sd.value(180.0) - expected).abs() < 1e-10);
        assert!((sd.value(180.0) - 412.529).abs() < 1e-3);
    }

    #[test]
    fn single_term_peak() {
        let sd = single(1.5);
        let peak = sd.continuum_peak_cm().unwrap();
        assert!((peak - 150.0).abs() < 1e-9, "peak {peak}");
    }

    #[test]
    fn negative_frequency_is_a_domain_error() {
        assert!(matches!(single(1.0).eval(-1.0), Err(Error::Domain(_))));
        assert_eq!(single(1.0).eval(0.0).unwrap(), 0.0);
    }

    #[test]
    fn odd_extension() {
        let sd = single(2.0);
        assert_eq!(sd.odd_value(-30.0), -sd.value(30.0));
    }

    #[test]
    fn rescaled_continuum_keeps_reorganization() {
        let sd = SpectralDensity::new(
            0.5,
            vec![
                ContinuumTerm {
                    weight: 0.8,
                    cutoff_cm: 0.55,
                },
                ContinuumTerm {
                    weight: 0.5,
                    cutoff_cm: 1.9,
                },
            ],
            None,
        )
        .unwrap();
        let fast = sd.rescaled_continuum(10.0);
        let (a, b) = (
            sd.reorganization_energy_exact(),
            fast.reorganization_energy_exact(),
        );
        assert!(((a - b) / a).abs() < 1e-14);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(SpectralDensity::new(-1.0, vec![], None).is_err());
        assert!(SpectralDensity::new(
            1.0,
            vec![ContinuumTerm {
                weight: 1.0,
                cutoff_cm: 0.0
            }],
            None
        )
        .is_err());
    }
}
