//! Composite Gauss-Legendre rule on `[0, ω_max]`.
//!
//! Panels shrink geometrically towards ω = 0 (where the continuum has a
//! `sqrt(ω)` branch point), are at most a fixed phase wide for the longest
//! time of interest, and are refined across and graded towards the
//! vibrational resonance.

use serde::{Deserialize, Serialize};

use crate::model::units::KAPPA;
use crate::model::SpectralDensity;
use crate::numerics::gauss_legendre;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSettings {
    /// Gauss-Legendre points per panel.
    pub gl_order: usize,
    /// Upper integration limit; derived from the spectral density when absent.
    pub omega_max_cm: Option<f64>,
    /// Panel width away from the origin before relative growth kicks in.
    pub base_panel_cm: f64,
    /// Panels may grow to this fraction of their left edge.
    pub relative_panel: f64,
    /// Largest phase `κ ω t_max` accumulated across one panel.
    pub phase_per_panel: f64,
    /// Number of geometric halvings below the first uniform panel.
    pub geometric_levels: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            gl_order: 12,
            omega_max_cm: None,
            base_panel_cm: 5.0,
            relative_panel: 0.25,
            phase_per_panel: 3.0,
            geometric_levels: 48,
        }
    }
}

impl QuadratureSettings {
    /// Same panels with twice the nodes per panel.
    pub fn doubled(&self) -> Self {
        Self {
            gl_order: 2 * self.gl_order,
            ..*self
        }
    }
}

/// Default upper frequency limit for a spectral density.
pub fn default_omega_max(sd: &SpectralDensity) -> f64 {
    let mode = sd.mode.map(|m| 20.0 * m.frequency_cm).unwrap_or(0.0);
    4000.0_f64.max(mode).max(4000.0 * sd.max_cutoff_cm())
}

#[derive(Debug, Clone)]
pub struct OmegaRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub omega_max: f64,
    pub panels: usize,
}

impl OmegaRule {
    /// Rule resolving `cos(κ ω t)` for `t <= t_max_fs`.
    pub fn build(sd: &SpectralDensity, settings: &QuadratureSettings, t_max_fs: f64) -> Self {
        Self::from_edges(&panel_edges(sd, settings, t_max_fs), settings.gl_order)
    }

    /// Gauss-Legendre rule of the given order on each panel.
    pub fn from_edges(edges: &[f64], gl_order: usize) -> Self {
        let (gx, gw) = gauss_legendre(gl_order);
        let mut nodes = Vec::with_capacity((edges.len() - 1) * gx.len());
        let mut weights = Vec::with_capacity(nodes.capacity());
        for pair in edges.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (x, w) in gx.iter().zip(&gw) {
                nodes.push(mid + half * x);
                weights.push(half * w);
            }
        }
        Self {
            nodes,
            weights,
            omega_max: *edges.last().unwrap_or(&0.0),
            panels: edges.len().saturating_sub(1),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Panel edges on `[0, ω_max]` for [`OmegaRule::build`].
pub fn panel_edges(sd: &SpectralDensity, settings: &QuadratureSettings, t_max_fs: f64) -> Vec<f64> {
    let omega_max = settings
        .omega_max_cm
        .unwrap_or_else(|| default_omega_max(sd));
    let phase_width = if t_max_fs > 0.0 {
        settings.phase_per_panel / (KAPPA * t_max_fs)
    } else {
        f64::INFINITY
    };
    let w0 = settings.base_panel_cm.min(phase_width).min(omega_max);
    let window = sd.mode.map(|m| {
        (
            (m.frequency_cm - 6.0 * m.broadening_cm).max(0.0),
            m.frequency_cm + 6.0 * m.broadening_cm,
            m.broadening_cm / 5.0,
        )
    });

    let mut edges = vec![0.0];
    let mut x = w0 * 0.5f64.powi(settings.geometric_levels as i32);
    while x < w0 {
        edges.push(x);
        x *= 2.0;
    }
    let mut left = w0;
    edges.push(left);
    while left < omega_max {
        let mut width = (settings.relative_panel * left).max(w0).min(phase_width);
        if let Some((a, b, wmax)) = window {
            if left + width > a && left < b {
                width = width.min(wmax);
            }
            // geometric grading towards the resonance from either side
            let centre = 0.5 * (a + b);
            width = width.min(wmax.max(0.25 * (left - centre).abs()));
        }
        let right = (left + width).min(omega_max);
        edges.push(right);
        left = right;
    }

    edges
}

/// `∫ J(ω)/ω dω` by quadrature.
pub fn reorganization_energy(sd: &SpectralDensity, settings: &QuadratureSettings) -> f64 {
    OmegaRule::build(sd, settings, 0.0).integrate(|w| sd.value(w) / w)
}
