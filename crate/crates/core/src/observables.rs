//! Lab-frame readout of polaron-frame trajectories.
//!
//! Site populations are frame invariant and exact. Lab coherences use the
//! zeroth-order expression
//!
//! ```text
//! ρ_mn(t) ≈ β_mn ρ̃_mn(t) + ρ_mn(0) − β_mn ρ̃_mn(0)
//! ```
//!
//! so any quantity built from them (lab density, lab eigenstate
//! populations, lab trace distance) carries the `zeroth-order` flag.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::model::units::KAPPA;
use crate::numerics::hermitian_eigenvalues;
use crate::polaron::{InitialState, PolaronFrame};

/// Provenance tag of lab-frame coherences.
pub const COHERENCE_ORDER: &str = "zeroth-order";

/// Frame in which an observable is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameTag {
    Polaron,
    Lab,
}

impl FrameTag {
    pub fn tag(self) -> &'static str {
        match self {
            FrameTag::Polaron => "polaron",
            FrameTag::Lab => "lab",
        }
    }
}

impl fmt::Display for FrameTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for FrameTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "polaron" => Ok(FrameTag::Polaron),
            "lab" => Ok(FrameTag::Lab),
            _ => Err(Error::Usage(format!(
                "unknown frame '{s}' (expected polaron or lab)"
            ))),
        }
    }
}

/// Real time series sharing one grid; `columns[k][i]` is column `k` at `times[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub times: Vec<f64>,
    pub columns: Vec<Vec<f64>>,
}

impl Series {
    fn from_rows(times: &[f64], n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let columns = (0..n)
            .map(|k| (0..times.len()).map(|i| f(i, k)).collect())
            .collect();
        Self {
            times: times.to_vec(),
            columns,
        }
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.columns[k]
    }
}

/// Exact site populations `p_m(t)`.
pub fn site_populations(traj: &Trajectory, frame: &PolaronFrame) -> Series {
    let site: Vec<_> = traj.states.iter().map(|s| frame.to_site_basis(s)).collect();
    Series::from_rows(&traj.times, frame.size(), |i, m| site[i][(m, m)].re)
}

/// Zeroth-order lab coherence `ρ_mn(t)`.
pub fn lab_coherence(
    traj: &Trajectory,
    initial: &InitialState,
    frame: &PolaronFrame,
    pair: (usize, usize),
) -> Result<Vec<Complex64>> {
    let (m, n) = pair;
    let size = frame.size();
    if m >= size || n >= size || m == n {
        return Err(Error::Domain(format!(
            "coherence needs two distinct sites below {size}, got ({m}, {n})"
        )));
    }
    let b = frame.beta(m, n);
    let offset = initial.lab()[(m, n)] - initial.polaron()[(m, n)] * b;
    Ok(traj
        .states
        .iter()
        .map(|s| frame.to_site_basis(s)[(m, n)] * b + offset)
        .collect())
}

/// Lab density from exact diagonals and zeroth-order coherences.
pub fn lab_density(
    traj: &Trajectory,
    initial: &InitialState,
    frame: &PolaronFrame,
) -> Vec<DMatrix<Complex64>> {
    let n = frame.size();
    let beta = frame.beta_matrix();
    let offset = DMatrix::from_fn(n, n, |a, b| {
        if a == b {
            Complex64::new(0.0, 0.0)
        } else {
            initial.lab()[(a, b)] - initial.polaron()[(a, b)] * beta[(a, b)]
        }
    });
    traj.states
        .iter()
        .map(|s| {
            let site = frame.to_site_basis(s);
            DMatrix::from_fn(n, n, |a, b| {
                if a == b {
                    Complex64::new(site[(a, a)].re, 0.0)
                } else {
                    site[(a, b)] * beta[(a, b)] + offset[(a, b)]
                }
            })
        })
        .collect()
}

/// The state of each grid point in the requested frame, expressed in the
/// renormalised eigenbasis.
fn eigenbasis_states(
    traj: &Trajectory,
    initial: &InitialState,
    frame: &PolaronFrame,
    tag: FrameTag,
) -> Vec<DMatrix<Complex64>> {
    match tag {
        FrameTag::Polaron => traj.states.clone(),
        FrameTag::Lab => lab_density(traj, initial, frame)
            .iter()
            .map(|r| frame.to_eigenbasis(r))
            .collect(),
    }
}

/// Populations of the renormalised eigenstates in either frame.
pub fn eigen_populations(
    traj: &Trajectory,
    initial: &InitialState,
    frame: &PolaronFrame,
    tag: FrameTag,
) -> Series {
    let states = eigenbasis_states(traj, initial, frame, tag);
    Series::from_rows(&traj.times, frame.size(), |i, a| states[i][(a, a)].re)
}

/// `½ tr|ρ₁ − ρ₂|` for Hermitian arguments.
pub fn trace_distance(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    0.5 * hermitian_eigenvalues(&(a - b))
        .iter()
        .map(|x| x.abs())
        .sum::<f64>()
}

/// Growth rate of `D` above which an interval counts as non-Markovian.
pub const DERIVATIVE_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct NonMarkovReport {
    pub frame: FrameTag,
    pub times: Vec<f64>,
    pub distance: Vec<f64>,
    pub derivative: Vec<f64>,
    /// Closed intervals `(t_start, t_end)` on which `dD/dt` exceeds the threshold.
    pub intervals: Vec<(f64, f64)>,
}

impl NonMarkovReport {
    pub fn max_derivative(&self) -> f64 {
        self.derivative
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Central differences inside, one-sided at the ends.
pub fn derivative(times: &[f64], y: &[f64]) -> Vec<f64> {
    let n = y.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (y[hi] - y[lo]) / (times[hi] - times[lo])
        })
        .collect()
}

/// Runs of `values[i] > threshold` as `(times[start], times[end])`.
pub fn positive_intervals(times: &[f64], values: &[f64], threshold: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &v) in values.iter().enumerate() {
        match (v > threshold, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((times[s], times[i - 1]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((times[s], times[values.len() - 1]));
    }
    out
}

/// Trace distance between two runs of the same propagator and its growth intervals.
pub fn trace_distance_analysis(
    a: (&Trajectory, &InitialState),
    b: (&Trajectory, &InitialState),
    frame: &PolaronFrame,
    tag: FrameTag,
) -> Result<NonMarkovReport> {
    let (ta, tb) = (a.0, b.0);
    let same_grid = ta.len() == tb.len()
        && ta
            .times
            .iter()
            .zip(&tb.times)
            .all(|(x, y)| (x - y).abs() < 1e-9);
    if !same_grid || ta.kind != tb.kind {
        return Err(Error::Domain(
            "trace distance needs trajectories on the same grid from the same propagator".into(),
        ));
    }
    let sa = eigenbasis_states(ta, a.1, frame, tag);
    let sb = eigenbasis_states(tb, b.1, frame, tag);
    let distance: Vec<f64> = sa
        .iter()
        .zip(&sb)
        .map(|(x, y)| trace_distance(x, y))
        .collect();
    let derivative = derivative(&ta.times, &distance);
    let intervals = positive_intervals(&ta.times, &derivative, DERIVATIVE_THRESHOLD);
    Ok(NonMarkovReport {
        frame: tag,
        times: ta.times.clone(),
        distance,
        derivative,
        intervals,
    })
}

/// Extrema of a sampled curve after `t_after`: sign changes of the first difference.
pub fn count_extrema(times: &[f64], y: &[f64], t_after: f64) -> usize {
    let mut count = 0;
    let mut last = 0.0;
    for i in 1..y.len() {
        if times[i] <= t_after {
            continue;
        }
        let d = y[i] - y[i - 1];
        if d != 0.0 {
            if last != 0.0 && d.signum() != last {
                count += 1;
            }
            last = d.signum();
        }
    }
    count
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub pad_factor: usize,
    /// Peaks below this fraction of the maximum are not reported.
    pub peak_fraction: f64,
    /// Lowest frequency searched for peaks; defaults to the half-width of the
    /// Hann main lobe, `2/(N dt)`, inside which residual trend leaks.
    pub min_frequency_cm: Option<f64>,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            pad_factor: 4,
            peak_fraction: 0.1,
            min_frequency_cm: None,
        }
    }
}

/// Shortest series accepted by [`population_spectrum`].
pub const MIN_SPECTRUM_SAMPLES: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub frequency_cm: f64,
    pub height: f64,
    /// Full width at half maximum, linearly interpolated.
    pub width_cm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub frequency_cm: Vec<f64>,
    pub magnitude: Vec<f64>,
    /// Sorted by height, largest first.
    pub peaks: Vec<Peak>,
    /// Fitted baseline `a + b e^{−t/τ}` as `(a, b, τ_fs)`.
    pub baseline: (f64, f64, f64),
}

impl Spectrum {
    pub fn dominant(&self) -> Option<&Peak> {
        self.peaks.first()
    }

    pub fn spacing_cm(&self) -> f64 {
        self.frequency_cm[1] - self.frequency_cm[0]
    }
}

/// Least-squares `a + b e^{−t/τ}` for fixed τ; returns `(a, b, rss)`.
fn fit_fixed_tau(t: &[f64], y: &[f64], tau: f64) -> (f64, f64, f64) {
    let n = t.len() as f64;
    let (mut se, mut see, mut sy, mut sey) = (0.0, 0.0, 0.0, 0.0);
    for (&ti, &yi) in t.iter().zip(y) {
        let e = (-ti / tau).exp();
        se += e;
        see += e * e;
        sy += yi;
        sey += e * yi;
    }
    let det = n * see - se * se;
    let (a, b) = if det.abs() < 1e-300 {
        (sy / n, 0.0)
    } else {
        ((see * sy - se * sey) / det, (n * sey - se * sy) / det)
    };
    let rss = t
        .iter()
        .zip(y)
        .map(|(&ti, &yi)| (yi - a - b * (-ti / tau).exp()).powi(2))
        .sum();
    (a, b, rss)
}

/// Single exponential plus constant, τ by log-grid scan and golden-section refinement.
pub fn fit_exponential_baseline(t: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let t0 = t[0];
    let ts: Vec<f64> = t.iter().map(|x| x - t0).collect();
    let span = ts.last().copied().unwrap_or(1.0).max(1e-12);
    let rss = |lt: f64| fit_fixed_tau(&ts, y, lt.exp()).2;
    let (lo, hi) = ((0.01 * span).ln(), (100.0 * span).ln());
    let grid = 60;
    let mut best = lo;
    let mut best_rss = f64::INFINITY;
    for k in 0..=grid {
        let lt = lo + (hi - lo) * k as f64 / grid as f64;
        let r = rss(lt);
        if r < best_rss {
            best_rss = r;
            best = lt;
        }
    }
    let step = (hi - lo) / grid as f64;
    let (mut a, mut b) = (best - step, best + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if rss(c) < rss(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let tau = (0.5 * (a + b)).exp();
    let (ca, cb, _) = fit_fixed_tau(&ts, y, tau);
    // re-express the amplitude at the original time origin
    (ca, cb * (t0 / tau).exp(), tau)
}

/// Magnitude spectrum of a uniformly sampled real series.
pub fn population_spectrum(times: &[f64], y: &[f64], config: &SpectrumConfig) -> Result<Spectrum> {
    let n = y.len();
    if n < MIN_SPECTRUM_SAMPLES || times.len() != n {
        return Err(Error::Domain(format!(
            "spectrum needs at least {MIN_SPECTRUM_SAMPLES} samples, got {n}"
        )));
    }
    if config.pad_factor == 0 || !(config.peak_fraction > 0.0 && config.peak_fraction < 1.0) {
        return Err(Error::Config(
            "pad_factor must be >= 1 and peak_fraction in (0, 1)".into(),
        ));
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0)
        || times
            .windows(2)
            .any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0))
    {
        return Err(Error::Domain(
            "spectrum needs a uniform increasing time grid".into(),
        ));
    }
    let baseline = fit_exponential_baseline(times, y);
    let (a, b, tau) = baseline;
    let m = n * config.pad_factor;
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for i in 0..n {
        let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos();
        let r = y[i] - a - b * (-times[i] / tau).exp();
        buf[i] = Complex64::new(r * w, 0.0);
    }
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let bins = m / 2 + 1;
    let df = 2.0 * std::f64::consts::PI / (KAPPA * m as f64 * dt);
    let frequency_cm: Vec<f64> = (0..bins).map(|k| k as f64 * df).collect();
    let magnitude: Vec<f64> = buf[..bins].iter().map(|z| z.norm() * dt).collect();
    let guard = config
        .min_frequency_cm
        .unwrap_or(2.0 * 2.0 * std::f64::consts::PI / (KAPPA * n as f64 * dt));
    let peaks = find_peaks(&frequency_cm, &magnitude, config.peak_fraction, guard);
    Ok(Spectrum {
        frequency_cm,
        magnitude,
        peaks,
        baseline,
    })
}

/// Interior local maxima at `x ≥ x_min` above `fraction` of the maximum there.
pub fn find_peaks(x: &[f64], y: &[f64], fraction: f64, x_min: f64) -> Vec<Peak> {
    let max = x
        .iter()
        .zip(y)
        .filter(|(&xi, _)| xi >= x_min)
        .map(|(_, &yi)| yi)
        .fold(0.0, f64::max);
    let mut peaks: Vec<Peak> = (1..y.len().saturating_sub(1))
        .filter(|&k| x[k] >= x_min)
        .filter(|&k| y[k] > y[k - 1] && y[k] >= y[k + 1] && y[k] >= fraction * max)
        .map(|k| Peak {
            frequency_cm: x[k],
            height: y[k],
            width_cm: fwhm(x, y, k),
        })
        .collect();
    peaks.sort_by(|p, q| q.height.total_cmp(&p.height));
    peaks
}

fn fwhm(x: &[f64], y: &[f64], k: usize) -> f64 {
    let half = 0.5 * y[k];
    let cross = |i: usize, j: usize| x[i] + (half - y[i]) / (y[j] - y[i]) * (x[j] - x[i]);
    let mut l = k;
    while l > 0 && y[l - 1] > half {
        l -= 1;
    }
    let left = if l > 0 { cross(l - 1, l) } else { x[0] };
    let mut r = k;
    while r + 1 < y.len() && y[r + 1] > half {
        r += 1;
    }
    let right = if r + 1 < y.len() {
        cross(r, r + 1)
    } else {
        x[y.len() - 1]
    };
    right - left
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_peak_lands_on_its_bin() {
        let dt = 0.5;
        let times: Vec<f64> = (0..2001).map(|i| i as f64 * dt).collect();
        let y: Vec<f64> = times
            .iter()
            .map(|t| 0.3 + 0.1 * (KAPPA * 180.0 * t).cos())
            .collect();
        let s = population_spectrum(&times, &y, &SpectrumConfig::default()).unwrap();
        let p = s.dominant().unwrap();
        assert!(
            (p.frequency_cm - 180.0).abs() <= s.spacing_cm(),
            "{}",
            p.frequency_cm
        );
    }

    #[test]
    fn baseline_fit_recovers_exponential() {
        let times: Vec<f64> = (0..500).map(|i| 10.0 + i as f64).collect();
        let y: Vec<f64> = times
            .iter()
            .map(|t| 0.25 + 0.6 * (-t / 130.0).exp())
            .collect();
        let (a, b, tau) = fit_exponential_baseline(&times, &y);
        assert!((a - 0.25).abs() < 1e-6 && (b - 0.6).abs() < 1e-5 && (tau - 130.0).abs() < 1e-3);
    }

    #[test]
    fn short_series_is_rejected() {
        let t: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert!(population_spectrum(&t, &t, &SpectrumConfig::default()).is_err());
    }

    #[test]
    fn intervals_and_extrema() {
        let t: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let v = [0.0, 1.0, 1.0, -1.0, 0.0, 2.0, 2.0, 2.0];
        assert_eq!(
            positive_intervals(&t, &v, 0.5),
            vec![(1.0, 2.0), (5.0, 7.0)]
        );
        let y = [0.0, 1.0, 0.5, 0.7, 0.7, 0.2, 0.3, 0.4];
        assert_eq!(count_extrema(&t, &y, 0.0), 4);
        assert_eq!(count_extrema(&t, &y, 3.0), 1);
    }

    #[test]
    fn trace_distance_of_orthogonal_pure_states_is_one() {
        let mut a = DMatrix::<Complex64>::zeros(3, 3);
        let mut b = a.clone();
        a[(0, 0)] = Complex64::new(1.0, 0.0);
        b[(1, 1)] = Complex64::new(1.0, 0.0);
        assert!((trace_distance(&a, &b) - 1.0).abs() < 1e-14);
        assert_eq!(trace_distance(&a, &a), 0.0);
    }
}
