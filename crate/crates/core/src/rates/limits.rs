//! Time-independent limits of the rate tensors.
//!
//! * Markov: `Γ^c_kl = ∫_0^∞ ds e^{−iω_l s} C^c_kl(s)`, truncated once every
//!   pair correlator has decayed by six orders of magnitude.
//! * Secular: keep only entries with `ω_k + ω_l ≈ 0`.
//! * Weak coupling: to first order in `K`, `C^{1,4} ≈ −C^W` and
//!   `C^{2,3} ≈ C^W` with `C^W = Σ U ββ K`, whose transform is `γ − iS`.
//! * Förster: `β → 0`, site-to-site hopping with
//!   `Γ^S(ω) = ∫_0^∞ ds e^{−iκωs} e^{−K(0) + K(s)}`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{zero_tensors, ChannelTensors, HomRates, PairProjection, CHANNELS};
use crate::bath::quadrature::panel_edges;
use crate::bath::{
    KernelTables, OmegaRule, QuadratureSettings, SpatialCombination, SpatialFactors,
};
use crate::error::{Error, Result};
use crate::model::units::{thermal_coth, KAPPA};
use crate::model::{BathSpec, SiteNetwork};
use crate::numerics::gregory_integral;
use crate::polaron::PolaronFrame;

/// Relative decay below which a correlator counts as relaxed.
pub const DECAY_THRESHOLD: f64 = 1e-6;

/// Markovian rate tensors.
#[derive(Debug, Clone)]
pub struct MarkovRates {
    pub tensors: ChannelTensors,
    /// Truncation time of the remainder integrals.
    pub tau_star_fs: f64,
    /// Estimated magnitude of the neglected remainder tail, fs.
    pub tail_bound: f64,
}

/// Markov rates `∫_0^∞ ds e^{−iω_l s} C(s)`.
///
/// The part of `C` linear in `K` is transformed exactly in frequency
/// (the weak-coupling tensors); only the remainder `ββ(e^{±K} − 1 ∓ K)`,
/// which decays like `K²`, is integrated in time up to `τ*`, where it has
/// fallen below `1e-6` of the largest pair correlator at `τ = 0`.
pub fn markov_rates(
    bath: &BathSpec,
    kernels: &KernelTables,
    frame: &PolaronFrame,
    settings: &QuadratureSettings,
) -> Result<MarkovRates> {
    let mut hom = HomRates::linear_subtracted(kernels, frame);
    let len = kernels.len();
    let last = (0..len)
        .rev()
        .find(|&i| hom.decay_ratio(i) >= DECAY_THRESHOLD)
        .unwrap_or(0);
    let star = (last + 2) & !1;
    if star + 1 >= len {
        return Err(Error::NonDecaying {
            t_fs: kernels.t_max(),
            ratio: hom.decay_ratio(len - 1),
        });
    }
    while hom.index() < star {
        hom.advance()?;
    }
    let tau = hom.time();
    let ratio = hom.decay_ratio(star);
    // exponential tail fitted through the decay reached at τ*
    let c0 = hom.initial_scale();
    let tail_bound = if ratio > 0.0 && tau > 0.0 {
        c0 * ratio * tau / (-ratio.ln()).max(1.0)
    } else {
        0.0
    };
    let linear = redfield_rates(bath, kernels, frame, settings)?;
    let mut tensors = hom.current().clone();
    for (t, l) in tensors.iter_mut().zip(linear.iter()) {
        *t += l;
    }
    Ok(MarkovRates {
        tensors,
        tau_star_fs: tau,
        tail_bound,
    })
}

/// Markov rates, rebuilding the kernel tables with doubled range until the
/// remainder decays or `t_cap_fs` is reached.
pub fn markov_rates_extending(
    network: &SiteNetwork,
    bath: &BathSpec,
    frame: &PolaronFrame,
    spacing_fs: f64,
    t_start_fs: f64,
    t_cap_fs: f64,
    settings: &QuadratureSettings,
) -> Result<MarkovRates> {
    let mut t_max = t_start_fs;
    loop {
        let kernels = KernelTables::build(network, bath, spacing_fs, t_max, settings)?;
        match markov_rates(bath, &kernels, frame, settings) {
            Err(Error::NonDecaying { .. }) if t_max < t_cap_fs => {
                t_max = (2.0 * t_max).min(t_cap_fs);
                log::info!("correlators not relaxed; extending kernel tables to {t_max} fs");
            }
            other => return other,
        }
    }
}

/// Entries of each channel tensor retained by the secular approximation.
#[derive(Debug, Clone)]
pub struct SecularMask {
    n: usize,
    keep: [Vec<bool>; 4],
}

impl SecularMask {
    pub fn keeps(&self, channel: usize, k: usize, l: usize) -> bool {
        self.keep[channel][k * self.n * self.n + l]
    }

    pub fn count(&self, channel: usize) -> usize {
        self.keep[channel].iter().filter(|&&b| b).count()
    }

    /// Zeroes every discarded entry.
    pub fn apply(&self, tensors: &mut ChannelTensors) {
        let n2 = self.n * self.n;
        for (c, t) in tensors.iter_mut().enumerate() {
            for k in 0..n2 {
                for l in 0..n2 {
                    if !self.keep[c][k * n2 + l] {
                        t[(k, l)] = Complex64::new(0.0, 0.0);
                    }
                }
            }
        }
    }
}

/// Keeps `((αβ), (μν))` where the two operators' Bohr frequencies cancel.
pub fn secular_mask(frame: &PolaronFrame, tol_cm: f64) -> Result<SecularMask> {
    if !(tol_cm > 0.0) {
        return Err(Error::Domain(format!(
            "secular tolerance must be > 0, got {tol_cm}"
        )));
    }
    let n = frame.size();
    let e = frame.energies();
    let n2 = n * n;
    let keep = CHANNELS.map(|c| {
        let mut v = vec![false; n2 * n2];
        for al in 0..n {
            for be in 0..n {
                let (a, b) = c.k_op(al, be);
                for mu in 0..n {
                    for nu in 0..n {
                        let (x, y) = c.l_op(mu, nu);
                        v[(al * n + be) * n2 + mu * n + nu] =
                            ((e[a] - e[b]) + (e[x] - e[y])).abs() < tol_cm;
                    }
                }
            }
        }
        v
    });
    Ok(SecularMask { n, keep })
}

/// Weak-coupling transform `∫_0^∞ ds e^{−iκεs} K(s) = γ − iS` for one
/// spatial combination, in fs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakCouplingRates {
    pub gamma: f64,
    pub shift: f64,
}

impl WeakCouplingRates {
    pub fn transform(&self) -> Complex64 {
        Complex64::new(self.gamma, -self.shift)
    }
}

/// `γ(ε)` and `S(ε)` for `K` built from the combination `comb`.
///
/// `γ = (π/2κ) J(ε)/ε² λ(ε) (coth(ε/2kT) − 1)` with `J` continued as an odd
/// function, and `S = (1/κ) P∫ dω J λ/ω² (ω − ε coth)/(ω² − ε²)`.
pub fn weak_coupling_rates(
    bath: &BathSpec,
    spatial: &SpatialFactors,
    comb: &SpatialCombination,
    epsilon_cm: f64,
    settings: &QuadratureSettings,
) -> Result<WeakCouplingRates> {
    if !epsilon_cm.is_finite() {
        return Err(Error::Domain(format!(
            "energy gap must be finite, got {epsilon_cm}"
        )));
    }
    if comb.is_zero() {
        return Ok(WeakCouplingRates {
            gamma: 0.0,
            shift: 0.0,
        });
    }
    let sd = &bath.spectral_density;
    let kt = bath.kt_cm;
    let lam = |w: f64| spatial.eval(comb, w);
    let gamma = if epsilon_cm == 0.0 {
        std::f64::consts::PI * kt * lam(0.0) * sd.cubic_coefficient()
    } else {
        let e = epsilon_cm;
        0.5 * std::f64::consts::PI * sd.odd_value(e) / (e * e)
            * lam(e)
            * (thermal_coth(e, kt) - 1.0)
    };
    let coarse = principal_shift(bath, &lam, epsilon_cm, settings);
    let fine = principal_shift(bath, &lam, epsilon_cm, &settings.doubled());
    let scale = OmegaRule::build(sd, settings, 0.0)
        .integrate(|w| (sd.value(w) * lam(w) / (w * w * w)).abs());
    if (coarse.0 - fine.0).abs() > 1e-6 * scale.max(fine.0.abs()) {
        return Err(Error::Quadrature {
            quantity: format!("energy shift at {epsilon_cm} cm^-1"),
            nodes: coarse.1,
            value: coarse.0,
            refined_nodes: fine.1,
            refined_value: fine.0,
        });
    }
    Ok(WeakCouplingRates {
        gamma: gamma / KAPPA,
        shift: fine.0 / KAPPA,
    })
}

/// Principal value by subtracting the pole residue over `[0, 2|ε|]`.
fn principal_shift(
    bath: &BathSpec,
    lam: &dyn Fn(f64) -> f64,
    eps: f64,
    settings: &QuadratureSettings,
) -> (f64, usize) {
    let sd = &bath.spectral_density;
    let kt = bath.kt_cm;
    let g = |w: f64| sd.value(w) * lam(w) / (w * w);
    let mut edges = panel_edges(sd, settings, 0.0);
    let a = eps.abs();
    if a < 1e-12 {
        let rule = OmegaRule::from_edges(&edges, settings.gl_order);
        return (rule.integrate(|w| g(w) / w), rule.len());
    }
    let omega_max = *edges.last().unwrap();
    for b in [a, 2.0 * a] {
        if b < omega_max {
            edges.push(b);
        }
    }
    edges.sort_by(|x, y| x.partial_cmp(y).unwrap());
    edges.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * y.abs().max(1.0));
    let big_g = |w: f64| g(w) * (w - eps * thermal_coth(w, kt)) / (w + a);
    let ga = big_g(a);
    let split = edges
        .iter()
        .position(|&x| x >= 2.0 * a)
        .unwrap_or(edges.len() - 1);
    let inner = OmegaRule::from_edges(&edges[..=split], settings.gl_order);
    let outer = OmegaRule::from_edges(&edges[split..], settings.gl_order);
    let mut s = inner.integrate(|w| (big_g(w) - ga) / (w - a));
    if 2.0 * a > omega_max {
        // remaining ∫ dw/(w − a) over [ω_max, 2a] of the subtracted constant
        s += ga * ((omega_max - a).abs() / a).ln();
    } else {
        s += outer.integrate(|w| big_g(w) / (w - a));
    }
    (s, inner.len() + outer.len())
}

/// Redfield tensors: the Markov limit at first order in `K`.
pub fn redfield_rates(
    bath: &BathSpec,
    kernels: &KernelTables,
    frame: &PolaronFrame,
    settings: &QuadratureSettings,
) -> Result<ChannelTensors> {
    let proj = PairProjection::new(frame);
    let n = proj.n;
    let np = proj.npairs();
    let e = frame.energies();
    let spatial = kernels.spatial();
    // transforms per pair product and per ket-bra of A_l
    let mut w = vec![Complex64::new(0.0, 0.0); np * np * n * n];
    for p in 0..np {
        for q in 0..np {
            let comb = spatial.lambda(proj.pairs[p], proj.pairs[q]);
            if comb.is_zero() {
                continue;
            }
            let diag = weak_coupling_rates(bath, spatial, &comb, 0.0, settings)?.transform();
            for x in 0..n {
                for y in 0..n {
                    let v = if x == y {
                        diag
                    } else {
                        weak_coupling_rates(bath, spatial, &comb, e[x] - e[y], settings)?
                            .transform()
                    };
                    w[((p * np + q) * n + x) * n + y] = v * (proj.beta[p] * proj.beta[q]);
                }
            }
        }
    }
    let mut out = zero_tensors(n);
    for c in CHANNELS {
        let sign = c.kernel_sign();
        let t = &mut out[c.index()];
        for k in 0..n * n {
            for mu in 0..n {
                for nu in 0..n {
                    let (x, y) = c.l_op(mu, nu);
                    let l = mu * n + nu;
                    let mut acc = Complex64::new(0.0, 0.0);
                    for p in 0..np {
                        let ap = proj.a[(p, k)];
                        if ap == 0.0 {
                            continue;
                        }
                        for q in 0..np {
                            acc += w[((p * np + q) * n + x) * n + y] * (ap * proj.a[(q, l)]);
                        }
                    }
                    t[(k, l)] = acc * sign;
                }
            }
        }
    }
    Ok(out)
}

/// Smallest `Re K_mn,mn(0)` for which the hopping limit is accepted
/// (`β < 0.1`).
pub const FOERSTER_MIN_K0: f64 = 4.6;

/// `Γ^S(ω) = ∫_0^∞ ds e^{−iκωs} β²(e^{K(s)} − 1)` for site pair `(m, n)`, fs.
///
/// The constant baseline `β² = e^{−K(0)}` only contributes at `ω = 0` and is
/// negligible in the regime where the limit is accepted.
pub fn foerster_rate(
    kernels: &KernelTables,
    pair: (usize, usize),
    omega_cm: f64,
) -> Result<Complex64> {
    let comb = kernels.spatial().lambda(pair, pair);
    let k = if comb.is_zero() {
        vec![Complex64::new(0.0, 0.0); kernels.len()]
    } else {
        kernels.k_series(&comb)
    };
    let k0 = k[0].re;
    if k0 < FOERSTER_MIN_K0 {
        return Err(Error::NotApplicable(format!(
            "hopping limit needs Re K(0) >= {FOERSTER_MIN_K0} for pair ({}, {}), got {k0:.4}",
            pair.0 + 1,
            pair.1 + 1
        )));
    }
    let b2 = (-k0).exp();
    let integrand: Vec<Complex64> = k.iter().map(|&z| super::complex_exp_m1(z) * b2).collect();
    let scale = integrand[0].norm();
    let last = integrand
        .iter()
        .rposition(|z| z.norm() >= DECAY_THRESHOLD * scale)
        .unwrap_or(0);
    if last + 1 >= integrand.len() {
        return Err(Error::NonDecaying {
            t_fs: kernels.t_max(),
            ratio: integrand[integrand.len() - 1].norm() / scale,
        });
    }
    let end = last + 1;
    let h = kernels.spacing();
    let y: Vec<Complex64> = integrand[..=end]
        .iter()
        .enumerate()
        .map(|(i, &z)| z * Complex64::from_polar(1.0, -KAPPA * omega_cm * i as f64 * h))
        .collect();
    Ok(gregory_integral(&y, h))
}

/// Hopping rate from site `from` to site `to`, fs⁻¹:
/// `2 κ² V² Re Γ^S(ε̃_to − ε̃_from)`.
pub fn foerster_transfer_rate(
    kernels: &KernelTables,
    frame: &PolaronFrame,
    from: usize,
    to: usize,
) -> Result<f64> {
    if from == to {
        return Ok(0.0);
    }
    let v = frame.coupling(from, to);
    if v == 0.0 {
        return Ok(0.0);
    }
    let eps = frame.site_energies();
    let pair = (from.min(to), from.max(to));
    let g = foerster_rate(kernels, pair, eps[to] - eps[from])?;
    Ok(2.0 * KAPPA * KAPPA * v * v * g.re)
}

/// Site-basis Pauli generator `W[to][from]` with columns summing to zero.
pub fn foerster_generator(kernels: &KernelTables, frame: &PolaronFrame) -> Result<DMatrix<f64>> {
    let n = frame.size();
    let mut w = DMatrix::zeros(n, n);
    for from in 0..n {
        for to in 0..n {
            if from != to {
                let r = foerster_transfer_rate(kernels, frame, from, to)?;
                w[(to, from)] += r;
                w[(from, from)] -= r;
            }
        }
    }
    Ok(w)
}
