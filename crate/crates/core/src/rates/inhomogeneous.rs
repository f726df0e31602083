//! Inhomogeneous terms from the non-equilibrium initial bath.
//!
//! A lab-frame initial state leaves the bath displaced relative to the
//! polaron-frame equilibrium. Two source terms follow, both linear in
//! `ρ̃_ij(0)` and independent of `ρ(t)`:
//!
//! ```text
//! first order   −i Σ_ij ρ̃_ij(0) Σ_αβ Υ_ij,αβ(t) e^{iω_αβ t} [S_αβ, σ_ij]            + h.c.
//! second order  −Σ_ij ρ̃_ij(0) Σ_c Σ_kl e^{iω_k t} Ξ^c_ij,kl(t) [A_k, A_l σ_ij]      + h.c.
//! ```
//!
//! with `Υ_ij,αβ = Σ_P a^P_αβ β_P (f_ij,P(t) − 1)` and
//! `Ξ^c_ij,kl(t) = Σ_PQ a^P_k a^Q_l ξ^c_ij,PQ(t; ω_l)`. Writing `F`, `G` for
//! the `f`/`f'` factors of the two pairs and `E = e^{±K_PQ}`, the pair kernel
//! reduces to
//!
//! ```text
//! ξ(t; ω) = β_P β_Q ∫_0^t ds e^{iωs} [ (F(t) − 1)(G(s) − 1 + E(t−s) − 1)
//!                                      + F(t)(G(s) − 1)(E(t−s) − 1) ]
//! ```
//!
//! The `E(t − s)` integrals are convolutions, evaluated for every grid time
//! at once by FFT and then end-corrected to fourth order.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{
    complex_exp_m1, zero_tensors, Channel, ChannelTensors, PairKernels, PairProjection, CHANNELS,
};
use crate::bath::KernelTables;
use crate::error::{Error, Result};
use crate::numerics::{gregory_cumulative, gregory_special_indices, gregory_weight};
use crate::polaron::{InitialState, PolaronFrame};

/// Where the oscillating factor of `ξ` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XiPhase {
    /// `e^{iω_l s}` inside the integral.
    #[default]
    Integration,
    /// `e^{iω_l t}` outside the integral.
    Final,
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Per-initial-state inputs shared by both evaluation routes.
struct Setup {
    proj: PairProjection,
    pair_kernels: PairKernels,
    spacing: f64,
    len: usize,
    terms: Vec<Term>,
}

struct Term {
    ij: (usize, usize),
    rho: Complex64,
    sigma: DMatrix<Complex64>,
    f: Vec<Option<Vec<Complex64>>>,
}

impl Setup {
    fn new(kernels: &KernelTables, frame: &PolaronFrame, initial: &InitialState) -> Self {
        let proj = PairProjection::new(frame);
        let pair_kernels = PairKernels::new(kernels, &proj);
        let n = frame.size();
        let u = frame.eigenvectors();
        let terms = initial
            .support()
            .into_iter()
            .map(|(i, j)| Term {
                ij: (i, j),
                rho: initial.polaron()[(i, j)],
                sigma: DMatrix::from_fn(n, n, |g, d| Complex64::new(u[(i, g)] * u[(j, d)], 0.0)),
                f: proj
                    .pairs
                    .iter()
                    .map(|&p| kernels.f_series((i, j), p))
                    .collect(),
            })
            .collect();
        Self {
            proj,
            pair_kernels,
            spacing: kernels.spacing(),
            len: kernels.len(),
            terms,
        }
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.len {
            return Err(Error::Range {
                t_fs: index as f64 * self.spacing,
                t_max_fs: (self.len - 1) as f64 * self.spacing,
            });
        }
        Ok(())
    }

    /// `Σ_αβ a^P_αβ e^{iω_k t} A_k` for channel `c`.
    fn k_operator(&self, c: Channel, p: usize, t: f64) -> DMatrix<Complex64> {
        let n = self.proj.n;
        let mut m = DMatrix::zeros(n, n);
        for al in 0..n {
            for be in 0..n {
                let a = self.proj.a[(p, al * n + be)];
                if a != 0.0 {
                    let (x, y) = c.k_op(al, be);
                    m[(x, y)] +=
                        Complex64::from_polar(a, (self.proj.omega[x] - self.proj.omega[y]) * t);
                }
            }
        }
        m
    }
}

#[inline]
fn f_value(series: &Option<Vec<Complex64>>, prime: bool, i: usize) -> Complex64 {
    match series {
        None => ONE,
        Some(v) if prime => v[i].inv(),
        Some(v) => v[i],
    }
}

#[inline]
fn f_minus_one(series: &Option<Vec<Complex64>>, prime: bool, i: usize) -> Complex64 {
    match series {
        None => ZERO,
        Some(v) if prime => v[i].inv() - ONE,
        Some(v) => v[i] - ONE,
    }
}

/// `Υ_ij,αβ(t)` for every `ij` in the support of `ρ̃(0)`.
pub fn inhom_first_order(
    kernels: &KernelTables,
    frame: &PolaronFrame,
    initial: &InitialState,
    t_fs: f64,
) -> Result<Vec<((usize, usize), DMatrix<Complex64>)>> {
    let proj = PairProjection::new(frame);
    let n = frame.size();
    let mut out = Vec::new();
    for (i, j) in initial.support() {
        let mut y = DMatrix::zeros(n, n);
        for (p, &pair) in proj.pairs.iter().enumerate() {
            let w = (kernels.f((i, j), pair, t_fs)? - ONE) * proj.beta[p];
            for al in 0..n {
                for be in 0..n {
                    y[(al, be)] += w * proj.a[(p, al * n + be)];
                }
            }
        }
        out.push(((i, j), y));
    }
    Ok(out)
}

/// Pair kernel `ξ^c_ij,PQ(t_n; ω)` by direct quadrature over `s`.
fn xi_direct(
    setup: &Setup,
    term: &Term,
    c: Channel,
    p: usize,
    q: usize,
    omega: f64,
    n: usize,
    phase: XiPhase,
) -> Complex64 {
    let h = setup.spacing;
    let fp = &term.f[p];
    let fq = &term.f[q];
    let kpq = setup.pair_kernels.get(p, q);
    let sign = c.kernel_sign();
    let big_f = f_value(fp, c.k_adjoint(), n);
    let f1 = f_minus_one(fp, c.k_adjoint(), n);
    let (mut sa, mut sb, mut sg) = (ZERO, ZERO, ZERO);
    for k in 0..=n {
        let w = gregory_weight(n, k);
        let hk = match phase {
            XiPhase::Integration => Complex64::from_polar(1.0, omega * k as f64 * h),
            XiPhase::Final => ONE,
        };
        let g1 = f_minus_one(fq, c.l_adjoint(), k);
        let e1 = kpq.map(|s| complex_exp_m1(s[n - k] * sign)).unwrap_or(ZERO);
        sa += hk * g1 * e1 * w;
        sb += hk * e1 * w;
        sg += hk * g1 * w;
    }
    let mut xi = (big_f * sa + f1 * (sg + sb)) * (h * setup.proj.beta[p] * setup.proj.beta[q]);
    if phase == XiPhase::Final {
        xi *= Complex64::from_polar(1.0, omega * n as f64 * h);
    }
    xi
}

/// `Ξ^c_ij,kl(t_n)` on grid index `n`, by direct quadrature.
pub fn inhom_second_order(
    kernels: &KernelTables,
    frame: &PolaronFrame,
    initial: &InitialState,
    index: usize,
    phase: XiPhase,
) -> Result<Vec<((usize, usize), ChannelTensors)>> {
    let setup = Setup::new(kernels, frame, initial);
    setup.check_index(index)?;
    let n = frame.size();
    let np = setup.proj.npairs();
    let mut out = Vec::new();
    for term in &setup.terms {
        let mut tensors = zero_tensors(n);
        for c in CHANNELS {
            // ξ for every (P, Q) and every ket-bra (x, y) of A_l
            let mut xi = vec![ZERO; np * np * n * n];
            for p in 0..np {
                for q in 0..np {
                    for x in 0..n {
                        for y in 0..n {
                            let omega = setup.proj.omega[x] - setup.proj.omega[y];
                            if x == y && y > 0 {
                                xi[((p * np + q) * n + x) * n + y] = xi[((p * np + q) * n) * n];
                                continue;
                            }
                            xi[((p * np + q) * n + x) * n + y] =
                                xi_direct(&setup, term, c, p, q, omega, index, phase);
                        }
                    }
                }
            }
            let t = &mut tensors[c.index()];
            for k in 0..n * n {
                for mu in 0..n {
                    for nu in 0..n {
                        let (x, y) = c.l_op(mu, nu);
                        let l = mu * n + nu;
                        let mut acc = ZERO;
                        for p in 0..np {
                            let ap = setup.proj.a[(p, k)];
                            if ap == 0.0 {
                                continue;
                            }
                            for q in 0..np {
                                acc += xi[((p * np + q) * n + x) * n + y]
                                    * (ap * setup.proj.a[(q, l)]);
                            }
                        }
                        t[(k, l)] = acc;
                    }
                }
            }
        }
        out.push((term.ij, tensors));
    }
    Ok(out)
}

fn flatten_with_adjoint(m: &DMatrix<Complex64>) -> DVector<Complex64> {
    let n = m.nrows();
    let full = m + m.adjoint();
    DVector::from_fn(n * n, |idx, _| full[(idx / n, idx % n)])
}

/// Source vector `I(t)` from explicit `Υ` and `Ξ` tensors.
pub fn assemble_inhomogeneous(
    frame: &PolaronFrame,
    initial: &InitialState,
    t_fs: f64,
    first: &[((usize, usize), DMatrix<Complex64>)],
    second: &[((usize, usize), ChannelTensors)],
) -> DVector<Complex64> {
    let n = frame.size();
    let omega: Vec<f64> = frame
        .energies()
        .iter()
        .map(|e| crate::model::units::KAPPA * e)
        .collect();
    let u = frame.eigenvectors();
    let sigma = |(i, j): (usize, usize)| {
        DMatrix::from_fn(n, n, |g, d| Complex64::new(u[(i, g)] * u[(j, d)], 0.0))
    };
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    let minus_i = Complex64::new(0.0, -1.0);
    for (ij, ups) in first {
        let rho = initial.polaron()[(ij.0, ij.1)];
        let s = sigma(*ij);
        let x = DMatrix::from_fn(n, n, |a, b| {
            ups[(a, b)] * Complex64::from_polar(1.0, (omega[a] - omega[b]) * t_fs)
        });
        m += (&x * &s - &s * &x) * (minus_i * rho);
    }
    for (ij, xi) in second {
        let rho = initial.polaron()[(ij.0, ij.1)];
        let s = sigma(*ij);
        for c in CHANNELS {
            let t = &xi[c.index()];
            for al in 0..n {
                for be in 0..n {
                    let (a, b) = c.k_op(al, be);
                    let ph = Complex64::from_polar(1.0, (omega[a] - omega[b]) * t_fs);
                    for mu in 0..n {
                        for nu in 0..n {
                            let coef = t[(al * n + be, mu * n + nu)];
                            if coef == ZERO {
                                continue;
                            }
                            let coef = coef * ph * rho;
                            let (cc, d) = c.l_op(mu, nu);
                            // A_k A_l σ: row a gets σ[d, :] when b == c
                            if b == cc {
                                for y in 0..n {
                                    m[(a, y)] -= coef * s[(d, y)];
                                }
                            }
                            // A_l σ A_k: element (c, b) gets σ[d, a]
                            m[(cc, b)] += coef * s[(d, a)];
                        }
                    }
                }
            }
        }
    }
    flatten_with_adjoint(&m)
}

/// Precomputed `I(t)` on every kernel grid point.
#[derive(Debug, Clone)]
pub struct InhomSeries {
    values: Vec<DVector<Complex64>>,
    spacing: f64,
}

struct FftPair {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    size: usize,
}

impl FftPair {
    fn new(len: usize) -> Self {
        let size = (2 * len).next_power_of_two();
        let mut planner = FftPlanner::new();
        Self {
            fwd: planner.plan_fft_forward(size),
            inv: planner.plan_fft_inverse(size),
            size,
        }
    }

    fn forward(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut buf = vec![ZERO; self.size];
        buf[..x.len()].copy_from_slice(x);
        self.fwd.process(&mut buf);
        buf
    }

    /// Linear convolution `Σ_k x_k y_{n−k}` from two forward transforms.
    fn convolve(&self, fx: &[Complex64], fy: &[Complex64], len: usize) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = fx.iter().zip(fy).map(|(a, b)| a * b).collect();
        self.inv.process(&mut buf);
        let scale = 1.0 / self.size as f64;
        buf.truncate(len);
        buf.iter_mut().for_each(|z| *z *= scale);
        buf
    }
}

/// Turns a raw convolution into the fourth-order `∫_0^{t_n} x(s) y(t_n − s) ds`.
fn corrected_convolution(
    raw: &[Complex64],
    x: &[Complex64],
    y: &[Complex64],
    h: f64,
) -> Vec<Complex64> {
    (0..raw.len())
        .map(|n| {
            let acc = if n < 5 {
                (0..=n)
                    .map(|k| x[k] * y[n - k] * gregory_weight(n, k))
                    .sum()
            } else {
                let mut acc = raw[n];
                for k in gregory_special_indices(n) {
                    acc += x[k] * y[n - k] * (gregory_weight(n, k) - 1.0);
                }
                acc
            };
            acc * h
        })
        .collect()
}

impl InhomSeries {
    pub fn compute(
        kernels: &KernelTables,
        frame: &PolaronFrame,
        initial: &InitialState,
        phase: XiPhase,
        include_second_order: bool,
    ) -> Result<Self> {
        let setup = Setup::new(kernels, frame, initial);
        let n = frame.size();
        let np = setup.proj.npairs();
        let len = setup.len;
        let h = setup.spacing;
        let proj = &setup.proj;
        let mut acc: Vec<DMatrix<Complex64>> = vec![DMatrix::zeros(n, n); len];
        let minus_i = Complex64::new(0.0, -1.0);

        // first order
        for term in &setup.terms {
            for (p, fser) in term.f.iter().enumerate() {
                if fser.is_none() {
                    continue;
                }
                for (i, m) in acc.iter_mut().enumerate() {
                    let t = i as f64 * h;
                    let w = f_minus_one(fser, false, i) * proj.beta[p];
                    let x = setup.k_operator(Channel::One, p, t) * w;
                    *m += (&x * &term.sigma - &term.sigma * &x) * (minus_i * term.rho);
                }
            }
        }

        if include_second_order && np > 0 {
            let fft = FftPair::new(len);
            // frequency slots: one per ordered pair x != y plus one shared ω = 0
            let slot = |x: usize, y: usize| if x == y { 0 } else { 1 + x * n + y };
            let nslots = 1 + n * n;
            let slot_omega: Vec<f64> = (0..nslots)
                .map(|s| {
                    if s == 0 {
                        0.0
                    } else {
                        let (x, y) = ((s - 1) / n, (s - 1) % n);
                        proj.omega[x] - proj.omega[y]
                    }
                })
                .collect();
            let used: Vec<bool> = (0..nslots)
                .map(|s| s == 0 || (s - 1) / n != (s - 1) % n)
                .collect();
            let conv_omega = |s: usize| match phase {
                XiPhase::Integration => slot_omega[s],
                XiPhase::Final => 0.0,
            };
            let times: Vec<f64> = (0..len).map(|i| i as f64 * h).collect();
            let osc = |omega: f64| -> Vec<Complex64> {
                times
                    .iter()
                    .map(|&t| Complex64::from_polar(1.0, omega * t))
                    .collect()
            };
            let h_raw: Vec<Option<Vec<Complex64>>> = (0..nslots)
                .map(|s| used[s].then(|| osc(conv_omega(s))))
                .collect();
            let h_fft: Vec<Option<Vec<Complex64>>> = h_raw
                .iter()
                .map(|v| v.as_ref().map(|v| fft.forward(v)))
                .collect();
            // E' = e^{±K} − 1 per sign and pair product
            let mut e_raw: Vec<Vec<Option<Vec<Complex64>>>> = Vec::new();
            let mut e_fft: Vec<Vec<Option<Vec<Complex64>>>> = Vec::new();
            for sign in [-1.0, 1.0] {
                let mut raw = Vec::new();
                let mut tr = Vec::new();
                for p in 0..np {
                    for q in 0..np {
                        let v = setup.pair_kernels.get(p, q).map(|k| {
                            k.iter()
                                .map(|&z| complex_exp_m1(z * sign))
                                .collect::<Vec<_>>()
                        });
                        tr.push(v.as_ref().map(|v| fft.forward(v)));
                        raw.push(v);
                    }
                }
                e_raw.push(raw);
                e_fft.push(tr);
            }

            for term in &setup.terms {
                // G' (s) e^{iωs} per prime flag, pair and slot
                let mut p_raw: Vec<Vec<Vec<Option<Vec<Complex64>>>>> = Vec::new();
                let mut p_fft: Vec<Vec<Vec<Option<Vec<Complex64>>>>> = Vec::new();
                for prime in [false, true] {
                    let mut raw_q = Vec::new();
                    let mut fft_q = Vec::new();
                    for q in 0..np {
                        let mut raw_s = Vec::new();
                        let mut fft_s = Vec::new();
                        for s in 0..nslots {
                            let v = match (&term.f[q], &h_raw[s]) {
                                (Some(_), Some(hs)) => Some(
                                    (0..len)
                                        .map(|i| f_minus_one(&term.f[q], prime, i) * hs[i])
                                        .collect::<Vec<_>>(),
                                ),
                                _ => None,
                            };
                            fft_s.push(v.as_ref().map(|v| fft.forward(v)));
                            raw_s.push(v);
                        }
                        raw_q.push(raw_s);
                        fft_q.push(fft_s);
                    }
                    p_raw.push(raw_q);
                    p_fft.push(fft_q);
                }

                for c in CHANNELS {
                    let ei = if c.kernel_sign() < 0.0 { 0 } else { 1 };
                    let kp = c.k_adjoint() as usize;
                    let lp = c.l_adjoint() as usize;
                    for p in 0..np {
                        let fser = &term.f[p];
                        let has_f1 = fser.is_some();
                        for q in 0..np {
                            let has_g1 = term.f[q].is_some();
                            let has_e1 = e_raw[ei][p * np + q].is_some();
                            let need_a = has_g1 && has_e1;
                            let need_gb = has_f1 && (has_g1 || has_e1);
                            if !need_a && !need_gb {
                                continue;
                            }
                            let bb = proj.beta[p] * proj.beta[q];
                            // ξ per slot on every grid point
                            let mut xi: Vec<Option<Vec<Complex64>>> = vec![None; nslots];
                            let mut final_base: Option<Vec<Complex64>> = None;
                            for s in 0..nslots {
                                if !used[s] {
                                    continue;
                                }
                                if phase == XiPhase::Final && s > 0 {
                                    let base = final_base.as_ref().expect("slot 0 computed first");
                                    let o = slot_omega[s];
                                    xi[s] = Some(
                                        base.iter()
                                            .zip(&times)
                                            .map(|(z, &t)| z * Complex64::from_polar(1.0, o * t))
                                            .collect(),
                                    );
                                    continue;
                                }
                                let src = if phase == XiPhase::Final { 0 } else { s };
                                let mut out = vec![ZERO; len];
                                if need_a {
                                    let x = p_raw[lp][q][src].as_ref().unwrap();
                                    let y = e_raw[ei][p * np + q].as_ref().unwrap();
                                    let raw = fft.convolve(
                                        p_fft[lp][q][src].as_ref().unwrap(),
                                        e_fft[ei][p * np + q].as_ref().unwrap(),
                                        len,
                                    );
                                    let a1 = corrected_convolution(&raw, x, y, h);
                                    for i in 0..len {
                                        out[i] += f_value(fser, kp == 1, i) * a1[i];
                                    }
                                }
                                if need_gb {
                                    let mut gb = vec![ZERO; len];
                                    if has_g1 {
                                        let g = gregory_cumulative(
                                            p_raw[lp][q][src].as_ref().unwrap(),
                                            h,
                                        );
                                        gb.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                                    }
                                    if has_e1 {
                                        let x = h_raw[src].as_ref().unwrap();
                                        let y = e_raw[ei][p * np + q].as_ref().unwrap();
                                        let raw = fft.convolve(
                                            h_fft[src].as_ref().unwrap(),
                                            e_fft[ei][p * np + q].as_ref().unwrap(),
                                            len,
                                        );
                                        let b = corrected_convolution(&raw, x, y, h);
                                        gb.iter_mut().zip(b).for_each(|(a, b)| *a += b);
                                    }
                                    for i in 0..len {
                                        out[i] += f_minus_one(fser, kp == 1, i) * gb[i];
                                    }
                                }
                                out.iter_mut().for_each(|z| *z *= bb);
                                if phase == XiPhase::Final {
                                    final_base = Some(out.clone());
                                }
                                xi[s] = Some(out);
                            }
                            // accumulate −ρ̃_ij [K_P(t), L_PQ(t) σ_ij]
                            for (i, m) in acc.iter_mut().enumerate() {
                                let mut l = DMatrix::<Complex64>::zeros(n, n);
                                for mu in 0..n {
                                    for nu in 0..n {
                                        let aq = proj.a[(q, mu * n + nu)];
                                        if aq == 0.0 {
                                            continue;
                                        }
                                        let (x, y) = c.l_op(mu, nu);
                                        l[(x, y)] += xi[slot(x, y)].as_ref().unwrap()[i] * aq;
                                    }
                                }
                                let k = setup.k_operator(c, p, times[i]);
                                let ls = &l * &term.sigma;
                                *m -= (&k * &ls - &ls * &k) * term.rho;
                            }
                        }
                    }
                }
            }
        }

        Ok(Self {
            values: acc.iter().map(flatten_with_adjoint).collect(),
            spacing: h,
        })
    }

    /// Identically zero source (no inhomogeneous terms).
    pub fn zeros(n: usize, len: usize, spacing: f64) -> Self {
        Self {
            values: vec![DVector::zeros(n * n); len],
            spacing,
        }
    }

    pub fn at(&self, index: usize) -> &DVector<Complex64> {
        &self.values[index]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }
}
