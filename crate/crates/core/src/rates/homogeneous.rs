//! Homogeneous (thermal) rates.
//!
//! For each channel the generator needs
//! `G̃_kl(t) = ∫_0^t du e^{−iω_l u} C_kl(u)`, from which
//! `Γ_kl(t) = e^{iω_l t} G̃_kl(t) = ∫_0^t ds e^{iω_l s} C_kl(t − s)`.
//! `G̃` is a running integral, so it is advanced by Simpson's rule over each
//! full step, and the half-step value uses the three-point
//! `(5, 8, −1)/12` rule, both fourth-order accurate.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{zero_tensors, Channel, ChannelTensors, PairKernels, PairProjection, CHANNELS};
use crate::bath::KernelTables;
use crate::error::{Error, Result};
use crate::polaron::PolaronFrame;

/// Correlator tensor `C_kl(τ)` of one channel at any `|τ| <= t_max`.
pub fn hom_correlator(
    kernels: &KernelTables,
    frame: &PolaronFrame,
    channel: Channel,
    tau_fs: f64,
) -> Result<DMatrix<Complex64>> {
    let proj = PairProjection::new(frame);
    let np = proj.npairs();
    let sign = channel.kernel_sign();
    let mut c = DMatrix::zeros(np, np);
    for p in 0..np {
        for q in 0..np {
            let k = kernels.k(proj.pairs[p], proj.pairs[q], tau_fs)?;
            c[(p, q)] = super::complex_exp_m1(k * sign) * (proj.beta[p] * proj.beta[q]);
        }
    }
    Ok(proj.contract(&c))
}

/// Running homogeneous integrals for all four channels.
#[derive(Debug, Clone)]
pub struct HomRates {
    proj: PairProjection,
    pair_kernels: PairKernels,
    spacing: f64,
    len: usize,
    index: usize,
    g: ChannelTensors,
    g_mid: ChannelTensors,
    phi: ChannelTensors,
    linear_subtracted: bool,
}

impl HomRates {
    pub fn new(kernels: &KernelTables, frame: &PolaronFrame) -> Self {
        Self::with_mode(kernels, frame, false)
    }

    /// Integrates only the part of `C` beyond first order in `K`.
    pub fn linear_subtracted(kernels: &KernelTables, frame: &PolaronFrame) -> Self {
        Self::with_mode(kernels, frame, true)
    }

    fn with_mode(kernels: &KernelTables, frame: &PolaronFrame, linear_subtracted: bool) -> Self {
        let proj = PairProjection::new(frame);
        let pair_kernels = PairKernels::new(kernels, &proj);
        let n = frame.size();
        let mut s = Self {
            proj,
            pair_kernels,
            spacing: kernels.spacing(),
            len: kernels.len(),
            index: 0,
            g: zero_tensors(n),
            g_mid: zero_tensors(n),
            phi: zero_tensors(n),
            linear_subtracted,
        };
        s.phi = s.integrand(0);
        s
    }

    pub fn projection(&self) -> &PairProjection {
        &self.proj
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn time(&self) -> f64 {
        self.index as f64 * self.spacing
    }

    /// `G̃` at the current time.
    pub fn current(&self) -> &ChannelTensors {
        &self.g
    }

    /// `G̃` half a step before the current time (valid after an advance).
    pub fn midpoint(&self) -> &ChannelTensors {
        &self.g_mid
    }

    /// `e^{−iω_l u} C_kl(u)` on grid index `i`.
    fn integrand(&self, i: usize) -> ChannelTensors {
        let n = self.proj.n;
        let u = i as f64 * self.spacing;
        let cm = self.proj.contract(&self.pair_correlator(-1.0, i));
        let cp = self.proj.contract(&self.pair_correlator(1.0, i));
        let mut out = zero_tensors(n);
        for c in CHANNELS {
            let src = if c.kernel_sign() < 0.0 { &cm } else { &cp };
            let dst = &mut out[c.index()];
            for mu in 0..n {
                for nu in 0..n {
                    let l = mu * n + nu;
                    let ph = Complex64::from_polar(1.0, -self.proj.l_frequency(c, mu, nu) * u);
                    for k in 0..n * n {
                        dst[(k, l)] = src[(k, l)] * ph;
                    }
                }
            }
        }
        out
    }

    /// Advances by two grid intervals (one propagation step).
    pub fn advance(&mut self) -> Result<()> {
        if self.index + 2 >= self.len {
            return Err(Error::Range {
                t_fs: (self.index + 2) as f64 * self.spacing,
                t_max_fs: (self.len - 1) as f64 * self.spacing,
            });
        }
        let p1 = self.integrand(self.index + 1);
        let p2 = self.integrand(self.index + 2);
        let h = self.spacing;
        for c in 0..4 {
            let (p0, p1, p2) = (&self.phi[c], &p1[c], &p2[c]);
            let w = |x: f64| Complex64::new(x, 0.0);
            self.g_mid[c] = &self.g[c] + (p0 * w(5.0) + p1 * w(8.0) - p2) * w(h / 12.0);
            self.g[c] = &self.g[c] + (p0 + p1 * w(4.0) + p2) * w(h / 3.0);
        }
        self.phi = p2;
        self.index += 2;
        Ok(())
    }

    /// Pair-level integrand `ββ(e^{sign·K} − 1)` on grid index `index`,
    /// less its linear part when that is subtracted.
    pub fn pair_correlator(&self, sign: f64, index: usize) -> DMatrix<Complex64> {
        if self.linear_subtracted {
            self.pair_kernels.remainder(&self.proj, sign, index)
        } else {
            self.pair_kernels.correlator(&self.proj, sign, index)
        }
    }

    /// Largest `|C_kl(0)|` of the full contracted correlators.
    pub fn initial_scale(&self) -> f64 {
        [-1.0, 1.0]
            .iter()
            .map(|&sign| {
                let c = self
                    .proj
                    .contract(&self.pair_kernels.correlator(&self.proj, sign, 0));
                c.iter().map(|z| z.norm()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Largest pair integrand at `index` relative to the largest full
    /// pair correlator at `τ = 0`.
    pub fn decay_ratio(&self, index: usize) -> f64 {
        let max_abs = |m: DMatrix<Complex64>| m.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let c0 = max_abs(self.pair_kernels.correlator(&self.proj, -1.0, 0))
            .max(max_abs(self.pair_kernels.correlator(&self.proj, 1.0, 0)));
        if c0 == 0.0 {
            return 0.0;
        }
        max_abs(self.pair_correlator(-1.0, index)).max(max_abs(self.pair_correlator(1.0, index)))
            / c0
    }
}

/// `Γ_kl(t) = e^{iω_l t} G̃_kl(t)`.
pub fn gamma_from_running(proj: &PairProjection, g: &ChannelTensors, t_fs: f64) -> ChannelTensors {
    let n = proj.n;
    let mut out = g.clone();
    for c in CHANNELS {
        let m = &mut out[c.index()];
        for mu in 0..n {
            for nu in 0..n {
                let ph = Complex64::from_polar(1.0, proj.l_frequency(c, mu, nu) * t_fs);
                for k in 0..n * n {
                    m[(k, mu * n + nu)] *= ph;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::QuadratureSettings;
    use crate::model::presets::*;
    use crate::polaron::CouplingTreatment;

    fn max_abs(m: &DMatrix<Complex64>) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn correlator_symmetries() {
        let net = fmo4_network();
        let bath = fmo4_bath();
        let s = QuadratureSettings::default();
        let k = KernelTables::build(&net, &bath, 0.5, 50.0, &s).unwrap();
        let f = PolaronFrame::build(&net, &bath, &k, CouplingTreatment::Renormalized, &s).unwrap();
        for tau in [0.0, 3.0, 20.5] {
            let c1 = hom_correlator(&k, &f, Channel::One, tau).unwrap();
            let c4 = hom_correlator(&k, &f, Channel::Four, tau).unwrap();
            let c2 = hom_correlator(&k, &f, Channel::Two, tau).unwrap();
            let c3 = hom_correlator(&k, &f, Channel::Three, tau).unwrap();
            assert!(max_abs(&(&c1 - &c4)) < 1e-15);
            assert!(max_abs(&(&c2 - &c3)) < 1e-15);
            // stationarity: C(−τ) = C(τ)* for the Hermitian pair kernels
            let c2m = hom_correlator(&k, &f, Channel::Two, -tau).unwrap();
            assert!(max_abs(&(c2m - c2.map(|z| z.conj()))) < 1e-12 * max_abs(&c2).max(1e-30));
        }
    }
}
