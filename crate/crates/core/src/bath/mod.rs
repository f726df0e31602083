//! Bath correlation kernels.
//!
//! Every quantity the master equation needs is a signed combination of two
//! base integrals per spatial profile `Δ_p(ω)`:
//!
//! ```text
//! kc_p(t) = ∫ dω J(ω)/ω² Δ_p(ω) coth(ω/2kT) cos(κωt)
//! ks_p(t) = ∫ dω J(ω)/ω² Δ_p(ω) sin(κωt)
//! ```
//!
//! With `λ_mn,pq = Δ_mp − Δ_mq − Δ_np + Δ_nq` and
//! `λ'_ij,mn = Δ_im − Δ_in + Δ_jm − Δ_jn`:
//!
//! ```text
//! K_mn,pq(t) = λ·kc(t) − i λ·ks(t)
//! f_ij,mn(t) = exp(−λ_ij,mn·kc(t) + i λ'_ij,mn·ks(t))
//! β_mn       = exp(−Re K_mn,mn(0) / 2)
//! ```
//!
//! `kc` is even and `ks` odd in `t`, which fixes the values at negative times.

pub mod cache;
pub mod quadrature;
pub mod tables;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::units::{thermal_coth, KAPPA};
use crate::model::{BathSpec, CorrelationModel, SiteNetwork};
pub use quadrature::{OmegaRule, QuadratureSettings};
pub use tables::KernelTables;

/// Frequency profile of the bath cross-correlation between two sites.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    Unit,
    Sinc { delay_fs: f64 },
}

impl Profile {
    #[inline]
    pub fn eval(&self, omega_cm: f64) -> f64 {
        match *self {
            Profile::Unit => 1.0,
            Profile::Sinc { delay_fs } => {
                let x = KAPPA * omega_cm * delay_fs;
                if x.abs() < 1e-6 {
                    1.0 - x * x / 6.0
                } else {
                    x.sin() / x
                }
            }
        }
    }
}

/// Integer-weighted sum of profiles, e.g. `λ_mn,pq(ω)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpatialCombination {
    pub terms: Vec<(usize, f64)>,
}

impl SpatialCombination {
    fn add(&mut self, profile: Option<usize>, coeff: f64) {
        let Some(p) = profile else { return };
        if let Some(t) = self.terms.iter_mut().find(|t| t.0 == p) {
            t.1 += coeff;
        } else {
            self.terms.push((p, coeff));
        }
    }

    fn finish(mut self) -> Self {
        self.terms.retain(|t| t.1 != 0.0);
        self.terms.sort_by_key(|t| t.0);
        self
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Spatial correlation factors `Δ_mn(ω)` for a network and bath model.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialFactors {
    n: usize,
    profiles: Vec<Profile>,
    delta: Vec<Option<usize>>,
}

impl SpatialFactors {
    pub fn new(network: &SiteNetwork, bath: &BathSpec) -> Result<Self> {
        let n = network.size();
        let mut profiles = vec![Profile::Unit];
        let mut delta = vec![None; n * n];
        for m in 0..n {
            for k in 0..n {
                delta[m * n + k] = match bath.correlation {
                    CorrelationModel::Independent => (m == k).then_some(0),
                    CorrelationModel::FullyCorrelated => Some(0),
                    CorrelationModel::PropagatingModes {
                        phonon_speed_nm_per_fs,
                    } => {
                        let d = network.distances().ok_or_else(|| {
                            Error::InvalidModel("propagating-mode baths need site distances".into())
                        })?[(m, k)];
                        if d == 0.0 {
                            Some(0)
                        } else {
                            let delay = d / phonon_speed_nm_per_fs;
                            let pos = profiles.iter().position(|p| {
                                matches!(p, Profile::Sinc { delay_fs } if (delay_fs - delay).abs() <= 1e-12 * delay)
                            });
                            Some(pos.unwrap_or_else(|| {
                                profiles.push(Profile::Sinc { delay_fs: delay });
                                profiles.len() - 1
                            }))
                        }
                    }
                };
            }
        }
        Ok(Self { n, profiles, delta })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn profiles(&self) -> &[Profile] {
        &self.profiles
    }

    /// Profile index of `Δ_mk`, `None` when the sites are uncorrelated.
    pub fn delta(&self, m: usize, k: usize) -> Option<usize> {
        self.delta[m * self.n + k]
    }

    pub fn delta_value(&self, m: usize, k: usize, omega_cm: f64) -> f64 {
        self.delta(m, k)
            .map(|p| self.profiles[p].eval(omega_cm))
            .unwrap_or(0.0)
    }

    /// `λ_mn,pq = Δ_mp − Δ_mq − Δ_np + Δ_nq`.
    pub fn lambda(&self, mn: (usize, usize), pq: (usize, usize)) -> SpatialCombination {
        let ((m, n), (p, q)) = (mn, pq);
        let mut c = SpatialCombination::default();
        c.add(self.delta(m, p), 1.0);
        c.add(self.delta(m, q), -1.0);
        c.add(self.delta(n, p), -1.0);
        c.add(self.delta(n, q), 1.0);
        c.finish()
    }

    /// `λ'_ij,mn = Δ_im − Δ_in + Δ_jm − Δ_jn`.
    pub fn lambda_prime(&self, ij: (usize, usize), mn: (usize, usize)) -> SpatialCombination {
        let ((i, j), (m, n)) = (ij, mn);
        let mut c = SpatialCombination::default();
        c.add(self.delta(i, m), 1.0);
        c.add(self.delta(i, n), -1.0);
        c.add(self.delta(j, m), 1.0);
        c.add(self.delta(j, n), -1.0);
        c.finish()
    }

    pub fn eval(&self, comb: &SpatialCombination, omega_cm: f64) -> f64 {
        comb.terms
            .iter()
            .map(|&(p, c)| c * self.profiles[p].eval(omega_cm))
            .sum()
    }
}

/// Node weights of the base integrals for one quadrature rule.
#[derive(Debug, Clone)]
pub struct ProfileIntegrals {
    pub rule: OmegaRule,
    cos_weights: Vec<Vec<f64>>,
    sin_weights: Vec<Vec<f64>>,
}

impl ProfileIntegrals {
    pub fn new(bath: &BathSpec, spatial: &SpatialFactors, rule: OmegaRule) -> Self {
        let sd = &bath.spectral_density;
        let base: Vec<f64> = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&w, &q)| q * sd.value(w) / (w * w))
            .collect();
        let coth: Vec<f64> = rule
            .nodes
            .iter()
            .map(|&w| thermal_coth(w, bath.kt_cm))
            .collect();
        let mut cos_weights = Vec::new();
        let mut sin_weights = Vec::new();
        for p in spatial.profiles() {
            let s: Vec<f64> = base
                .iter()
                .zip(&rule.nodes)
                .map(|(b, &w)| b * p.eval(w))
                .collect();
            cos_weights.push(s.iter().zip(&coth).map(|(a, c)| a * c).collect());
            sin_weights.push(s);
        }
        Self {
            rule,
            cos_weights,
            sin_weights,
        }
    }

    pub fn profiles(&self) -> usize {
        self.cos_weights.len()
    }

    pub fn cos_weights(&self, p: usize) -> &[f64] {
        &self.cos_weights[p]
    }

    pub fn sin_weights(&self, p: usize) -> &[f64] {
        &self.sin_weights[p]
    }

    /// `(kc_p(t), ks_p(t))`.
    pub fn at(&self, p: usize, t_fs: f64) -> (f64, f64) {
        let mut c = 0.0;
        let mut s = 0.0;
        for ((&w, &cw), &sw) in self
            .rule
            .nodes
            .iter()
            .zip(&self.cos_weights[p])
            .zip(&self.sin_weights[p])
        {
            let (sn, cs) = (KAPPA * w * t_fs).sin_cos();
            c += cw * cs;
            s += sw * sn;
        }
        (c, s)
    }

    /// `K(t)` for a combination.
    pub fn k(&self, comb: &SpatialCombination, t_fs: f64) -> Complex64 {
        let mut out = Complex64::new(0.0, 0.0);
        for &(p, coeff) in &comb.terms {
            let (c, s) = self.at(p, t_fs);
            out += Complex64::new(coeff * c, -coeff * s);
        }
        out
    }
}

fn integrals(
    network: &SiteNetwork,
    bath: &BathSpec,
    settings: &QuadratureSettings,
    t_fs: f64,
) -> Result<(SpatialFactors, ProfileIntegrals, ProfileIntegrals)> {
    bath.validate()?;
    let spatial = SpatialFactors::new(network, bath)?;
    let sd = &bath.spectral_density;
    let coarse = ProfileIntegrals::new(bath, &spatial, OmegaRule::build(sd, settings, t_fs.abs()));
    let fine = ProfileIntegrals::new(
        bath,
        &spatial,
        OmegaRule::build(sd, &settings.doubled(), t_fs.abs()),
    );
    Ok((spatial, coarse, fine))
}

fn check_converged(
    quantity: &str,
    a: Complex64,
    b: Complex64,
    scale: f64,
    na: usize,
    nb: usize,
) -> Result<()> {
    if (a - b).norm() > 1e-6 * scale.max(a.norm()).max(1e-300) {
        return Err(Error::Quadrature {
            quantity: quantity.to_string(),
            nodes: na,
            value: a.norm(),
            refined_nodes: nb,
            refined_value: b.norm(),
        });
    }
    Ok(())
}

fn check_pair(network: &SiteNetwork, pair: (usize, usize)) -> Result<()> {
    let n = network.size();
    if pair.0 >= n || pair.1 >= n {
        return Err(Error::InvalidModel(format!(
            "site pair ({}, {}) outside a {n}-site network",
            pair.0 + 1,
            pair.1 + 1
        )));
    }
    Ok(())
}

/// Converts `Re K_mn,mn(0)` into a renormalisation factor.
pub fn beta_from_k0(k0: f64) -> f64 {
    let x = 0.5 * k0;
    if x > 700.0 {
        log::warn!("renormalisation exponent {x:.3e} underflows; coupling fully suppressed");
        0.0
    } else {
        (-x).exp()
    }
}

/// `β_mn = exp(−½ Re K_mn,mn(0))` by direct quadrature.
pub fn renormalization_factor(
    network: &SiteNetwork,
    bath: &BathSpec,
    pair: (usize, usize),
    settings: &QuadratureSettings,
) -> Result<f64> {
    check_pair(network, pair)?;
    if pair.0 == pair.1 {
        return Ok(1.0);
    }
    let (spatial, coarse, fine) = integrals(network, bath, settings, 0.0)?;
    let comb = spatial.lambda(pair, pair);
    let a = coarse.k(&comb, 0.0);
    let b = fine.k(&comb, 0.0);
    check_converged("K(0)", a, b, a.norm(), coarse.rule.len(), fine.rule.len())?;
    Ok(beta_from_k0(a.re))
}

/// `K_mn,pq(t)` by direct quadrature.
pub fn phonon_correlation(
    network: &SiteNetwork,
    bath: &BathSpec,
    mn: (usize, usize),
    pq: (usize, usize),
    t_fs: f64,
    settings: &QuadratureSettings,
) -> Result<Complex64> {
    for p in [mn, pq] {
        check_pair(network, p)?;
    }
    let (spatial, coarse, fine) = integrals(network, bath, settings, t_fs)?;
    let comb = spatial.lambda(mn, pq);
    let a = coarse.k(&comb, t_fs);
    let b = fine.k(&comb, t_fs);
    let scale: f64 = comb
        .terms
        .iter()
        .map(|&(p, c)| c.abs() * coarse.at(p, 0.0).0)
        .sum();
    check_converged("K(t)", a, b, scale, coarse.rule.len(), fine.rule.len())?;
    Ok(a)
}

/// `f_ij,mn(t) = exp(−λ_ij,mn·kc(t) + i λ'_ij,mn·ks(t))` by direct quadrature.
pub fn displaced_bath_f(
    network: &SiteNetwork,
    bath: &BathSpec,
    ij: (usize, usize),
    mn: (usize, usize),
    t_fs: f64,
    settings: &QuadratureSettings,
) -> Result<Complex64> {
    for p in [ij, mn] {
        check_pair(network, p)?;
    }
    let (spatial, coarse, _) = integrals(network, bath, settings, t_fs)?;
    let lam = spatial.lambda(ij, mn);
    let lam_p = spatial.lambda_prime(ij, mn);
    Ok(f_from_parts(&coarse, &lam, &lam_p, t_fs))
}

/// `f'_ij,mn(t) = 1 / f_ij,mn(t)`.
pub fn displaced_bath_f_prime(
    network: &SiteNetwork,
    bath: &BathSpec,
    ij: (usize, usize),
    mn: (usize, usize),
    t_fs: f64,
    settings: &QuadratureSettings,
) -> Result<Complex64> {
    displaced_bath_f(network, bath, ij, mn, t_fs, settings).map(|f| f.inv())
}

fn f_from_parts(
    pi: &ProfileIntegrals,
    lam: &SpatialCombination,
    lam_p: &SpatialCombination,
    t_fs: f64,
) -> Complex64 {
    let re: f64 = lam.terms.iter().map(|&(p, c)| -c * pi.at(p, t_fs).0).sum();
    let im: f64 = lam_p.terms.iter().map(|&(p, c)| c * pi.at(p, t_fs).1).sum();
    Complex64::new(re, im).exp()
}
