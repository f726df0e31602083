//! Second-order rate tensors in the eigenbasis of `H̃0`.
//!
//! The interaction Hamiltonian is `H_I = Σ_k A_k ⊗ X_k`, with system
//! operators built from `S_αβ = |α⟩⟨β|` and its adjoint and bath operators
//! `B̃_mn`, `B̃_mn†`. Four channels arise from the products of two such terms:
//!
//! | channel | `A_k` (time t) | `A_l` (time s) | bath kernel          |
//! |---------|----------------|----------------|----------------------|
//! | 1       | `S_αβ`         | `S_μν`         | `ββ(e^{−K} − 1)`     |
//! | 2       | `S_αβ†`        | `S_μν`         | `ββ(e^{+K} − 1)`     |
//! | 3       | `S_αβ`         | `S_μν†`        | `ββ(e^{+K} − 1)`     |
//! | 4       | `S_αβ†`        | `S_μν†`        | `ββ(e^{−K} − 1)`     |
//!
//! Site pairs enter through `a^P_αβ = κ V_P u_mα u_nβ` for `P = (m, n)`,
//! `m < n`, so tensors carry the `κ²` that turns wavenumbers into fs⁻².
//! An operator `|a⟩⟨b|` evolves with frequency `ω = κ(E_a − E_b)`.

pub mod homogeneous;
pub mod inhomogeneous;
pub mod limits;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::bath::KernelTables;
use crate::model::units::KAPPA;
use crate::polaron::PolaronFrame;

pub use homogeneous::{gamma_from_running, hom_correlator, HomRates};
pub use inhomogeneous::{
    assemble_inhomogeneous, inhom_first_order, inhom_second_order, InhomSeries, XiPhase,
};
pub use limits::{
    foerster_generator, foerster_rate, foerster_transfer_rate, markov_rates,
    markov_rates_extending, redfield_rates, secular_mask, weak_coupling_rates, MarkovRates,
    SecularMask, WeakCouplingRates,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    One,
    Two,
    Three,
    Four,
}

pub const CHANNELS: [Channel; 4] = [Channel::One, Channel::Two, Channel::Three, Channel::Four];

impl Channel {
    pub fn index(self) -> usize {
        match self {
            Channel::One => 0,
            Channel::Two => 1,
            Channel::Three => 2,
            Channel::Four => 3,
        }
    }

    /// Whether `A_k` is the adjoint `S_αβ†`.
    pub fn k_adjoint(self) -> bool {
        matches!(self, Channel::Two | Channel::Four)
    }

    /// Whether `A_l` is the adjoint `S_μν†`.
    pub fn l_adjoint(self) -> bool {
        matches!(self, Channel::Three | Channel::Four)
    }

    /// Sign of `K` in the bath kernel `ββ(e^{±K} − 1)`.
    pub fn kernel_sign(self) -> f64 {
        match self {
            Channel::One | Channel::Four => -1.0,
            Channel::Two | Channel::Three => 1.0,
        }
    }

    /// Ket-bra `(a, b)` of `A_k` for index pair `(α, β)`.
    #[inline]
    pub fn k_op(self, alpha: usize, beta: usize) -> (usize, usize) {
        if self.k_adjoint() {
            (beta, alpha)
        } else {
            (alpha, beta)
        }
    }

    /// Ket-bra `(c, d)` of `A_l` for index pair `(μ, ν)`.
    #[inline]
    pub fn l_op(self, mu: usize, nu: usize) -> (usize, usize) {
        if self.l_adjoint() {
            (nu, mu)
        } else {
            (mu, nu)
        }
    }
}

/// Per-channel `N² × N²` complex tensors indexed `[(α·N + β), (μ·N + ν)]`.
pub type ChannelTensors = [DMatrix<Complex64>; 4];

pub fn zero_tensors(n: usize) -> ChannelTensors {
    std::array::from_fn(|_| DMatrix::zeros(n * n, n * n))
}

/// Pair projection `a^P_αβ = κ V_P u_mα u_nβ` and the pair-level kernels.
#[derive(Debug, Clone)]
pub struct PairProjection {
    pub n: usize,
    pub pairs: Vec<(usize, usize)>,
    /// `pairs × N²`.
    pub a: DMatrix<f64>,
    pub beta: Vec<f64>,
    /// Angular eigenfrequencies `κ E_α`, rad/fs.
    pub omega: Vec<f64>,
}

impl PairProjection {
    pub fn new(frame: &PolaronFrame) -> Self {
        let n = frame.size();
        let pairs = frame.pairs();
        let u = frame.eigenvectors();
        let mut a = DMatrix::zeros(pairs.len(), n * n);
        for (p, &(m, k)) in pairs.iter().enumerate() {
            let v = KAPPA * frame.coupling(m, k);
            for al in 0..n {
                for be in 0..n {
                    a[(p, al * n + be)] = v * u[(m, al)] * u[(k, be)];
                }
            }
        }
        let beta = pairs.iter().map(|&(m, k)| frame.beta(m, k)).collect();
        let omega = frame.energies().iter().map(|e| KAPPA * e).collect();
        Self {
            n,
            pairs,
            a,
            beta,
            omega,
        }
    }

    pub fn npairs(&self) -> usize {
        self.pairs.len()
    }

    /// `ω_l` of `A_l` for column `(μ, ν)` in channel `c`.
    #[inline]
    pub fn l_frequency(&self, c: Channel, mu: usize, nu: usize) -> f64 {
        let (x, y) = c.l_op(mu, nu);
        self.omega[x] - self.omega[y]
    }

    #[inline]
    pub fn k_frequency(&self, c: Channel, alpha: usize, beta: usize) -> f64 {
        let (x, y) = c.k_op(alpha, beta);
        self.omega[x] - self.omega[y]
    }

    /// `Σ_PQ a^P_k c_PQ a^Q_l` for a pair-level matrix `c`.
    pub fn contract(&self, c: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let a = self.a.map(|x| Complex64::new(x, 0.0));
        a.transpose() * c * a
    }
}

/// Pair-level `K_PQ` series on the kernel grid, `None` where identically zero.
#[derive(Debug, Clone)]
pub struct PairKernels {
    pub k: Vec<Option<Vec<Complex64>>>,
    np: usize,
}

impl PairKernels {
    pub fn new(kernels: &KernelTables, proj: &PairProjection) -> Self {
        let np = proj.npairs();
        let mut k = Vec::with_capacity(np * np);
        for &pp in &proj.pairs {
            for &qq in &proj.pairs {
                let comb = kernels.spatial().lambda(pp, qq);
                k.push((!comb.is_zero()).then(|| kernels.k_series(&comb)));
            }
        }
        Self { k, np }
    }

    pub fn get(&self, p: usize, q: usize) -> Option<&Vec<Complex64>> {
        self.k[p * self.np + q].as_ref()
    }

    /// `β_P β_Q (e^{sign·K_PQ(t_i)} − 1)` for every pair.
    pub fn correlator(&self, proj: &PairProjection, sign: f64, index: usize) -> DMatrix<Complex64> {
        self.map(proj, |z| (z * sign).exp_m1(), index)
    }

    /// `β_P β_Q (e^{sign·K} − 1 − sign·K)`, the part beyond first order in `K`.
    pub fn remainder(&self, proj: &PairProjection, sign: f64, index: usize) -> DMatrix<Complex64> {
        self.map(proj, |z| exp_m1_m1(z * sign), index)
    }

    fn map(
        &self,
        proj: &PairProjection,
        f: impl Fn(Complex64) -> Complex64,
        index: usize,
    ) -> DMatrix<Complex64> {
        let np = self.np;
        DMatrix::from_fn(np, np, |p, q| match self.get(p, q) {
            Some(series) => f(series[index]) * (proj.beta[p] * proj.beta[q]),
            None => Complex64::new(0.0, 0.0),
        })
    }
}

/// `e^z − 1 − z` without cancellation for small `|z|`.
fn exp_m1_m1(z: Complex64) -> Complex64 {
    if z.norm() < 1e-2 {
        let mut term = z * z * 0.5;
        let mut sum = term;
        for k in 3..12 {
            term = term * z / k as f64;
            sum += term;
        }
        sum
    } else {
        z.exp() - 1.0 - z
    }
}

trait ExpM1 {
    fn exp_m1(self) -> Self;
}

impl ExpM1 for Complex64 {
    /// `e^z − 1` without cancellation for small `|z|`.
    fn exp_m1(self) -> Self {
        if self.norm() < 1e-3 {
            let mut term = self;
            let mut sum = self;
            for k in 2..10 {
                term = term * self / k as f64;
                sum += term;
            }
            sum
        } else {
            self.exp() - 1.0
        }
    }
}

/// `e^z − 1`, accurate for small `|z|`.
pub fn complex_exp_m1(z: Complex64) -> Complex64 {
    z.exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_operators() {
        assert_eq!(Channel::One.k_op(0, 1), (0, 1));
        assert_eq!(Channel::Two.k_op(0, 1), (1, 0));
        assert_eq!(Channel::Three.l_op(2, 3), (3, 2));
        assert_eq!(Channel::Four.l_op(2, 3), (3, 2));
        assert_eq!(Channel::Two.l_op(2, 3), (2, 3));
    }

    #[test]
    fn exp_m1_m1_matches_direct() {
        for z in [
            Complex64::new(3e-3, 1e-3),
            Complex64::new(0.2, -0.4),
            Complex64::new(9e-3, 0.0),
        ] {
            let direct = z.exp() - 1.0 - z;
            assert!((exp_m1_m1(z) - direct).norm() < 1e-15 * direct.norm().max(1.0) + 1e-17);
        }
    }

    #[test]
    fn exp_m1_small_argument() {
        let z = Complex64::new(1e-9, -2e-9);
        let e = complex_exp_m1(z);
        assert!((e - z).norm() < 1e-17);
        let z = Complex64::new(0.3, 0.2);
        assert!((complex_exp_m1(z) - (z.exp() - 1.0)).norm() < 1e-15);
    }
}
