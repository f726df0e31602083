//! Superoperator assembly on the flattened density vector.
//!
//! With `A_k = |a⟩⟨b|`, `A_l = |c⟩⟨d|` and coefficient `g = e^{i(ω_k+ω_l)t} Γ_kl`,
//! one term of the generator is
//!
//! ```text
//! −g [A_k, A_l ρ] + h.c. = −g A_k A_l ρ + g A_l ρ A_k − g* ρ A_l† A_k† + g* A_k† ρ A_l†
//! ```
//!
//! which is linear in `ρ` for Hermitian `ρ`. Vector index of `ρ_xy` is `x·N + y`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::rates::{ChannelTensors, CHANNELS};

/// `R(t)` from rate tensors that carry the `e^{iω_l t}` factor implicitly,
/// i.e. `G̃` for running rates or constant Markov tensors.
///
/// `omega` holds the angular eigenfrequencies `κE_α` in rad/fs.
pub fn assemble_r(omega: &[f64], tensors: &ChannelTensors, t_fs: f64) -> DMatrix<Complex64> {
    let n = omega.len();
    let n2 = n * n;
    let mut r = DMatrix::<Complex64>::zeros(n2, n2);
    for c in CHANNELS {
        let t = &tensors[c.index()];
        for al in 0..n {
            for be in 0..n {
                let (a, b) = c.k_op(al, be);
                let wk = omega[a] - omega[b];
                for mu in 0..n {
                    for nu in 0..n {
                        let g = t[(al * n + be, mu * n + nu)];
                        if g.re == 0.0 && g.im == 0.0 {
                            continue;
                        }
                        let (cc, d) = c.l_op(mu, nu);
                        let wl = omega[cc] - omega[d];
                        let g = g * Complex64::from_polar(1.0, (wk + wl) * t_fs);
                        let gc = g.conj();
                        if b == cc {
                            for y in 0..n {
                                r[(a * n + y, d * n + y)] -= g;
                                r[(y * n + a, y * n + d)] -= gc;
                            }
                        }
                        r[(cc * n + b, d * n + a)] += g;
                        r[(b * n + cc, a * n + d)] += gc;
                    }
                }
            }
        }
    }
    r
}

/// Row-major flattening of a square matrix.
pub fn flatten(m: &DMatrix<Complex64>) -> DVector<Complex64> {
    let n = m.nrows();
    DVector::from_fn(n * n, |i, _| m[(i / n, i % n)])
}

/// Inverse of [`flatten`].
pub fn unflatten(v: &DVector<Complex64>) -> DMatrix<Complex64> {
    let n = (v.len() as f64).sqrt().round() as usize;
    DMatrix::from_fn(n, n, |a, b| v[a * n + b])
}

/// Pauli rate matrix `W[μ][α]` (gain of `μ` from `α`) of the secular
/// population dynamics, read directly off the channel tensors.
///
/// ```text
/// gain μ←α = 2 Re(Γ¹_{αμ,μα} + Γ²_{μα,μα} + Γ³_{αμ,αμ} + Γ⁴_{μα,αμ})
/// loss of μ = Σ_α 2 Re(Γ¹_{μα,αμ} + Γ²_{αμ,αμ} + Γ³_{μα,μα} + Γ⁴_{αμ,μα})
/// ```
pub fn pauli_matrix(tensors: &ChannelTensors, n: usize) -> DMatrix<f64> {
    let idx = |a: usize, b: usize| a * n + b;
    let [g1, g2, g3, g4] = tensors;
    let mut w = DMatrix::zeros(n, n);
    for mu in 0..n {
        for al in 0..n {
            let gain = g1[(idx(al, mu), idx(mu, al))]
                + g2[(idx(mu, al), idx(mu, al))]
                + g3[(idx(al, mu), idx(al, mu))]
                + g4[(idx(mu, al), idx(al, mu))];
            let loss = g1[(idx(mu, al), idx(al, mu))]
                + g2[(idx(al, mu), idx(al, mu))]
                + g3[(idx(mu, al), idx(mu, al))]
                + g4[(idx(al, mu), idx(mu, al))];
            w[(mu, al)] += 2.0 * gain.re;
            w[(mu, mu)] -= 2.0 * loss.re;
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::zero_tensors;

    fn hermitian(n: usize, seed: u64) -> DMatrix<Complex64> {
        let mut s = seed;
        let mut next = || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let m = DMatrix::from_fn(n, n, |_, _| Complex64::new(next(), next()));
        &m + m.adjoint()
    }

    fn random_tensors(n: usize, seed: u64) -> ChannelTensors {
        let mut s = seed;
        let mut next = move || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut t = zero_tensors(n);
        for m in t.iter_mut() {
            for z in m.iter_mut() {
                *z = Complex64::new(next(), next());
            }
        }
        t
    }

    #[test]
    fn zero_rates_give_zero_generator() {
        let r = assemble_r(&[0.1, 0.0, -0.2], &zero_tensors(3), 5.0);
        assert!(r.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn generator_is_traceless_and_hermiticity_preserving() {
        let n = 3;
        let omega = [0.03, -0.01, 0.02];
        let r = assemble_r(&omega, &random_tensors(n, 7), 12.5);
        for seed in 0..10 {
            let rho = hermitian(n, seed);
            let out = unflatten(&(&r * flatten(&rho)));
            let tr: Complex64 = (0..n).map(|a| out[(a, a)]).sum();
            assert!(tr.norm() < 1e-12);
            assert!((&out - out.adjoint()).iter().all(|z| z.norm() < 1e-12));
        }
    }

    #[test]
    fn matches_explicit_commutators() {
        // hand expansion of −g[A_k, A_l ρ] + h.c. for one channel-2 entry
        let n = 2;
        let omega = [0.05, 0.0];
        let mut t = zero_tensors(n);
        let g = Complex64::new(0.3, -0.7);
        t[1][(1, 1)] = g; // (αβ) = (0,1), (μν) = (0,1)
        let time = 3.0;
        let r = assemble_r(&omega, &t, time);
        // A_k = S_01† = |1⟩⟨0|, A_l = S_01 = |0⟩⟨1|
        let mut ak = DMatrix::<Complex64>::zeros(2, 2);
        ak[(1, 0)] = Complex64::new(1.0, 0.0);
        let al = ak.adjoint();
        let phase =
            Complex64::from_polar(1.0, ((omega[1] - omega[0]) + (omega[0] - omega[1])) * time);
        let rho = hermitian(2, 3);
        let x = (&ak * &al * &rho - &al * &rho * &ak) * (-g * phase);
        let expect = &x + x.adjoint();
        let got = unflatten(&(&r * flatten(&rho)));
        assert!((got - expect).iter().all(|z| z.norm() < 1e-14));
    }
}
