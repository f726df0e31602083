//! Small numerical building blocks shared across modules.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            x[0] = 0.0;
            w[0] = 2.0;
            break;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

const GREGORY_END: [f64; 3] = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];

/// Weight of sample `k` in a fourth-order rule for `∫_0^{n h}` on `n + 1`
/// equispaced samples (unit spacing). Closed Newton-Cotes for `n < 5`,
/// end-corrected trapezoid otherwise.
#[inline]
pub fn gregory_weight(n: usize, k: usize) -> f64 {
    debug_assert!(k <= n);
    match n {
        0 => 0.0,
        1 => 0.5,
        2 => [1.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0][k],
        3 => [3.0 / 8.0, 9.0 / 8.0, 9.0 / 8.0, 3.0 / 8.0][k],
        4 => [
            14.0 / 45.0,
            64.0 / 45.0,
            24.0 / 45.0,
            64.0 / 45.0,
            14.0 / 45.0,
        ][k],
        _ => {
            if k < 3 {
                GREGORY_END[k]
            } else if k + 3 > n {
                GREGORY_END[n - k]
            } else {
                1.0
            }
        }
    }
}

/// Indices whose weight differs from one for an `n`-interval rule.
pub fn gregory_special_indices(n: usize) -> Vec<usize> {
    if n < 5 {
        (0..=n).collect()
    } else {
        vec![0, 1, 2, n - 2, n - 1, n]
    }
}

/// `∫_0^{n h} y` from samples `y[0..=n]`.
pub fn gregory_integral(y: &[Complex64], h: f64) -> Complex64 {
    let n = y.len().saturating_sub(1);
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, v) in y.iter().enumerate() {
        acc += v * gregory_weight(n, k);
    }
    acc * h
}

/// Running integrals `∫_0^{t_n} y` for every `n`.
pub fn gregory_cumulative(y: &[Complex64], h: f64) -> Vec<Complex64> {
    let len = y.len();
    let mut prefix = vec![Complex64::new(0.0, 0.0); len + 1];
    for k in 0..len {
        prefix[k + 1] = prefix[k] + y[k];
    }
    (0..len)
        .map(|n| {
            if n < 5 {
                gregory_integral(&y[..=n], h)
            } else {
                let mut acc = prefix[n + 1];
                for &k in &gregory_special_indices(n) {
                    acc += y[k] * (gregory_weight(n, k) - 1.0);
                }
                acc * h
            }
        })
        .collect()
}

/// Four-point Lagrange interpolation of equispaced samples `y0..y3` at
/// fractional position `x` measured from `y1` in units of the spacing.
#[inline]
pub fn lagrange4(y: [f64; 4], x: f64) -> f64 {
    let (xm1, x0, x1, x2) = (x + 1.0, x, x - 1.0, x - 2.0);
    -y[0] * x0 * x1 * x2 / 6.0 + y[1] * xm1 * x1 * x2 / 2.0 - y[2] * xm1 * x0 * x2 / 2.0
        + y[3] * xm1 * x0 * x1 / 6.0
}

/// Matrix exponential by scaling and squaring of a Taylor series.
pub fn expm(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = a.nrows();
    let norm = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut s = 0;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        s += 1;
    }
    let x = a * Complex64::new(scale, 0.0);
    let mut term = DMatrix::<Complex64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &x * Complex64::new(1.0 / k as f64, 0.0);
        sum += &term;
        if term.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-18 {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Hermitian eigenvalues in ascending order.
pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    let herm = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let mut ev: Vec<f64> = herm.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in [1, 2, 5, 12, 24] {
            let (x, w) = gauss_legendre(n);
            let sw: f64 = w.iter().sum();
            assert!((sw - 2.0).abs() < 1e-14);
            let deg = 2 * n - 1;
            let q: f64 = x
                .iter()
                .zip(&w)
                .map(|(x, w)| w * x.powi(deg as i32 - 1))
                .sum();
            let exact = if (deg - 1) % 2 == 0 {
                2.0 / deg as f64
            } else {
                0.0
            };
            assert!((q - exact).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn gregory_fourth_order() {
        let f = |t: f64| Complex64::new((0.7 * t).cos() * (-0.1 * t).exp(), 0.0);
        let exact = |t: f64| {
            let (a, b) = (-0.1_f64, 0.7_f64);
            ((a * t).exp() * (a * (b * t).cos() + b * (b * t).sin()) - a) / (a * a + b * b)
        };
        let err = |h: f64| {
            let n = (10.0 / h).round() as usize;
            let y: Vec<_> = (0..=n).map(|k| f(k as f64 * h)).collect();
            (gregory_integral(&y, h).re - exact(10.0)).abs()
        };
        let order = (err(0.05) / err(0.025)).log2();
        assert!((order - 4.0).abs() < 0.3, "order {order}");
        let y: Vec<_> = (0..=400).map(|k| f(k as f64 * 0.025)).collect();
        let cum = gregory_cumulative(&y, 0.025);
        for n in [0, 1, 2, 3, 4, 5, 6, 7, 100, 400] {
            let direct = gregory_integral(&y[..=n], 0.025);
            assert!((cum[n] - direct).norm() < 1e-13);
            // a single interval is only trapezoidal
            let tol = if n == 1 { 1e-5 } else { 1e-8 };
            assert!((cum[n].re - exact(n as f64 * 0.025)).abs() < tol);
        }
    }

    #[test]
    fn gregory_weights_sum_to_length() {
        for n in 0..20 {
            let s: f64 = (0..=n).map(|k| gregory_weight(n, k)).sum();
            assert!((s - n as f64).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn lagrange_reproduces_cubics() {
        let p = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x - 0.3 * x * x * x;
        let y = [p(-1.0), p(0.0), p(1.0), p(2.0)];
        for x in [0.0, 0.25, 0.5, 0.9, 1.0] {
            assert!((lagrange4(y, x) - p(x)).abs() < 1e-13);
        }
    }

    #[test]
    fn expm_of_rotation() {
        let theta = 2.3;
        let a = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(0.0, 0.0),
                Complex64::new(-theta, 0.0),
                Complex64::new(theta, 0.0),
                Complex64::new(0.0, 0.0),
            ],
        );
        let e = expm(&a);
        assert!((e[(0, 0)].re - theta.cos()).abs() < 1e-14);
        assert!((e[(1, 0)].re - theta.sin()).abs() < 1e-14);
    }
}
