//! Normalised (probabilists') Hermite polynomials
//! `H_k(x) = (−1)^k / √(k!) · e^{x²/2} dᵏ/dxᵏ e^{−x²/2}`, orthonormal under
//! the standard Gaussian measure.

use crate::{Error, Result};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Highest supported order.
pub const MAX_ORDER: usize = 30;

/// `H_k(x)` via `x·H_k = √(k+1)·H_{k+1} + √k·H_{k−1}`.
pub fn hermite(k: usize, x: f64) -> Result<f64> {
    if k > MAX_ORDER {
        return Err(Error::Domain(format!("hermite order {k} exceeds {MAX_ORDER}")));
    }
    Ok(hermite_unchecked(k, x))
}

#[inline]
pub(crate) fn hermite_unchecked(k: usize, x: f64) -> f64 {
    let mut prev = 1.0;
    if k == 0 {
        return prev;
    }
    let mut cur = x;
    for n in 1..k {
        let next = (x * cur - libm::sqrt(n as f64) * prev) / libm::sqrt((n + 1) as f64);
        prev = cur;
        cur = next;
    }
    cur
}

/// Gauss–Hermite rule for `E[g(Z)]`, `Z ~ N(0, 1)`: returns `(nodes, weights)`
/// with weights summing to one.
///
/// Roots are found by Newton iteration on the orthonormal physicists'
/// recurrence and then rescaled to the Gaussian measure.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => libm::sqrt(2.0 * nf + 1.0) - 1.85575 * libm::pow(2.0 * nf + 1.0, -0.16667),
            1 => z - 1.14 * libm::pow(nf, 0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = (j + 1) as f64;
                p1 = z * libm::sqrt(2.0 / jf) * p2 - libm::sqrt((jf - 1.0) / jf) * p3;
            }
            pp = libm::sqrt(2.0 * nf) * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    let norm = libm::sqrt(core::f64::consts::PI);
    let nodes = x.iter().rev().map(|t| core::f64::consts::SQRT_2 * t).collect();
    let weights = w.iter().rev().map(|wi| wi / norm).collect();
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_orders() {
        assert_eq!(hermite(0, 7.3).unwrap(), 1.0);
        assert_eq!(hermite(1, -2.5).unwrap(), -2.5);
        assert_eq!(hermite(2, 1.0).unwrap(), 0.0);
        for i in -40..=40 {
            let x = i as f64 * 0.1;
            let h2 = (x * x - 1.0) / core::f64::consts::SQRT_2;
            let h3 = (x * x * x - 3.0 * x) / libm::sqrt(6.0);
            assert!((hermite(2, x).unwrap() - h2).abs() < 1e-12);
            assert!((hermite(3, x).unwrap() - h3).abs() < 1e-12);
        }
    }

    #[test]
    fn order_cap() {
        assert!(hermite(30, 0.5).is_ok());
        assert!(matches!(hermite(31, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn quadrature_integrates_gaussian_moments() {
        let (x, w) = gauss_hermite(20);
        let moment = |p: i32| x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(p)).sum::<f64>();
        assert!((moment(0) - 1.0).abs() < 1e-13);
        assert!(moment(1).abs() < 1e-13);
        assert!((moment(2) - 1.0).abs() < 1e-12);
        assert!((moment(4) - 3.0).abs() < 1e-11);
        assert!((moment(6) - 15.0).abs() < 1e-10);
    }

    #[test]
    fn orthonormal_under_quadrature() {
        let (x, w) = gauss_hermite(40);
        for j in 0..=5 {
            for k in 0..=5 {
                let s: f64 = x
                    .iter()
                    .zip(&w)
                    .map(|(xi, wi)| wi * hermite(j, *xi).unwrap() * hermite(k, *xi).unwrap())
                    .sum();
                let expected = if j == k { 1.0 } else { 0.0 };
                assert!((s - expected).abs() < 1e-10, "({j},{k}) -> {s}");
            }
        }
    }
}
