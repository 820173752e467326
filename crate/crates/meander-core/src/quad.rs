//! Gauss–Legendre quadrature on finite intervals.
//!
//! Nodes and weights are computed on demand by Newton iteration on the
//! Legendre polynomial (the classical Golub-free construction; see
//! Press et al., *Numerical Recipes*, §4.6). An adaptive wrapper doubles the
//! node count until two successive estimates agree to a requested tolerance.

use crate::error::{Error, Result};

/// Nodes and weights of the n-point Gauss–Legendre rule on [−1, 1].
///
/// Exact for polynomials of degree ≤ 2n − 1.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi-style initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n(x) and P_n'(x) by the three-term recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * p - pm) / (x * x - 1.0);
            let step = p / dp;
            x -= step;
            if step.abs() <= 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x; // ascending order: the cosine guesses start near +1
        weights[i] = w;
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// ∫_a^b f(x) dx by the n-point Gauss–Legendre rule.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> f64 {
    if a == b {
        return 0.0;
    }
    let (nodes, weights) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in nodes.iter().zip(&weights) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// ∫_a^b f(x) dx with node doubling from `start_n` until two successive
/// estimates agree to `tol` relative to max(1, |I|), or a convergence error
/// once the node count would exceed 8192.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    tol: f64,
    start_n: usize,
) -> Result<f64> {
    const MAX_NODES: usize = 8192;
    let mut n = start_n.max(2);
    let mut prev = integrate(&mut f, a, b, n);
    while n <= MAX_NODES / 2 {
        n *= 2;
        let cur = integrate(&mut f, a, b, n);
        if (cur - prev).abs() <= tol * cur.abs().max(1.0) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::Numeric(format!(
        "quadrature did not stabilise to {tol:.1e} within {MAX_NODES} nodes on [{a}, {b}]"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn nodes_are_symmetric_and_weights_sum_to_two() {
        for &n in &[1usize, 2, 3, 8, 63, 64] {
            let (nodes, weights) = gauss_legendre(n);
            let wsum: f64 = weights.iter().sum();
            assert_relative_eq!(wsum, 2.0, max_relative = 1e-13);
            for i in 0..n {
                assert_abs_diff_eq!(nodes[i], -nodes[n - 1 - i], epsilon = 1e-14);
                assert_relative_eq!(weights[i], weights[n - 1 - i], max_relative = 1e-12);
            }
            for i in 1..n {
                assert!(nodes[i] > nodes[i - 1], "nodes must be ascending");
            }
        }
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        // ∫_{−1}^{1} x^{10} dx = 2/11 needs only 6 nodes.
        let got = integrate(|x| x.powi(10), -1.0, 1.0, 6);
        assert_relative_eq!(got, 2.0 / 11.0, max_relative = 1e-14);
    }

    #[test]
    fn integrates_sine_over_half_period() {
        let got = integrate(f64::sin, 0.0, std::f64::consts::PI, 20);
        assert_relative_eq!(got, 2.0, max_relative = 1e-14);
    }

    #[test]
    fn adaptive_reaches_tight_tolerance_on_gaussian_tail() {
        // ∫_0^12 x e^{−x²/2} dx = 1 − e^{−72}.
        let got = integrate_adaptive(|x| x * (-x * x / 2.0).exp(), 0.0, 12.0, 1e-12, 8).unwrap();
        assert_relative_eq!(got, 1.0 - (-72.0f64).exp(), max_relative = 1e-11);
    }

    #[test]
    fn adaptive_flags_non_stabilising_integrand() {
        // An endpoint singularity x^{−0.999} keeps successive refinements moving.
        let err = integrate_adaptive(|x| x.powf(-0.999), 0.0, 1.0, 1e-12, 8);
        assert!(matches!(err, Err(Error::Numeric(_))));
    }

    #[test]
    fn empty_interval_is_zero() {
        assert_eq!(integrate(|x| x * x, 3.0, 3.0, 16), 0.0);
    }
}
