//! Gauss–Legendre quadrature with a node-doubling error estimate, bisected
//! adaptively where the estimate is too large.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use crate::error::{Error, Result};

pub const DEFAULT_NODES: usize = 64;

/// Nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Chebyshev-like initial guess, refined by Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

/// Shared rule cache keyed by order.
pub fn rule(n: usize) -> std::sync::Arc<GaussLegendre> {
    static CACHE: OnceLock<Mutex<HashMap<usize, std::sync::Arc<GaussLegendre>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| std::sync::Arc::new(GaussLegendre::new(n)))
        .clone()
}

/// Integrates `f` over [a, b] with `n` nodes and returns the value together
/// with the difference against a `2n`-node evaluation.
pub fn integrate_with_estimate<F: FnMut(f64) -> f64>(
    a: f64,
    b: f64,
    n: usize,
    mut f: F,
) -> (f64, f64) {
    let coarse = rule(n).integrate(a, b, &mut f);
    let fine = rule(2 * n).integrate(a, b, &mut f);
    (fine, (fine - coarse).abs())
}

/// Most subintervals an adaptive integration may use.
const MAX_INTERVALS: usize = 256;

// Splits the interval with the largest error estimate until the estimates
// sum to at most `tol` or the interval budget runs out.
fn adaptive<F: FnMut(f64) -> f64>(a: f64, b: f64, n: usize, tol: f64, f: &mut F) -> (f64, f64) {
    let (v, e) = integrate_with_estimate(a, b, n, &mut *f);
    let mut parts = vec![(a, b, v, e)];
    let mut total = e;
    while total > tol && parts.len() < MAX_INTERVALS && total.is_finite() {
        let worst = (0..parts.len())
            .max_by(|&i, &j| parts[i].3.total_cmp(&parts[j].3))
            .expect("nonempty");
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        for (x, y) in [(lo, mid), (mid, hi)] {
            let (v, e) = integrate_with_estimate(x, y, n, &mut *f);
            parts.push((x, y, v, e));
        }
        total = parts.iter().map(|p| p.3).sum();
    }
    (parts.iter().map(|p| p.2).sum(), total)
}

/// Integrates `f` over [a, b], bisecting where the node-doubling estimate is
/// largest; fails when the summed estimate still exceeds `tol`.
pub fn integrate_checked<F: FnMut(f64) -> f64>(
    a: f64,
    b: f64,
    n: usize,
    tol: f64,
    mut f: F,
) -> Result<f64> {
    let (value, estimate) = adaptive(a, b, n, tol, &mut f);
    if !value.is_finite() || estimate > tol {
        return Err(Error::Quadrature {
            estimate,
            tolerance: tol,
        });
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        for n in [1, 2, 5, 16, 64, 128] {
            let r = GaussLegendre::new(n);
            let s: f64 = r.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n}: {s}");
        }
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        let r = GaussLegendre::new(5);
        // x^9 over [0, 1] = 0.1
        let v = r.integrate(0.0, 1.0, |x| x.powi(9));
        assert!((v - 0.1).abs() < 1e-15);
    }

    #[test]
    fn smooth_integrand() {
        let (v, err) = integrate_with_estimate(0.0, 2.0, 64, |x| (-x).exp());
        assert!((v - (1.0 - (-2.0f64).exp())).abs() < 1e-14);
        assert!(err < 1e-13);
    }

    #[test]
    fn rejects_bad_estimate() {
        let r = integrate_checked(0.0, 1.0, 2, 1e-12, |x| (30.0 * x).sin());
        assert!(matches!(r, Err(Error::Quadrature { .. })));
    }

    #[test]
    fn sharp_integrands_are_bisected() {
        // 2000 e^{-2000 x} is far too steep for one 64-node panel.
        let (_, one_panel) = integrate_with_estimate(0.0, 1.0, 64, |x| 2000.0 * (-2000.0 * x).exp());
        assert!(one_panel > 1e-7);
        let v = integrate_checked(0.0, 1.0, 64, 1e-10, |x| 2000.0 * (-2000.0 * x).exp()).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
    }
}
