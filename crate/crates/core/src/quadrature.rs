//! One-dimensional quadrature rules and the quintic smoothstep used for
//! mollified edges and the corrector cutoff.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
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
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss-Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    x.iter().zip(&w).map(|(&xi, &wi)| (a + half * (xi + 1.0), half * wi)).collect()
}

/// Quintic smoothstep `6t^5 - 15t^4 + 10t^3` clamped to `[0, 1]`, with its
/// first and second derivatives.
pub fn smoothstep(t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if t >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let t2 = t * t;
        let t3 = t2 * t;
        (
            t3 * (10.0 + t * (-15.0 + 6.0 * t)),
            30.0 * t2 * (1.0 - t) * (1.0 - t),
            60.0 * t * (1.0 - t) * (1.0 - 2.0 * t),
        )
    }
}

/// `sup |s'| = 15/8` at `t = 1/2`.
pub const SMOOTHSTEP_MAX_D1: f64 = 1.875;
/// `sup |s''| = 10/sqrt(3)` at `t = (3 -+ sqrt 3)/6`.
pub const SMOOTHSTEP_MAX_D2: f64 = 5.773_502_691_896_258;

/// Composite trapezoid rule over samples `(t, f)`.
pub fn trapezoid(t: &[f64], f: &[f64]) -> f64 {
    t.windows(2).zip(f.windows(2)).map(|(tw, fw)| 0.5 * (tw[1] - tw[0]) * (fw[0] + fw[1])).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let rule = gauss_legendre_on(8, 0.0, 2.0);
        let int: f64 = rule.iter().map(|&(x, w)| w * x.powi(15)).sum();
        assert!((int - 2f64.powi(16) / 16.0).abs() < 1e-9);
        let total: f64 = rule.iter().map(|p| p.1).sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn smoothstep_bounds() {
        let mut m1: f64 = 0.0;
        let mut m2: f64 = 0.0;
        for k in 0..=100_000 {
            let (_, d1, d2) = smoothstep(k as f64 / 100_000.0);
            m1 = m1.max(d1.abs());
            m2 = m2.max(d2.abs());
        }
        assert!((m1 - SMOOTHSTEP_MAX_D1).abs() < 1e-9);
        assert!((m2 - SMOOTHSTEP_MAX_D2).abs() < 1e-6);
    }
}
