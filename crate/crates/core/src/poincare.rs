//! Scaled Poincare constant on the collar `Pi_eps ∩ B_{(R+2) eps}`.
//!
//! The optimal constant in `|W| <= c |grad W|` for `W` vanishing on the
//! obstacle is `1 / sqrt(mu_1)`, with `mu_1` the smallest eigenvalue of the
//! Laplacian, Dirichlet on the obstacle and natural on the outer circle.
//! It is computed with P1 finite elements on a structured mesh whose radial
//! lines run from the obstacle boundary to the outer circle, a banded
//! Cholesky factorization and inverse iteration.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geometry::ObstacleShape;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoincareResolution {
    pub n_radial: usize,
    pub n_theta: usize,
}

impl PoincareResolution {
    pub fn new(n_radial: usize, n_theta: usize) -> Result<Self> {
        if n_radial < 2 || n_theta < 8 {
            return Err(Error::Config(format!("resolution {n_radial}x{n_theta} is too coarse")));
        }
        Ok(PoincareResolution { n_radial, n_theta })
    }

    pub fn doubled(self) -> Self {
        PoincareResolution { n_radial: 2 * self.n_radial, n_theta: 2 * self.n_theta }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PoincareEstimate {
    pub eps: f64,
    pub mu1: f64,
    /// `1 / sqrt(mu1)`.
    pub c: f64,
    /// `c / eps`.
    pub k6: f64,
    pub resolution: PoincareResolution,
    pub iterations: usize,
}

/// Symmetric banded matrix, lower band stored row by row.
#[derive(Debug, Clone)]
struct Banded {
    n: usize,
    bw: usize,
    a: Vec<f64>,
}

impl Banded {
    fn zeros(n: usize, bw: usize) -> Self {
        Banded { n, bw, a: vec![0.0; n * (bw + 1)] }
    }

    // entry (i, j) with j <= i, i - j <= bw
    fn at(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.a[i * (self.bw + 1) + (self.bw + j - i)]
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * (self.bw + 1) + (self.bw + j - i)]
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        *self.at(i, j) += v;
    }

    fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..i {
                let v = self.get(i, j);
                y[i] += v * x[j];
                y[j] += v * x[i];
            }
            y[i] += self.get(i, i) * x[i];
        }
        y
    }

    /// In-place Cholesky `L L^t`.
    fn cholesky(mut self) -> Result<Banded> {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let klo = lo.max(j.saturating_sub(bw));
                let mut s = self.get(i, j);
                for k in klo..j {
                    s -= self.get(i, k) * self.get(j, k);
                }
                if i == j {
                    if s <= 0.0 {
                        return Err(Error::Convergence("stiffness matrix is not positive definite".into()));
                    }
                    *self.at(i, i) = s.sqrt();
                } else {
                    *self.at(i, j) = s / self.get(j, j);
                }
            }
        }
        Ok(self)
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.n, self.bw);
        let mut y = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = y[i];
            for k in lo..i {
                s -= self.get(i, k) * y[k];
            }
            y[i] = s / self.get(i, i);
        }
        for i in (0..n).rev() {
            y[i] /= self.get(i, i);
            let v = y[i];
            let lo = i.saturating_sub(bw);
            for k in lo..i {
                y[k] -= self.get(i, k) * v;
            }
        }
        y
    }
}

/// Assembled P1 stiffness and mass matrices on the collar, with the
/// obstacle nodes removed.
pub struct CollarProblem {
    stiffness: Banded,
    mass: Banded,
    pub eps: f64,
    pub resolution: PoincareResolution,
}

impl CollarProblem {
    pub fn new(shape: &ObstacleShape, eps: f64, res: PoincareResolution) -> Result<Self> {
        shape.validate()?;
        if !(eps > 0.0) {
            return Err(Error::Config("eps must be positive".into()));
        }
        let outer = shape.bounding_radius + 2.0;
        if shape.max_boundary_radius() >= outer {
            return Err(Error::Domain("collar is empty".into()));
        }
        let (nr, nt) = (res.n_radial, res.n_theta);
        let node = |ir: usize, it: usize| -> [f64; 2] {
            let th = 2.0 * PI * it as f64 / nt as f64;
            let rb = shape.boundary_radius(th);
            let r = eps * (rb + (outer - rb) * ir as f64 / nr as f64);
            [r * th.cos(), r * th.sin()]
        };
        // unknowns: rings 1..=nr
        let n = nr * nt;
        let bw = 2 * nt;
        let mut k = Banded::zeros(n, bw);
        let mut m = Banded::zeros(n, bw);
        let index = |ir: usize, it: usize| -> Option<usize> { (ir > 0).then(|| (ir - 1) * nt + it % nt) };
        for ir in 0..nr {
            for it in 0..nt {
                let quad = [(ir, it), (ir + 1, it), (ir + 1, it + 1), (ir, it + 1)];
                for tri in [[quad[0], quad[1], quad[2]], [quad[0], quad[2], quad[3]]] {
                    let p: Vec<[f64; 2]> = tri.iter().map(|&(a, b)| node(a, b % nt)).collect();
                    let ids: Vec<Option<usize>> = tri.iter().map(|&(a, b)| index(a, b)).collect();
                    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
                    let area = 0.5 * det.abs();
                    // gradients of the barycentric coordinates
                    let mut grad = [[0.0; 2]; 3];
                    for a in 0..3 {
                        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
                        grad[a] = [(p[b][1] - p[c][1]) / det, (p[c][0] - p[b][0]) / det];
                    }
                    for a in 0..3 {
                        let Some(ia) = ids[a] else { continue };
                        for b in 0..3 {
                            let Some(ib) = ids[b] else { continue };
                            if ib > ia {
                                continue;
                            }
                            let kab = area * (grad[a][0] * grad[b][0] + grad[a][1] * grad[b][1]);
                            let mab = area * if a == b { 1.0 / 6.0 } else { 1.0 / 12.0 };
                            k.add(ia, ib, kab);
                            m.add(ia, ib, mab);
                        }
                    }
                }
            }
        }
        Ok(CollarProblem { stiffness: k, mass: m, eps, resolution: res })
    }

    pub fn len(&self) -> usize {
        self.stiffness.n
    }

    /// `(|W|^2, |grad W|^2)` for nodal values `w` of an admissible function.
    pub fn norms_squared(&self, w: &[f64]) -> (f64, f64) {
        let mw = self.mass.mul(w);
        let kw = self.stiffness.mul(w);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        (dot(w, &mw), dot(w, &kw))
    }

    /// Smallest eigenvalue of `K w = mu M w` by inverse iteration.
    pub fn smallest_eigenvalue(&self) -> Result<(f64, Vec<f64>, usize)> {
        let chol = self.stiffness.clone().cholesky()?;
        let mut v = vec![1.0; self.len()];
        let mut mu = f64::INFINITY;
        for it in 1..=500 {
            let w = chol.solve(&self.mass.mul(&v));
            let (mm, kk) = self.norms_squared(&w);
            let next = kk / mm;
            let scale = mm.sqrt();
            v = w.into_iter().map(|x| x / scale).collect();
            if (next - mu).abs() <= 1e-13 * next {
                return Ok((next, v, it));
            }
            mu = next;
        }
        Err(Error::Convergence("inverse iteration did not converge in 500 steps".into()))
    }
}

pub fn poincare_constant(shape: &ObstacleShape, eps: f64, res: PoincareResolution) -> Result<PoincareEstimate> {
    let problem = CollarProblem::new(shape, eps, res)?;
    let (mu1, _, iterations) = problem.smallest_eigenvalue()?;
    let c = 1.0 / mu1.sqrt();
    Ok(PoincareEstimate { eps, mu1, c, k6: c / eps, resolution: res, iterations })
}

#[derive(Debug, Clone, Serialize)]
pub struct K6Estimate {
    pub coarse: PoincareEstimate,
    pub fine: PoincareEstimate,
    /// Richardson extrapolation of `mu1`, assuming second-order convergence.
    pub k6: f64,
    /// `|K6_fine - K6_coarse| / K6_fine`.
    pub spread: f64,
}

pub const DEFAULT_K6_RESOLUTION: PoincareResolution = PoincareResolution { n_radial: 24, n_theta: 96 };

/// `K6` at unit scale from two resolutions.
pub fn k6_with(shape: &ObstacleShape, res: PoincareResolution) -> Result<K6Estimate> {
    let coarse = poincare_constant(shape, 1.0, res)?;
    let fine = poincare_constant(shape, 1.0, res.doubled())?;
    let mu = (4.0 * fine.mu1 - coarse.mu1) / 3.0;
    if !(mu > 0.0) {
        return Err(Error::Convergence("extrapolated eigenvalue is not positive".into()));
    }
    let spread = (fine.k6 - coarse.k6).abs() / fine.k6;
    Ok(K6Estimate { coarse, fine, k6: 1.0 / mu.sqrt(), spread })
}

pub fn k6(shape: &ObstacleShape) -> Result<K6Estimate> {
    k6_with(shape, DEFAULT_K6_RESOLUTION)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn banded_cholesky_solves() {
        let n = 7;
        let mut a = Banded::zeros(n, 2);
        for i in 0..n {
            a.add(i, i, 4.0);
            if i >= 1 {
                a.add(i, i - 1, -1.0);
            }
            if i >= 2 {
                a.add(i, i - 2, 0.5);
            }
        }
        let x: Vec<f64> = (0..n).map(|i| i as f64 - 2.5).collect();
        let b = a.mul(&x);
        let y = a.clone().cholesky().unwrap().solve(&b);
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_collar_is_rejected() {
        let s = ObstacleShape::unit_disk();
        assert!(CollarProblem::new(&s, 0.0, PoincareResolution::new(4, 16).unwrap()).is_err());
        assert!(PoincareResolution::new(1, 16).is_err());
    }

    #[test]
    fn constant_is_positive_and_converges() {
        let s = ObstacleShape::unit_disk();
        let a = poincare_constant(&s, 1.0, PoincareResolution::new(8, 32).unwrap()).unwrap();
        let b = poincare_constant(&s, 1.0, PoincareResolution::new(16, 64).unwrap()).unwrap();
        assert!(a.c > 0.0 && b.c > 0.0);
        assert!((a.k6 - b.k6).abs() / b.k6 < 0.02);
    }
}
