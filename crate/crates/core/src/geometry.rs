//! Obstacle shapes and the exterior conformal map `T` onto the exterior of
//! the unit disk, normalized so that `T(z) = beta * z + h(z)` with `beta > 0`
//! and `h` bounded.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ShapeKind {
    UnitDisk,
    /// Ellipse with semi-axes `a >= b > 0` along the coordinate axes.
    Ellipse { a: f64, b: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleShape {
    pub kind: ShapeKind,
    /// Radius of a ball centered at the origin containing the obstacle.
    pub bounding_radius: f64,
}

impl ObstacleShape {
    pub fn unit_disk() -> Self {
        ObstacleShape { kind: ShapeKind::UnitDisk, bounding_radius: 1.0 }
    }

    pub fn ellipse(a: f64, b: f64) -> Result<Self> {
        if !(b > 0.0 && a >= b && a.is_finite()) {
            return Err(Error::Config(format!("ellipse needs a >= b > 0, got a={a}, b={b}")));
        }
        Ok(ObstacleShape { kind: ShapeKind::Ellipse { a, b }, bounding_radius: a })
    }

    /// Overrides the bounding radius; it may not be smaller than the
    /// farthest boundary point.
    pub fn with_bounding_radius(mut self, r: f64) -> Result<Self> {
        if !(r >= self.max_boundary_radius() && r.is_finite()) {
            return Err(Error::Config(format!(
                "bounding radius {r} does not contain the obstacle (needs >= {})",
                self.max_boundary_radius()
            )));
        }
        self.bounding_radius = r;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if let ShapeKind::Ellipse { a, b } = self.kind {
            ObstacleShape::ellipse(a, b)?;
        }
        if !(self.bounding_radius >= self.max_boundary_radius()) {
            return Err(Error::Config("bounding radius smaller than the obstacle".into()));
        }
        Ok(())
    }

    pub fn max_boundary_radius(&self) -> f64 {
        match self.kind {
            ShapeKind::UnitDisk => 1.0,
            ShapeKind::Ellipse { a, .. } => a,
        }
    }

    /// Level-set value: `< 1` inside, `1` on the boundary, `> 1` outside.
    pub fn level(&self, x: Vec2) -> f64 {
        match self.kind {
            ShapeKind::UnitDisk => x[0] * x[0] + x[1] * x[1],
            ShapeKind::Ellipse { a, b } => (x[0] / a).powi(2) + (x[1] / b).powi(2),
        }
    }

    /// Whether `x` lies in the closed unit-scale obstacle.
    pub fn contains(&self, x: Vec2) -> bool {
        self.level(x) <= 1.0
    }

    /// Whether `x` lies in the closed obstacle scaled by `eps`.
    pub fn contains_scaled(&self, eps: f64, x: Vec2) -> bool {
        self.contains([x[0] / eps, x[1] / eps])
    }

    /// Boundary point at parameter `t` (radians).
    pub fn boundary_point(&self, t: f64) -> Vec2 {
        match self.kind {
            ShapeKind::UnitDisk => [t.cos(), t.sin()],
            ShapeKind::Ellipse { a, b } => [a * t.cos(), b * t.sin()],
        }
    }

    /// Distance from the origin to the boundary along polar angle `theta`.
    pub fn boundary_radius(&self, theta: f64) -> f64 {
        match self.kind {
            ShapeKind::UnitDisk => 1.0,
            ShapeKind::Ellipse { a, b } => {
                a * b / ((b * theta.cos()).powi(2) + (a * theta.sin()).powi(2)).sqrt()
            }
        }
    }

    /// Area of the unit-scale obstacle.
    pub fn area(&self) -> f64 {
        match self.kind {
            ShapeKind::UnitDisk => std::f64::consts::PI,
            ShapeKind::Ellipse { a, b } => std::f64::consts::PI * a * b,
        }
    }
}

/// 2x2 matrix, row-major.
pub type Mat2 = [[f64; 2]; 2];

pub fn mat_t_vec(m: &Mat2, v: Vec2) -> Vec2 {
    [m[0][0] * v[0] + m[1][0] * v[1], m[0][1] * v[0] + m[1][1] * v[1]]
}

/// Real 2x2 matrix of multiplication by the complex number `c`.
pub fn complex_matrix(c: Complex64) -> Mat2 {
    [[c.re, -c.im], [c.im, c.re]]
}

#[inline]
pub fn to_c(x: Vec2) -> Complex64 {
    Complex64::new(x[0], x[1])
}

#[inline]
pub fn from_c(z: Complex64) -> Vec2 {
    [z.re, z.im]
}

/// Biholomorphism from the exterior of the obstacle onto the exterior of
/// the closed unit disk, fixing infinity with positive derivative there.
///
/// For the ellipse it is the inverse of the Joukowski map
/// `Z(zeta) = c1 * zeta + c2 / zeta`, `c1 = (a+b)/2`, `c2 = (a-b)/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConformalMap {
    pub shape: ObstacleShape,
    beta: f64,
    c1: f64,
    c2: f64,
}

impl ConformalMap {
    pub fn new(shape: ObstacleShape) -> Result<Self> {
        shape.validate()?;
        let (c1, c2) = match shape.kind {
            ShapeKind::UnitDisk => (1.0, 0.0),
            ShapeKind::Ellipse { a, b } => (0.5 * (a + b), 0.5 * (a - b)),
        };
        let mut map = ConformalMap { shape, beta: 1.0, c1, c2 };
        if !map.is_identity() {
            map.beta = map.extrapolate_beta();
        }
        Ok(map)
    }

    pub fn is_identity(&self) -> bool {
        self.c1 == 1.0 && self.c2 == 0.0
    }

    /// Asymptotic dilation `beta = lim T(x)/x`.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `1/c1`, the exact dilation of the Joukowski inverse; used to
    /// cross-check the extrapolated value.
    pub fn closed_form_beta(&self) -> f64 {
        1.0 / self.c1
    }

    /// Far-field estimates `|T(r)|/r` at `r = 1e2, 1e3, 1e4` followed by
    /// their Richardson-extrapolated limit (`h = O(1/r)`).
    pub fn beta_estimates(&self) -> [f64; 4] {
        let est = |r: f64| self.raw_map(Complex64::new(r, 0.0)).norm() / r;
        let (b2, b3, b4) = (est(1e2), est(1e3), est(1e4));
        let rich = (100.0 * b4 - b3) / 99.0;
        [b2, b3, b4, rich]
    }

    fn extrapolate_beta(&self) -> f64 {
        self.beta_estimates()[3]
    }

    fn raw_map(&self, z: Complex64) -> Complex64 {
        if self.is_identity() {
            return z;
        }
        // zeta^2 c1 - z zeta + c2 = 0; the product of the roots is c2/c1 < 1,
        // so exactly one root lies outside the unit circle.
        let disc = (z * z - 4.0 * self.c1 * self.c2).sqrt();
        let r1 = (z + disc) / (2.0 * self.c1);
        let r2 = (z - disc) / (2.0 * self.c1);
        if r1.norm_sqr() >= r2.norm_sqr() {
            r1
        } else {
            r2
        }
    }

    fn check_exterior(&self, x: Vec2) -> Result<()> {
        let lv = self.shape.level(x);
        if !(lv > 1.0) || !lv.is_finite() {
            return Err(Error::Domain(format!("point ({}, {}) is not exterior to the obstacle", x[0], x[1])));
        }
        Ok(())
    }

    /// `T(x)` for `x` strictly outside the unit-scale obstacle.
    pub fn map_point(&self, x: Vec2) -> Result<Vec2> {
        self.check_exterior(x)?;
        Ok(from_c(self.map_c(to_c(x))))
    }

    /// Unchecked complex form of `T`; points on the boundary are accepted.
    pub fn map_c(&self, z: Complex64) -> Complex64 {
        self.raw_map(z)
    }

    /// Complex derivative `T'(z)`, unchecked.
    pub fn derivative_c(&self, z: Complex64) -> Complex64 {
        if self.is_identity() {
            return Complex64::new(1.0, 0.0);
        }
        let zeta = self.raw_map(z);
        1.0 / self.inverse_derivative(zeta)
    }

    /// Jacobian matrix `DT(x)`.
    pub fn map_jacobian(&self, x: Vec2) -> Result<Mat2> {
        self.check_exterior(x)?;
        Ok(complex_matrix(self.derivative_c(to_c(x))))
    }

    /// `h(x) = T(x) - beta x`.
    pub fn h(&self, x: Vec2) -> Result<Vec2> {
        let t = self.map_point(x)?;
        Ok([t[0] - self.beta * x[0], t[1] - self.beta * x[1]])
    }

    /// `(beta, h)` as a pair: the dilation and an evaluator of the bounded
    /// remainder.
    pub fn asymptotic_params(&self) -> (f64, impl Fn(Vec2) -> Result<Vec2> + '_) {
        (self.beta, move |x| self.h(x))
    }

    /// `Jacobian of h`, i.e. `DT(x) - beta I`.
    pub fn h_jacobian(&self, x: Vec2) -> Result<Mat2> {
        let mut m = self.map_jacobian(x)?;
        m[0][0] -= self.beta;
        m[1][1] -= self.beta;
        Ok(m)
    }

    /// Inverse map `T^{-1}(zeta)` for `|zeta| >= 1`.
    pub fn inverse_c(&self, zeta: Complex64) -> Complex64 {
        self.c1 * zeta + self.c2 / zeta
    }

    /// Derivative of the inverse map.
    pub fn inverse_derivative(&self, zeta: Complex64) -> Complex64 {
        self.c1 - self.c2 / (zeta * zeta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norm;

    fn ellipse_map() -> ConformalMap {
        ConformalMap::new(ObstacleShape::ellipse(1.5, 0.5).unwrap()).unwrap()
    }

    #[test]
    fn disk_map_is_identity() {
        let m = ConformalMap::new(ObstacleShape::unit_disk()).unwrap();
        assert_eq!(m.map_point([2.0, 0.0]).unwrap(), [2.0, 0.0]);
        assert_eq!(m.map_point([-0.9, 0.7]).unwrap(), [-0.9, 0.7]);
        assert_eq!(m.map_jacobian([0.3, 1.4]).unwrap(), [[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(m.beta(), 1.0);
        assert_eq!(m.h([3.0, -4.0]).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn interior_points_are_rejected() {
        let m = ellipse_map();
        assert!(matches!(m.map_point([0.0, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(m.map_point([1.5, 0.0]), Err(Error::Domain(_))));
        assert!(m.map_point([1.5 + 1e-9, 0.0]).is_ok());
    }

    #[test]
    fn ellipse_boundary_maps_to_unit_circle() {
        let m = ellipse_map();
        let mut worst: f64 = 0.0;
        for k in 0..1000 {
            let t = 2.0 * std::f64::consts::PI * k as f64 / 1000.0;
            let x = m.shape.boundary_point(t);
            worst = worst.max((m.map_c(to_c(x)).norm() - 1.0).abs());
        }
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn exterior_maps_outside_unit_circle() {
        let m = ellipse_map();
        for &x in &[[1.6, 0.0], [0.0, 0.6], [1.0, 1.0], [-3.0, 0.2], [0.1, -0.51]] {
            assert!(norm(m.map_point(x).unwrap()) > 1.0);
        }
    }

    #[test]
    fn ellipse_beta_extrapolation() {
        let m = ellipse_map();
        let est = m.beta_estimates();
        assert!((est[1] - est[2]).abs() < 1e-5);
        assert!((est[2] - est[3]).abs() < 1e-5);
        assert!((m.beta() - m.closed_form_beta()).abs() < 1e-10);
        assert!(m.beta() > 0.0);
    }

    #[test]
    fn ellipse_jacobian_far_field_matches_finite_differences() {
        let m = ellipse_map();
        let x = [1e3 / 2f64.sqrt(), 1e3 / 2f64.sqrt()];
        let d = m.map_jacobian(x).unwrap();
        let hstep = 1e-2;
        for j in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += hstep;
            xm[j] -= hstep;
            let tp = m.map_point(xp).unwrap();
            let tm = m.map_point(xm).unwrap();
            for i in 0..2 {
                let fd = (tp[i] - tm[i]) / (2.0 * hstep);
                assert!((fd - d[i][j]).abs() < 1e-8);
                let target = if i == j { m.beta() } else { 0.0 };
                assert!((d[i][j] - target).abs() < 1e-4 * m.beta());
            }
        }
    }

    #[test]
    fn h_difference_quotient_is_bounded() {
        let m = ellipse_map();
        let mut pts = Vec::new();
        for i in 0..40 {
            for k in 0..24 {
                let r = 5.0 * 1.15f64.powi(i);
                let t = 2.0 * std::f64::consts::PI * k as f64 / 24.0 + 0.1 * i as f64;
                pts.push([r * t.cos(), r * t.sin()]);
            }
        }
        let mut sup: f64 = 0.0;
        for (i, &z1) in pts.iter().enumerate().step_by(7) {
            for &z2 in pts.iter().skip(i + 1).step_by(5) {
                let dh = norm({
                    let a = m.h(z1).unwrap();
                    let b = m.h(z2).unwrap();
                    [a[0] - b[0], a[1] - b[1]]
                });
                let dz = norm([z1[0] - z2[0], z1[1] - z2[1]]);
                sup = sup.max(dh * norm(z1) * norm(z2) / dz);
            }
        }
        // h(z) = -(c2/c1^2)/z + O(z^-3), so the quotient tends to c2/c1^2 = 0.5
        assert!(sup.is_finite() && sup < 1.0, "{sup}");
    }

    #[test]
    fn dh_decays_like_inverse_square() {
        let m = ellipse_map();
        let rs: Vec<f64> = (0..20).map(|i| 5.0 * 100f64.powf(i as f64 / 19.0)).collect();
        let pairs: Vec<(f64, f64)> = rs
            .iter()
            .map(|&r| {
                let j = m.h_jacobian([r * 0.6, r * 0.8]).unwrap();
                (r, (j[0][0].powi(2) + j[1][0].powi(2)).sqrt())
            })
            .collect();
        let fit = crate::harness::fit_rate(&pairs).unwrap();
        assert!(fit.slope <= -2.0 + 0.1, "{}", fit.slope);
    }
}
