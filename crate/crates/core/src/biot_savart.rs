//! Biot-Savart operators: the full-plane kernel `H = x_perp / (2 pi |x|^2)`,
//! the exterior operator `K^eps` built from the conformal map with an image
//! term, the harmonic field `H^eps`, and the initial data
//! `theta^eps = K^eps[omega0] + m H^eps`.
//!
//! The full-plane part is exact: every support patch is radial about its own
//! center. The image and map corrections are smooth in the source point and
//! are integrated with a polar product rule.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fields::{Field, Grid, PolarExteriorGrid};
use crate::geometry::{from_c, to_c, ConformalMap};
use crate::harness::{fit_rate, RateFit};
use crate::quadrature::{gauss_legendre_on, smoothstep};
use crate::{norm, perp, Error, Result, Vec2};

/// Exponent of the polynomial bump `A (1 - s^2)^p`.
pub const BUMP_POWER: i32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Vec2,
    pub amplitude: f64,
    pub radius: f64,
}

impl Bump {
    pub fn eval(&self, x: Vec2) -> f64 {
        let d2 = ((x[0] - self.center[0]).powi(2) + (x[1] - self.center[1]).powi(2)) / (self.radius * self.radius);
        if d2 >= 1.0 {
            0.0
        } else {
            self.amplitude * (1.0 - d2).powi(BUMP_POWER)
        }
    }

    /// `A pi rho^2 / (p + 1)`.
    pub fn mass(&self) -> f64 {
        self.amplitude * PI * self.radius * self.radius / (BUMP_POWER as f64 + 1.0)
    }
}

/// Initial vorticity, compactly supported away from the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum VorticityProfile {
    /// `omega_bar` on `r1 <= |x| <= r2`; with `mollified` the edges ramp
    /// through a quintic smoothstep of width `0.1 (r2 - r1)` inside the
    /// annulus.
    RadialAnnulus { omega_bar: f64, r1: f64, r2: f64, mollified: bool },
    OffsetBumps { bumps: Vec<Bump> },
}

/// Area-weighted quadrature node over one support patch.
#[derive(Debug, Clone, Copy)]
pub struct QuadNode {
    pub y: Vec2,
    pub area: f64,
    pub omega: f64,
    pub patch: usize,
}

/// Support patches. Each one carries a density that is radial about its
/// own center, so its velocity follows from the enclosed mass.
#[derive(Debug, Clone, Copy)]
pub enum Patch {
    Disk { center: Vec2, radius: f64 },
    Annulus { r1: f64, r2: f64 },
}

impl Patch {
    pub fn center(&self) -> Vec2 {
        match *self {
            Patch::Disk { center, .. } => center,
            Patch::Annulus { .. } => [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResolution {
    pub n_radial: usize,
    pub n_angular: usize,
}

impl Default for QuadratureResolution {
    fn default() -> Self {
        QuadratureResolution { n_radial: 24, n_angular: 128 }
    }
}

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<QuadNode>,
    pub patches: Vec<Patch>,
    /// Per patch, the profile restricted to it (for the local subtraction).
    pub profile: VorticityProfile,
}

impl QuadratureRule {
    pub fn mass(&self) -> f64 {
        self.nodes.iter().map(|n| n.area * n.omega).sum()
    }

    fn patch_density(&self, patch: usize, x: Vec2) -> f64 {
        match &self.profile {
            VorticityProfile::RadialAnnulus { .. } => self.profile.eval(x),
            VorticityProfile::OffsetBumps { bumps } => bumps[patch].eval(x),
        }
    }

    /// Mass of patch `patch` inside the disk of radius `r` about its center.
    pub fn enclosed_mass(&self, patch: usize, r: f64) -> f64 {
        match &self.profile {
            VorticityProfile::OffsetBumps { bumps } => {
                let b = &bumps[patch];
                let s2 = (r / b.radius).powi(2);
                if s2 >= 1.0 {
                    b.mass()
                } else {
                    b.mass() * (1.0 - (1.0 - s2).powi(BUMP_POWER + 1))
                }
            }
            VorticityProfile::RadialAnnulus { r1, r2, mollified, .. } => {
                if r <= *r1 {
                    return 0.0;
                }
                let top = r.min(*r2);
                let mut joints = vec![*r1];
                if *mollified {
                    let w = VorticityProfile::edge_width(*r1, *r2);
                    joints.extend([r1 + w, r2 - w]);
                }
                joints.push(*r2);
                let mut m = 0.0;
                for k in 0..joints.len() - 1 {
                    let (a, b) = (joints[k], joints[k + 1].min(top));
                    if b <= a {
                        break;
                    }
                    // the integrand is a polynomial of degree 6 on each piece
                    for (t, w) in gauss_legendre_on(8, a, b) {
                        m += w * 2.0 * PI * t * self.profile.eval([t, 0.0]);
                    }
                }
                m
            }
        }
    }
}

impl VorticityProfile {
    pub fn radial_annulus(omega_bar: f64, r1: f64, r2: f64, mollified: bool) -> Result<Self> {
        if !(r1 > 0.0 && r2 > r1) {
            return Err(Error::Config(format!("annulus needs 0 < r1 < r2, got {r1}, {r2}")));
        }
        Ok(VorticityProfile::RadialAnnulus { omega_bar, r1, r2, mollified })
    }

    pub fn bumps(bumps: Vec<Bump>) -> Result<Self> {
        let p = VorticityProfile::OffsetBumps { bumps };
        p.validate()?;
        Ok(p)
    }

    pub fn single_bump(center: Vec2, amplitude: f64, radius: f64) -> Result<Self> {
        Self::bumps(vec![Bump { center, amplitude, radius }])
    }

    pub fn zero() -> Self {
        VorticityProfile::OffsetBumps { bumps: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            VorticityProfile::RadialAnnulus { r1, r2, .. } => {
                if !(*r1 > 0.0 && r2 > r1) {
                    return Err(Error::Config("annulus needs 0 < r1 < r2".into()));
                }
            }
            VorticityProfile::OffsetBumps { bumps } => {
                for b in bumps {
                    if !(b.radius > 0.0) || norm(b.center) <= b.radius {
                        return Err(Error::Config(format!(
                            "bump at ({}, {}) with radius {} must stay away from the origin",
                            b.center[0], b.center[1], b.radius
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn edge_width(r1: f64, r2: f64) -> f64 {
        0.1 * (r2 - r1)
    }

    pub fn eval(&self, x: Vec2) -> f64 {
        match self {
            VorticityProfile::RadialAnnulus { omega_bar, r1, r2, mollified } => {
                let r = norm(x);
                if r < *r1 || r > *r2 {
                    return 0.0;
                }
                if !mollified {
                    return *omega_bar;
                }
                let w = Self::edge_width(*r1, *r2);
                let up = smoothstep((r - r1) / w).0;
                let down = smoothstep((r2 - r) / w).0;
                omega_bar * up.min(down)
            }
            VorticityProfile::OffsetBumps { bumps } => bumps.iter().map(|b| b.eval(x)).sum(),
        }
    }

    /// Closed-form total mass `m = int omega`.
    pub fn mass(&self) -> f64 {
        match self {
            VorticityProfile::RadialAnnulus { omega_bar, r1, r2, mollified } => {
                if !mollified {
                    return omega_bar * PI * (r2 * r2 - r1 * r1);
                }
                // int_0^1 s = 1/2, int_0^1 t s(t) = 5/14
                let w = Self::edge_width(*r1, *r2);
                let ramp_up = w * (r1 / 2.0 + 5.0 * w / 14.0);
                let ramp_down = w * (r2 / 2.0 - 5.0 * w / 14.0);
                let plateau = 0.5 * ((r2 - w).powi(2) - (r1 + w).powi(2));
                2.0 * PI * omega_bar * (ramp_up + ramp_down + plateau)
            }
            VorticityProfile::OffsetBumps { bumps } => bumps.iter().map(Bump::mass).sum(),
        }
    }

    /// Smallest distance from the origin to the support.
    pub fn inner_radius(&self) -> f64 {
        match self {
            VorticityProfile::RadialAnnulus { r1, .. } => *r1,
            VorticityProfile::OffsetBumps { bumps } => {
                bumps.iter().map(|b| norm(b.center) - b.radius).fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Radius of a ball about the origin containing the support.
    pub fn outer_radius(&self) -> f64 {
        match self {
            VorticityProfile::RadialAnnulus { r2, .. } => *r2,
            VorticityProfile::OffsetBumps { bumps } => {
                bumps.iter().map(|b| norm(b.center) + b.radius).fold(0.0, f64::max)
            }
        }
    }

    pub fn is_radial(&self) -> bool {
        matches!(self, VorticityProfile::RadialAnnulus { .. })
    }

    pub fn is_zero(&self) -> bool {
        match self {
            VorticityProfile::RadialAnnulus { omega_bar, .. } => *omega_bar == 0.0,
            VorticityProfile::OffsetBumps { bumps } => bumps.iter().all(|b| b.amplitude == 0.0),
        }
    }

    /// Same profile with every amplitude multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        match self.clone() {
            VorticityProfile::RadialAnnulus { omega_bar, r1, r2, mollified } => {
                VorticityProfile::RadialAnnulus { omega_bar: k * omega_bar, r1, r2, mollified }
            }
            VorticityProfile::OffsetBumps { bumps } => VorticityProfile::OffsetBumps {
                bumps: bumps.into_iter().map(|b| Bump { amplitude: k * b.amplitude, ..b }).collect(),
            },
        }
    }

    /// Polar product rule on each patch: Gauss-Legendre in the radius
    /// (split at the mollifier joints) and uniform in angle.
    pub fn quadrature(&self, res: QuadratureResolution) -> QuadratureRule {
        let mut nodes = Vec::new();
        let mut patches = Vec::new();
        let na = res.n_angular.max(4);
        let dth = 2.0 * PI / na as f64;
        let push_ring = |nodes: &mut Vec<QuadNode>, center: Vec2, r: f64, wr: f64, patch: usize, phase: f64| {
            for k in 0..na {
                let t = (k as f64 + phase) * dth;
                let y = [center[0] + r * t.cos(), center[1] + r * t.sin()];
                nodes.push(QuadNode { y, area: wr * r * dth, omega: 0.0, patch });
            }
        };
        match self {
            VorticityProfile::RadialAnnulus { r1, r2, mollified, .. } => {
                patches.push(Patch::Annulus { r1: *r1, r2: *r2 });
                let pieces: Vec<(f64, f64)> = if *mollified {
                    let w = Self::edge_width(*r1, *r2);
                    vec![(*r1, r1 + w), (r1 + w, r2 - w), (r2 - w, *r2)]
                } else {
                    vec![(*r1, *r2)]
                };
                for (a, b) in pieces {
                    for (r, wr) in gauss_legendre_on(res.n_radial, a, b) {
                        push_ring(&mut nodes, [0.0, 0.0], r, wr, 0, 0.5);
                    }
                }
            }
            VorticityProfile::OffsetBumps { bumps } => {
                for (p, b) in bumps.iter().enumerate() {
                    patches.push(Patch::Disk { center: b.center, radius: b.radius });
                    for (r, wr) in gauss_legendre_on(res.n_radial, 0.0, b.radius) {
                        push_ring(&mut nodes, b.center, r, wr, p, 0.5);
                    }
                }
            }
        }
        for n in nodes.iter_mut() {
            n.omega = match self {
                VorticityProfile::OffsetBumps { bumps } => bumps[n.patch].eval(n.y),
                _ => self.eval(n.y),
            };
        }
        nodes.retain(|n| n.omega != 0.0);
        QuadratureRule { nodes, patches, profile: self.clone() }
    }
}

/// Full-plane kernel `H(x) = x_perp / (2 pi |x|^2)`.
pub fn fullplane_h(x: Vec2) -> Result<Vec2> {
    let r2 = x[0] * x[0] + x[1] * x[1];
    if r2 == 0.0 {
        return Err(Error::Domain("the kernel H is singular at the origin".into()));
    }
    let p = perp(x);
    Ok([p[0] / (2.0 * PI * r2), p[1] / (2.0 * PI * r2)])
}

#[inline]
fn kernel(d: Vec2) -> Vec2 {
    let r2 = d[0] * d[0] + d[1] * d[1];
    if r2 < 1e-24 {
        return [0.0, 0.0];
    }
    [-d[1] / (2.0 * PI * r2), d[0] / (2.0 * PI * r2)]
}

/// `K[omega](x)`, exact for each radial patch: `m(r) (x - c)_perp / (2 pi r^2)`.
pub fn fullplane_velocity(rule: &QuadratureRule, x: Vec2) -> Vec2 {
    let mut u = [0.0, 0.0];
    for (p, patch) in rule.patches.iter().enumerate() {
        let c = patch.center();
        let d = [x[0] - c[0], x[1] - c[1]];
        let r2 = d[0] * d[0] + d[1] * d[1];
        if r2 == 0.0 {
            continue;
        }
        let f = rule.enclosed_mass(p, r2.sqrt()) / (2.0 * PI * r2);
        u[0] -= f * d[1];
        u[1] += f * d[0];
    }
    u
}

/// Velocity gradient `du_i/dx_j` of `K[omega]`.
pub fn fullplane_velocity_gradient(rule: &QuadratureRule, x: Vec2) -> [[f64; 2]; 2] {
    let mut g = [[0.0; 2]; 2];
    for (p, patch) in rule.patches.iter().enumerate() {
        let c = patch.center();
        let d = [x[0] - c[0], x[1] - c[1]];
        let r2 = d[0] * d[0] + d[1] * d[1];
        if r2 == 0.0 {
            let w = 0.5 * rule.patch_density(p, x);
            g[0][1] -= w;
            g[1][0] += w;
            continue;
        }
        let r = r2.sqrt();
        let f = rule.enclosed_mass(p, r) / (2.0 * PI * r2);
        // f'(r) = omega / r - 2 f / r
        let fp = rule.patch_density(p, x) / r - 2.0 * f / r;
        let dp = [-d[1], d[0]];
        for i in 0..2 {
            for j in 0..2 {
                g[i][j] += fp * d[j] / r * dp[i];
            }
        }
        g[0][1] -= f;
        g[1][0] += f;
    }
    g
}

/// Exterior Biot-Savart operator on `Pi_eps` with its quadrature data
/// precomputed in mapped coordinates.
pub struct ExteriorBiotSavart {
    pub map: ConformalMap,
    pub eps: f64,
    pub rule: QuadratureRule,
    mapped: Vec<(Complex64, Complex64)>,
}

impl ExteriorBiotSavart {
    pub fn new(map: ConformalMap, eps: f64, profile: &VorticityProfile, res: QuadratureResolution) -> Result<Self> {
        check_admissible(&map, eps, profile)?;
        let rule = profile.quadrature(res);
        let mapped = rule
            .nodes
            .iter()
            .map(|n| {
                let big_y = map.map_c(to_c([n.y[0] / eps, n.y[1] / eps]));
                (big_y, big_y / big_y.norm_sqr())
            })
            .collect();
        Ok(ExteriorBiotSavart { map, eps, rule, mapped })
    }

    pub fn mass(&self) -> f64 {
        self.rule.mass()
    }

    fn inside(&self, x: Vec2) -> bool {
        self.map.shape.contains_scaled(self.eps, x)
    }

    /// `conj(T'(x/eps)) * i / (2 pi eps)`, the factor turning a mapped
    /// complex kernel into a physical velocity.
    fn prefactor(&self, x: Vec2) -> (Complex64, Complex64) {
        let z = to_c([x[0] / self.eps, x[1] / self.eps]);
        let big_x = self.map.map_c(z);
        let d = self.map.derivative_c(z);
        (big_x, d.conj() * Complex64::i() / (2.0 * PI * self.eps))
    }

    /// `K^eps[omega](x)`, zero inside the obstacle.
    pub fn velocity(&self, x: Vec2) -> Vec2 {
        if self.inside(x) {
            return [0.0, 0.0];
        }
        let mut u = fullplane_velocity(&self.rule, x);
        let (big_x, pre) = self.prefactor(x);
        let identity = self.map.is_identity();
        let mut acc = Complex64::new(0.0, 0.0);
        let mut plain = [0.0, 0.0];
        for (n, &(big_y, image)) in self.rule.nodes.iter().zip(&self.mapped) {
            let w = n.area * n.omega;
            if !identity {
                let d = big_x - big_y;
                if d.norm_sqr() > 1e-30 {
                    acc += w / d.conj();
                }
                let k = kernel([x[0] - n.y[0], x[1] - n.y[1]]);
                plain[0] += w * k[0];
                plain[1] += w * k[1];
            }
            acc -= w / (big_x - image).conj();
        }
        let mapped = from_c(pre * acc);
        u[0] += mapped[0] - plain[0];
        u[1] += mapped[1] - plain[1];
        u
    }

    /// `H^eps(x)`.
    pub fn harmonic(&self, x: Vec2) -> Vec2 {
        harmonic_field(&self.map, self.eps, x)
    }

    /// `theta^eps + (alpha - m) H^eps`, i.e. `K^eps[omega] + alpha H^eps`
    /// with `alpha = m + extra_circulation`.
    pub fn initial_velocity(&self, x: Vec2, extra_circulation: f64) -> Vec2 {
        if self.inside(x) {
            return [0.0, 0.0];
        }
        let k = self.velocity(x);
        let h = self.harmonic(x);
        let alpha = self.mass() + extra_circulation;
        [k[0] + alpha * h[0], k[1] + alpha * h[1]]
    }
}

/// Requires `eps (R + 2) < inner support radius`.
pub fn check_admissible(map: &ConformalMap, eps: f64, profile: &VorticityProfile) -> Result<()> {
    profile.validate()?;
    if !(eps > 0.0) {
        return Err(Error::Config("eps must be positive".into()));
    }
    let reach = eps * (map.shape.bounding_radius + 2.0);
    if !profile.is_zero() && reach >= profile.inner_radius() {
        return Err(Error::Config(format!(
            "eps (R+2) = {reach} must be below the inner support radius {}",
            profile.inner_radius()
        )));
    }
    Ok(())
}

/// `H^eps(x) = (1 / 2 pi eps) DT^t(x/eps) T(x/eps)_perp / |T(x/eps)|^2`,
/// zero inside the closed obstacle.
pub fn harmonic_field(map: &ConformalMap, eps: f64, x: Vec2) -> Vec2 {
    if map.shape.contains_scaled(eps, x) {
        return [0.0, 0.0];
    }
    let z = to_c([x[0] / eps, x[1] / eps]);
    let big_x = map.map_c(z);
    let d = map.derivative_c(z);
    from_c(d.conj() * Complex64::i() / (2.0 * PI * eps) / big_x.conj())
}

/// `theta^eps` sampled on an exterior grid.
pub fn initial_data(
    map: &ConformalMap,
    eps: f64,
    profile: &VorticityProfile,
    grid: PolarExteriorGrid,
    res: QuadratureResolution,
) -> Result<Field> {
    if grid.eps != eps || grid.map != *map {
        return Err(Error::Config("grid does not match the obstacle".into()));
    }
    let ext = ExteriorBiotSavart::new(*map, eps, profile, res)?;
    let mut f = Field::from_fn(Grid::Polar(grid), 2, |x| ext.initial_velocity(x, 0.0));
    f.obstacle = Some(crate::fields::ScaledObstacle { shape: map.shape, eps });
    Ok(f)
}

/// Quadrature settings for `L^2(R^2)` norms of fields defined outside and
/// inside the scaled obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneQuadrature {
    /// Spacing in `s = log |zeta|` for the exterior.
    pub ds: f64,
    pub n_theta: usize,
    /// Physical truncation radius of the exterior integral.
    pub r_out: f64,
    /// Midpoint cells in the radial direction inside the obstacle.
    pub n_inner: usize,
}

impl Default for PlaneQuadrature {
    fn default() -> Self {
        PlaneQuadrature { ds: 0.02, n_theta: 256, r_out: 24.0, n_inner: 64 }
    }
}

/// `(||f||^2 over Pi_eps, ||g||^2 over eps Omega)` where `f` is evaluated
/// outside and `g` inside the obstacle.
pub fn plane_l2_squared<F, G>(map: &ConformalMap, eps: f64, q: PlaneQuadrature, f_out: F, g_in: G) -> Result<(f64, f64)>
where
    F: Fn(Vec2) -> Vec2 + Sync,
    G: Fn(Vec2) -> Vec2 + Sync,
{
    let grid = PolarExteriorGrid::with_spacing(*map, eps, q.r_out, q.ds, q.n_theta)?;
    let field = Field::from_fn(Grid::Polar(grid), 2, f_out);
    let outer = field.l2_norm(crate::fields::Region::All).value.powi(2);
    let (a, b) = match map.shape.kind {
        crate::geometry::ShapeKind::UnitDisk => (1.0, 1.0),
        crate::geometry::ShapeKind::Ellipse { a, b } => (a, b),
    };
    let nr = q.n_inner;
    let nt = q.n_theta;
    let dr = 1.0 / nr as f64;
    let dth = 2.0 * PI / nt as f64;
    let inner: f64 = (0..nr * nt)
        .into_par_iter()
        .map(|k| {
            let r = (k / nt) as f64 * dr + 0.5 * dr;
            let t = (k % nt) as f64 * dth + 0.5 * dth;
            let x = [eps * a * r * t.cos(), eps * b * r * t.sin()];
            let v = g_in(x);
            (v[0] * v[0] + v[1] * v[1]) * eps * eps * a * b * r * dr * dth
        })
        .sum();
    Ok((outer, inner))
}

/// `||theta^eps_alpha - (u0 + (alpha - m) H)||_{L^2(R^2)}` with
/// `theta^eps_alpha = K^eps[omega] + alpha H^eps` zero-extended and
/// `alpha = m + extra_circulation`.
pub fn initial_data_error(
    map: &ConformalMap,
    eps: f64,
    profile: &VorticityProfile,
    extra_circulation: f64,
    res: QuadratureResolution,
    q: PlaneQuadrature,
) -> Result<f64> {
    let ext = ExteriorBiotSavart::new(*map, eps, profile, res)?;
    let limit = |x: Vec2| {
        let u0 = fullplane_velocity(&ext.rule, x);
        if extra_circulation == 0.0 {
            return u0;
        }
        let h = fullplane_h(x).unwrap_or([0.0, 0.0]);
        [u0[0] + extra_circulation * h[0], u0[1] + extra_circulation * h[1]]
    };
    let (outer, inner) = plane_l2_squared(
        map,
        eps,
        q,
        |x| {
            let a = ext.initial_velocity(x, extra_circulation);
            let b = limit(x);
            [a[0] - b[0], a[1] - b[1]]
        },
        limit,
    )?;
    Ok((outer + inner).sqrt())
}

#[derive(Debug, Clone)]
pub struct RateStudy {
    pub rows: Vec<(f64, f64)>,
    /// `None` when every error sits below the quadrature floor.
    pub fit: Option<RateFit>,
    pub exact: bool,
    pub monotone: bool,
}

/// Errors below this are reported as exact cancellation.
pub const QUADRATURE_FLOOR: f64 = 1e-10;

pub fn initial_data_rate_study(
    map: &ConformalMap,
    profile: &VorticityProfile,
    eps_list: &[f64],
    extra_circulation: f64,
    res: QuadratureResolution,
    q: PlaneQuadrature,
) -> Result<RateStudy> {
    if eps_list.len() < 3 {
        return Err(Error::Insufficient(format!("need at least 3 eps values, got {}", eps_list.len())));
    }
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        rows.push((eps, initial_data_error(map, eps, profile, extra_circulation, res, q)?));
    }
    let exact = rows.iter().all(|r| r.1 <= QUADRATURE_FLOOR);
    let mut sorted = rows.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = sorted.windows(2).all(|w| w[0].1 <= w[1].1 * (1.0 + 1e-12));
    let fit = if exact { None } else { Some(fit_rate(&rows)?) };
    Ok(RateStudy { rows, fit, exact, monotone })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{circulation, ScaledObstacle};
    use crate::geometry::ObstacleShape;

    fn disk() -> ConformalMap {
        ConformalMap::new(ObstacleShape::unit_disk()).unwrap()
    }

    fn ellipse() -> ConformalMap {
        ConformalMap::new(ObstacleShape::ellipse(1.5, 0.5).unwrap()).unwrap()
    }

    fn close(a: Vec2, b: Vec2, tol: f64) -> bool {
        (a[0] - b[0]).abs() <= tol && (a[1] - b[1]).abs() <= tol
    }

    #[test]
    fn kernel_values() {
        assert!(close(fullplane_h([0.2, 0.0]).unwrap(), [0.0, 0.795_774_7], 1e-6));
        assert!(close(fullplane_h([1.0, 0.0]).unwrap(), [0.0, 0.159_154_9], 1e-6));
        assert!(close(fullplane_h([0.0, 1.0]).unwrap(), [-0.159_154_9, 0.0], 1e-6));
        assert!(fullplane_h([0.0, 0.0]).is_err());
    }

    #[test]
    fn masses_match_closed_forms() {
        let sharp = VorticityProfile::radial_annulus(1.0, 1.0, 2.0, false).unwrap();
        assert!((sharp.mass() - 3.0 * PI).abs() < 1e-14);
        let res = QuadratureResolution::default();
        assert!((sharp.quadrature(res).mass() - 3.0 * PI).abs() < 1e-10);
        let moll = VorticityProfile::radial_annulus(1.0, 1.0, 2.0, true).unwrap();
        assert!((moll.quadrature(res).mass() - moll.mass()).abs() < 1e-8);
        let bump = VorticityProfile::single_bump([1.5, 0.0], 2.0, 0.5).unwrap();
        assert!((bump.quadrature(res).mass() - bump.mass()).abs() < 1e-10);
    }

    #[test]
    fn annulus_fullplane_velocity() {
        let om = VorticityProfile::radial_annulus(1.0, 1.0, 2.0, false).unwrap();
        let rule = om.quadrature(QuadratureResolution::default());
        assert!(close(fullplane_velocity(&rule, [3.0, 0.0]), [0.0, 0.5], 1e-10));
        assert!(close(fullplane_velocity(&rule, [0.5, 0.0]), [0.0, 0.0], 1e-10));
        // inside the support: u_theta = (r^2 - 1) / (2 r)
        let u = fullplane_velocity(&rule, [0.0, 1.5]);
        assert!(close(u, [-(1.5f64 * 1.5 - 1.0) / 3.0, 0.0], 1e-10), "{u:?}");
        let zero = VorticityProfile::zero().quadrature(QuadratureResolution::default());
        assert_eq!(fullplane_velocity(&zero, [1.0, 1.0]), [0.0, 0.0]);
    }

    #[test]
    fn radial_flow_is_azimuthal() {
        let om = VorticityProfile::radial_annulus(1.3, 0.8, 1.7, true).unwrap();
        let rule = om.quadrature(QuadratureResolution::default());
        for &x in &[[0.3, 1.2], [-1.0, 0.9], [2.5, -0.1]] {
            let u = fullplane_velocity(&rule, x);
            assert!((u[0] * x[0] + u[1] * x[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn harmonic_field_disk() {
        let m = disk();
        assert!(close(harmonic_field(&m, 0.1, [0.2, 0.0]), [0.0, 0.795_774_7], 1e-6));
        assert_eq!(harmonic_field(&m, 0.1, [0.05, 0.0]), [0.0, 0.0]);
    }

    #[test]
    fn harmonic_field_ellipse_circulation() {
        let m = ellipse();
        let obs = ScaledObstacle { shape: m.shape, eps: 0.05 };
        let c = circulation(|x| Some(harmonic_field(&m, 0.05, x)), 0.5, 512, Some(obs)).unwrap();
        assert!((c - 1.0).abs() < 1e-6, "{c}");
    }

    #[test]
    fn disk_cancellation_pointwise() {
        let m = disk();
        let eps = 0.05;
        let om = VorticityProfile::radial_annulus(1.0, 1.0, 2.0, false).unwrap();
        let ext = ExteriorBiotSavart::new(m, eps, &om, QuadratureResolution::default()).unwrap();
        let mass = ext.mass();
        for &x in &[[3.0, 0.0], [0.06, 0.01], [0.0, 1.4], [-0.5, -0.5]] {
            let k = ext.velocity(x);
            let u0 = fullplane_velocity(&ext.rule, x);
            let h = fullplane_h(x).unwrap();
            assert!(close(k, [u0[0] - mass * h[0], u0[1] - mass * h[1]], 1e-12), "{x:?}");
            let th = ext.initial_velocity(x, 0.0);
            assert!(close(th, u0, 1e-12));
        }
        assert!(close(ext.velocity([3.0, 0.0]), [0.0, 0.0], 1e-10));
    }

    #[test]
    fn exterior_velocity_is_tangent_on_boundary() {
        for map in [disk(), ellipse()] {
            let eps = 0.05;
            let om = VorticityProfile::single_bump([1.5, 0.0], 3.0, 0.4).unwrap();
            let ext = ExteriorBiotSavart::new(map, eps, &om, QuadratureResolution::default()).unwrap();
            let mut worst: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for k in 0..200 {
                let t = 2.0 * PI * (k as f64 + 0.25) / 200.0;
                let b = map.shape.boundary_point(t);
                // outward normal of the level set
                let (a2, b2) = match map.shape.kind {
                    crate::geometry::ShapeKind::UnitDisk => (1.0, 1.0),
                    crate::geometry::ShapeKind::Ellipse { a, b } => (a * a, b * b),
                };
                let n = [b[0] / a2, b[1] / b2];
                let nn = norm(n);
                let x = [eps * b[0] * (1.0 + 1e-12), eps * b[1] * (1.0 + 1e-12)];
                for v in [ext.velocity(x), ext.initial_velocity(x, 0.0)] {
                    worst = worst.max((v[0] * n[0] + v[1] * n[1]).abs() / nn);
                    scale = scale.max(norm(v));
                }
            }
            assert!(worst <= 1e-6, "normal component {worst} (scale {scale})");
        }
        let zero = ExteriorBiotSavart::new(disk(), 0.1, &VorticityProfile::zero(), QuadratureResolution::default())
            .unwrap();
        assert_eq!(zero.velocity([0.5, 0.5]), [0.0, 0.0]);
    }

    #[test]
    fn exterior_velocity_curl_matches_vorticity() {
        let map = ellipse();
        let eps = 0.05;
        let om = VorticityProfile::single_bump([1.5, 0.3], 2.0, 0.5).unwrap();
        let res = QuadratureResolution { n_radial: 48, n_angular: 256 };
        let ext = ExteriorBiotSavart::new(map, eps, &om, res).unwrap();
        let h = 1e-3;
        for &x in &[[1.5, 0.3], [1.7, 0.4], [1.35, 0.2]] {
            let d = |dx: f64, dy: f64| ext.velocity([x[0] + dx, x[1] + dy]);
            let du2dx = (d(h, 0.0)[1] - d(-h, 0.0)[1]) / (2.0 * h);
            let du1dy = (d(0.0, h)[0] - d(0.0, -h)[0]) / (2.0 * h);
            let curl = du2dx - du1dy;
            let w = om.eval(x);
            assert!((curl - w).abs() <= 1e-3 * w.abs(), "{curl} vs {w}");
            let div = (d(h, 0.0)[0] - d(-h, 0.0)[0]) / (2.0 * h) + (d(0.0, h)[1] - d(0.0, -h)[1]) / (2.0 * h);
            assert!(div.abs() <= 1e-3 * w.abs());
        }
    }

    #[test]
    fn initial_data_circulation_vanishes_near_body() {
        for map in [disk(), ellipse()] {
            let eps = 0.05;
            let om = VorticityProfile::single_bump([1.5, 0.0], 2.0, 0.5).unwrap();
            let ext = ExteriorBiotSavart::new(map, eps, &om, QuadratureResolution::default()).unwrap();
            let obs = ScaledObstacle { shape: map.shape, eps };
            let c = circulation(|x| Some(ext.initial_velocity(x, 0.0)), 0.5, 1024, Some(obs)).unwrap();
            assert!(c.abs() < 1e-6, "{c}");
            let c1 = circulation(|x| Some(ext.initial_velocity(x, 1.0)), 0.5, 1024, Some(obs)).unwrap();
            assert!((c1 - 1.0).abs() < 1e-6, "{c1}");
        }
    }

    #[test]
    fn zero_mass_data_has_no_harmonic_part() {
        let om = VorticityProfile::bumps(vec![
            Bump { center: [1.5, 0.0], amplitude: 1.0, radius: 0.4 },
            Bump { center: [-1.5, 0.0], amplitude: -1.0, radius: 0.4 },
        ])
        .unwrap();
        assert!(om.mass().abs() < 1e-14);
        let ext = ExteriorBiotSavart::new(ellipse(), 0.02, &om, QuadratureResolution::default()).unwrap();
        assert!(ext.mass().abs() < 1e-12);
        let x = [0.3, 0.4];
        assert!(close(ext.initial_velocity(x, 0.0), ext.velocity(x), 1e-12));
    }

    #[test]
    fn support_violation_is_a_config_error() {
        let om = VorticityProfile::single_bump([0.5, 0.0], 1.0, 0.3).unwrap();
        assert!(matches!(
            ExteriorBiotSavart::new(disk(), 0.1, &om, QuadratureResolution::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn rate_study_needs_three_points() {
        let om = VorticityProfile::single_bump([1.5, 0.0], 1.0, 0.3).unwrap();
        let r = initial_data_rate_study(&disk(), &om, &[0.01, 0.02], 0.0, Default::default(), Default::default());
        assert!(matches!(r, Err(Error::Insufficient(_))));
    }
}
