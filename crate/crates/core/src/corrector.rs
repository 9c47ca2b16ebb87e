//! Cutoff `phi^eps`, the corrector `u^eps = grad_perp(phi^eps psi)` and
//! numerical measurement of the corrector estimates.
//!
//! The reference flow enters only through [`ReferenceFlow`], which gives the
//! stream function, velocity, velocity gradient, pressure and `d psi / dt`
//! pointwise, with `psi` and `p` pinned to zero at the origin.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::biot_savart::{
    fullplane_velocity, fullplane_velocity_gradient, QuadratureResolution, QuadratureRule, VorticityProfile,
};
use crate::fields::{Field, Grid};
use crate::geometry::{Mat2, ObstacleShape};
use crate::harness::{fit_rate, RateFit};
use crate::quadrature::{gauss_legendre_on, smoothstep, SMOOTHSTEP_MAX_D1, SMOOTHSTEP_MAX_D2};
use crate::{norm, Error, Result, Vec2};

/// `phi(r) = S(r - (R + 1))` with the quintic smoothstep `S`, so `phi = 0`
/// for `r <= R + 1` and `phi = 1` for `r >= R + 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cutoff {
    pub bounding_radius: f64,
}

/// `(phi^eps, grad phi^eps, hessian phi^eps)` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffValue {
    pub phi: f64,
    pub grad: Vec2,
    pub hess: Mat2,
}

impl Cutoff {
    pub fn new(shape: &ObstacleShape) -> Self {
        Cutoff { bounding_radius: shape.bounding_radius }
    }

    pub fn sup_d1(&self) -> f64 {
        SMOOTHSTEP_MAX_D1
    }

    pub fn sup_d2(&self) -> f64 {
        SMOOTHSTEP_MAX_D2
    }

    /// Radii `((R + 1) eps, (R + 2) eps)` of the transition annulus.
    pub fn transition(&self, eps: f64) -> (f64, f64) {
        (eps * (self.bounding_radius + 1.0), eps * (self.bounding_radius + 2.0))
    }

    pub fn value(&self, eps: f64, x: Vec2) -> CutoffValue {
        let r = norm(x) / eps;
        let t = r - self.bounding_radius - 1.0;
        if t <= 0.0 {
            return CutoffValue { phi: 0.0, grad: [0.0; 2], hess: [[0.0; 2]; 2] };
        }
        if t >= 1.0 {
            return CutoffValue { phi: 1.0, grad: [0.0; 2], hess: [[0.0; 2]; 2] };
        }
        let (s, d1, d2) = smoothstep(t);
        // radial profile: grad = phi' e_r, hess = phi'' e_r e_r^t + phi'/r (I - e_r e_r^t)
        let e = [x[0] / (r * eps), x[1] / (r * eps)];
        let g = [d1 * e[0] / eps, d1 * e[1] / eps];
        let mut hess = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let id = if i == j { 1.0 } else { 0.0 };
                hess[i][j] = (d2 * e[i] * e[j] + d1 / r * (id - e[i] * e[j])) / (eps * eps);
            }
        }
        CutoffValue { phi: s, grad: g, hess }
    }
}

pub fn cutoff_value(c: &Cutoff, eps: f64, x: Vec2) -> Result<CutoffValue> {
    if !(eps > 0.0) {
        return Err(Error::Domain("eps must be positive".into()));
    }
    Ok(c.value(eps, x))
}

/// Pointwise data of a smooth full-plane flow.
pub trait ReferenceFlow: Sync {
    /// Stream function with `psi(0) = 0`; `u = grad_perp psi`.
    fn stream(&self, x: Vec2) -> f64;
    fn velocity(&self, x: Vec2) -> Vec2;
    /// `g[i][j] = du_i / dx_j`.
    fn velocity_gradient(&self, x: Vec2) -> Mat2;
    /// Pressure with `p(0) = 0`. Only needed near the origin.
    fn pressure(&self, x: Vec2) -> f64;
    /// `d psi / dt`, zero at the origin.
    fn stream_rate(&self, x: Vec2) -> f64;
    /// `int |grad u|^2` over the plane.
    fn gradient_energy(&self) -> f64;
    fn sup_velocity(&self) -> f64;
    fn sup_velocity_gradient(&self) -> f64;
}

/// `u^eps = phi^eps u + psi grad_perp phi^eps`.
pub fn corrector_velocity_at<F: ReferenceFlow + ?Sized>(flow: &F, c: &Cutoff, eps: f64, x: Vec2) -> Vec2 {
    let cv = c.value(eps, x);
    if cv.phi == 0.0 && cv.grad == [0.0, 0.0] {
        return [0.0, 0.0];
    }
    let u = flow.velocity(x);
    let psi = flow.stream(x);
    [cv.phi * u[0] - psi * cv.grad[1], cv.phi * u[1] + psi * cv.grad[0]]
}

/// `grad_perp(phi^eps psi)` for a stream function sampled on a Cartesian
/// grid, by central differences of the product.
pub fn corrector_velocity(c: &Cutoff, psi: &Field, eps: f64) -> Result<Field> {
    let Grid::Cartesian(g) = psi.grid else {
        return Err(Error::Domain("corrector_velocity expects a Cartesian stream function".into()));
    };
    if psi.ncomp != 1 {
        return Err(Error::Domain("stream function must be scalar".into()));
    }
    let mut at0 = [0.0];
    g.interpolate(&psi.values, 1, [0.0, 0.0], &mut at0);
    let scale = psi.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    if at0[0].abs() > 1e-8 * scale {
        return Err(Error::Domain(format!("stream function is not pinned at the origin: psi(0) = {}", at0[0])));
    }
    let prod: Vec<f64> = (0..g.len()).map(|k| c.value(eps, g.point(k)).phi * psi.values[k]).collect();
    let n = g.n;
    let h = g.spacing();
    let mut out = Field::zeros(psi.grid, 2);
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let dx = (prod[j * n + i + 1] - prod[j * n + i - 1]) / (2.0 * h);
            let dy = (prod[(j + 1) * n + i] - prod[(j - 1) * n + i]) / (2.0 * h);
            out.values[2 * (j * n + i)] = -dy;
            out.values[2 * (j * n + i) + 1] = dx;
        }
    }
    Ok(out)
}

/// Full-plane flow of a vorticity that is radial about a single center:
/// a steady Euler solution with closed-form velocity and pressure.
pub struct SteadyVortex {
    rule: QuadratureRule,
    center: Vec2,
    support: f64,
    sup_u: f64,
    sup_grad: f64,
    grad_energy: f64,
}

impl SteadyVortex {
    pub fn new(profile: &VorticityProfile) -> Result<Self> {
        profile.validate()?;
        let rule = profile.quadrature(QuadratureResolution { n_radial: 4, n_angular: 4 });
        if rule.patches.len() != 1 {
            return Err(Error::Config("a steady vortex needs exactly one radial patch".into()));
        }
        let center = rule.patches[0].center();
        let support = match profile {
            VorticityProfile::RadialAnnulus { r2, .. } => *r2,
            VorticityProfile::OffsetBumps { bumps } => bumps[0].radius,
        };
        let mut v = SteadyVortex { rule, center, support, sup_u: 0.0, sup_grad: 0.0, grad_energy: 0.0 };
        // radial symmetry: sampling one ray about the center is enough
        let n = 4000;
        for k in 1..=n {
            let r = 2.0 * support * k as f64 / n as f64;
            let x = [center[0] + r, center[1]];
            v.sup_u = v.sup_u.max(norm(v.velocity(x)));
            let g = v.velocity_gradient(x);
            v.sup_grad = v.sup_grad.max(frobenius(&g));
        }
        // int |grad u|^2 = int omega^2 for a decaying flow
        v.grad_energy = v.radial_integral(0.0, support, |r| {
            let w = v.omega_at(r);
            2.0 * PI * r * w * w
        });
        Ok(v)
    }

    fn omega_at(&self, r: f64) -> f64 {
        self.rule.profile.eval([self.center[0] + r, self.center[1]])
    }

    fn joints(&self, a: f64, b: f64) -> Vec<f64> {
        let mut pts = vec![a];
        let mut inner: Vec<f64> = match self.rule.profile {
            VorticityProfile::RadialAnnulus { r1, r2, mollified, .. } => {
                let mut v = vec![r1, r2];
                if mollified {
                    let w = 0.1 * (r2 - r1);
                    v.extend([r1 + w, r2 - w]);
                }
                v
            }
            VorticityProfile::OffsetBumps { .. } => vec![self.support],
        };
        inner.sort_by(f64::total_cmp);
        pts.extend(inner.into_iter().filter(|&t| t > a.min(b) && t < a.max(b)));
        if b < a {
            pts[1..].reverse();
        }
        pts.push(b);
        pts
    }

    /// `int_a^b f(r) dr`, Gauss-Legendre on each smooth piece.
    fn radial_integral<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        let pts = self.joints(a, b);
        let mut s = 0.0;
        for w in pts.windows(2) {
            let (lo, hi, sign) = if w[1] >= w[0] { (w[0], w[1], 1.0) } else { (w[1], w[0], -1.0) };
            if hi > lo {
                for (t, q) in gauss_legendre_on(24, lo, hi) {
                    s += sign * q * f(t);
                }
            }
        }
        s
    }

    /// Azimuthal speed at distance `r` from the center.
    fn u_theta(&self, r: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        self.rule.enclosed_mass(0, r) / (2.0 * PI * r)
    }

    pub fn center(&self) -> Vec2 {
        self.center
    }
}

fn frobenius(g: &Mat2) -> f64 {
    (g[0][0].powi(2) + g[0][1].powi(2) + g[1][0].powi(2) + g[1][1].powi(2)).sqrt()
}

impl ReferenceFlow for SteadyVortex {
    fn stream(&self, x: Vec2) -> f64 {
        let r = norm([x[0] - self.center[0], x[1] - self.center[1]]);
        let r0 = norm(self.center);
        self.radial_integral(r0, r, |t| self.u_theta(t))
    }

    fn velocity(&self, x: Vec2) -> Vec2 {
        fullplane_velocity(&self.rule, x)
    }

    fn velocity_gradient(&self, x: Vec2) -> Mat2 {
        fullplane_velocity_gradient(&self.rule, x)
    }

    fn pressure(&self, x: Vec2) -> f64 {
        // p'(r) = u_theta^2 / r about the center
        let r = norm([x[0] - self.center[0], x[1] - self.center[1]]);
        let r0 = norm(self.center);
        self.radial_integral(r0, r, |t| if t == 0.0 { 0.0 } else { self.u_theta(t).powi(2) / t })
    }

    fn stream_rate(&self, _x: Vec2) -> f64 {
        0.0
    }

    fn gradient_energy(&self) -> f64 {
        self.grad_energy
    }

    fn sup_velocity(&self) -> f64 {
        self.sup_u
    }

    fn sup_velocity_gradient(&self) -> f64 {
        self.sup_grad
    }
}

/// Product rule on an annulus about the origin: Gauss-Legendre in `r`,
/// uniform in angle.
fn polar_nodes(r0: f64, r1: f64, n_r: usize, n_theta: usize) -> Vec<(Vec2, f64)> {
    let dth = 2.0 * PI / n_theta as f64;
    let mut out = Vec::with_capacity(n_r * n_theta);
    for (r, w) in gauss_legendre_on(n_r, r0, r1) {
        for k in 0..n_theta {
            let t = (k as f64 + 0.5) * dth;
            out.push(([r * t.cos(), r * t.sin()], w * r * dth));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaResolution {
    pub n_radial: usize,
    pub n_theta: usize,
}

impl Default for LemmaResolution {
    fn default() -> Self {
        LemmaResolution { n_radial: 16, n_theta: 128 }
    }
}

/// The five corrector quantities at one `eps` and one time, plus the
/// pointwise form of the item-4 constant.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LemmaItems {
    pub eps: f64,
    /// `|grad u^eps|^2`, `|u^eps|_inf`, `|u^eps - u| + |u^eps - phi u|`,
    /// `|grad psi grad phi|_inf + |psi hess phi|_inf`,
    /// `|p grad phi| + |psi_t grad phi|`.
    pub items: [f64; 5],
    /// `sup_x eps (sum |d_i psi d_j phi| + sum |psi d_ij phi|)`.
    pub k4_pointwise: f64,
    /// `sup_x |phi^eps grad u|`.
    pub k0: f64,
}

pub fn lemma_items<F: ReferenceFlow + ?Sized>(flow: &F, c: &Cutoff, eps: f64, res: LemmaResolution) -> LemmaItems {
    let (ra, rb) = c.transition(eps);
    let annulus = polar_nodes(ra, rb, res.n_radial, res.n_theta);
    let core = polar_nodes(0.0, ra, res.n_radial, res.n_theta);

    let mut grad_core = 0.0; // int_{|x| < (R+2) eps} |grad u|^2
    let mut grad_corr = 0.0; // int_A |grad u^eps|^2
    let mut sup_corr: f64 = 0.0;
    let mut diff_u = 0.0; // int |u^eps - u|^2
    let mut diff_phi = 0.0; // int |u^eps - phi u|^2
    let mut sup_a: [f64; 4] = [0.0; 4]; // sup |d_i psi d_j phi| summed later
    let mut sup_b: [f64; 4] = [0.0; 4];
    let mut k4p: f64 = 0.0;
    let mut p_term = 0.0;
    let mut pt_term = 0.0;
    let mut k0: f64 = 0.0;

    for &(x, w) in &core {
        let u = flow.velocity(x);
        let g = flow.velocity_gradient(x);
        grad_core += w * frobenius(&g).powi(2);
        diff_u += w * (u[0] * u[0] + u[1] * u[1]);
    }
    for &(x, w) in &annulus {
        let cv = c.value(eps, x);
        let u = flow.velocity(x);
        let g = flow.velocity_gradient(x);
        let psi = flow.stream(x);
        // grad psi = (u_2, -u_1)
        let dpsi = [u[1], -u[0]];
        let ue = [cv.phi * u[0] - psi * cv.grad[1], cv.phi * u[1] + psi * cv.grad[0]];
        // grad_perp phi and its derivatives
        let gp = [-cv.grad[1], cv.grad[0]];
        let dgp = |i: usize, j: usize| if i == 0 { -cv.hess[1][j] } else { cv.hess[0][j] };
        let mut ge = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                ge[i][j] = cv.grad[j] * u[i] + cv.phi * g[i][j] + dpsi[j] * gp[i] + psi * dgp(i, j);
            }
        }
        grad_core += w * frobenius(&g).powi(2);
        grad_corr += w * frobenius(&ge).powi(2);
        sup_corr = sup_corr.max(norm(ue));
        diff_u += w * ((ue[0] - u[0]).powi(2) + (ue[1] - u[1]).powi(2));
        diff_phi += w * psi * psi * (cv.grad[0].powi(2) + cv.grad[1].powi(2));
        let mut pointwise = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let a = (dpsi[i] * cv.grad[j]).abs();
                let b = (psi * cv.hess[i][j]).abs();
                sup_a[2 * i + j] = sup_a[2 * i + j].max(a);
                sup_b[2 * i + j] = sup_b[2 * i + j].max(b);
                pointwise += a + b;
            }
        }
        k4p = k4p.max(eps * pointwise);
        let gphi2 = cv.grad[0].powi(2) + cv.grad[1].powi(2);
        p_term += w * flow.pressure(x).powi(2) * gphi2;
        pt_term += w * flow.stream_rate(x).powi(2) * gphi2;
        k0 = k0.max(cv.phi * frobenius(&g));
    }
    let item1 = (flow.gradient_energy() - grad_core).max(0.0) + grad_corr;
    let item2 = flow.sup_velocity().max(sup_corr);
    let item3 = diff_u.sqrt() + diff_phi.sqrt();
    let item4 = sup_a.iter().sum::<f64>() + sup_b.iter().sum::<f64>();
    let item5 = p_term.sqrt() + pt_term.sqrt();
    LemmaItems {
        eps,
        items: [item1, item2, item3, item4, item5],
        k4_pointwise: k4p,
        k0: k0.max(flow.sup_velocity_gradient()),
    }
}

/// `eps_0 = r_1 / (2 (R + 2))`: the transition annulus stays well inside
/// the vorticity-free core.
pub fn eps0(shape: &ObstacleShape, profile: &VorticityProfile) -> f64 {
    profile.inner_radius() / (2.0 * (shape.bounding_radius + 2.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrectorConstants {
    /// Per `eps`, max over the sampled times.
    pub rows: Vec<LemmaItems>,
    pub k: [f64; 5],
    pub k0: f64,
    /// Operational `K4` from the pointwise formula.
    pub k4: f64,
    /// `K4` read off item 4 as `max eps * item4`.
    pub k4_lemma: f64,
    pub k5_tilde: f64,
    pub sup_u0: f64,
    /// `K4 / sup_t |u(0,t)|`; `None` when the origin is a stagnation point.
    pub k4_tilde: Option<f64>,
    /// `None` for an item that vanishes identically, e.g. items 3 to 5
    /// when the origin is inside a stagnant core.
    pub slopes: Vec<Option<RateFit>>,
}

/// Expected log-log slopes of the five items in `eps`.
pub const EXPECTED_SLOPES: [f64; 5] = [0.0, 0.0, 1.0, -1.0, 1.0];

/// Measures the corrector constants over `eps_list`, taking the max over the
/// supplied time samples of the reference flow.
pub fn measure_lemma_constants(
    flows: &[&dyn ReferenceFlow],
    c: &Cutoff,
    eps_list: &[f64],
    eps_max: f64,
    res: LemmaResolution,
) -> Result<CorrectorConstants> {
    if eps_list.len() < 3 {
        return Err(Error::Insufficient(format!("need at least 3 values of eps, got {}", eps_list.len())));
    }
    if flows.is_empty() {
        return Err(Error::Insufficient("no flow samples".into()));
    }
    if let Some(e) = eps_list.iter().find(|&&e| !(e > 0.0 && e < eps_max)) {
        return Err(Error::Config(format!("eps = {e} is outside (0, eps_0 = {eps_max})")));
    }
    let mut rows = Vec::new();
    for &eps in eps_list {
        let mut best: Option<LemmaItems> = None;
        for f in flows {
            let it = lemma_items(*f, c, eps, res);
            best = Some(match best {
                None => it,
                Some(mut b) => {
                    for k in 0..5 {
                        b.items[k] = b.items[k].max(it.items[k]);
                    }
                    b.k4_pointwise = b.k4_pointwise.max(it.k4_pointwise);
                    b.k0 = b.k0.max(it.k0);
                    b
                }
            });
        }
        rows.push(best.unwrap());
    }
    let mut k = [0.0f64; 5];
    for r in &rows {
        k[0] = k[0].max(r.items[0]);
        k[1] = k[1].max(r.items[1]);
        k[2] = k[2].max(r.items[2] / r.eps);
        k[3] = k[3].max(r.items[3] * r.eps);
        k[4] = k[4].max(r.items[4] / r.eps);
    }
    let k0 = rows.iter().map(|r| r.k0).fold(0.0, f64::max);
    let k4 = rows.iter().map(|r| r.k4_pointwise).fold(0.0, f64::max);
    let grad_sup = flows.iter().map(|f| f.sup_velocity_gradient()).fold(0.0, f64::max);
    let sup_u0 = flows.iter().map(|f| norm(f.velocity([0.0, 0.0]))).fold(0.0, f64::max);
    let slopes = (0..5)
        .map(|i| fit_rate(&rows.iter().map(|r| (r.eps, r.items[i])).collect::<Vec<_>>()).ok())
        .collect();
    Ok(CorrectorConstants {
        k0,
        k4,
        k4_lemma: k[3],
        k5_tilde: k[4] + k[2] * grad_sup,
        k4_tilde: k4_tilde(k4, sup_u0),
        sup_u0,
        k,
        rows,
        slopes,
    })
}

/// `K4 / sup_t |u(0,t)|`, undefined for a stagnant origin.
pub fn k4_tilde(k4: f64, sup_u0: f64) -> Option<f64> {
    (sup_u0 > 1e-12 * k4.max(1.0)).then(|| k4 / sup_u0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cut() -> Cutoff {
        Cutoff::new(&ObstacleShape::unit_disk())
    }

    #[test]
    fn cutoff_regions() {
        let c = cut();
        let eps = 0.01;
        let v = c.value(eps, [1.5 * eps, 0.0]);
        assert_eq!((v.phi, v.grad, v.hess), (0.0, [0.0; 2], [[0.0; 2]; 2]));
        let v = c.value(eps, [0.0, 4.0 * eps]);
        assert_eq!((v.phi, v.grad, v.hess), (1.0, [0.0; 2], [[0.0; 2]; 2]));
    }

    #[test]
    fn cutoff_gradient_scales() {
        let c = cut();
        let x = |eps: f64| [2.5 * eps * 0.6, 2.5 * eps * 0.8];
        let a = norm(c.value(0.02, x(0.02)).grad);
        let b = norm(c.value(0.01, x(0.01)).grad);
        assert!((b - 2.0 * a).abs() <= 1e-10 * b);
    }

    #[test]
    fn cutoff_derivatives_match_finite_differences() {
        let c = cut();
        let eps = 0.1;
        let x = [0.21, 0.13];
        let h = 1e-6;
        let v = c.value(eps, x);
        for j in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let d = (c.value(eps, xp).phi - c.value(eps, xm).phi) / (2.0 * h);
            assert!((d - v.grad[j]).abs() < 1e-5 * v.grad[j].abs().max(1.0));
            for i in 0..2 {
                let d = (c.value(eps, xp).grad[i] - c.value(eps, xm).grad[i]) / (2.0 * h);
                assert!((d - v.hess[i][j]).abs() < 1e-4 * v.hess[i][j].abs().max(1.0));
            }
        }
    }

    #[test]
    fn steady_vortex_is_consistent() {
        let om = VorticityProfile::single_bump([1.0, 0.0], 10.0, 0.5).unwrap();
        let f = SteadyVortex::new(&om).unwrap();
        assert_eq!(f.stream([0.0, 0.0]), 0.0);
        assert_eq!(f.pressure([0.0, 0.0]), 0.0);
        let x = [0.05, -0.03];
        let h = 1e-5;
        let dpsi = [
            (f.stream([x[0] + h, x[1]]) - f.stream([x[0] - h, x[1]])) / (2.0 * h),
            (f.stream([x[0], x[1] + h]) - f.stream([x[0], x[1] - h])) / (2.0 * h),
        ];
        let u = f.velocity(x);
        assert!((dpsi[0] - u[1]).abs() < 1e-7 && (dpsi[1] + u[0]).abs() < 1e-7);
        // Euler balance in the irrotational core: grad p = -(u . grad) u
        let g = f.velocity_gradient(x);
        for i in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let dp = (f.pressure(xp) - f.pressure(xm)) / (2.0 * h);
            let adv = u[0] * g[i][0] + u[1] * g[i][1];
            assert!((dp + adv).abs() < 1e-6, "{dp} {adv}");
        }
    }

    #[test]
    fn radial_annulus_has_undefined_k4_tilde() {
        let om = VorticityProfile::radial_annulus(1.0, 1.0, 2.0, true).unwrap();
        let f = SteadyVortex::new(&om).unwrap();
        let c = cut();
        let e0 = eps0(&ObstacleShape::unit_disk(), &om);
        let k = measure_lemma_constants(&[&f], &c, &[0.04, 0.02, 0.01], e0, LemmaResolution::default()).unwrap();
        assert!(k.k4_tilde.is_none());
    }

    #[test]
    fn needs_three_eps() {
        let om = VorticityProfile::single_bump([1.0, 0.0], 10.0, 0.5).unwrap();
        let f = SteadyVortex::new(&om).unwrap();
        let r = measure_lemma_constants(&[&f], &cut(), &[0.02, 0.01], 1.0, LemmaResolution::default());
        assert!(matches!(r, Err(Error::Insufficient(_))));
    }
}
