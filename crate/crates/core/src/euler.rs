//! Full-plane Euler reference flow.
//!
//! Vorticity is transported on a periodic box with a pseudo-spectral
//! scheme (2/3 dealiasing, SSP-RK3). The box-periodic velocity drives the
//! transport. Every quantity handed to the rest of the crate is
//! reconstructed from the stored vorticity with the free-space kernel, so
//! the periodic images only enter through the evolution itself.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::biot_savart::VorticityProfile;
use crate::corrector::ReferenceFlow;
use crate::fft::{wavenumber, Fft2};
use crate::fields::{CartesianGrid, Field, Grid};
use crate::geometry::Mat2;
use crate::{norm, Error, Result, Vec2};

/// Box half-width over support radius below which the run is refused.
pub const MIN_BOX_RATIO: f64 = 8.0;
pub const MAX_CFL: f64 = 0.5;
/// Relative growth of `max |omega|` that aborts a run.
pub const BLOWUP_GROWTH: f64 = 0.1;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EulerOptions {
    pub dt: f64,
    pub t_final: f64,
    /// Number of output intervals; snapshots at `k T / n_outputs`.
    pub n_outputs: usize,
}

#[derive(Debug, Clone)]
pub struct EulerSnapshot {
    pub t: f64,
    pub omega: Vec<f64>,
    /// `-u . grad omega`.
    pub omega_t: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EulerDiagnostics {
    pub t: f64,
    pub mass: f64,
    pub max_omega: f64,
    /// `1/2 int |u|^2` over the periodic box.
    pub energy: f64,
    pub max_cfl: f64,
}

pub struct EulerRun {
    pub grid: CartesianGrid,
    pub dt: f64,
    pub t_final: f64,
    pub snapshots: Vec<EulerSnapshot>,
    pub diagnostics: Vec<EulerDiagnostics>,
    origin_velocity: Vec<Vec2>,
}

struct Spectral {
    n: usize,
    fft: Fft2,
    kx: Vec<f64>,
    mask: Vec<bool>,
}

impl Spectral {
    fn new(g: CartesianGrid) -> Self {
        let n = g.n;
        let scale = PI / g.half_width;
        let kx = (0..n).map(|i| wavenumber(i, n) * scale).collect();
        let cut = n as f64 / 3.0;
        let mut mask = vec![false; n * n];
        for j in 0..n {
            for i in 0..n {
                mask[j * n + i] = wavenumber(i, n).abs() < cut && wavenumber(j, n).abs() < cut;
            }
        }
        Spectral { n, fft: Fft2::new(n), kx, mask }
    }

    fn k(&self, idx: usize) -> (f64, f64) {
        (self.kx[idx % self.n], self.kx[idx / self.n])
    }

    /// Periodic velocity `(u1, u2)` from vorticity coefficients.
    fn velocity(&self, w: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let i = Complex64::i();
        let mut u1 = vec![Complex64::new(0.0, 0.0); w.len()];
        let mut u2 = u1.clone();
        for idx in 0..w.len() {
            let (kx, ky) = self.k(idx);
            let k2 = kx * kx + ky * ky;
            if k2 == 0.0 {
                continue;
            }
            let psi = -w[idx] / k2;
            u1[idx] = -i * ky * psi;
            u2[idx] = i * kx * psi;
        }
        (self.fft.inverse_real(&u1), self.fft.inverse_real(&u2))
    }

    /// `-u . grad omega` in spectral space (dealiased, zero mean) and the
    /// largest speed.
    fn rhs(&self, w: &[Complex64]) -> (Vec<Complex64>, f64) {
        let i = Complex64::i();
        let wm: Vec<Complex64> = w.iter().zip(&self.mask).map(|(v, &m)| if m { *v } else { Complex64::new(0.0, 0.0) }).collect();
        let (u1, u2) = self.velocity(&wm);
        let mut wx = vec![Complex64::new(0.0, 0.0); w.len()];
        let mut wy = wx.clone();
        for idx in 0..w.len() {
            let (kx, ky) = self.k(idx);
            wx[idx] = i * kx * wm[idx];
            wy[idx] = i * ky * wm[idx];
        }
        let wx = self.fft.inverse_real(&wx);
        let wy = self.fft.inverse_real(&wy);
        let nl: Vec<f64> = (0..w.len()).into_par_iter().map(|k| -(u1[k] * wx[k] + u2[k] * wy[k])).collect();
        let umax = u1.iter().zip(&u2).fold(0.0f64, |m, (a, b)| m.max(a.hypot(*b)));
        let mut out = self.fft.forward_real(&nl);
        for (v, &m) in out.iter_mut().zip(&self.mask) {
            if !m {
                *v = Complex64::new(0.0, 0.0);
            }
        }
        out[0] = Complex64::new(0.0, 0.0);
        (out, umax)
    }
}

/// Transport `omega0` to time `T` on the periodic box `grid`.
pub fn solve_euler(omega0: &VorticityProfile, grid: CartesianGrid, opts: EulerOptions) -> Result<EulerRun> {
    omega0.validate()?;
    if !(opts.dt > 0.0 && opts.t_final >= 0.0) || opts.n_outputs == 0 {
        return Err(Error::Config("need dt > 0, T >= 0 and at least one output".into()));
    }
    let support = omega0.outer_radius();
    if !omega0.is_zero() && grid.half_width < MIN_BOX_RATIO * support {
        return Err(Error::Config(format!(
            "box half-width {} is below {MIN_BOX_RATIO} times the support radius {support}",
            grid.half_width
        )));
    }
    let sp = Spectral::new(grid);
    let h = grid.spacing();
    let per_output = ((opts.t_final / opts.dt / opts.n_outputs as f64).ceil() as usize).max(1);
    let n_steps = per_output * opts.n_outputs;
    let dt = if opts.t_final > 0.0 { opts.t_final / n_steps as f64 } else { 0.0 };

    let w0: Vec<f64> = (0..grid.len()).map(|k| omega0.eval(grid.point(k))).collect();
    let mut w = sp.fft.forward_real(&w0);
    // evolve the dealiased projection of the initial vorticity
    for (v, &m) in w.iter_mut().zip(&sp.mask) {
        if !m {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    let max0 = sp.fft.inverse_real(&w).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut run = EulerRun {
        grid,
        dt,
        t_final: opts.t_final,
        snapshots: Vec::new(),
        diagnostics: Vec::new(),
        origin_velocity: Vec::new(),
    };
    let mut cfl_max: f64 = 0.0;
    let record = |run: &mut EulerRun, w: &[Complex64], t: f64, cfl: f64| {
        let (nl, _) = sp.rhs(w);
        let omega = sp.fft.inverse_real(w);
        let omega_t = sp.fft.inverse_real(&nl);
        let (u1, u2) = sp.velocity(w);
        let energy = 0.5 * h * h * u1.iter().zip(&u2).map(|(a, b)| a * a + b * b).sum::<f64>();
        let mass = h * h * omega.iter().sum::<f64>();
        let max_omega = omega.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        run.diagnostics.push(EulerDiagnostics { t, mass, max_omega, energy, max_cfl: cfl });
        let snap = EulerSnapshot { t, omega, omega_t };
        run.origin_velocity.push(EulerFlow::new(grid, &snap).velocity([0.0, 0.0]));
        run.snapshots.push(snap);
    };
    record(&mut run, &w, 0.0, 0.0);
    for step in 1..=n_steps {
        let (l0, umax) = sp.rhs(&w);
        let cfl = dt * umax / h;
        if cfl > MAX_CFL {
            return Err(Error::Stability(format!("CFL number {cfl:.3} exceeds {MAX_CFL} at step {step}")));
        }
        cfl_max = cfl_max.max(cfl);
        let w1: Vec<Complex64> = w.iter().zip(&l0).map(|(a, b)| a + dt * b).collect();
        let (l1, _) = sp.rhs(&w1);
        let w2: Vec<Complex64> = (0..w.len()).map(|k| 0.75 * w[k] + 0.25 * (w1[k] + dt * l1[k])).collect();
        let (l2, _) = sp.rhs(&w2);
        w = (0..w.len()).map(|k| w[k] / 3.0 + 2.0 / 3.0 * (w2[k] + dt * l2[k])).collect();
        if step % per_output == 0 {
            record(&mut run, &w, step as f64 * dt, cfl_max);
            let m = run.diagnostics.last().unwrap().max_omega;
            if max0 > 0.0 && m > (1.0 + BLOWUP_GROWTH) * max0 {
                return Err(Error::Stability(format!("max |omega| grew from {max0:.4e} to {m:.4e}")));
            }
            if !m.is_finite() {
                return Err(Error::Stability("vorticity is no longer finite".into()));
            }
        }
    }
    Ok(run)
}

impl EulerRun {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    /// Bracketing snapshots and the linear weight of the later one.
    fn bracket(&self, t: f64) -> Result<(usize, usize, f64)> {
        let last = self.snapshots.len() - 1;
        let tol = 1e-9 * self.t_final.max(1.0);
        if t < -tol || t > self.snapshots[last].t + tol {
            return Err(Error::Domain(format!("t = {t} is outside the run [0, {}]", self.t_final)));
        }
        let k = self.snapshots.iter().position(|s| s.t >= t - tol).unwrap_or(last);
        if k == 0 || (self.snapshots[k].t - t).abs() <= tol {
            return Ok((k, k, 0.0));
        }
        let (a, b) = (self.snapshots[k - 1].t, self.snapshots[k].t);
        Ok((k - 1, k, (t - a) / (b - a)))
    }

    /// `u(0, t)` of the full-plane flow, linear in time between snapshots.
    pub fn velocity_at_origin(&self, t: f64) -> Result<Vec2> {
        let (a, b, s) = self.bracket(t)?;
        let (ua, ub) = (self.origin_velocity[a], self.origin_velocity[b]);
        Ok([(1.0 - s) * ua[0] + s * ub[0], (1.0 - s) * ua[1] + s * ub[1]])
    }

    pub fn sup_origin_speed(&self) -> f64 {
        self.origin_velocity.iter().map(|u| norm(*u)).fold(0.0, f64::max)
    }

    /// Pointwise full-plane flow at snapshot `k`.
    pub fn flow(&self, k: usize) -> EulerFlow {
        EulerFlow::new(self.grid, &self.snapshots[k])
    }

    /// Free-space velocity on the grid at snapshot `k`.
    pub fn velocity_grid(&self, k: usize) -> VelocityGrid {
        VelocityGrid::from_vorticity(self.grid, &self.snapshots[k].omega)
    }

    /// Free-space velocity at time `t`, linear between snapshots.
    pub fn velocity_grid_at(&self, t: f64) -> Result<VelocityGrid> {
        let (a, b, s) = self.bracket(t)?;
        if a == b {
            return Ok(self.velocity_grid(a));
        }
        let w: Vec<f64> = self.snapshots[a]
            .omega
            .iter()
            .zip(&self.snapshots[b].omega)
            .map(|(x, y)| (1.0 - s) * x + s * y)
            .collect();
        Ok(VelocityGrid::from_vorticity(self.grid, &w))
    }

    /// Stream function with `psi(0) = 0`, free-space kernel.
    pub fn stream_field(&self, k: usize) -> Field {
        let g = self.grid;
        let psi = crate::fields::free_space_potential(g, &self.snapshots[k].omega);
        let at0 = psi[(g.n / 2) * g.n + g.n / 2];
        Field { grid: Grid::Cartesian(g), ncomp: 1, values: psi.iter().map(|v| v - at0).collect(), obstacle: None }
    }

    /// Box pressure solving `-lap p = div(u . grad u)`, pinned at the origin.
    pub fn pressure_field(&self, k: usize) -> Field {
        let g = self.grid;
        let sp = Spectral::new(g);
        let w = sp.fft.forward_real(&self.snapshots[k].omega);
        let (u1, u2) = sp.velocity(&w);
        let f11 = sp.fft.forward_real(&u1.iter().map(|a| a * a).collect::<Vec<_>>());
        let f12 = sp.fft.forward_real(&u1.iter().zip(&u2).map(|(a, b)| a * b).collect::<Vec<_>>());
        let f22 = sp.fft.forward_real(&u2.iter().map(|a| a * a).collect::<Vec<_>>());
        let mut p = vec![Complex64::new(0.0, 0.0); g.len()];
        for idx in 0..g.len() {
            let (kx, ky) = sp.k(idx);
            let k2 = kx * kx + ky * ky;
            if k2 == 0.0 || !sp.mask[idx] {
                continue;
            }
            p[idx] = -(kx * kx * f11[idx] + 2.0 * kx * ky * f12[idx] + ky * ky * f22[idx]) / k2;
        }
        let p = sp.fft.inverse_real(&p);
        let at0 = p[(g.n / 2) * g.n + g.n / 2];
        Field { grid: Grid::Cartesian(g), ncomp: 1, values: p.iter().map(|v| v - at0).collect(), obstacle: None }
    }
}

/// Velocity on a Cartesian grid with cubic interpolation.
#[derive(Debug, Clone)]
pub struct VelocityGrid {
    pub grid: CartesianGrid,
    /// Interleaved `(u1, u2)` per node.
    pub values: Vec<f64>,
}

impl VelocityGrid {
    /// Free-space Biot-Savart of nodal vorticity by zero-padded FFT
    /// convolution of the discrete kernel (self term zero by symmetry).
    /// The punctured trapezoid rule overshoots by `h^2 / (4 pi) grad_perp
    /// omega`; removing that term leaves an `O(h^4)` error.
    pub fn from_vorticity(g: CartesianGrid, omega: &[f64]) -> Self {
        let n = g.n;
        let m = 2 * n;
        let h = g.spacing();
        let fft = Fft2::new(m);
        let mut k1 = vec![Complex64::new(0.0, 0.0); m * m];
        let mut k2 = k1.clone();
        for j in 0..m {
            for i in 0..m {
                let (dx, dy) = (h * wavenumber(i, m), h * wavenumber(j, m));
                let r2 = dx * dx + dy * dy;
                if r2 == 0.0 || i == n || j == n {
                    continue;
                }
                let c = h * h / (2.0 * PI * r2);
                k1[j * m + i] = Complex64::new(-dy * c, 0.0);
                k2[j * m + i] = Complex64::new(dx * c, 0.0);
            }
        }
        fft.forward(&mut k1);
        fft.forward(&mut k2);
        let mut src = vec![Complex64::new(0.0, 0.0); m * m];
        for j in 0..n {
            for i in 0..n {
                src[j * m + i] = Complex64::new(omega[j * n + i], 0.0);
            }
        }
        fft.forward(&mut src);
        let mut a: Vec<Complex64> = src.iter().zip(&k1).map(|(s, k)| s * k).collect();
        let mut b: Vec<Complex64> = src.iter().zip(&k2).map(|(s, k)| s * k).collect();
        fft.inverse(&mut a);
        fft.inverse(&mut b);
        let mut values = vec![0.0; 2 * n * n];
        for j in 0..n {
            for i in 0..n {
                values[2 * (j * n + i)] = a[j * m + i].re;
                values[2 * (j * n + i) + 1] = b[j * m + i].re;
            }
        }
        // fourth-order differences; omega vanishes near the box edge
        let at = |i: usize, j: usize| omega[j * n + i];
        let c = h * h / (4.0 * PI);
        for j in 2..n - 2 {
            for i in 2..n - 2 {
                let dx = (8.0 * (at(i + 1, j) - at(i - 1, j)) - (at(i + 2, j) - at(i - 2, j))) / (12.0 * h);
                let dy = (8.0 * (at(i, j + 1) - at(i, j - 1)) - (at(i, j + 2) - at(i, j - 2))) / (12.0 * h);
                values[2 * (j * n + i)] += c * dy;
                values[2 * (j * n + i) + 1] -= c * dx;
            }
        }
        VelocityGrid { grid: g, values }
    }

    /// Tensor cubic Lagrange interpolation; `None` within two cells of the
    /// box edge.
    pub fn at(&self, x: Vec2) -> Option<Vec2> {
        let g = self.grid;
        let h = g.spacing();
        let fx = (x[0] + g.half_width) / h;
        let fy = (x[1] + g.half_width) / h;
        let (i0, j0) = (fx.floor() as i64, fy.floor() as i64);
        let n = g.n as i64;
        if i0 < 1 || j0 < 1 || i0 + 2 >= n || j0 + 2 >= n {
            return None;
        }
        let wx = cubic_weights(fx - i0 as f64);
        let wy = cubic_weights(fy - j0 as f64);
        let mut u = [0.0; 2];
        for (b, wyb) in wy.iter().enumerate() {
            for (a, wxa) in wx.iter().enumerate() {
                let idx = ((j0 - 1 + b as i64) * n + (i0 - 1 + a as i64)) as usize;
                let w = wxa * wyb;
                u[0] += w * self.values[2 * idx];
                u[1] += w * self.values[2 * idx + 1];
            }
        }
        Some(u)
    }

    pub fn max_speed(&self) -> f64 {
        self.values.chunks(2).map(|v| v[0].hypot(v[1])).fold(0.0, f64::max)
    }
}

/// Lagrange weights on nodes `-1, 0, 1, 2` at offset `t` in `[0, 1)`.
fn cubic_weights(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

/// Power series about the origin for the cells outside `R_NEAR`, plus the
/// cells inside it summed directly. With `z = x` and `zeta = y` as complex
/// numbers, `log|x - y| - log|y| = -Re sum (z / zeta)^n / n`, which
/// converges geometrically for `|x| <= R_NEAR / 2`.
struct LocalExpansion {
    /// `sum h^2 omega zeta^-n` for `n = 1..=TERMS`.
    a: Vec<Complex64>,
    /// Same with `omega_t`.
    b: Vec<Complex64>,
    near: Vec<(Vec2, f64, f64)>,
}

struct SeriesValue {
    stream: f64,
    velocity: Vec2,
    gradient: Mat2,
    stream_rate: f64,
    /// `d phi / dt` with `phi(0) = 0`.
    phi_t: f64,
}

const R_NEAR: f64 = 0.4;
const TERMS: usize = 64;

impl LocalExpansion {
    fn new(cells: &[(Vec2, f64, f64)]) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        let near = cells.iter().copied().filter(|c| norm(c.0) < R_NEAR).collect();
        let (a, b) = cells
            .par_iter()
            .filter(|c| norm(c.0) >= R_NEAR)
            .fold(
                || (vec![zero; TERMS], vec![zero; TERMS]),
                |(mut a, mut b), &(y, w, wt)| {
                    let inv = Complex64::new(y[0], y[1]).inv();
                    let mut p = inv;
                    for n in 0..TERMS {
                        a[n] += w * p;
                        b[n] += wt * p;
                        p *= inv;
                    }
                    (a, b)
                },
            )
            .reduce(
                || (vec![zero; TERMS], vec![zero; TERMS]),
                |(mut a, mut b), (c, d)| {
                    for n in 0..TERMS {
                        a[n] += c[n];
                        b[n] += d[n];
                    }
                    (a, b)
                },
            );
        LocalExpansion { a, b, near }
    }

    fn series(&self, x: Vec2) -> Option<SeriesValue> {
        if norm(x) > 0.5 * R_NEAR {
            return None;
        }
        let z = Complex64::new(x[0], x[1]);
        let zero = Complex64::new(0.0, 0.0);
        // F = -1/(2 pi) sum a_n z^n / n, psi = Re F, u = (Im F', Re F')
        let (mut f, mut f1, mut f2, mut g) = (zero, zero, zero, zero);
        let mut zn1 = Complex64::new(1.0, 0.0); // z^(n-1)
        let mut zn2 = zero; // (n-1) z^(n-2)
        for n in 1..=TERMS {
            let an = self.a[n - 1];
            let zn = zn1 * z;
            f += an * zn / n as f64;
            f1 += an * zn1;
            f2 += an * zn2;
            g += self.b[n - 1] * zn / n as f64;
            zn2 = zn1 * n as f64;
            zn1 = zn;
        }
        let c = -1.0 / (2.0 * PI);
        let (f, f1, f2, g) = (f * c, f1 * c, f2 * c, g * c);
        let mut v = SeriesValue {
            stream: f.re,
            velocity: [f1.im, f1.re],
            gradient: [[f2.im, f2.re], [f2.re, -f2.im]],
            stream_rate: g.re,
            phi_t: g.im,
        };
        for &(y, w, wt) in &self.near {
            let d = [x[0] - y[0], x[1] - y[1]];
            let r2 = d[0] * d[0] + d[1] * d[1];
            if r2 == 0.0 {
                continue;
            }
            let lg = 0.5 * (r2 / (y[0] * y[0] + y[1] * y[1])).ln() / (2.0 * PI);
            v.stream += w * lg;
            v.stream_rate += wt * lg;
            v.velocity[0] -= w * d[1] / (2.0 * PI * r2);
            v.velocity[1] += w * d[0] / (2.0 * PI * r2);
            let k = w / (2.0 * PI * r2 * r2);
            let (p, q) = (2.0 * d[0] * d[1], d[1] * d[1] - d[0] * d[0]);
            v.gradient[0][0] += k * p;
            v.gradient[0][1] += k * q;
            v.gradient[1][0] += k * q;
            v.gradient[1][1] -= k * p;
            let (cx, cy) = (-y[0], -y[1]);
            v.phi_t += wt * (d[1] * cx - d[0] * cy).atan2(d[0] * cx + d[1] * cy) / (2.0 * PI);
        }
        Some(v)
    }
}

/// Full-plane flow of one snapshot, by direct sums over the cells carrying
/// vorticity. Accurate away from the support, in particular near the
/// origin where the corrector lives.
pub struct EulerFlow {
    /// `(y, h^2 omega, h^2 omega_t)`.
    cells: Vec<(Vec2, f64, f64)>,
    local: LocalExpansion,
    origin: Vec2,
    sup_u: f64,
    sup_grad: f64,
    grad_energy: f64,
}

impl EulerFlow {
    pub fn new(g: CartesianGrid, snap: &EulerSnapshot) -> Self {
        let h2 = g.spacing().powi(2);
        let wmax = snap.omega.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tmax = snap.omega_t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let cells: Vec<(Vec2, f64, f64)> = (0..g.len())
            .filter(|&k| snap.omega[k].abs() > 1e-9 * wmax || snap.omega_t[k].abs() > 1e-9 * tmax)
            // the origin must lie in the vorticity-free core; drop round-off there
            .filter(|&k| g.point(k) != [0.0, 0.0])
            // the rows at -L have no mirror image; they carry only ringing
            .filter(|&k| k % g.n != 0 && k / g.n != 0)
            .map(|k| (g.point(k), h2 * snap.omega[k], h2 * snap.omega_t[k]))
            .collect();
        let grad_energy = h2 * snap.omega.iter().map(|v| v * v).sum::<f64>();
        let local = LocalExpansion::new(&cells);
        let mut f = EulerFlow { cells, local, origin: [0.0; 2], sup_u: 0.0, sup_grad: 0.0, grad_energy };
        f.origin = f.velocity([0.0, 0.0]);
        // sup |u| and sup |grad u| from the gridded free-space velocity
        let vg = VelocityGrid::from_vorticity(g, &snap.omega);
        f.sup_u = vg.max_speed();
        let n = g.n;
        let h = g.spacing();
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let at = |a: usize, b: usize, c: usize| vg.values[2 * (b * n + a) + c];
                let mut s = 0.0;
                for c in 0..2 {
                    s += ((at(i + 1, j, c) - at(i - 1, j, c)) / (2.0 * h)).powi(2);
                    s += ((at(i, j + 1, c) - at(i, j - 1, c)) / (2.0 * h)).powi(2);
                }
                f.sup_grad = f.sup_grad.max(s.sqrt());
            }
        }
        f
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }
}

impl EulerFlow {
    fn direct_stream(&self, x: Vec2) -> f64 {
        self.cells
            .iter()
            .map(|(y, w, _)| {
                let d = norm([x[0] - y[0], x[1] - y[1]]);
                w * (d / norm(*y)).ln() / (2.0 * PI)
            })
            .sum()
    }

    fn direct_velocity(&self, x: Vec2) -> Vec2 {
        let mut u = [0.0; 2];
        for (y, w, _) in &self.cells {
            let d = [x[0] - y[0], x[1] - y[1]];
            let r2 = d[0] * d[0] + d[1] * d[1];
            if r2 == 0.0 {
                continue;
            }
            u[0] -= w * d[1] / (2.0 * PI * r2);
            u[1] += w * d[0] / (2.0 * PI * r2);
        }
        u
    }

    fn direct_velocity_gradient(&self, x: Vec2) -> Mat2 {
        let mut g = [[0.0; 2]; 2];
        for (y, w, _) in &self.cells {
            let d = [x[0] - y[0], x[1] - y[1]];
            let r2 = d[0] * d[0] + d[1] * d[1];
            if r2 == 0.0 {
                continue;
            }
            let c = w / (2.0 * PI * r2 * r2);
            let a = 2.0 * d[0] * d[1];
            let b = d[1] * d[1] - d[0] * d[0];
            g[0][0] += c * a;
            g[0][1] += c * b;
            g[1][0] += c * b;
            g[1][1] -= c * a;
        }
        g
    }

    /// In the vorticity-free core around the origin `u = grad phi` with
    /// `phi_t = sum omega_t arg(x - y) / 2 pi`, so the unsteady Bernoulli
    /// relation gives `p` along any path inside the core.
    fn direct_pressure(&self, x: Vec2) -> f64 {
        let u = self.direct_velocity(x);
        let mut phi_t = 0.0;
        for (y, _, wt) in &self.cells {
            // arg((x - y) / (0 - y))
            let (a, b) = (x[0] - y[0], x[1] - y[1]);
            let (c, d) = (-y[0], -y[1]);
            let ang = (b * c - a * d).atan2(a * c + b * d);
            phi_t += wt * ang / (2.0 * PI);
        }
        -0.5 * (u[0] * u[0] + u[1] * u[1] - self.origin[0].powi(2) - self.origin[1].powi(2)) - phi_t
    }

    fn direct_stream_rate(&self, x: Vec2) -> f64 {
        self.cells
            .iter()
            .map(|(y, _, wt)| {
                let d = norm([x[0] - y[0], x[1] - y[1]]);
                wt * (d / norm(*y)).ln() / (2.0 * PI)
            })
            .sum()
    }
}

impl ReferenceFlow for EulerFlow {
    fn stream(&self, x: Vec2) -> f64 {
        match self.local.series(x) {
            Some(s) => s.stream,
            None => self.direct_stream(x),
        }
    }

    fn velocity(&self, x: Vec2) -> Vec2 {
        match self.local.series(x) {
            Some(s) => s.velocity,
            None => self.direct_velocity(x),
        }
    }

    fn velocity_gradient(&self, x: Vec2) -> Mat2 {
        match self.local.series(x) {
            Some(s) => s.gradient,
            None => self.direct_velocity_gradient(x),
        }
    }

    fn pressure(&self, x: Vec2) -> f64 {
        match self.local.series(x) {
            Some(s) => {
                let u = s.velocity;
                -0.5 * (u[0] * u[0] + u[1] * u[1] - self.origin[0].powi(2) - self.origin[1].powi(2)) - s.phi_t
            }
            None => self.direct_pressure(x),
        }
    }

    fn stream_rate(&self, x: Vec2) -> f64 {
        match self.local.series(x) {
            Some(s) => s.stream_rate,
            None => self.direct_stream_rate(x),
        }
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
