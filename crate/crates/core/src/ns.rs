//! Navier-Stokes in the exterior of the scaled obstacle with no-slip walls.
//!
//! Vorticity-stream function form in the mapped coordinates `w = s + i theta`
//! of the polar exterior grid, where the Laplacian keeps its form up to the
//! area factor `J = |dx/dw|^2`:
//!
//! ```text
//! psi_ss + psi_tt = J omega
//! J omega_t + {psi, omega} = nu (omega_ss + omega_tt)
//! ```
//!
//! Advection uses the Arakawa Jacobian and low-storage RK3; diffusion is
//! Crank-Nicolson inside each substage. The wall vorticity comes from the
//! Thom closure `J_0 omega_0 = 2 psi_1 / ds^2`, solved implicitly together
//! with the Poisson equation so the no-slip condition holds at every stage.
//! Theta derivatives in the linear operators are spectral. At the outer
//! ring non-zero modes of `psi` decay like `exp(-|k| s)` and the mean mode
//! carries the fixed total circulation; the vorticity is set to zero there.
//!
//! For the disk `J` depends on `s` only and every Fourier mode is solved
//! directly. For the ellipse the theta-averaged `J` gives a preconditioner
//! for GMRES on the coupled system.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::biot_savart::VorticityProfile;
use crate::fft::wavenumber;
use crate::fields::{Field, Grid, PolarExteriorGrid};
use crate::{Error, Result, Vec2};

// low-storage RK3 with Crank-Nicolson diffusion
const GAMMA: [f64; 3] = [8.0 / 15.0, 5.0 / 12.0, 3.0 / 4.0];
const ZETA: [f64; 3] = [0.0, -17.0 / 60.0, -5.0 / 12.0];
const ALPHA: [f64; 3] = [4.0 / 15.0, 1.0 / 15.0, 1.0 / 6.0];

/// `dt |u|^2 / nu` below which grid-scale modes stay damped whatever the
/// Courant number; the scalar amplification factor allows up to 0.3.
const DIFFUSIVE_LIMIT: f64 = 0.25;
/// Step growth per step, so that the start-up wall layer is resolved.
const MAX_GROWTH: f64 = 1.25;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NsOptions {
    /// Largest step allowed.
    pub dt_max: f64,
    pub t_final: f64,
    /// Snapshots at `k T / n_outputs`.
    pub n_outputs: usize,
    /// Advective Courant number in mapped coordinates.
    pub cfl: f64,
    /// Keep the Courant limit everywhere, even where diffusion dominates.
    pub strict_courant: bool,
}

impl NsOptions {
    pub fn new(dt_max: f64, t_final: f64, n_outputs: usize) -> Self {
        NsOptions { dt_max, t_final, n_outputs, cfl: 0.5, strict_courant: false }
    }
}

#[derive(Debug, Clone)]
pub struct NsSnapshot {
    pub t: f64,
    pub omega: Vec<f64>,
    pub psi: Vec<f64>,
    /// False only for the initial data, which may slip along the wall.
    pub no_slip: bool,
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NsSample {
    pub t: f64,
    /// Discrete `int |u|^2`, see the solver's energy form.
    pub energy: f64,
    /// `1/2 int omega^2`.
    pub enstrophy: f64,
    /// `2 nu int_0^t int |grad u|^2`, accumulated on the midpoints of the
    /// implicit stages as in the discrete energy law of Crank-Nicolson.
    pub dissipated: f64,
}

pub struct NsRun {
    pub grid: PolarExteriorGrid,
    pub nu: f64,
    pub snapshots: Vec<NsSnapshot>,
    pub series: Vec<NsSample>,
    pub steps: usize,
    pub gmres_iterations: usize,
}

/// Ring-wise FFTs of length `n_theta`.
struct RingFft {
    m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl RingFft {
    fn new(m: usize) -> Self {
        let mut p = FftPlanner::new();
        RingFft { m, fwd: p.plan_fft_forward(m), inv: p.plan_fft_inverse(m) }
    }

    fn forward(&self, data: &[f64]) -> Vec<Complex64> {
        let mut c: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        c.par_chunks_mut(self.m).for_each(|row| self.fwd.process(row));
        c
    }

    fn inverse(&self, mut c: Vec<Complex64>) -> Vec<f64> {
        let s = 1.0 / self.m as f64;
        c.par_chunks_mut(self.m).for_each(|row| self.inv.process(row));
        c.into_iter().map(|v| v.re * s).collect()
    }
}

/// The discretization shared by the stepping, the initial Poisson solve
/// and the diagnostics.
struct Solver {
    grid: PolarExteriorGrid,
    nr: usize,
    m: usize,
    ds: f64,
    dth: f64,
    jac: Vec<f64>,
    jbar: Vec<f64>,
    uniform_jac: bool,
    fft: RingFft,
    /// Outer slope of the mean stream function, `Gamma / 2 pi`.
    g_out: f64,
}

fn k_of(idx: usize, m: usize) -> f64 {
    wavenumber(idx, m)
}

impl Solver {
    fn new(grid: PolarExteriorGrid) -> Self {
        let nr = grid.n_rings();
        let m = grid.n_theta;
        let jac: Vec<f64> = (0..nr * m).map(|idx| grid.jacobian(idx / m, idx % m)).collect();
        let jbar: Vec<f64> = (0..nr).map(|j| jac[j * m..(j + 1) * m].iter().sum::<f64>() / m as f64).collect();
        let uniform_jac = grid.map.is_identity();
        Solver { grid, nr, m, ds: grid.ds(), dth: grid.dtheta(), jac, jbar, uniform_jac, fft: RingFft::new(m), g_out: 0.0 }
    }

    /// Solves `psi_ss + psi_tt = J omega` with `psi = 0` on the wall, the
    /// decaying outer condition and zero circulation about the body.
    fn initial_stream(&mut self, omega: &[f64]) -> Vec<f64> {
        let (nr, m, ds) = (self.nr, self.m, self.ds);
        let src: Vec<f64> = omega.iter().zip(&self.jac).map(|(w, j)| w * j).collect();
        let mut trap = 0.0;
        for j in 0..nr {
            let mean = src[j * m..(j + 1) * m].iter().sum::<f64>() / m as f64;
            trap += if j == 0 || j == nr - 1 { 0.5 } else { 1.0 } * mean;
        }
        self.g_out = ds * trap;
        let rhs = self.fft.forward(&src);
        let mut out = vec![Complex64::new(0.0, 0.0); nr * m];
        let cols: Vec<Vec<Complex64>> = (0..m)
            .into_par_iter()
            .map(|kidx| {
                let k = k_of(kidx, m);
                let kk = k * k;
                let ak = k.abs();
                // unknowns psi_1..psi_{nr-1}
                let n = nr - 1;
                let mut a = vec![0.0; n];
                let mut b = vec![0.0; n];
                let mut c = vec![0.0; n];
                let mut r = vec![Complex64::new(0.0, 0.0); n];
                for q in 0..n {
                    let j = q + 1;
                    r[q] = rhs[j * m + kidx];
                    if j < nr - 1 {
                        a[q] = 1.0 / (ds * ds);
                        b[q] = -2.0 / (ds * ds) - kk;
                        c[q] = 1.0 / (ds * ds);
                    } else {
                        a[q] = 2.0 / (ds * ds);
                        b[q] = -2.0 / (ds * ds) - 2.0 * ak / ds - kk;
                        if kidx == 0 {
                            r[q] -= Complex64::new(2.0 * self.g_out * m as f64 / ds, 0.0);
                        }
                    }
                }
                let x = thomas(&a, &b, &c, &r);
                let mut col = vec![Complex64::new(0.0, 0.0); nr];
                col[1..].copy_from_slice(&x);
                col
            })
            .collect();
        for (kidx, col) in cols.into_iter().enumerate() {
            for j in 0..nr {
                out[j * m + kidx] = col[j];
            }
        }
        self.fft.inverse(out)
    }

    fn idx(&self, j: usize, i: isize) -> usize {
        j * self.m + i.rem_euclid(self.m as isize) as usize
    }

    /// `-{psi, omega}` on interior rings by Arakawa's scheme.
    fn advection(&self, psi: &[f64], w: &[f64]) -> Vec<f64> {
        let (nr, m) = (self.nr, self.m);
        let scale = 1.0 / (12.0 * self.ds * self.dth);
        let mut out = vec![0.0; nr * m];
        out.par_chunks_mut(m).enumerate().for_each(|(j, row)| {
            if j == 0 || j == nr - 1 {
                return;
            }
            for (i, o) in row.iter_mut().enumerate() {
                let i = i as isize;
                let p = |dj: isize, di: isize| psi[self.idx((j as isize + dj) as usize, i + di)];
                let z = |dj: isize, di: isize| w[self.idx((j as isize + dj) as usize, i + di)];
                let jpp = (p(1, 0) - p(-1, 0)) * (z(0, 1) - z(0, -1)) - (p(0, 1) - p(0, -1)) * (z(1, 0) - z(-1, 0));
                let jpx = p(1, 0) * (z(1, 1) - z(1, -1)) - p(-1, 0) * (z(-1, 1) - z(-1, -1))
                    - p(0, 1) * (z(1, 1) - z(-1, 1))
                    + p(0, -1) * (z(1, -1) - z(-1, -1));
                let jxp = z(0, 1) * (p(1, 1) - p(-1, 1)) - z(0, -1) * (p(1, -1) - p(-1, -1))
                    - z(1, 0) * (p(1, 1) - p(1, -1))
                    + z(-1, 0) * (p(-1, 1) - p(-1, -1));
                *o = -(jpp + jpx + jxp) * scale;
            }
        });
        out
    }

    /// `omega_ss + omega_tt` on interior rings, zero elsewhere.
    fn laplacian(&self, w: &[f64]) -> Vec<f64> {
        let (nr, m, ds) = (self.nr, self.m, self.ds);
        let hat = self.fft.forward(w);
        let mut out = vec![Complex64::new(0.0, 0.0); nr * m];
        for j in 1..nr - 1 {
            for kidx in 0..m {
                let k = k_of(kidx, m);
                out[j * m + kidx] = (hat[(j + 1) * m + kidx] - 2.0 * hat[j * m + kidx] + hat[(j - 1) * m + kidx])
                    / (ds * ds)
                    - k * k * hat[j * m + kidx];
            }
        }
        self.fft.inverse(out)
    }

    /// Coupled operator acting on `(omega, psi)`; rows `a` carry the Poisson
    /// equation (Thom at the wall), rows `b` the implicit diffusion, the wall
    /// Dirichlet condition on `psi` and the outer condition on `omega`.
    fn apply(&self, c: f64, w: &[f64], psi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (nr, m, ds) = (self.nr, self.m, self.ds);
        let wh = self.fft.forward(w);
        let ph = self.fft.forward(psi);
        let mut ra = vec![Complex64::new(0.0, 0.0); nr * m];
        let mut rb = vec![Complex64::new(0.0, 0.0); nr * m];
        for kidx in 0..m {
            let k = k_of(kidx, m);
            let (kk, ak) = (k * k, k.abs());
            for j in 0..nr {
                let at = |v: &Vec<Complex64>, jj: usize| v[jj * m + kidx];
                let i = j * m + kidx;
                if j == 0 {
                    ra[i] = (2.0 * at(&ph, 1) - 2.0 * at(&ph, 0)) / (ds * ds) - kk * at(&ph, 0);
                    rb[i] = at(&ph, 0);
                } else if j == nr - 1 {
                    ra[i] = (2.0 * at(&ph, j - 1) - 2.0 * at(&ph, j)) / (ds * ds) - (2.0 * ak / ds + kk) * at(&ph, j);
                    rb[i] = at(&wh, j);
                } else {
                    ra[i] = (at(&ph, j + 1) - 2.0 * at(&ph, j) + at(&ph, j - 1)) / (ds * ds) - kk * at(&ph, j);
                    let lap = (at(&wh, j + 1) - 2.0 * at(&wh, j) + at(&wh, j - 1)) / (ds * ds) - kk * at(&wh, j);
                    rb[i] = -c * lap;
                }
            }
        }
        let mut ra = self.fft.inverse(ra);
        let mut rb = self.fft.inverse(rb);
        for j in 0..nr {
            for i in 0..m {
                let q = j * m + i;
                ra[q] -= self.jac[q] * w[q];
                if j > 0 && j < nr - 1 {
                    rb[q] += self.jac[q] * w[q];
                }
            }
        }
        (ra, rb)
    }

    /// Inverse of the operator with `J` replaced by its ring average.
    fn solve_averaged(&self, c: f64, ra: &[f64], rb: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (nr, m, ds) = (self.nr, self.m, self.ds);
        let ah = self.fft.forward(ra);
        let bh = self.fft.forward(rb);
        let cols: Vec<Result<Vec<[Complex64; 2]>>> = (0..m)
            .into_par_iter()
            .map(|kidx| {
                let k = k_of(kidx, m);
                let (kk, ak) = (k * k, k.abs());
                let z = Complex64::new(0.0, 0.0);
                // block rows [(a, b)] x unknowns [(omega, psi)]
                let mut lo = vec![[[0.0; 2]; 2]; nr];
                let mut di = vec![[[0.0; 2]; 2]; nr];
                let mut up = vec![[[0.0; 2]; 2]; nr];
                let mut r = vec![[z; 2]; nr];
                let h2 = 1.0 / (ds * ds);
                for j in 0..nr {
                    r[j] = [ah[j * m + kidx], bh[j * m + kidx]];
                    let jb = self.jbar[j];
                    if j == 0 {
                        di[j] = [[-jb, -2.0 * h2 - kk], [0.0, 1.0]];
                        up[j] = [[0.0, 2.0 * h2], [0.0, 0.0]];
                    } else if j == nr - 1 {
                        lo[j] = [[0.0, 2.0 * h2], [0.0, 0.0]];
                        di[j] = [[-jb, -2.0 * h2 - 2.0 * ak / ds - kk], [1.0, 0.0]];
                    } else {
                        lo[j] = [[0.0, h2], [-c * h2, 0.0]];
                        di[j] = [[-jb, -2.0 * h2 - kk], [jb + c * (2.0 * h2 + kk), 0.0]];
                        up[j] = [[0.0, h2], [-c * h2, 0.0]];
                    }
                }
                block_thomas(&lo, &di, &up, &r)
            })
            .collect();
        let mut wo = vec![Complex64::new(0.0, 0.0); nr * m];
        let mut po = wo.clone();
        for (kidx, col) in cols.into_iter().enumerate() {
            let col = col?;
            for j in 0..nr {
                wo[j * m + kidx] = col[j][0];
                po[j * m + kidx] = col[j][1];
            }
        }
        Ok((self.fft.inverse(wo), self.fft.inverse(po)))
    }

    /// Solves the coupled stage system for `(omega, psi)`.
    fn solve_stage(&self, c: f64, ra: &[f64], rb: &[f64], guess: (&[f64], &[f64]), iters: &mut usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.uniform_jac {
            return self.solve_averaged(c, ra, rb);
        }
        let n = self.nr * self.m;
        let pack = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().chain(b).copied().collect() };
        let rhs = pack(ra, rb);
        let op = |v: &[f64]| -> Vec<f64> {
            let (a, b) = self.apply(c, &v[..n], &v[n..]);
            pack(&a, &b)
        };
        let pre = |v: &[f64]| -> Result<Vec<f64>> {
            let (a, b) = self.solve_averaged(c, &v[..n], &v[n..])?;
            Ok(pack(&a, &b))
        };
        let x0 = pack(guess.0, guess.1);
        let (x, it) = gmres(op, pre, &rhs, x0, 1e-11, 60, 400)?;
        *iters += it;
        Ok((x[..n].to_vec(), x[n..].to_vec()))
    }

    /// Largest stable step. At each node either the advective Courant
    /// limit or, where diffusion dominates at the grid scale, the
    /// mesh-independent limit `nu / |u|^2` of explicit advection under
    /// Crank-Nicolson diffusion; `strict` keeps only the former.
    fn stable_step(&self, psi: &[f64], nu: f64, cfl: f64, strict: bool) -> f64 {
        let (nr, m) = (self.nr, self.m);
        (1..nr - 1)
            .into_par_iter()
            .map(|j| {
                let mut dt = f64::INFINITY;
                for i in 0..m as isize {
                    let q = self.idx(j, i);
                    let ps = (psi[self.idx(j + 1, i)] - psi[self.idx(j - 1, i)]) / (2.0 * self.ds);
                    let pt = (psi[self.idx(j, i + 1)] - psi[self.idx(j, i - 1)]) / (2.0 * self.dth);
                    let jq = self.jac[q];
                    let rate = pt.abs() / jq / self.ds + ps.abs() / jq / self.dth;
                    let mut local = cfl / rate;
                    if !strict {
                        local = local.max(DIFFUSIVE_LIMIT * nu * jq / (ps * ps + pt * pt));
                    }
                    dt = dt.min(local);
                }
                dt
            })
            .reduce(|| f64::INFINITY, f64::min)
    }

    /// `(psi_s, psi_theta)` at a node; the wall uses the ghost value
    /// `psi_{-1} = psi_1` once no-slip is imposed.
    fn stream_derivatives(&self, psi: &[f64], j: usize, i: usize, no_slip: bool) -> (f64, f64) {
        let (nr, ds) = (self.nr, self.ds);
        let ii = i as isize;
        let ps = if j == 0 {
            if no_slip {
                0.0
            } else {
                (-3.0 * psi[self.idx(0, ii)] + 4.0 * psi[self.idx(1, ii)] - psi[self.idx(2, ii)]) / (2.0 * ds)
            }
        } else if j == nr - 1 {
            (3.0 * psi[self.idx(j, ii)] - 4.0 * psi[self.idx(j - 1, ii)] + psi[self.idx(j - 2, ii)]) / (2.0 * ds)
        } else {
            (psi[self.idx(j + 1, ii)] - psi[self.idx(j - 1, ii)]) / (2.0 * ds)
        };
        let pt = (psi[self.idx(j, ii + 1)] - psi[self.idx(j, ii - 1)]) / (2.0 * self.dth);
        (ps, pt)
    }

    fn ring_weight(&self, j: usize) -> f64 {
        if j == 0 || j == self.nr - 1 {
            0.5 * self.ds * self.dth
        } else {
            self.ds * self.dth
        }
    }

    /// Discrete Dirichlet form of `psi` whose first variation is the
    /// Poisson operator of the solver, so that the Thom rows and the
    /// Crank-Nicolson midpoints give an exact energy law for the linear
    /// part. It counts `int |u|^2` inside `r_out` plus the potential tail
    /// of the non-mean modes beyond it; the tail of the mean mode is fixed
    /// by the circulation and left out.
    fn energy(&self, psi: &[f64]) -> f64 {
        let (nr, m, ds, dth) = (self.nr, self.m, self.ds, self.dth);
        let hat = self.fft.forward(psi);
        let radial: f64 = (0..nr - 1)
            .into_par_iter()
            .map(|j| (0..m).map(|i| (psi[(j + 1) * m + i] - psi[j * m + i]).powi(2)).sum::<f64>() * dth / ds)
            .sum();
        let spectral = |j: usize, f: &dyn Fn(f64) -> f64| -> f64 {
            (0..m).map(|k| f(k_of(k, m)) * hat[j * m + k].norm_sqr()).sum::<f64>() * dth / m as f64
        };
        let angular: f64 = (0..nr).map(|j| self.ring_weight(j) / dth * spectral(j, &|k| k * k)).sum();
        let tail = spectral(nr - 1, &|k| k.abs());
        radial + angular + tail
    }

    /// `int omega^2 dA`.
    fn omega_squared(&self, w: &[f64]) -> f64 {
        (0..self.nr)
            .map(|j| {
                let wt = self.ring_weight(j);
                (0..self.m).map(|i| wt * self.jac[j * self.m + i] * w[j * self.m + i].powi(2)).sum::<f64>()
            })
            .sum()
    }

    fn velocity(&self, psi: &[f64], j: usize, i: usize, no_slip: bool) -> Vec2 {
        let (ps, pt) = self.stream_derivatives(psi, j, i, no_slip);
        let g = self.grid.metric_g(j, i);
        // u1 + i u2 = i conj((psi_s - i psi_t) / g)
        let v = Complex64::i() * (Complex64::new(ps, -pt) / g).conj();
        [v.re, v.im]
    }
}

/// Scalar tridiagonal solve, complex right-hand side.
fn thomas(a: &[f64], b: &[f64], c: &[f64], r: &[Complex64]) -> Vec<Complex64> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut rp = vec![Complex64::new(0.0, 0.0); n];
    cp[0] = c[0] / b[0];
    rp[0] = r[0] / b[0];
    for i in 1..n {
        let den = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / den;
        rp[i] = (r[i] - a[i] * rp[i - 1]) / den;
    }
    let mut x = rp;
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] -= cp[i] * next;
    }
    x
}

type M2 = [[f64; 2]; 2];

fn inv2(m: &M2) -> Option<M2> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det.abs() < 1e-300 {
        return None;
    }
    Some([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]])
}

fn mul2(a: &M2, b: &M2) -> M2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn mulv(a: &M2, v: &[Complex64; 2]) -> [Complex64; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

/// Block tridiagonal solve with real 2x2 blocks.
fn block_thomas(lo: &[M2], di: &[M2], up: &[M2], r: &[[Complex64; 2]]) -> Result<Vec<[Complex64; 2]>> {
    let n = di.len();
    let singular = || Error::Convergence("singular block in the wall-coupled solve".into());
    let mut dinv: Vec<M2> = Vec::with_capacity(n);
    let mut rp = r.to_vec();
    dinv.push(inv2(&di[0]).ok_or_else(singular)?);
    for j in 1..n {
        let f = mul2(&lo[j], &dinv[j - 1]);
        let fu = mul2(&f, &up[j - 1]);
        let mut d = di[j];
        for a in 0..2 {
            for b in 0..2 {
                d[a][b] -= fu[a][b];
            }
        }
        let fr = mulv(&f, &rp[j - 1]);
        rp[j] = [rp[j][0] - fr[0], rp[j][1] - fr[1]];
        dinv.push(inv2(&d).ok_or_else(singular)?);
    }
    let mut x = vec![[Complex64::new(0.0, 0.0); 2]; n];
    x[n - 1] = mulv(&dinv[n - 1], &rp[n - 1]);
    for j in (0..n - 1).rev() {
        let cu = mulv(&up[j], &x[j + 1]);
        x[j] = mulv(&dinv[j], &[rp[j][0] - cu[0], rp[j][1] - cu[1]]);
    }
    Ok(x)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.par_iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Right-preconditioned restarted GMRES.
fn gmres<A, P>(op: A, pre: P, b: &[f64], mut x: Vec<f64>, tol: f64, restart: usize, max_iter: usize) -> Result<(Vec<f64>, usize)>
where
    A: Fn(&[f64]) -> Vec<f64>,
    P: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let bnorm = dot(b, b).sqrt().max(1e-300);
    let mut total = 0;
    loop {
        let ax = op(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let beta = dot(&r, &r).sqrt();
        if beta <= tol * bnorm {
            return Ok((x, total));
        }
        if total >= max_iter {
            return Err(Error::Convergence(format!("GMRES stalled at relative residual {:.2e}", beta / bnorm)));
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|t| t / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::new();
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..restart {
            total += 1;
            let zk = pre(&v[k])?;
            let mut w = op(&zk);
            z.push(zk);
            for i in 0..=k {
                h[i][k] = dot(&w, &v[i]);
                let hik = h[i][k];
                w.iter_mut().zip(&v[i]).for_each(|(a, b)| *a -= hik * b);
            }
            h[k + 1][k] = dot(&w, &w).sqrt();
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let den = h[k][k].hypot(h[k + 1][k]);
            cs[k] = h[k][k] / den;
            sn[k] = h[k + 1][k] / den;
            h[k][k] = den;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            if g[k + 1].abs() <= tol * bnorm || total >= max_iter {
                break;
            }
            let nrm = dot(&w, &w).sqrt();
            v.push(w.iter().map(|t| t / nrm).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            x.iter_mut().zip(&z[j]).for_each(|(a, b)| *a += yj * b);
        }
    }
}

/// Vorticity of the initial data sampled on the grid nodes.
pub fn initial_vorticity(grid: PolarExteriorGrid, profile: &VorticityProfile) -> Field {
    Field::scalar_from_fn(Grid::Polar(grid), |x| profile.eval(x))
}

/// Runs the no-slip problem from the exterior initial data with vorticity
/// `omega0` and zero circulation about the body.
pub fn solve_ns(omega0: &Field, nu: f64, opts: NsOptions) -> Result<NsRun> {
    let Grid::Polar(grid) = omega0.grid else {
        return Err(Error::Domain("the viscous solver runs on the polar exterior grid".into()));
    };
    if !(nu > 0.0) {
        return Err(Error::Config("viscosity must be positive".into()));
    }
    if !(opts.dt_max > 0.0 && opts.t_final >= 0.0 && opts.cfl > 0.0) || opts.n_outputs == 0 {
        return Err(Error::Config("need dt > 0, T >= 0, cfl > 0 and at least one output".into()));
    }
    let mut sv = Solver::new(grid);
    let (nr, m) = (sv.nr, sv.m);
    let mut w = omega0.values.clone();
    // far-field ring carries no vorticity
    for v in &mut w[(nr - 1) * m..] {
        *v = 0.0;
    }
    let mut psi = sv.initial_stream(&w);
    let e0 = sv.energy(&psi);
    let mut run = NsRun { grid, nu, snapshots: Vec::new(), series: Vec::new(), steps: 0, gmres_iterations: 0 };
    run.snapshots.push(NsSnapshot { t: 0.0, omega: w.clone(), psi: psi.clone(), no_slip: false });
    run.series.push(NsSample { t: 0.0, energy: e0, enstrophy: 0.5 * sv.omega_squared(&w), dissipated: 0.0 });

    let mut t = 0.0;
    let mut dt_prev = f64::INFINITY;
    let mut dissipated = 0.0;
    let mut iters = 0usize;
    for k_out in 1..=opts.n_outputs {
        let t_next = opts.t_final * k_out as f64 / opts.n_outputs as f64;
        while t < t_next - 1e-14 * opts.t_final.max(1.0) {
            let strict = opts.strict_courant || run.steps == 0;
            let mut dt = sv.stable_step(&psi, nu, opts.cfl, strict).min(opts.dt_max).min(MAX_GROWTH * dt_prev);
            if t + dt > t_next {
                dt = t_next - t;
            } else if t + 1.5 * dt > t_next {
                dt = 0.5 * (t_next - t);
            }
            let mut n_prev = vec![0.0; nr * m];
            for s in 0..3 {
                // alpha = beta for this scheme
                let c = ALPHA[s] * nu * dt;
                let nl = sv.advection(&psi, &w);
                let lap = sv.laplacian(&w);
                let mut ra = vec![0.0; nr * m];
                let g = sv.g_out;
                for v in &mut ra[(nr - 1) * m..] {
                    *v = -2.0 * g / sv.ds;
                }
                let mut rb = vec![0.0; nr * m];
                for j in 1..nr - 1 {
                    for i in 0..m {
                        let q = j * m + i;
                        rb[q] = sv.jac[q] * w[q] + c * lap[q] + dt * (GAMMA[s] * nl[q] + ZETA[s] * n_prev[q]);
                    }
                }
                let (wn, pn) = sv.solve_stage(c, &ra, &rb, (&w, &psi), &mut iters)?;
                // Crank-Nicolson dissipates on the stage midpoint
                let mid: Vec<f64> = w.iter().zip(&wn).map(|(a, b)| 0.5 * (a + b)).collect();
                dissipated += 2.0 * ALPHA[s] * dt * 2.0 * nu * sv.omega_squared(&mid);
                w = wn;
                psi = pn;
                n_prev = nl;
            }
            t += dt;
            dt_prev = dt;
            run.steps += 1;
            let rate = 2.0 * nu * sv.omega_squared(&w);
            let energy = sv.energy(&psi);
            if !energy.is_finite() || energy > 10.0 * e0.max(1e-300) {
                return Err(Error::Stability(format!("energy blew up to {energy:.3e} at t = {t:.4e}")));
            }
            run.series.push(NsSample { t, energy, enstrophy: 0.25 * rate / nu, dissipated });
        }
        run.snapshots.push(NsSnapshot { t: t_next, omega: w.clone(), psi: psi.clone(), no_slip: true });
    }
    run.gmres_iterations = iters;
    Ok(run)
}

impl NsRun {
    fn solver(&self) -> Solver {
        Solver::new(self.grid)
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    /// Velocity at every node of snapshot `k`.
    pub fn velocity(&self, k: usize) -> Field {
        let sv = self.solver();
        let s = &self.snapshots[k];
        let m = sv.m;
        let values: Vec<f64> = (0..sv.nr * m)
            .into_par_iter()
            .flat_map_iter(|q| {
                let u = sv.velocity(&s.psi, q / m, q % m, s.no_slip);
                [u[0], u[1]]
            })
            .collect();
        Field { grid: Grid::Polar(self.grid), ncomp: 2, values, obstacle: None }
    }

    pub fn vorticity(&self, k: usize) -> Field {
        Field { grid: Grid::Polar(self.grid), ncomp: 1, values: self.snapshots[k].omega.clone(), obstacle: None }
    }

    /// Largest speed on the wall ring.
    pub fn wall_speed(&self, k: usize) -> f64 {
        let u = self.velocity(k);
        (0..self.grid.n_theta).map(|i| u.magnitude(i)).fold(0.0, f64::max)
    }

    /// Largest `(E(t) + dissipated(t)) / E(0) - 1` over the run.
    pub fn energy_excess(&self) -> f64 {
        let e0 = self.series[0].energy;
        self.series.iter().map(|s| (s.energy + s.dissipated) / e0 - 1.0).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `Omega(t) = 1/2 int omega^2` at every step.
pub fn enstrophy_series(run: &NsRun) -> Vec<(f64, f64)> {
    run.series.iter().map(|s| (s.t, s.enstrophy)).collect()
}

/// Azimuthal flow about the disk, as a function of the radius.
pub struct RadialSolution {
    pub r: Vec<f64>,
    pub times: Vec<f64>,
    /// `u_theta` per output time.
    pub u: Vec<Vec<f64>>,
    /// Circulation `2 pi r u` at the outer radius per output time.
    pub outer_circulation: Vec<f64>,
    /// `int_0^t 2 pi nu r d_r omega` at the outer radius, in the discrete
    /// form that the update conserves exactly.
    pub outer_flux: Vec<f64>,
}

impl RadialSolution {
    /// Linear interpolation of `u_theta` at output `k`.
    pub fn at(&self, k: usize, r: f64) -> f64 {
        let dr = self.r[1] - self.r[0];
        let f = ((r - self.r[0]) / dr).clamp(0.0, (self.r.len() - 1) as f64);
        let i = (f.floor() as usize).min(self.r.len() - 2);
        let t = f - i as f64;
        (1.0 - t) * self.u[k][i] + t * self.u[k][i + 1]
    }
}

/// Independent solver for `u_t = nu (u'' + u'/r - u/r^2)` on `[eps, r_out]`
/// with `u(eps) = 0` and zero vorticity at `r_out`. Written for the
/// circulation `G = r u`, which obeys `G_t = nu r (G'/r)'`; second-order
/// finite volumes on a uniform radial grid, Crank-Nicolson in time.
/// The outer ghost face carries `omega = 0`.
#[allow(clippy::too_many_arguments)]
pub fn radial_reference<F: Fn(f64) -> f64>(
    eps: f64,
    nu: f64,
    u0: F,
    r_out: f64,
    n: usize,
    dt: f64,
    t_final: f64,
    n_outputs: usize,
) -> Result<RadialSolution> {
    if !(eps > 0.0 && r_out > eps && n >= 4 && dt > 0.0 && nu >= 0.0) || n_outputs == 0 {
        return Err(Error::Config("bad radial reference parameters".into()));
    }
    let dr = (r_out - eps) / n as f64;
    let r: Vec<f64> = (0..=n).map(|i| eps + i as f64 * dr).collect();
    let mut g: Vec<f64> = r.iter().map(|&x| x * u0(x)).collect();
    g[0] = 0.0;
    // face coefficient nu r_i / (dr^2 r_{i+1/2})
    let face = |i: usize| 1.0 / (0.5 * (r[i] + r[i + 1]));
    // (L G)_i = nu r_i (F_{i+1/2} - F_{i-1/2}) / dr with F = G' / r
    let apply = |g: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n + 1];
        for i in 1..=n {
            let fr = if i < n { face(i) * (g[i + 1] - g[i]) / dr } else { 0.0 };
            let fl = face(i - 1) * (g[i] - g[i - 1]) / dr;
            out[i] = nu * r[i] * (fr - fl) / dr;
        }
        out
    };
    // outer face flux of the conservative update as a rate of change of
    // circulation; the wall passes none once no-slip holds
    let flux = |g: &[f64]| -> f64 { -2.0 * PI * nu * r[n] * face(n - 1) * (g[n] - g[n - 1]) / (dr * dr) };
    let steps_per = ((t_final / dt / n_outputs as f64).ceil() as usize).max(1);
    let h = if t_final > 0.0 { t_final / (steps_per * n_outputs) as f64 } else { 0.0 };
    let mut sol = RadialSolution {
        times: vec![0.0],
        u: vec![g.iter().zip(&r).map(|(a, b)| a / b).collect()],
        outer_circulation: vec![2.0 * PI * g[n]],
        outer_flux: vec![0.0],
        r: r.clone(),
    };
    // tridiagonal (I - h/2 L)
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut c = vec![0.0; n];
    for q in 0..n {
        let i = q + 1;
        let wl = nu * r[i] * face(i - 1) / (dr * dr);
        let wr = if i < n { nu * r[i] * face(i) / (dr * dr) } else { 0.0 };
        a[q] = -0.5 * h * wl;
        b[q] = 1.0 + 0.5 * h * (wl + wr);
        c[q] = -0.5 * h * wr;
    }
    let mut of = 0.0;
    let mut fl = flux(&g);
    for k in 1..=n_outputs {
        for _ in 0..steps_per {
            let lg = apply(&g);
            let rhs: Vec<Complex64> = (1..=n).map(|i| Complex64::new(g[i] + 0.5 * h * lg[i], 0.0)).collect();
            let x = thomas(&a, &b, &c, &rhs);
            for i in 1..=n {
                g[i] = x[i - 1].re;
            }
            let f2 = flux(&g);
            of += 0.5 * h * (fl + f2);
            fl = f2;
        }
        sol.times.push(k as f64 * h * steps_per as f64);
        sol.u.push(g.iter().zip(&r).map(|(a, b)| a / b).collect());
        sol.outer_circulation.push(2.0 * PI * g[n]);
        sol.outer_flux.push(of);
    }
    Ok(sol)
}
