//! Grids and discretized scalar/vector fields: region-aware norms,
//! interpolation, zero extension into the obstacle, circulation,
//! stream-function recovery and CSV snapshots.
//!
//! Two grid families are used. [`CartesianGrid`] is a periodic box for the
//! full-plane solver. [`PolarExteriorGrid`] covers the fluid domain outside
//! the scaled obstacle in mapped coordinates: nodes are uniform in
//! `(s, theta)` with `zeta = exp(s + i theta)` in the exterior of the unit
//! disk and physical position `x = eps * T^{-1}(zeta)`. For the disk this is
//! the usual log-polar grid.

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::fft::{wavenumber, Fft2};
use crate::geometry::{from_c, to_c, ConformalMap, ObstacleShape};
use crate::{norm, Error, Result, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianGrid {
    pub half_width: f64,
    pub n: usize,
}

impl CartesianGrid {
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        if n < 4 || !n.is_multiple_of(2) {
            return Err(Error::Config(format!("grid size must be even and >= 4, got {n}")));
        }
        if !(half_width > 0.0) {
            return Err(Error::Config("half width must be positive".into()));
        }
        Ok(CartesianGrid { half_width, n })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    pub fn point(&self, idx: usize) -> Vec2 {
        [self.coord(idx % self.n), self.coord(idx / self.n)]
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    /// True when the ball of radius `r` fits in the box with the margin
    /// factor 2 (supp inside `B_{L/2}`).
    pub fn has_margin_for(&self, r: f64) -> bool {
        r <= 0.5 * self.half_width
    }

    /// Bilinear interpolation with periodic wrap.
    pub fn interpolate(&self, data: &[f64], ncomp: usize, x: Vec2, out: &mut [f64]) {
        let h = self.spacing();
        let n = self.n;
        let fx = (x[0] + self.half_width) / h;
        let fy = (x[1] + self.half_width) / h;
        let i0 = fx.floor();
        let j0 = fy.floor();
        let tx = fx - i0;
        let ty = fy - j0;
        let wrap = |k: f64| (k as i64).rem_euclid(n as i64) as usize;
        let (i0, i1, j0, j1) = (wrap(i0), wrap(i0 + 1.0), wrap(j0), wrap(j0 + 1.0));
        for c in 0..ncomp {
            let v = |i: usize, j: usize| data[(j * n + i) * ncomp + c];
            out[c] = (1.0 - tx) * (1.0 - ty) * v(i0, j0)
                + tx * (1.0 - ty) * v(i1, j0)
                + (1.0 - tx) * ty * v(i0, j1)
                + tx * ty * v(i1, j1);
        }
    }
}

/// Exterior grid uniform in `(s, theta)`; node `(j, i)` has
/// `s = j * ds` (`j = 0` on the body) and `theta = i * dtheta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarExteriorGrid {
    pub map: ConformalMap,
    pub eps: f64,
    pub n_s: usize,
    pub n_theta: usize,
    pub s_max: f64,
}

impl PolarExteriorGrid {
    /// Grid whose outer ring lies at physical distance at least `r_out`
    /// from the origin. `n_s` is the number of radial intervals.
    pub fn new(map: ConformalMap, eps: f64, r_out: f64, n_s: usize, n_theta: usize) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::Config("eps must be positive".into()));
        }
        if !n_theta.is_multiple_of(4) || n_theta == 0 {
            return Err(Error::Config(format!("n_theta must be a positive multiple of 4, got {n_theta}")));
        }
        if n_s < 2 {
            return Err(Error::Config("need at least two radial intervals".into()));
        }
        let r_in = eps * map.shape.max_boundary_radius();
        if !(r_out > r_in) {
            return Err(Error::Config(format!("outer radius {r_out} must exceed inner radius {r_in}")));
        }
        // smallest rho with eps * min_theta |Z(rho e^{i theta})| >= r_out;
        // |Z| >= c1 rho - c2 / rho and c1 + c2 = a, c1 - c2 = b.
        let (c1, c2) = match map.shape.kind {
            crate::geometry::ShapeKind::UnitDisk => (1.0, 0.0),
            crate::geometry::ShapeKind::Ellipse { a, b } => (0.5 * (a + b), 0.5 * (a - b)),
        };
        let target = r_out / eps;
        let rho = (target + (target * target + 4.0 * c1 * c2).sqrt()) / (2.0 * c1);
        Ok(PolarExteriorGrid { map, eps, n_s, n_theta, s_max: rho.max(1.0).ln() })
    }

    /// Same as [`new`](Self::new) but with the radial count chosen from a
    /// target spacing in `s`.
    pub fn with_spacing(map: ConformalMap, eps: f64, r_out: f64, ds: f64, n_theta: usize) -> Result<Self> {
        let probe = Self::new(map, eps, r_out, 2, n_theta)?;
        let n_s = ((probe.s_max / ds).ceil() as usize).max(2);
        Self::new(map, eps, r_out, n_s, n_theta)
    }

    pub fn ds(&self) -> f64 {
        self.s_max / self.n_s as f64
    }

    pub fn dtheta(&self) -> f64 {
        2.0 * PI / self.n_theta as f64
    }

    pub fn n_rings(&self) -> usize {
        self.n_s + 1
    }

    pub fn len(&self) -> usize {
        self.n_rings() * self.n_theta
    }

    pub fn s(&self, j: usize) -> f64 {
        j as f64 * self.ds()
    }

    pub fn theta(&self, i: usize) -> f64 {
        i as f64 * self.dtheta()
    }

    pub fn zeta(&self, j: usize, i: usize) -> Complex64 {
        Complex64::from_polar(self.s(j).exp(), self.theta(i))
    }

    pub fn point_ji(&self, j: usize, i: usize) -> Vec2 {
        from_c(self.eps * self.map.inverse_c(self.zeta(j, i)))
    }

    pub fn point(&self, idx: usize) -> Vec2 {
        self.point_ji(idx / self.n_theta, idx % self.n_theta)
    }

    /// `g = dx/dw` with `w = s + i theta`.
    pub fn metric_g(&self, j: usize, i: usize) -> Complex64 {
        let z = self.zeta(j, i);
        self.eps * self.map.inverse_derivative(z) * z
    }

    /// Area factor `J = |dx/dw|^2`.
    pub fn jacobian(&self, j: usize, i: usize) -> f64 {
        self.metric_g(j, i).norm_sqr()
    }

    /// Physical outer radius reached by the grid (minimum over the ring).
    pub fn r_out(&self) -> f64 {
        (0..self.n_theta).map(|i| norm(self.point_ji(self.n_s, i))).fold(f64::INFINITY, f64::min)
    }

    /// Mapped coordinates `(s, theta)` of a physical exterior point.
    pub fn locate(&self, x: Vec2) -> Option<(f64, f64)> {
        let y = [x[0] / self.eps, x[1] / self.eps];
        if self.map.shape.contains(y) && self.map.shape.level(y) < 1.0 - 1e-12 {
            return None;
        }
        let zeta = self.map.map_c(to_c(y));
        let s = zeta.norm().ln().max(0.0);
        let th = zeta.arg().rem_euclid(2.0 * PI);
        Some((s, th))
    }

    /// Bilinear interpolation in `(s, theta)`; `None` inside the obstacle
    /// or beyond the outer ring.
    pub fn interpolate(&self, data: &[f64], ncomp: usize, x: Vec2, out: &mut [f64]) -> bool {
        let Some((s, th)) = self.locate(x) else { return false };
        if s > self.s_max * (1.0 + 1e-12) {
            return false;
        }
        let fs = (s / self.ds()).min(self.n_s as f64);
        let ft = th / self.dtheta();
        let j0 = (fs.floor() as usize).min(self.n_s - 1);
        let ts = fs - j0 as f64;
        let i0f = ft.floor();
        let tt = ft - i0f;
        let i0 = (i0f as usize) % self.n_theta;
        let i1 = (i0 + 1) % self.n_theta;
        let nt = self.n_theta;
        for c in 0..ncomp {
            let v = |j: usize, i: usize| data[(j * nt + i) * ncomp + c];
            out[c] = (1.0 - ts) * (1.0 - tt) * v(j0, i0)
                + ts * (1.0 - tt) * v(j0 + 1, i0)
                + (1.0 - ts) * tt * v(j0, i1)
                + ts * tt * v(j0 + 1, i1);
        }
        true
    }

    /// Trapezoid weight in `s` for ring `j` restricted to `[a, b]`
    /// (exact integral of the piecewise-linear hat function).
    fn hat_weight(&self, j: usize, a: f64, b: f64) -> f64 {
        let ds = self.ds();
        let sj = self.s(j);
        let lo = if j == 0 { sj } else { sj - ds };
        let hi = if j == self.n_s { sj } else { sj + ds };
        let mut w = 0.0;
        // left half: rises from lo to sj
        if j > 0 {
            let (p, q) = (a.max(lo), b.min(sj));
            if q > p {
                let f = |s: f64| (s - lo).powi(2) / (2.0 * ds);
                w += f(q) - f(p);
            }
        }
        if j < self.n_s {
            let (p, q) = (a.max(sj), b.min(hi));
            if q > p {
                let f = |s: f64| -(hi - s).powi(2) / (2.0 * ds);
                w += f(q) - f(p);
            }
        }
        w
    }

    /// Quadrature weights (including the area factor) for a region.
    pub fn weights(&self, region: Region, obstacle_eps: f64) -> Vec<f64> {
        let _ = obstacle_eps;
        let dth = self.dtheta();
        let radial_interval = match region {
            Region::All | Region::Exterior => Some((0.0, self.s_max)),
            Region::Obstacle => None,
            Region::Annulus { inner, outer } if self.map.is_identity() => {
                let a = (inner / self.eps).max(1.0).ln().max(0.0);
                let b = if outer / self.eps <= 1.0 { 0.0 } else { (outer / self.eps).ln() };
                Some((a, b.min(self.s_max)))
            }
            Region::Annulus { .. } => Some((0.0, self.s_max)),
        };
        let generic_annulus = matches!(region, Region::Annulus { .. }) && !self.map.is_identity();
        (0..self.len())
            .into_par_iter()
            .map(|idx| {
                let (j, i) = (idx / self.n_theta, idx % self.n_theta);
                let Some((a, b)) = radial_interval else { return 0.0 };
                let mut w = if generic_annulus {
                    let full = self.hat_weight(j, 0.0, self.s_max);
                    let r = norm(self.point_ji(j, i));
                    if region.contains_radius(r) {
                        full
                    } else {
                        0.0
                    }
                } else {
                    self.hat_weight(j, a, b)
                };
                w *= dth * self.jacobian(j, i);
                w
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    /// Everything the grid covers.
    All,
    /// The fluid domain outside the scaled obstacle.
    Exterior,
    /// The scaled obstacle itself.
    Obstacle,
    /// `inner <= |x| <= outer`, intersected with the grid.
    Annulus { inner: f64, outer: f64 },
}

impl Region {
    fn contains_radius(&self, r: f64) -> bool {
        match *self {
            Region::Annulus { inner, outer } => r >= inner && r <= outer,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Grid {
    Cartesian(CartesianGrid),
    Polar(PolarExteriorGrid),
}

impl Grid {
    pub fn len(&self) -> usize {
        match self {
            Grid::Cartesian(g) => g.len(),
            Grid::Polar(g) => g.len(),
        }
    }

    pub fn point(&self, idx: usize) -> Vec2 {
        match self {
            Grid::Cartesian(g) => g.point(idx),
            Grid::Polar(g) => g.point(idx),
        }
    }
}

/// Scaled obstacle `eps * Omega` used for region masks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledObstacle {
    pub shape: ObstacleShape,
    pub eps: f64,
}

impl ScaledObstacle {
    pub fn contains(&self, x: Vec2) -> bool {
        self.shape.contains_scaled(self.eps, x)
    }
}

/// Norm over a region, flagged when the region holds no quadrature nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionNorm {
    pub value: f64,
    pub empty_region: bool,
}

/// Scalar (`ncomp = 1`) or vector (`ncomp = 2`) samples on a grid, stored
/// interleaved per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub ncomp: usize,
    pub values: Vec<f64>,
    pub obstacle: Option<ScaledObstacle>,
}

impl Field {
    pub fn zeros(grid: Grid, ncomp: usize) -> Self {
        Field { grid, ncomp, values: vec![0.0; grid.len() * ncomp], obstacle: None }
    }

    pub fn from_fn<F>(grid: Grid, ncomp: usize, f: F) -> Self
    where
        F: Fn(Vec2) -> Vec2 + Sync,
    {
        let values: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .flat_map_iter(|idx| {
                let v = f(grid.point(idx));
                v.into_iter().take(ncomp)
            })
            .collect();
        Field { grid, ncomp, values, obstacle: None }
    }

    pub fn scalar_from_fn<F>(grid: Grid, f: F) -> Self
    where
        F: Fn(Vec2) -> f64 + Sync,
    {
        Self::from_fn(grid, 1, |x| [f(x), 0.0])
    }

    pub fn with_obstacle(mut self, shape: ObstacleShape, eps: f64) -> Self {
        self.obstacle = Some(ScaledObstacle { shape, eps });
        self
    }

    pub fn node(&self, idx: usize) -> &[f64] {
        &self.values[idx * self.ncomp..(idx + 1) * self.ncomp]
    }

    pub fn magnitude(&self, idx: usize) -> f64 {
        self.node(idx).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn weights(&self, region: Region) -> Vec<f64> {
        match &self.grid {
            Grid::Cartesian(g) => {
                let h2 = g.spacing().powi(2);
                (0..g.len())
                    .map(|idx| {
                        let x = g.point(idx);
                        let inside = self.obstacle.map(|o| o.contains(x)).unwrap_or(false);
                        let keep = match region {
                            Region::All => true,
                            Region::Exterior => !inside,
                            Region::Obstacle => inside,
                            Region::Annulus { .. } => region.contains_radius(norm(x)) && !inside,
                        };
                        if keep {
                            h2
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
            Grid::Polar(g) => g.weights(region, g.eps),
        }
    }

    /// `L^2` norm over a region (trapezoid on Cartesian grids, area-weighted
    /// trapezoid in `s` on exterior grids).
    pub fn l2_norm(&self, region: Region) -> RegionNorm {
        let w = self.weights(region);
        let empty = w.iter().all(|&v| v == 0.0);
        let sum: f64 = w
            .par_iter()
            .enumerate()
            .map(|(idx, &wi)| if wi == 0.0 { 0.0 } else { wi * self.node(idx).iter().map(|v| v * v).sum::<f64>() })
            .sum();
        RegionNorm { value: sum.max(0.0).sqrt(), empty_region: empty }
    }

    /// Sup of the pointwise magnitude over the nodes of a region.
    pub fn sup_norm(&self, region: Region) -> RegionNorm {
        let w = self.weights(region);
        let mut sup: f64 = 0.0;
        let mut any = false;
        for (idx, &wi) in w.iter().enumerate() {
            if wi > 0.0 {
                any = true;
                sup = sup.max(self.magnitude(idx));
            }
        }
        RegionNorm { value: sup, empty_region: !any }
    }

    /// Interpolated value at `x`; `None` outside the grid's coverage.
    pub fn sample(&self, x: Vec2) -> Option<Vec2> {
        let mut out = [0.0; 2];
        match &self.grid {
            Grid::Cartesian(g) => {
                if x[0].abs() > g.half_width || x[1].abs() > g.half_width {
                    return None;
                }
                g.interpolate(&self.values, self.ncomp, x, &mut out[..self.ncomp]);
            }
            Grid::Polar(g) => {
                if !g.interpolate(&self.values, self.ncomp, x, &mut out[..self.ncomp]) {
                    return None;
                }
            }
        }
        Some(out)
    }

    /// Sample of the zero extension: exactly zero inside the closed scaled
    /// obstacle, interpolated outside.
    pub fn sample_extended(&self, x: Vec2) -> Option<Vec2> {
        let obstacle = match (&self.grid, self.obstacle) {
            (Grid::Polar(g), _) => Some(ScaledObstacle { shape: g.map.shape, eps: g.eps }),
            (_, o) => o,
        };
        if obstacle.map(|o| o.contains(x)).unwrap_or(false) {
            return Some([0.0, 0.0]);
        }
        self.sample(x)
    }

    /// Zero extension of a field onto a Cartesian grid covering the plane.
    /// Nodes outside the source grid's coverage are set to zero as well.
    pub fn extend_by_zero(&self, target: CartesianGrid) -> Field {
        let obstacle = match (&self.grid, self.obstacle) {
            (Grid::Polar(g), _) => ScaledObstacle { shape: g.map.shape, eps: g.eps },
            (_, Some(o)) => o,
            (_, None) => return self.resampled(target),
        };
        let ncomp = self.ncomp;
        let values: Vec<f64> = (0..target.len())
            .into_par_iter()
            .flat_map_iter(|idx| {
                let x = target.point(idx);
                let v = if obstacle.contains(x) { [0.0, 0.0] } else { self.sample(x).unwrap_or([0.0, 0.0]) };
                v.into_iter().take(ncomp)
            })
            .collect();
        Field { grid: Grid::Cartesian(target), ncomp, values, obstacle: Some(obstacle) }
    }

    fn resampled(&self, target: CartesianGrid) -> Field {
        let ncomp = self.ncomp;
        let values: Vec<f64> = (0..target.len())
            .into_par_iter()
            .flat_map_iter(|idx| self.sample(target.point(idx)).unwrap_or([0.0, 0.0]).into_iter().take(ncomp))
            .collect();
        Field { grid: Grid::Cartesian(target), ncomp, values, obstacle: self.obstacle }
    }

    /// Divergence by centered differences. Cartesian edges use one-sided
    /// differences; exterior grids use the conformal identity
    /// `div u - i curl u = conj(1/g) (d_s + i d_theta)(u1 - i u2)`.
    pub fn divergence(&self) -> Result<Field> {
        Ok(self.div_curl()?.0)
    }

    /// Scalar curl `d1 u2 - d2 u1` with the same stencils as
    /// [`divergence`](Self::divergence).
    pub fn curl(&self) -> Result<Field> {
        Ok(self.div_curl()?.1)
    }

    fn div_curl(&self) -> Result<(Field, Field)> {
        if self.ncomp != 2 {
            return Err(Error::Domain("divergence needs a vector field".into()));
        }
        let mut div = Field::zeros(self.grid, 1);
        let mut curl = Field::zeros(self.grid, 1);
        div.obstacle = self.obstacle;
        curl.obstacle = self.obstacle;
        match &self.grid {
            Grid::Cartesian(g) => {
                let n = g.n;
                let h = g.spacing();
                let v = |i: usize, j: usize, c: usize| self.values[(j * n + i) * 2 + c];
                let d = |i: usize, j: usize, c: usize, axis: usize| -> f64 {
                    let (k, lim) = if axis == 0 { (i, n) } else { (j, n) };
                    let at = |kk: usize| if axis == 0 { v(kk, j, c) } else { v(i, kk, c) };
                    if k == 0 {
                        (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
                    } else if k == lim - 1 {
                        (3.0 * at(lim - 1) - 4.0 * at(lim - 2) + at(lim - 3)) / (2.0 * h)
                    } else {
                        (at(k + 1) - at(k - 1)) / (2.0 * h)
                    }
                };
                for j in 0..n {
                    for i in 0..n {
                        div.values[j * n + i] = d(i, j, 0, 0) + d(i, j, 1, 1);
                        curl.values[j * n + i] = d(i, j, 1, 0) - d(i, j, 0, 1);
                    }
                }
            }
            Grid::Polar(g) => {
                let nt = g.n_theta;
                let ds = g.ds();
                let dth = g.dtheta();
                let f = |j: usize, i: usize| {
                    let k = (j * nt + i) * 2;
                    Complex64::new(self.values[k], -self.values[k + 1])
                };
                for j in 0..g.n_rings() {
                    for i in 0..nt {
                        let fs = if j == 0 {
                            (-3.0 * f(0, i) + 4.0 * f(1, i) - f(2, i)) / (2.0 * ds)
                        } else if j == g.n_s {
                            (3.0 * f(j, i) - 4.0 * f(j - 1, i) + f(j - 2, i)) / (2.0 * ds)
                        } else {
                            (f(j + 1, i) - f(j - 1, i)) / (2.0 * ds)
                        };
                        let ft = (f(j, (i + 1) % nt) - f(j, (i + nt - 1) % nt)) / (2.0 * dth);
                        let r = (1.0 / g.metric_g(j, i)).conj() * (fs + Complex64::i() * ft);
                        div.values[j * nt + i] = r.re;
                        curl.values[j * nt + i] = -r.im;
                    }
                }
            }
        }
        Ok((div, curl))
    }

    /// Serializes the field as CSV with a one-line grid header.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        match &self.grid {
            Grid::Cartesian(g) => writeln!(w, "# cartesian half_width={} n={} ncomp={}", g.half_width, g.n, self.ncomp)?,
            Grid::Polar(g) => writeln!(
                w,
                "# polar eps={} n_s={} n_theta={} s_max={} shape={:?} ncomp={}",
                g.eps, g.n_s, g.n_theta, g.s_max, g.map.shape.kind, self.ncomp
            )?,
        }
        if self.ncomp == 2 {
            writeln!(w, "x,y,u1,u2")?;
        } else {
            writeln!(w, "x,y,f")?;
        }
        for idx in 0..self.grid.len() {
            let x = self.grid.point(idx);
            write!(w, "{:.17e},{:.17e}", x[0], x[1])?;
            for v in self.node(idx) {
                write!(w, ",{:.17e}", v)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads back the value columns of a snapshot written by
    /// [`write_csv`](Self::write_csv) onto a known grid.
    pub fn read_csv(path: &Path, grid: Grid) -> Result<Field> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut lines = file.lines();
        let header = lines.next().ok_or_else(|| Error::Domain("empty snapshot".into()))??;
        let ncomp: usize = header
            .split_whitespace()
            .find_map(|t| t.strip_prefix("ncomp=").map(|v| v.parse().ok()))
            .flatten()
            .ok_or_else(|| Error::Domain("snapshot header lacks ncomp".into()))?;
        lines.next();
        let mut values = Vec::with_capacity(grid.len() * ncomp);
        for line in lines {
            let line = line?;
            for tok in line.split(',').skip(2) {
                values.push(tok.trim().parse::<f64>().map_err(|e| Error::Domain(e.to_string()))?);
            }
        }
        if values.len() != grid.len() * ncomp {
            return Err(Error::Domain("snapshot size does not match grid".into()));
        }
        Ok(Field { grid, ncomp, values, obstacle: None })
    }
}

/// Circulation `oint u . ds` over the circle `|x| = r`, trapezoid rule with
/// `n` samples. Fails when the circle meets the obstacle or leaves the
/// field's coverage.
pub fn circulation<F>(u: F, r: f64, n: usize, obstacle: Option<ScaledObstacle>) -> Result<f64>
where
    F: Fn(Vec2) -> Option<Vec2> + Sync,
{
    let dth = 2.0 * PI / n as f64;
    let terms: Result<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let t = k as f64 * dth;
            let x = [r * t.cos(), r * t.sin()];
            if obstacle.map(|o| o.contains(x)).unwrap_or(false) {
                return Err(Error::Domain(format!("circle of radius {r} crosses the obstacle")));
            }
            let v = u(x).ok_or_else(|| Error::Domain(format!("circle of radius {r} leaves the field")))?;
            Ok((-v[0] * t.sin() + v[1] * t.cos()) * r * dth)
        })
        .collect();
    Ok(terms?.into_iter().sum())
}

/// Stream function `psi` with `grad_perp psi = u` and `psi(0) = 0` for a
/// decaying divergence-free field on a Cartesian grid. The vorticity is
/// taken by centered differences and convolved with the free-space Green
/// function `log|x| / 2pi` (zero-padded FFT convolution).
pub fn stream_function(u: &Field) -> Result<Field> {
    let Grid::Cartesian(g) = u.grid else {
        return Err(Error::Domain("stream function needs a full-plane Cartesian field".into()));
    };
    let (div, curl) = u.div_curl()?;
    let grad_scale = curl.values.iter().chain(div.values.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    let max_div = div.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let u_max = u.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = grad_scale.max(u_max / g.half_width);
    if max_div > 1e-3 * scale && max_div > 1e-12 {
        return Err(Error::Domain(format!("field is not divergence-free: max |div u| = {max_div:.3e}")));
    }
    let psi = free_space_potential(g, &curl.values);
    let mut out = [0.0];
    g.interpolate(&psi, 1, [0.0, 0.0], &mut out);
    let values = psi.iter().map(|v| v - out[0]).collect();
    Ok(Field { grid: u.grid, ncomp: 1, values, obstacle: u.obstacle })
}

/// `sum_y log|x - y| / (2 pi) * src(y) h^2` on the grid nodes, with the
/// self term replaced by the cell average of the logarithm.
pub fn free_space_potential(g: CartesianGrid, src: &[f64]) -> Vec<f64> {
    let n = g.n;
    let m = 2 * n;
    let h = g.spacing();
    let fft = Fft2::new(m);
    let mut kernel = vec![Complex64::new(0.0, 0.0); m * m];
    // cell average of log|x| over [-h/2, h/2]^2
    let self_term = (h / 2.0).ln() + 0.5 * (2f64).ln() - 1.5 + PI / 4.0;
    for j in 0..m {
        for i in 0..m {
            let di = wavenumber(i, m);
            let dj = wavenumber(j, m);
            let r = h * di.hypot(dj);
            let v = if i == 0 && j == 0 { self_term } else { r.ln() };
            kernel[j * m + i] = Complex64::new(v / (2.0 * PI) * h * h, 0.0);
        }
    }
    fft.forward(&mut kernel);
    let mut padded = vec![Complex64::new(0.0, 0.0); m * m];
    for j in 0..n {
        for i in 0..n {
            padded[j * m + i] = Complex64::new(src[j * n + i], 0.0);
        }
    }
    fft.forward(&mut padded);
    for (p, k) in padded.iter_mut().zip(&kernel) {
        *p *= k;
    }
    fft.inverse(&mut padded);
    let mut out = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            out[j * n + i] = padded[j * m + i].re;
        }
    }
    out
}

/// `grad_perp` of a scalar Cartesian field by centered differences.
pub fn perp_gradient(psi: &Field) -> Result<Field> {
    let Grid::Cartesian(g) = psi.grid else {
        return Err(Error::Domain("perp_gradient expects a Cartesian field".into()));
    };
    let n = g.n;
    let h = g.spacing();
    let mut out = Field::zeros(psi.grid, 2);
    let v = |i: usize, j: usize| psi.values[j * n + i];
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let dx = (v(i + 1, j) - v(i - 1, j)) / (2.0 * h);
            let dy = (v(i, j + 1) - v(i, j - 1)) / (2.0 * h);
            out.values[(j * n + i) * 2] = -dy;
            out.values[(j * n + i) * 2 + 1] = dx;
        }
    }
    Ok(out)
}
