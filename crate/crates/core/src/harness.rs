//! Sweep orchestration and rate fitting.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::biot_savart::VorticityProfile;
use crate::config::SweepConfig;
use crate::corrector::{
    corrector_velocity_at, eps0, measure_lemma_constants, Cutoff, LemmaResolution, ReferenceFlow,
};
use crate::euler::{solve_euler, EulerFlow, EulerOptions, EulerRun};
use crate::fields::{CartesianGrid, Field, PolarExteriorGrid, Region};
use crate::geometry::{ConformalMap, ObstacleShape};
use crate::ns::{enstrophy_series, initial_vorticity, solve_ns, NsOptions, NsRun, NsSample};
use crate::poincare;
use crate::{norm, Error, Result, Vec2};

/// Least-squares slope on log-log axes with a 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub half_width: f64,
    pub n_points: usize,
    pub excluded: usize,
}

/// Errors at or below this are excluded from fits.
pub const FIT_FLOOR: f64 = 1e-300;

pub fn fit_rate(pairs: &[(f64, f64)]) -> Result<RateFit> {
    if pairs.iter().any(|p| !(p.0 > 0.0)) {
        return Err(Error::Domain("rate fits need positive parameters".into()));
    }
    let kept: Vec<(f64, f64)> = pairs.iter().filter(|p| p.1 > FIT_FLOOR).map(|p| (p.0.ln(), p.1.ln())).collect();
    if kept.len() < 3 {
        return Err(Error::Insufficient(format!(
            "need at least 3 positive points for a rate fit, got {}",
            kept.len()
        )));
    }
    let n = kept.len() as f64;
    let mx = kept.iter().map(|p| p.0).sum::<f64>() / n;
    let my = kept.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = kept.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = kept.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("rate fit needs distinct parameters".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = kept.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let dof = n - 2.0;
    let se = if dof > 0.0 { (ssr / dof / sxx).sqrt() } else { 0.0 };
    Ok(RateFit { slope, intercept, half_width: t_quantile_975(dof as usize) * se, n_points: kept.len(), excluded: pairs.len() - kept.len() })
}

/// Two-sided 95% Student-t quantile.
fn t_quantile_975(dof: usize) -> f64 {
    const TABLE: [f64; 10] = [12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228];
    match dof {
        0 => 0.0,
        d if d <= 10 => TABLE[d - 1],
        d if d <= 30 => 2.042 + (2.228 - 2.042) * (30 - d) as f64 / 20.0,
        _ => 1.96,
    }
}

/// `C1 = 1 / (8 K4 K6^2)`.
pub fn compute_c1(k4: f64, k6: f64) -> Result<f64> {
    if !(k4 > 0.0 && k6 > 0.0 && k4.is_finite() && k6.is_finite()) {
        return Err(Error::Domain(format!("C1 needs positive finite constants, got K4 = {k4}, K6 = {k6}")));
    }
    Ok(1.0 / (8.0 * k4 * k6 * k6))
}

/// `sup_t |u(0, t)| eps / nu`.
pub fn local_reynolds(sup_origin_speed: f64, eps: f64, nu: f64) -> f64 {
    sup_origin_speed * eps / nu
}

/// `int_0^T Omega dt` by the trapezoid rule over the recorded steps.
pub fn enstrophy_budget(run: &NsRun) -> f64 {
    trapezoid(&enstrophy_series(run))
}

fn trapezoid(s: &[(f64, f64)]) -> f64 {
    s.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum()
}

/// `delta_E` and the corrector comparison at the output times of a run.
#[derive(Debug, Clone, Serialize)]
pub struct DeltaE {
    pub times: Vec<f64>,
    /// `(|u^{nu,eps} - u|^2_{Pi_eps} + |u|^2_{eps Omega})^{1/2}`.
    pub values: Vec<f64>,
    /// `|u^eps - u|` over the whole plane.
    pub corrector_gap: Vec<f64>,
    /// `|u^{nu,eps} - u^eps|` over the whole plane.
    pub to_corrector: Vec<f64>,
}

impl DeltaE {
    /// `| |w - u| - |w - u^eps| | <= |u^eps - u|` at every time.
    pub fn triangle_holds(&self) -> bool {
        (0..self.times.len())
            .all(|k| (self.values[k] - self.to_corrector[k]).abs() <= self.corrector_gap[k] * (1.0 + 1e-9) + 1e-14)
    }
}

/// `int_{eps Omega} |v|^2` by the midpoint rule on a square grid.
fn obstacle_norm_sq<F: Fn(Vec2) -> Vec2>(shape: &ObstacleShape, eps: f64, v: F) -> f64 {
    let n = 64;
    let half = eps * shape.bounding_radius;
    let h = 2.0 * half / n as f64;
    let mut s = 0.0;
    for j in 0..n {
        for i in 0..n {
            let x = [-half + (i as f64 + 0.5) * h, -half + (j as f64 + 0.5) * h];
            if shape.contains_scaled(eps, x) {
                let u = v(x);
                s += h * h * (u[0] * u[0] + u[1] * u[1]);
            }
        }
    }
    s
}

/// Compares a viscous run with the full-plane Euler flow at the run's
/// output times. The Euler velocity comes from the gridded free-space
/// field where it has a stencil and from direct sums elsewhere.
pub fn delta_e(ns: &NsRun, euler: &EulerRun) -> Result<DeltaE> {
    let g = ns.grid;
    let shape = g.map.shape;
    let eps = g.eps;
    let cutoff = Cutoff::new(&shape);
    let collar = eps * (shape.bounding_radius + 2.0);
    let weights = g.weights(Region::All, eps);
    let mut out = DeltaE { times: Vec::new(), values: Vec::new(), corrector_gap: Vec::new(), to_corrector: Vec::new() };
    for k in 0..ns.snapshots.len() {
        let t = ns.snapshots[k].t;
        let vg = euler.velocity_grid_at(t)?;
        let (a, b, s) = bracket(euler, t);
        let fa = euler.flow(a);
        let fb = (a != b).then(|| euler.flow(b));
        let direct = |x: Vec2| -> Vec2 {
            let ua = fa.velocity(x);
            match &fb {
                Some(f) => {
                    let ub = f.velocity(x);
                    [(1.0 - s) * ua[0] + s * ub[0], (1.0 - s) * ua[1] + s * ub[1]]
                }
                None => ua,
            }
        };
        let corrected = |x: Vec2| -> Vec2 {
            let ua = corrector_velocity_at(&fa, &cutoff, eps, x);
            match &fb {
                Some(f) => {
                    let ub = corrector_velocity_at(f, &cutoff, eps, x);
                    [(1.0 - s) * ua[0] + s * ub[0], (1.0 - s) * ua[1] + s * ub[1]]
                }
                None => ua,
            }
        };
        let u = ns.velocity(k);
        let parts: Vec<(f64, f64, f64)> = (0..g.len())
            .into_par_iter()
            .map(|q| {
                let x = g.point(q);
                let ue = vg.at(x).unwrap_or_else(|| direct(x));
                let w = u.node(q);
                let d = [w[0] - ue[0], w[1] - ue[1]];
                let (gap, to) = if norm(x) < collar {
                    let c = corrected(x);
                    let gc = [c[0] - ue[0], c[1] - ue[1]];
                    let tc = [w[0] - c[0], w[1] - c[1]];
                    (gc[0] * gc[0] + gc[1] * gc[1], tc[0] * tc[0] + tc[1] * tc[1])
                } else {
                    (0.0, d[0] * d[0] + d[1] * d[1])
                };
                (weights[q] * (d[0] * d[0] + d[1] * d[1]), weights[q] * gap, weights[q] * to)
            })
            .collect();
        let inner = obstacle_norm_sq(&shape, eps, direct);
        let ext: f64 = parts.iter().map(|p| p.0).sum();
        let gap: f64 = parts.iter().map(|p| p.1).sum();
        let to: f64 = parts.iter().map(|p| p.2).sum();
        out.times.push(t);
        out.values.push((ext + inner).sqrt());
        out.corrector_gap.push((gap + inner).sqrt());
        out.to_corrector.push(to.sqrt());
    }
    Ok(out)
}

fn bracket(euler: &EulerRun, t: f64) -> (usize, usize, f64) {
    let ts = euler.times();
    let last = ts.len() - 1;
    let tol = 1e-9 * euler.t_final.max(1.0);
    let k = ts.iter().position(|&s| s >= t - tol).unwrap_or(last);
    if k == 0 || (ts[k] - t).abs() <= tol {
        return (k, k, 0.0);
    }
    (k - 1, k, (t - ts[k - 1]) / (ts[k] - ts[k - 1]))
}

/// One `(nu, eps)` experiment.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub nu: f64,
    pub eps: f64,
    /// `eps <= C1 nu`.
    pub coupled: bool,
    pub delta_e: Option<DeltaE>,
    pub sup_delta_e: f64,
    pub delta_e0: f64,
    /// `sup_t delta_E^2 / (nu + delta_E(0)^2)`.
    pub gronwall_ratio: f64,
    pub enstrophy_budget: f64,
    pub re_loc: f64,
    /// `max_t (E(t) + 2 nu int |grad u|^2) / E(0) - 1`.
    pub energy_residual: f64,
    pub steps: usize,
    pub seconds: f64,
    #[serde(skip)]
    pub series: Vec<NsSample>,
    /// Velocity at the first and last output.
    #[serde(skip)]
    pub snapshots: Vec<Field>,
    pub error: Option<String>,
}

impl RunRecord {
    fn failed(nu: f64, eps: f64, coupled: bool, e: Error) -> Self {
        RunRecord {
            nu,
            eps,
            coupled,
            delta_e: None,
            sup_delta_e: f64::NAN,
            delta_e0: f64::NAN,
            gronwall_ratio: f64::NAN,
            enstrophy_budget: f64::NAN,
            re_loc: f64::NAN,
            energy_residual: f64::NAN,
            steps: 0,
            seconds: 0.0,
            series: Vec::new(),
            snapshots: Vec::new(),
            error: Some(e.to_string()),
        }
    }

    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Where `C1` came from.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CouplingConstants {
    pub c1: f64,
    pub k4: Option<f64>,
    pub k6: Option<f64>,
}

/// Operational `K4` over the Euler snapshots and `K6` of the shape.
pub fn measure_c1(shape: &ObstacleShape, profile: &VorticityProfile, euler: &EulerRun) -> Result<CouplingConstants> {
    let e0 = eps0(shape, profile);
    let mut eps: Vec<f64> = LEMMA_EPS.to_vec();
    if eps.iter().any(|&e| e >= e0) {
        eps = (1..=4).map(|k| e0 / 2f64.powi(k)).collect();
    }
    let flows: Vec<EulerFlow> = (0..euler.snapshots.len()).map(|k| euler.flow(k)).collect();
    let refs: Vec<&dyn ReferenceFlow> = flows.iter().map(|f| f as &dyn ReferenceFlow).collect();
    let k = measure_lemma_constants(&refs, &Cutoff::new(shape), &eps, e0, LemmaResolution::default())?;
    let k6 = poincare::k6(shape)?.k6;
    Ok(CouplingConstants { c1: compute_c1(k.k4, k6)?, k4: Some(k.k4), k6: Some(k6) })
}

/// `eps` values used to measure `K4`, if they fit under `eps_0`.
pub const LEMMA_EPS: [f64; 4] = [0.04, 0.02, 0.01, 0.005];

/// Minimum slope of `sup_t delta_E` against `nu`.
pub const MIN_SLOPE: f64 = 0.4;
/// Largest spread of the enstrophy budgets across a sweep.
pub const MAX_ENSTROPHY_SPREAD: f64 = 2.0;
/// Relative tolerance of the discrete energy inequality.
pub const ENERGY_TOL: f64 = 1e-6;
/// Most negative log-log slope of the Gronwall ratio against `nu` still
/// read as "no growth as nu decreases".
pub const GRONWALL_SLOPE_TOL: f64 = -0.1;

#[derive(Debug, Clone, Serialize)]
pub struct SweepChecks {
    pub all_runs_ok: bool,
    /// `sup_t delta_E` decreases with `nu`.
    pub monotone: bool,
    pub slope_ok: Option<bool>,
    /// Log-log slope of the Gronwall ratio against `nu`.
    pub gronwall_slope: Option<f64>,
    pub gronwall_ok: Option<bool>,
    /// Largest over smallest enstrophy budget.
    pub enstrophy_spread: f64,
    pub enstrophy_ok: bool,
    pub energy_ok: bool,
    pub triangle_ok: bool,
}

impl SweepChecks {
    pub fn passed(&self) -> bool {
        self.all_runs_ok
            && self.monotone
            && self.slope_ok != Some(false)
            && self.gronwall_ok != Some(false)
            && self.enstrophy_ok
            && self.energy_ok
            && self.triangle_ok
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub constants: CouplingConstants,
    /// Every run satisfies `eps <= C1 nu`.
    pub coupled: bool,
    pub records: Vec<RunRecord>,
    pub fit: Option<RateFit>,
    /// Why there is no fit.
    pub fit_note: Option<String>,
    pub checks: SweepChecks,
    pub euler_seconds: f64,
}

fn run_one(cfg: &SweepConfig, shape: ObstacleShape, euler: &EulerRun, nu: f64, eps: f64, coupled: bool) -> Result<RunRecord> {
    let start = Instant::now();
    let map = ConformalMap::new(shape)?;
    let g = PolarExteriorGrid::with_spacing(map, eps, cfg.ns.r_out, cfg.ns.ds, cfg.ns.n_theta)?;
    let w0 = initial_vorticity(g, &cfg.vorticity);
    let mut opts = NsOptions::new(cfg.ns.dt_max, cfg.t_final, cfg.n_outputs);
    opts.cfl = cfg.ns.cfl;
    let run = solve_ns(&w0, nu, opts)?;
    let de = delta_e(&run, euler)?;
    let sup = de.values.iter().copied().fold(0.0, f64::max);
    let d0 = de.values[0];
    Ok(RunRecord {
        nu,
        eps,
        coupled,
        sup_delta_e: sup,
        delta_e0: d0,
        gronwall_ratio: sup * sup / (nu + d0 * d0),
        enstrophy_budget: enstrophy_budget(&run),
        re_loc: local_reynolds(euler.sup_origin_speed(), eps, nu),
        energy_residual: run.energy_excess(),
        steps: run.steps,
        seconds: start.elapsed().as_secs_f64(),
        series: run.series.clone(),
        snapshots: vec![run.velocity(0), run.velocity(run.snapshots.len() - 1)],
        delta_e: Some(de),
        error: None,
    })
}

fn checks(records: &[RunRecord], fit: Option<&RateFit>) -> SweepChecks {
    let ok: Vec<&RunRecord> = records.iter().filter(|r| r.ok()).collect();
    let mut by_nu = ok.clone();
    by_nu.sort_by(|a, b| b.nu.total_cmp(&a.nu));
    let monotone = by_nu.windows(2).all(|w| w[1].sup_delta_e < w[0].sup_delta_e);
    let gronwall = fit_rate(&ok.iter().map(|r| (r.nu, r.gronwall_ratio)).collect::<Vec<_>>()).ok();
    let budgets: Vec<f64> = ok.iter().map(|r| r.enstrophy_budget).collect();
    let (lo, hi) = budgets.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    let spread = if budgets.is_empty() { f64::NAN } else { hi / lo };
    SweepChecks {
        all_runs_ok: ok.len() == records.len() && !records.is_empty(),
        monotone,
        slope_ok: fit.map(|f| f.slope >= MIN_SLOPE),
        gronwall_slope: gronwall.map(|f| f.slope),
        gronwall_ok: gronwall.map(|f| f.slope >= GRONWALL_SLOPE_TOL),
        enstrophy_spread: spread,
        enstrophy_ok: spread < MAX_ENSTROPHY_SPREAD,
        energy_ok: ok.iter().all(|r| r.energy_residual <= ENERGY_TOL),
        triangle_ok: ok.iter().all(|r| r.delta_e.as_ref().is_some_and(|d| d.triangle_holds())),
    }
}

/// Runs every viscosity of the sweep against one shared Euler reference.
/// A failed run is recorded and the others go on.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    if cfg.nu.is_empty() {
        return Err(Error::Config("empty sweep".into()));
    }
    cfg.validate()?;
    let shape = cfg.obstacle.build()?;
    let start = Instant::now();
    let eg = CartesianGrid::new(cfg.euler.half_width, cfg.euler.n)?;
    let euler = solve_euler(
        &cfg.vorticity,
        eg,
        EulerOptions { dt: cfg.euler.dt, t_final: cfg.t_final, n_outputs: cfg.n_outputs },
    )?;
    let euler_seconds = start.elapsed().as_secs_f64();
    let constants = match cfg.coupling.c1 {
        Some(c1) => CouplingConstants { c1, k4: None, k6: None },
        None => measure_c1(&shape, &cfg.vorticity, &euler)?,
    };
    let (eps, coupled) = cfg.eps_list(constants.c1)?;
    let mut records: Vec<RunRecord> = cfg
        .nu
        .par_iter()
        .zip(eps.par_iter())
        .map(|(&nu, &e)| {
            let c = e <= constants.c1 * nu * (1.0 + 1e-12);
            run_one(cfg, shape, &euler, nu, e, c).unwrap_or_else(|err| RunRecord::failed(nu, e, c, err))
        })
        .collect();
    records.sort_by(|a, b| b.nu.total_cmp(&a.nu));
    let pairs: Vec<(f64, f64)> = records.iter().filter(|r| r.ok()).map(|r| (r.nu, r.sup_delta_e)).collect();
    let (fit, fit_note) = match fit_rate(&pairs) {
        Ok(f) => (Some(f), None),
        Err(Error::Insufficient(_)) => (None, Some("insufficient points".to_string())),
        Err(e) => (None, Some(e.to_string())),
    };
    let checks = checks(&records, fit.as_ref());
    Ok(SweepResult { constants, coupled, records, fit, fit_note, checks, euler_seconds })
}

fn fmt_opt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.8e}")
    } else {
        String::new()
    }
}

/// Writes `summary.csv`, `constants.csv`, `config.toml` and one `run_<k>`
/// directory per viscosity holding `delta_e.csv` (output times),
/// `series.csv` (every step) and `velocity_initial.csv` /
/// `velocity_final.csv` snapshots.
pub fn write_sweep(result: &SweepResult, cfg: &SweepConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let text = toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(dir.join("config.toml"), text)?;
    let slope = match (&result.fit, &result.fit_note) {
        (Some(f), _) => format!("{:.6}", f.slope),
        (None, Some(note)) => note.clone(),
        (None, None) => String::new(),
    };
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record(SUMMARY_HEADER)?;
    for r in &result.records {
        w.write_record([
            format!("{}", r.nu),
            format!("{:.8e}", r.eps),
            fmt_opt(r.sup_delta_e),
            slope.clone(),
            fmt_opt(r.enstrophy_budget),
            fmt_opt(r.re_loc),
            fmt_opt(r.energy_residual),
            fmt_opt(r.gronwall_ratio),
            r.error.clone().unwrap_or_else(|| "ok".into()),
        ])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("constants.csv"))?;
    w.write_record(["c1", "k4", "k6", "coupled"])?;
    let c = result.constants;
    w.write_record([
        format!("{:.8e}", c.c1),
        c.k4.map(|v| format!("{v:.8e}")).unwrap_or_default(),
        c.k6.map(|v| format!("{v:.8e}")).unwrap_or_default(),
        result.coupled.to_string(),
    ])?;
    w.flush()?;
    for (k, r) in result.records.iter().enumerate() {
        let Some(de) = &r.delta_e else { continue };
        let run_dir = dir.join(format!("run_{k}"));
        std::fs::create_dir_all(&run_dir)?;
        let mut w = csv::Writer::from_path(run_dir.join("delta_e.csv"))?;
        w.write_record(RUN_HEADER)?;
        for i in 0..de.times.len() {
            w.write_record([
                format!("{}", r.nu),
                format!("{:.8e}", de.times[i]),
                format!("{:.8e}", de.values[i]),
                format!("{:.8e}", de.corrector_gap[i]),
                format!("{:.8e}", de.to_corrector[i]),
            ])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(run_dir.join("series.csv"))?;
        w.write_record(SERIES_HEADER)?;
        for s in &r.series {
            w.write_record([s.t, s.energy, s.enstrophy, s.dissipated].map(|v| format!("{v:.10e}")))?;
        }
        w.flush()?;
        if let [first, last] = r.snapshots.as_slice() {
            first.write_csv(&run_dir.join("velocity_initial.csv"))?;
            last.write_csv(&run_dir.join("velocity_final.csv"))?;
        }
    }
    Ok(())
}

pub const SUMMARY_HEADER: [&str; 9] = [
    "nu",
    "eps",
    "sup_deltaE",
    "slope",
    "enstrophy_budget",
    "re_loc",
    "energy_residual",
    "gronwall_ratio",
    "status",
];
pub const RUN_HEADER: [&str; 5] = ["nu", "t", "deltaE", "corrector_gap", "to_corrector"];
pub const SERIES_HEADER: [&str; 4] = ["t", "energy", "enstrophy", "dissipated"];

/// Collects a sweep directory into `plot_rate.csv` (log-log points and
/// the fitted line) and `plot_delta_e.csv` (every run's `delta_E(t)`).
pub fn plot_data(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut rd = csv::Reader::from_path(dir.join("summary.csv"))?;
    let mut points = Vec::new();
    for row in rd.records() {
        let row = row?;
        let nu: f64 = row[0].parse().map_err(|_| Error::Config("bad nu in summary.csv".into()))?;
        if let Ok(d) = row[2].parse::<f64>() {
            points.push((nu, d));
        }
    }
    if points.is_empty() {
        return Err(Error::Insufficient(format!("no finished runs in {}", dir.display())));
    }
    let fit = fit_rate(&points).ok();
    let rate = dir.join("plot_rate.csv");
    let mut w = csv::Writer::from_path(&rate)?;
    w.write_record(["log_nu", "log_sup_deltaE", "log_fit"])?;
    for &(nu, d) in &points {
        let line = fit.map(|f| format!("{:.8e}", f.intercept + f.slope * nu.ln())).unwrap_or_default();
        w.write_record([format!("{:.8e}", nu.ln()), format!("{:.8e}", d.ln()), line])?;
    }
    w.flush()?;
    let series = dir.join("plot_delta_e.csv");
    let mut w = csv::Writer::from_path(&series)?;
    w.write_record(["nu", "t", "deltaE"])?;
    let mut k = 0;
    while let Ok(mut rd) = csv::Reader::from_path(dir.join(format!("run_{k}")).join("delta_e.csv")) {
        for row in rd.records() {
            let row = row?;
            w.write_record([&row[0], &row[1], &row[2]])?;
        }
        k += 1;
    }
    w.flush()?;
    Ok(vec![rate, series])
}
