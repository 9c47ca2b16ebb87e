//! Subcommands of the command-line tool. Each one writes CSV into a
//! directory and reports whether its checks passed.

use std::path::Path;

use crate::biot_savart::initial_data_rate_study;
use crate::config::{InitialDataConfig, LemmaConfig, ShapeConfig, SweepConfig};
use crate::corrector::{eps0, measure_lemma_constants, Cutoff, ReferenceFlow, SteadyVortex, EXPECTED_SLOPES};
use crate::euler::{solve_euler, EulerFlow, EulerOptions};
use crate::fields::CartesianGrid;
use crate::geometry::ConformalMap;
use crate::harness::{fit_rate, run_sweep, write_sweep, SweepResult};
use crate::poincare::{k6_with, poincare_constant, PoincareResolution};
use crate::{Error, Result};

/// Outcome of one subcommand.
#[derive(Debug, Clone)]
pub struct Report {
    pub passed: bool,
    pub lines: Vec<String>,
}

impl Report {
    fn new() -> Self {
        Report { passed: true, lines: Vec::new() }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.passed &= ok;
        self.lines.push(format!("[{}] {line}", if ok { "pass" } else { "FAIL" }));
    }

    fn note(&mut self, line: String) {
        self.lines.push(line);
    }
}

/// Slope the initial-data error must reach.
pub const INITIAL_DATA_MIN_SLOPE: f64 = 0.9;
/// Error treated as exact cancellation in the radial case.
pub const EXACT_TOL: f64 = 1e-4;
/// Final over first error that counts as a plateau.
pub const PLATEAU_RATIO: f64 = 0.5;
/// Allowed distance of a lemma slope from its expected value.
pub const LEMMA_SLOPE_TOL: f64 = 0.2;
pub const POINCARE_SLOPE_TOL: f64 = 0.01;
pub const POINCARE_SPREAD: f64 = 0.02;

pub fn sweep(cfg: &SweepConfig, dir: &Path) -> Result<(SweepResult, Report)> {
    let result = run_sweep(cfg)?;
    write_sweep(&result, cfg, dir)?;
    let mut rep = Report::new();
    rep.note(format!("C1 = {:.6e} (K4 = {:?}, K6 = {:?})", result.constants.c1, result.constants.k4, result.constants.k6));
    if !result.coupled {
        rep.note("eps overridden: outside the eps <= C1 nu regime".into());
    }
    for r in &result.records {
        match &r.error {
            None => rep.note(format!(
                "nu = {} eps = {:.4e}: sup deltaE = {:.5e}, budget = {:.5e}, Re_loc = {:.3e}, steps = {}, {:.1} s",
                r.nu, r.eps, r.sup_delta_e, r.enstrophy_budget, r.re_loc, r.steps, r.seconds
            )),
            Some(e) => rep.note(format!("nu = {}: failed: {e}", r.nu)),
        }
    }
    let c = &result.checks;
    rep.check(c.all_runs_ok, "every run finished".into());
    rep.check(c.monotone, "sup deltaE decreases with nu".into());
    match (&result.fit, &result.fit_note) {
        (Some(f), _) => rep.check(
            c.slope_ok == Some(true),
            format!("slope {:.3} +- {:.3} >= {}", f.slope, f.half_width, crate::harness::MIN_SLOPE),
        ),
        (None, note) => rep.note(format!("slope: {}", note.as_deref().unwrap_or("none"))),
    }
    if let Some(g) = c.gronwall_slope {
        rep.check(c.gronwall_ok == Some(true), format!("Gronwall ratio log-log slope in nu {g:.3}"));
    }
    rep.check(c.enstrophy_ok, format!("enstrophy budgets within x{:.3}", c.enstrophy_spread));
    rep.check(c.energy_ok, "energy inequality".into());
    rep.check(c.triangle_ok, "triangle consistency with the corrector".into());
    Ok((result, rep))
}

pub fn initial_data_rate(cfg: &InitialDataConfig, dir: &Path) -> Result<Report> {
    cfg.validate()?;
    let map = ConformalMap::new(cfg.obstacle.build()?)?;
    let study = initial_data_rate_study(
        &map,
        &cfg.vorticity,
        &cfg.eps,
        cfg.extra_circulation,
        cfg.quadrature.unwrap_or_default(),
        cfg.plane.unwrap_or_default(),
    )?;
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("initial_data_rate.csv"))?;
    w.write_record(["eps", "error"])?;
    for (e, v) in &study.rows {
        w.write_record([format!("{e}"), format!("{v:.10e}")])?;
    }
    w.flush()?;
    let mut rep = Report::new();
    let mut sorted = study.rows.clone();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (first, last) = (sorted[0].1, sorted[sorted.len() - 1].1);
    let worst = sorted.iter().map(|r| r.1).fold(0.0, f64::max);
    if cfg.extra_circulation != 0.0 {
        rep.check(
            last / first >= PLATEAU_RATIO,
            format!("error plateaus: final/first = {:.3}", last / first),
        );
    } else if cfg.vorticity.is_radial() && cfg.obstacle == ShapeConfig::Disk {
        rep.check(worst <= EXACT_TOL, format!("exact cancellation: max error {worst:.3e}"));
    } else {
        match study.fit {
            Some(f) => rep.check(
                f.slope >= INITIAL_DATA_MIN_SLOPE,
                format!("slope {:.3} +- {:.3} >= {INITIAL_DATA_MIN_SLOPE}", f.slope, f.half_width),
            ),
            None => rep.check(true, "errors below the quadrature floor".into()),
        }
    }
    Ok(rep)
}

pub fn lemma_constants(cfg: &LemmaConfig, dir: &Path) -> Result<Report> {
    cfg.validate()?;
    let shape = cfg.obstacle.build()?;
    let e0 = eps0(&shape, &cfg.vorticity);
    let cut = Cutoff::new(&shape);
    let res = cfg.resolution.unwrap_or_default();
    let k = match &cfg.euler {
        None => {
            let v = SteadyVortex::new(&cfg.vorticity)?;
            measure_lemma_constants(&[&v], &cut, &cfg.eps, e0, res)?
        }
        Some(s) => {
            let g = CartesianGrid::new(s.grid.half_width, s.grid.n)?;
            let n = s.n_samples.saturating_sub(1).max(1);
            let run = solve_euler(&cfg.vorticity, g, EulerOptions { dt: s.grid.dt, t_final: s.t_final, n_outputs: n })?;
            let flows: Vec<EulerFlow> = (0..run.snapshots.len()).map(|k| run.flow(k)).collect();
            let refs: Vec<&dyn ReferenceFlow> = flows.iter().map(|f| f as &dyn ReferenceFlow).collect();
            measure_lemma_constants(&refs, &cut, &cfg.eps, e0, res)?
        }
    };
    let k6 = crate::poincare::k6(&shape)?;
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("lemma_constants.csv"))?;
    w.write_record(["eps", "item1", "item2", "item3", "item4", "item5", "k4_pointwise", "k0"])?;
    for r in &k.rows {
        let mut row = vec![format!("{}", r.eps)];
        row.extend(r.items.iter().map(|v| format!("{v:.10e}")));
        row.push(format!("{:.10e}", r.k4_pointwise));
        row.push(format!("{:.10e}", r.k0));
        w.write_record(row)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("lemma_summary.csv"))?;
    w.write_record(["name", "value"])?;
    let mut put = |n: &str, v: Option<f64>| w.write_record([n.to_string(), v.map(|v| format!("{v:.10e}")).unwrap_or_default()]);
    for i in 0..5 {
        put(&format!("K{}", i + 1), Some(k.k[i]))?;
    }
    put("K0", Some(k.k0))?;
    put("K4_operational", Some(k.k4))?;
    put("K4_tilde", k.k4_tilde)?;
    put("K5_tilde", Some(k.k5_tilde))?;
    put("sup_u0", Some(k.sup_u0))?;
    put("K6", Some(k6.k6))?;
    put("eps0", Some(e0))?;
    for (i, s) in k.slopes.iter().enumerate() {
        put(&format!("slope{}", i + 1), s.map(|f| f.slope))?;
    }
    w.flush()?;
    let mut rep = Report::new();
    for (i, s) in k.slopes.iter().enumerate() {
        match s {
            Some(f) => rep.check(
                (f.slope - EXPECTED_SLOPES[i]).abs() <= LEMMA_SLOPE_TOL,
                format!("item {} slope {:.3}, expected {}", i + 1, f.slope, EXPECTED_SLOPES[i]),
            ),
            None => rep.note(format!("item {} vanishes identically", i + 1)),
        }
    }
    rep.note(format!("K4 = {:.6e}, K6 = {:.6e}", k.k4, k6.k6));
    Ok(rep)
}

/// Parses `16x64,32x128`.
pub fn parse_resolutions(s: &str) -> Result<Vec<PoincareResolution>> {
    s.split(',')
        .map(|p| {
            let (a, b) = p
                .trim()
                .split_once('x')
                .ok_or_else(|| Error::Config(format!("resolution `{p}` is not of the form NxM")))?;
            let a = a.parse().map_err(|_| Error::Config(format!("bad radial count in `{p}`")))?;
            let b = b.parse().map_err(|_| Error::Config(format!("bad angular count in `{p}`")))?;
            PoincareResolution::new(a, b)
        })
        .collect()
}

/// `eps` values of the Poincare scaling check.
pub const POINCARE_EPS: [f64; 4] = [1.0, 0.5, 0.25, 0.125];

pub fn poincare(shape: ShapeConfig, resolutions: &[PoincareResolution], dir: &Path) -> Result<Report> {
    if resolutions.is_empty() {
        return Err(Error::Config("no resolutions given".into()));
    }
    let shape = shape.build()?;
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("poincare.csv"))?;
    w.write_record(["n_radial", "n_theta", "eps", "mu1", "c", "k6"])?;
    let mut rep = Report::new();
    let mut k6s = Vec::new();
    for &res in resolutions {
        let mut rows = Vec::new();
        for &eps in &POINCARE_EPS {
            let p = poincare_constant(&shape, eps, res)?;
            w.write_record([
                res.n_radial.to_string(),
                res.n_theta.to_string(),
                format!("{eps}"),
                format!("{:.12e}", p.mu1),
                format!("{:.12e}", p.c),
                format!("{:.12e}", p.k6),
            ])?;
            rows.push((eps, p.c));
        }
        let f = fit_rate(&rows)?;
        rep.check(
            (f.slope - 1.0).abs() <= POINCARE_SLOPE_TOL,
            format!("{}x{}: c(eps) slope {:.5}", res.n_radial, res.n_theta, f.slope),
        );
        k6s.push(rows[0].1);
    }
    w.flush()?;
    if k6s.len() >= 2 {
        let (a, b) = (k6s[k6s.len() - 2], k6s[k6s.len() - 1]);
        rep.check((a - b).abs() / b <= POINCARE_SPREAD, format!("two finest K6 {a:.6} and {b:.6}"));
    }
    let best = k6_with(&shape, resolutions[resolutions.len() - 1])?;
    rep.note(format!("K6 extrapolated = {:.6}", best.k6));
    Ok(rep)
}

pub fn plot_data(dir: &Path) -> Result<Report> {
    let files = crate::harness::plot_data(dir)?;
    let mut rep = Report::new();
    for f in files {
        rep.note(format!("wrote {}", f.display()));
    }
    Ok(rep)
}
