//! One pass/fail line per acceptance criterion.

use std::f64::consts::PI;
use std::time::Instant;

use small_obstacle::biot_savart::{
    harmonic_field, initial_data_rate_study, ExteriorBiotSavart, PlaneQuadrature, QuadratureResolution,
    VorticityProfile,
};
use small_obstacle::config::SweepConfig;
use small_obstacle::corrector::{eps0, measure_lemma_constants, Cutoff, LemmaResolution, SteadyVortex, EXPECTED_SLOPES};
use small_obstacle::euler::{solve_euler, EulerOptions};
use small_obstacle::fields::{circulation, CartesianGrid, PolarExteriorGrid, ScaledObstacle};
use small_obstacle::geometry::{ConformalMap, ObstacleShape};
use small_obstacle::harness::{fit_rate, run_sweep, SweepResult};
use small_obstacle::ns::{initial_vorticity, radial_reference, solve_ns, NsOptions};
use small_obstacle::poincare::{k6, poincare_constant, PoincareResolution};

const EPS: [f64; 4] = [0.04, 0.02, 0.01, 0.005];

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: String) -> Outcome {
    Outcome { ok, detail }
}

fn ellipse() -> ConformalMap {
    ConformalMap::new(ObstacleShape::ellipse(1.5, 0.5).unwrap()).unwrap()
}

fn disk() -> ConformalMap {
    ConformalMap::new(ObstacleShape::unit_disk()).unwrap()
}

fn bump() -> VorticityProfile {
    VorticityProfile::single_bump([1.0, 0.0], 10.0, 0.5).unwrap()
}

fn annulus() -> VorticityProfile {
    VorticityProfile::radial_annulus(1.0, 1.0, 2.0, true).unwrap()
}

fn rate(extra: f64) -> (Vec<(f64, f64)>, Option<f64>) {
    let s = initial_data_rate_study(
        &ellipse(),
        &bump(),
        &EPS,
        extra,
        QuadratureResolution::default(),
        PlaneQuadrature::default(),
    )
    .unwrap();
    (s.rows, s.fit.map(|f| f.slope))
}

fn initial_data_rate() -> Outcome {
    let (rows, slope) = rate(0.0);
    let slope = slope.unwrap_or(f64::NAN);
    outcome(slope >= 0.9, format!("slope {slope:.3} >= 0.9, errors {:.3e}..{:.3e}", rows[0].1, rows[3].1))
}

fn exact_cancellation() -> Outcome {
    let s = initial_data_rate_study(
        &disk(),
        &annulus(),
        &EPS,
        0.0,
        QuadratureResolution::default(),
        PlaneQuadrature::default(),
    )
    .unwrap();
    let worst = s.rows.iter().map(|r| r.1).fold(0.0, f64::max);
    outcome(worst <= 1e-4, format!("max error {worst:.3e} <= 1e-4"))
}

fn plateau() -> Outcome {
    let (rows, _) = rate(1.0);
    let ratio = rows[3].1 / rows[0].1;
    outcome(ratio >= 0.5, format!("final/first {ratio:.3} >= 0.5"))
}

fn lemma_slopes() -> Outcome {
    let shape = ObstacleShape::unit_disk();
    let om = bump();
    let f = SteadyVortex::new(&om).unwrap();
    let k = measure_lemma_constants(&[&f], &Cutoff::new(&shape), &EPS, eps0(&shape, &om), LemmaResolution::default())
        .unwrap();
    let mut ok = true;
    let mut s = Vec::new();
    for (i, fit) in k.slopes.iter().enumerate() {
        let v = fit.map(|f| f.slope).unwrap_or(f64::NAN);
        ok &= (v - EXPECTED_SLOPES[i]).abs() <= 0.2;
        s.push(format!("{v:.3}"));
    }
    outcome(ok, format!("slopes [{}] vs {EXPECTED_SLOPES:?} +- 0.2", s.join(", ")))
}

/// `W'(3)` for `-(r W')' = mu r W`, `W(1) = 0`, `W'(1) = 1`, by RK4.
fn shoot(mu: f64) -> f64 {
    let n = 4000;
    let h = 2.0 / n as f64;
    let f = |r: f64, y: [f64; 2]| [y[1], -y[1] / r - mu * y[0]];
    let mut y = [0.0, 1.0];
    let mut r = 1.0;
    for _ in 0..n {
        let k1 = f(r, y);
        let k2 = f(r + h / 2.0, [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]]);
        let k3 = f(r + h / 2.0, [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]]);
        let k4 = f(r + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
        for c in 0..2 {
            y[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        r += h;
    }
    y[1]
}

fn shooting_k6() -> f64 {
    let (mut lo, mut hi) = (1e-3, 1e-3);
    while shoot(hi).signum() == shoot(lo).signum() {
        lo = hi;
        hi += 0.01;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if shoot(mid).signum() == shoot(lo).signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    1.0 / (0.5 * (lo + hi)).sqrt()
}

fn poincare_scaling() -> Outcome {
    let shape = ObstacleShape::unit_disk();
    let res = PoincareResolution::new(24, 96).unwrap();
    let rows: Vec<(f64, f64)> = EPS.iter().map(|&e| (e, poincare_constant(&shape, e, res).unwrap().c)).collect();
    let slope = fit_rate(&rows).unwrap().slope;
    let oracle = shooting_k6();
    let est = k6(&shape).unwrap().k6;
    let rel = (est - oracle).abs() / oracle;
    outcome(
        (slope - 1.0).abs() <= 0.01 && rel <= 1e-3,
        format!("slope {slope:.5}, K6 {est:.6} vs shooting {oracle:.6} (rel {rel:.1e})"),
    )
}

fn main_rate(r: &SweepResult) -> Outcome {
    let c = &r.checks;
    let sups: Vec<String> = r.records.iter().map(|x| format!("{:.4e}", x.sup_delta_e)).collect();
    let slope = r.fit.map(|f| f.slope).unwrap_or(f64::NAN);
    let ok = c.all_runs_ok && c.monotone && c.slope_ok == Some(true) && c.gronwall_ok == Some(true) && r.coupled;
    outcome(
        ok,
        format!(
            "C1 {:.4e}, sup deltaE [{}], slope {slope:.3} >= 0.4, monotone {}, Gronwall slope {:.3}",
            r.constants.c1,
            sups.join(", "),
            c.monotone,
            c.gronwall_slope.unwrap_or(f64::NAN)
        ),
    )
}

fn enstrophy(r: &SweepResult) -> Outcome {
    let b: Vec<String> = r.records.iter().map(|x| format!("{:.4e}", x.enstrophy_budget)).collect();
    outcome(
        r.checks.enstrophy_ok,
        format!("budgets [{}], spread x{:.3} < 2", b.join(", "), r.checks.enstrophy_spread),
    )
}

fn solver_oracles(sweep: &SweepResult) -> Outcome {
    // viscous azimuthal flow against the radial reference
    let map = disk();
    let g = PolarExteriorGrid::with_spacing(map, 0.1, 8.0, 0.01, 16).unwrap();
    let p = annulus();
    let run = solve_ns(&initial_vorticity(g, &p), 0.01, NsOptions::new(2e-3, 0.5, 2)).unwrap();
    let reference = radial_reference(
        0.1,
        0.01,
        |r| {
            let n = 4000;
            let h = r / n as f64;
            let m: f64 = (0..=n)
                .map(|i| {
                    let s = i as f64 * h;
                    let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                    w * h * 2.0 * PI * s * p.eval([s, 0.0])
                })
                .sum();
            m / (2.0 * PI * r)
        },
        8.0,
        16000,
        2.5e-4,
        0.5,
        2,
    )
    .unwrap();
    let u = run.velocity(2);
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..g.n_rings() {
        for i in 0..g.n_theta {
            let x = g.point_ji(j, i);
            let r = x[0].hypot(x[1]);
            let v = u.node(j * g.n_theta + i);
            let ut = (x[0] * v[1] - x[1] * v[0]) / r;
            let ur = reference.at(2, r);
            num += r * r * (ut - ur).powi(2);
            den += r * r * ur * ur;
        }
    }
    let ns_err = (num / den).sqrt();

    // radial Euler data stays put
    let eg = CartesianGrid::new(16.0, 512).unwrap();
    let e = solve_euler(&p, eg, EulerOptions { dt: 0.02, t_final: 0.5, n_outputs: 1 }).unwrap();
    let (a, b) = (e.velocity_grid(0), e.velocity_grid(1));
    let d: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).powi(2)).sum();
    let n: f64 = a.values.iter().map(|x| x * x).sum();
    let euler_err = (d / n).sqrt();

    // energy inequality over every step of every run
    let mut energy = run.energy_excess();
    for r in &sweep.records {
        energy = energy.max(r.energy_residual);
    }
    outcome(
        ns_err <= 1e-3 && euler_err <= 1e-3 && energy <= 1e-6,
        format!("NS vs radial {ns_err:.2e}, Euler drift {euler_err:.2e}, energy excess {energy:.2e}"),
    )
}

fn circulations() -> Outcome {
    let eps = 0.05;
    let mut worst_h: f64 = 0.0;
    let mut worst_t: f64 = 0.0;
    for map in [disk(), ellipse()] {
        let obs = Some(ScaledObstacle { shape: map.shape, eps });
        let h = circulation(|x| Some(harmonic_field(&map, eps, x)), 0.3, 1024, obs).unwrap();
        let ext = ExteriorBiotSavart::new(map, eps, &bump(), QuadratureResolution::default()).unwrap();
        let t = circulation(|x| Some(ext.initial_velocity(x, 0.0)), 0.3, 1024, obs).unwrap();
        worst_h = worst_h.max((h - 1.0).abs());
        worst_t = worst_t.max(t.abs());
    }
    outcome(
        worst_h <= 1e-6 && worst_t <= 1e-6,
        format!("|circ(H) - 1| {worst_h:.1e}, |circ(theta)| {worst_t:.1e}"),
    )
}

fn report(n: usize, name: &str, limit_s: f64, seconds: f64, o: Outcome) -> bool {
    let ok = o.ok && seconds < limit_s;
    println!(
        "criterion {n} {}: {name}: {} ({seconds:.1} s, limit {limit_s:.0} s)",
        if ok { "PASS" } else { "FAIL" },
        o.detail
    );
    ok
}

fn timed<F: FnOnce() -> Outcome>(f: F) -> (f64, Outcome) {
    let t = Instant::now();
    let o = f();
    (t.elapsed().as_secs_f64(), o)
}

fn main() {
    let mut all = true;
    let (s, o) = timed(initial_data_rate);
    all &= report(1, "initial-data rate", 300.0, s, o);
    let (s, o) = timed(exact_cancellation);
    all &= report(2, "exact cancellation", 60.0, s, o);
    let (s, o) = timed(plateau);
    all &= report(3, "harmonic plateau", 300.0, s, o);
    let (s, o) = timed(lemma_slopes);
    all &= report(4, "corrector slopes", 300.0, s, o);
    let (s, o) = timed(poincare_scaling);
    all &= report(5, "Poincare scaling", 300.0, s, o);

    let t = Instant::now();
    let sweep = run_sweep(&SweepConfig::desk_scale()).expect("sweep runs");
    let sweep_s = t.elapsed().as_secs_f64();
    all &= report(6, "main rate", 2700.0, sweep_s, main_rate(&sweep));
    all &= report(7, "enstrophy budget", 2700.0, sweep_s, enstrophy(&sweep));

    let (s, o) = timed(|| solver_oracles(&sweep));
    all &= report(8, "solver oracles", 600.0, s, o);
    let (s, o) = timed(circulations);
    all &= report(9, "circulations", 60.0, s, o);
    if !all {
        std::process::exit(1);
    }
}
