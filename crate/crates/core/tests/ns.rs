use std::f64::consts::PI;

use small_obstacle::biot_savart::VorticityProfile;
use small_obstacle::fields::{Grid, PolarExteriorGrid};
use small_obstacle::geometry::{ConformalMap, ObstacleShape};
use small_obstacle::ns::{enstrophy_series, initial_vorticity, radial_reference, solve_ns, NsOptions, NsRun};

fn disk_grid(eps: f64, r_out: f64, ds: f64, n_theta: usize) -> PolarExteriorGrid {
    let map = ConformalMap::new(ObstacleShape::unit_disk()).unwrap();
    PolarExteriorGrid::with_spacing(map, eps, r_out, ds, n_theta).unwrap()
}

fn annulus() -> VorticityProfile {
    VorticityProfile::radial_annulus(1.0, 1.0, 2.0, true).unwrap()
}

fn bump() -> VorticityProfile {
    VorticityProfile::single_bump([1.0, 0.0], 10.0, 0.5).unwrap()
}

fn annulus_run(ds: f64, t: f64) -> NsRun {
    let g = disk_grid(0.1, 8.0, ds, 16);
    let w = initial_vorticity(g, &annulus());
    solve_ns(&w, 0.01, NsOptions::new(2e-3, t, 2)).unwrap()
}

/// `(u_r, u_theta)` at node `q`.
fn polar_parts(run: &NsRun, k: usize, q: usize) -> (f64, f64) {
    let u = run.velocity(k);
    let x = Grid::Polar(run.grid).point(q);
    let r = x[0].hypot(x[1]);
    let v = u.node(q);
    ((x[0] * v[0] + x[1] * v[1]) / r, (x[0] * v[1] - x[1] * v[0]) / r)
}

#[test]
fn azimuthal_flow_matches_radial_reference() {
    let run = annulus_run(0.01, 0.5);
    let p = annulus();
    let reference = radial_reference(
        0.1,
        0.01,
        |r| {
            // enclosed vorticity over 2 pi r, by the trapezoid rule
            let n = 4000;
            let h = r / n as f64;
            let mut m = 0.0;
            for i in 0..=n {
                let s = i as f64 * h;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                m += w * h * 2.0 * PI * s * p.eval([s, 0.0]);
            }
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
    let g = run.grid;
    let (mut num, mut den, mut radial, mut umax) = (0.0, 0.0, 0.0f64, 0.0f64);
    for j in 0..g.n_rings() {
        let x = g.point_ji(j, 0);
        let r = x[0].hypot(x[1]);
        let ut_ref = reference.at(2, r);
        for i in 0..g.n_theta {
            let q = j * g.n_theta + i;
            let x = g.point_ji(j, i);
            let v = u.node(q);
            let ur = (x[0] * v[0] + x[1] * v[1]) / r;
            let ut = (x[0] * v[1] - x[1] * v[0]) / r;
            // area element r^2 ds dtheta
            let w = r * r;
            num += w * (ut - ut_ref).powi(2);
            den += w * ut_ref.powi(2);
            radial = radial.max(ur.abs());
            umax = umax.max(ut.abs());
        }
    }
    let rel = (num / den).sqrt();
    assert!(rel <= 1e-3, "relative L2 difference {rel:.3e}");
    assert!(radial <= 1e-6 * umax, "radial velocity {radial:.3e}");
    assert!(run.energy_excess() <= 1e-6);
}

#[test]
fn wall_velocity_vanishes_after_start() {
    let g = disk_grid(0.05, 8.0, 0.04, 64);
    let w = initial_vorticity(g, &bump());
    let run = solve_ns(&w, 0.02, NsOptions::new(5e-3, 0.1, 2)).unwrap();
    assert!(run.wall_speed(0) > 1e-3, "initial data slips");
    for k in 1..run.snapshots.len() {
        assert!(run.wall_speed(k) <= 1e-8);
    }
    let (ur, _) = polar_parts(&run, 1, 3 * g.n_theta + 5);
    assert!(ur.is_finite());
}

#[test]
fn energy_inequality_holds_for_offset_bump() {
    let g = disk_grid(0.05, 8.0, 0.04, 128);
    let w = initial_vorticity(g, &bump());
    let run = solve_ns(&w, 0.02, NsOptions::new(5e-3, 0.25, 5)).unwrap();
    let excess = run.energy_excess();
    assert!(excess <= 1e-6, "energy excess {excess:.3e}");
}

#[test]
fn strong_viscosity_drains_energy_monotonically() {
    let g = disk_grid(0.05, 8.0, 0.04, 64);
    let w = initial_vorticity(g, &bump());
    let run = solve_ns(&w, 10.0, NsOptions::new(2e-3, 0.05, 5)).unwrap();
    let e: Vec<f64> = run.series.iter().map(|s| s.energy).collect();
    assert!(e.windows(2).all(|p| p[1] <= p[0]));
    assert!(e[e.len() - 1] < 0.5 * e[0]);
}

#[test]
fn zero_data_stays_at_rest() {
    let g = disk_grid(0.05, 8.0, 0.05, 32);
    let w = initial_vorticity(g, &VorticityProfile::zero());
    let run = solve_ns(&w, 0.01, NsOptions::new(1e-2, 0.1, 1)).unwrap();
    assert!(enstrophy_series(&run).iter().all(|&(_, o)| o == 0.0));
    assert!(run.snapshots[1].psi.iter().all(|&v| v == 0.0));
}

#[test]
fn enstrophy_decays_for_azimuthal_flow() {
    let run = annulus_run(0.02, 0.2);
    let s = enstrophy_series(&run);
    assert!(s.iter().all(|&(_, o)| o >= 0.0));
    // past the start-up wall layer
    let late: Vec<f64> = s.iter().filter(|p| p.0 > 0.02).map(|p| p.1).collect();
    assert!(late.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-12)));
}

#[test]
fn grid_refinement_changes_norm_by_under_one_percent() {
    let norm = |ds: f64| {
        let run = annulus_run(ds, 0.2);
        run.series.last().unwrap().energy
    };
    let (a, b) = (norm(0.04), norm(0.02));
    assert!(((a - b) / b).abs() < 0.01);
}

#[test]
fn ellipse_run_is_no_slip_and_dissipative() {
    let map = ConformalMap::new(ObstacleShape::ellipse(1.0, 0.5).unwrap()).unwrap();
    let g = PolarExteriorGrid::with_spacing(map, 0.05, 8.0, 0.04, 64).unwrap();
    let w = initial_vorticity(g, &bump());
    let run = solve_ns(&w, 0.02, NsOptions::new(5e-3, 0.05, 1)).unwrap();
    assert!(run.gmres_iterations > 0);
    assert!(run.wall_speed(1) <= 1e-8);
    assert!(run.energy_excess() <= 1e-6, "excess {:.3e}", run.energy_excess());
}

#[test]
fn radial_circulation_budget_closes() {
    // slip start: the whole wall layer forms inside the run
    let (eps, nu, gamma) = (0.1, 0.05, 1.0);
    let s = radial_reference(eps, nu, |r| gamma / (2.0 * PI * r), 0.3, 2000, 1e-4, 0.2, 4).unwrap();
    for k in 1..s.times.len() {
        let change = s.outer_circulation[k] - s.outer_circulation[0];
        assert!((change - s.outer_flux[k]).abs() <= 1e-6 * gamma, "budget off by {:.3e}", change - s.outer_flux[k]);
    }
    assert!(s.outer_flux[4].abs() > 1e-2, "flux must be exercised");
}

#[test]
fn radial_reference_freezes_without_viscosity() {
    let u0 = |r: f64| if r < 1.0 { 0.0 } else { 0.3 * (r - 1.0).min(1.0) / r };
    let s = radial_reference(0.1, 1e-8, u0, 6.0, 4000, 1e-3, 0.5, 1).unwrap();
    for (i, &r) in s.r.iter().enumerate() {
        if r > 0.2 {
            assert!((s.u[1][i] - u0(r)).abs() < 1e-5);
        }
    }
}

#[test]
fn relaxed_step_stays_close_to_fine_reference() {
    // small wall cells, so the Courant limit binds
    let g = disk_grid(4e-4, 8.0, 0.03, 64);
    let w = initial_vorticity(g, &bump());
    let run = |cfl: f64, strict: bool, dt_max: f64| {
        let mut o = NsOptions::new(dt_max, 0.05, 1);
        o.cfl = cfl;
        o.strict_courant = strict;
        solve_ns(&w, 0.04, o).unwrap()
    };
    let reference = run(0.1, true, 5e-4);
    let relaxed = run(0.5, false, 5e-3);
    let strict = run(0.5, true, 5e-3);
    assert!(3 * relaxed.steps < strict.steps, "{} vs {}", relaxed.steps, strict.steps);
    let (a, b) = (relaxed.velocity(1), reference.velocity(1));
    let d: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).powi(2)).sum();
    let n: f64 = b.values.iter().map(|y| y * y).sum();
    assert!((d / n).sqrt() < 1.5e-3, "{}", (d / n).sqrt());
}
