use small_obstacle::biot_savart::{fullplane_velocity, Bump, QuadratureResolution, VorticityProfile};
use small_obstacle::corrector::{ReferenceFlow, SteadyVortex};
use small_obstacle::euler::{solve_euler, EulerOptions};
use small_obstacle::fields::CartesianGrid;

fn l2_diff(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let n: f64 = b.iter().map(|y| y * y).sum();
    (d.sqrt(), n.sqrt())
}

#[test]
fn radial_annulus_is_steady() {
    let om = VorticityProfile::radial_annulus(1.0, 1.0, 2.0, true).unwrap();
    let g = CartesianGrid::new(16.0, 512).unwrap();
    let run = solve_euler(&om, g, EulerOptions { dt: 0.02, t_final: 1.0, n_outputs: 4 }).unwrap();
    let u0 = run.velocity_grid(0);
    let u1 = run.velocity_grid(4);
    let (d, n) = l2_diff(&u1.values, &u0.values);
    assert!(d <= 1e-3 * n, "{}", d / n);
    for t in [0.0, 0.5, 1.0] {
        let u = run.velocity_at_origin(t).unwrap();
        assert!(u[0].hypot(u[1]) < 1e-6 * u0.max_speed(), "{u:?}");
    }
    let d0 = run.diagnostics[0];
    for d in &run.diagnostics {
        assert!((d.mass - d0.mass).abs() <= 1e-6 * d0.mass.abs());
        assert!(d.max_omega <= d0.max_omega * (1.0 + 1e-3));
        assert!((d.energy - d0.energy).abs() <= 1e-3 * d0.energy);
    }
}

#[test]
fn free_space_velocity_matches_closed_form() {
    let om = VorticityProfile::single_bump([1.0, 0.0], 10.0, 0.5).unwrap();
    let g = CartesianGrid::new(12.0, 512).unwrap();
    let run = solve_euler(&om, g, EulerOptions { dt: 0.01, t_final: 0.0, n_outputs: 1 }).unwrap();
    let vg = run.velocity_grid(0);
    let rule = om.quadrature(QuadratureResolution::default());
    for x in [[0.0, 0.0], [1.2, 0.1], [3.0, -2.0], [-5.0, 4.0]] {
        let a = vg.at(x).unwrap();
        let b = fullplane_velocity(&rule, x);
        assert!((a[0] - b[0]).abs() + (a[1] - b[1]).abs() < 2e-3, "{x:?} {a:?} {b:?}");
    }
}

#[test]
fn steady_bump_matches_closed_form_flow() {
    let om = VorticityProfile::single_bump([1.0, 0.0], 10.0, 0.5).unwrap();
    let g = CartesianGrid::new(12.0, 512).unwrap();
    let run = solve_euler(&om, g, EulerOptions { dt: 0.01, t_final: 0.5, n_outputs: 2 }).unwrap();
    let exact = SteadyVortex::new(&om).unwrap();
    for k in 0..3 {
        let f = run.flow(k);
        for x in [[0.02, 0.01], [-0.05, 0.03], [0.1, -0.1]] {
            let (a, b) = (f.velocity(x), exact.velocity(x));
            assert!((a[0] - b[0]).abs() + (a[1] - b[1]).abs() < 1e-3 * exact.velocity([0.0, 0.0])[1].abs());
            assert!((f.stream(x) - exact.stream(x)).abs() < 1e-4, "{k} {} {}", f.stream(x), exact.stream(x));
            assert!((f.pressure(x) - exact.pressure(x)).abs() < 1e-4, "{} {}", f.pressure(x), exact.pressure(x));
        }
    }
    // spectral box pressure against the core formula
    let p = run.pressure_field(2);
    let i = g.n / 2 + 2;
    let idx = (g.n / 2) * g.n + i;
    let x = g.point(idx);
    assert!((p.values[idx] - run.flow(2).pressure(x)).abs() < 1e-3);
    // psi field pinned at the origin and consistent with u
    let psi = run.stream_field(2);
    assert!(psi.values[(g.n / 2) * g.n + g.n / 2].abs() < 1e-15);
}

#[test]
fn vortex_pair_translates() {
    let (d, rho, a) = (2.0, 0.3, 20.0);
    let om = VorticityProfile::bumps(vec![
        Bump { center: [-d / 2.0, 0.0], amplitude: a, radius: rho },
        Bump { center: [d / 2.0, 0.0], amplitude: -a, radius: rho },
    ])
    .unwrap();
    let g = CartesianGrid::new(8.0 * (d / 2.0 + rho), 384).unwrap();
    let t_final = 1.0;
    let run = solve_euler(&om, g, EulerOptions { dt: 0.02, t_final, n_outputs: 1 }).unwrap();
    let centroid = |w: &[f64]| {
        let (mut s, mut m) = (0.0, 0.0);
        let wmax = w.iter().fold(0.0f64, |a, b| a.max(*b));
        for (k, v) in w.iter().enumerate() {
            if *v > 1e-3 * wmax && g.point(k)[0] < 0.0 {
                s += v * g.point(k)[1];
                m += v;
            }
        }
        s / m
    };
    let speed = (centroid(&run.snapshots[1].omega) - centroid(&run.snapshots[0].omega)) / t_final;
    let gamma = om.mass().abs() + a * std::f64::consts::PI * rho * rho / 7.0;
    let expected = gamma / (2.0 * std::f64::consts::PI * d);
    assert!((speed.abs() - expected).abs() <= 0.1 * expected, "{speed} vs {expected}");
    // the pair's velocity at the midpoint
    let u = run.velocity_at_origin(0.0).unwrap();
    assert!((u[1].abs() - 2.0 * gamma / (2.0 * std::f64::consts::PI * d / 2.0)).abs() < 1e-3);
}
