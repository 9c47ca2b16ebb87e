use small_obstacle::biot_savart::VorticityProfile;
use small_obstacle::corrector::{
    corrector_velocity_at, eps0, measure_lemma_constants, Cutoff, LemmaResolution, ReferenceFlow, SteadyVortex,
    EXPECTED_SLOPES,
};
use small_obstacle::geometry::ObstacleShape;

const EPS: [f64; 4] = [0.04, 0.02, 0.01, 0.005];

fn bump_flow(scale: f64) -> (SteadyVortex, VorticityProfile) {
    let om = VorticityProfile::single_bump([1.0, 0.0], 10.0 * scale, 0.5).unwrap();
    (SteadyVortex::new(&om).unwrap(), om)
}

#[test]
fn offset_vortex_slopes() {
    let shape = ObstacleShape::unit_disk();
    let (f, om) = bump_flow(1.0);
    let c = Cutoff::new(&shape);
    let k = measure_lemma_constants(&[&f], &c, &EPS, eps0(&shape, &om), LemmaResolution::default()).unwrap();
    for (i, (s, e)) in k.slopes.iter().zip(EXPECTED_SLOPES).enumerate() {
        let s = s.unwrap().slope;
        assert!((s - e).abs() <= 0.2, "item {} slope {s}", i + 1);
    }
    assert!((k.slopes[3].unwrap().slope + 1.0).abs() <= 0.15);
    let item1: Vec<f64> = k.rows.iter().map(|r| r.items[0]).collect();
    let (lo, hi) = item1.iter().fold((f64::MAX, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(hi < 2.0 * lo);
    assert!(k.k4_tilde.unwrap() > 0.0);
    assert!(k.k.iter().all(|v| *v > 0.0 && v.is_finite()));
}

#[test]
fn k4_tilde_is_homogeneous() {
    let shape = ObstacleShape::unit_disk();
    let c = Cutoff::new(&shape);
    let (f1, om) = bump_flow(1.0);
    let (f2, _) = bump_flow(2.0);
    let e0 = eps0(&shape, &om);
    let a = measure_lemma_constants(&[&f1], &c, &EPS, e0, LemmaResolution::default()).unwrap();
    let b = measure_lemma_constants(&[&f2], &c, &EPS, e0, LemmaResolution::default()).unwrap();
    let (a, b) = (a.k4_tilde.unwrap(), b.k4_tilde.unwrap());
    assert!((a - b).abs() <= 1e-10 * a);
}

#[test]
fn corrector_regions() {
    let shape = ObstacleShape::unit_disk();
    let c = Cutoff::new(&shape);
    let (f, _) = bump_flow(1.0);
    let eps = 0.01;
    let x = [0.0, 2.0 * 3.0 * eps];
    let (ue, u) = (corrector_velocity_at(&f, &c, eps, x), f.velocity(x));
    assert!((ue[0] - u[0]).abs() < 1e-14 && (ue[1] - u[1]).abs() < 1e-14);
    assert_eq!(corrector_velocity_at(&f, &c, eps, [1.9 * eps, 0.0]), [0.0, 0.0]);
    // divergence of u^eps inside the transition annulus
    let x = [1.7 * eps, 1.2 * eps];
    let h = 1e-7;
    let d0 = corrector_velocity_at(&f, &c, eps, [x[0] + h, x[1]])[0] - corrector_velocity_at(&f, &c, eps, [x[0] - h, x[1]])[0];
    let d1 = corrector_velocity_at(&f, &c, eps, [x[0], x[1] + h])[1] - corrector_velocity_at(&f, &c, eps, [x[0], x[1] - h])[1];
    let scale = c.value(eps, x).grad[0].abs() * f.stream(x).abs() + 1.0;
    assert!(((d0 + d1) / (2.0 * h)).abs() < 1e-5 * scale);
}
