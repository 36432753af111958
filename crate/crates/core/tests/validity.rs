mod common;

use common::{solved_demo, Lcg};
use nalgebra::Vector3;
use segtrap::potentials::ElectrodeModel;
use segtrap::validity::{field_magnitude_gradient, validate_solution, Thresholds, Timing};
use segtrap::waveform::TimeMap;

fn fd_gradient_of_field_norm(model: &ElectrodeModel, p: &Vector3<f64>, h: f64) -> Vector3<f64> {
    let norm = |q: Vector3<f64>| model.gradient_hessian(&q).unwrap().0.norm();
    Vector3::from_fn(|i, _| {
        let mut d = Vector3::zeros();
        d[i] = h;
        (norm(p + d) - norm(p - d)) / (2.0 * h)
    })
}

#[test]
fn field_gradient_matches_finite_differences() {
    let mut rng = Lcg(7);
    for _ in 0..200 {
        let terms: Vec<(usize, i32, f64)> = (1..=4usize)
            .flat_map(|l| (-(l as i32)..=l as i32).map(move |m| (l, m)))
            .map(|(l, m)| (l, m, rng.range(-1.0, 1.0)))
            .collect();
        let model = ElectrodeModel::multipole("phi", Vector3::zeros(), &terms);
        let p = Vector3::new(rng.range(-0.5, 0.5), rng.range(-0.5, 0.5), rng.range(-0.5, 0.5));
        let (g, h) = model.gradient_hessian(&p).unwrap();
        let closed = field_magnitude_gradient(&-g, &h).unwrap();
        let fd = fd_gradient_of_field_norm(&model, &p, 1e-5).norm();
        assert!((closed - fd).abs() <= 1e-6 * fd, "{closed} vs {fd}");
    }
}

#[test]
fn field_gradient_of_the_quadrupole_rf() {
    let demo = segtrap::demos::demo("linear").unwrap();
    let rf = &demo.trap.rf;
    for offset in [1e-6, 5e-6, 2e-5] {
        let p = Vector3::new(0.0, offset, 0.5 * offset);
        let (g, h) = rf.gradient_hessian(&p).unwrap();
        let closed = field_magnitude_gradient(&-g, &h).unwrap();
        let fd = fd_gradient_of_field_norm(rf, &p, 1e-9).norm();
        assert!((closed - fd).abs() <= 1e-6 * fd, "{closed} vs {fd}");
    }
    // no field, no gradient
    assert!(field_magnitude_gradient(&Vector3::zeros(), &nalgebra::Matrix3::identity()).is_none());
}

#[test]
fn rf_null_path_passes_every_criterion() {
    let demo = solved_demo("linear");
    let timing = Timing {
        duration: 20e-6,
        map: TimeMap::SinSquared,
    };
    let report = validate_solution(
        &demo.set,
        &demo.path,
        &demo.trap,
        &demo.solution.voltages,
        Some(&timing),
        1e-16,
        &Thresholds::default(),
    )
    .unwrap();
    assert!(report.all_pass);
    assert_eq!(report.steps.len(), demo.path.steps);
    for s in &report.steps {
        assert!(s.criteria.r_mu <= report.thresholds.null_tolerance);
        assert_eq!(s.criteria.pass, [true; 4]);
        // the rf field vanishes, so rf noise does not heat
        assert!(s.heating.iter().all(|h| *h < 1e-6), "{:?}", s.heating);
    }
}

#[test]
fn junction_center_leaves_the_rf_null() {
    let demo = solved_demo("junction");
    let report = validate_solution(
        &demo.set,
        &demo.path,
        &demo.trap,
        &demo.solution.voltages,
        Some(&Timing {
            duration: 100e-6,
            map: TimeMap::SinSquared,
        }),
        1e-16,
        &Thresholds::default(),
    )
    .unwrap();
    let r_mu = |t: usize| report.steps[t].criteria.r_mu;
    // the arms are close to a null, the crossing is not
    let arm = r_mu(0).max(r_mu(299));
    assert!(arm < 1e-6, "arm {arm}");
    let center = (100..200).map(r_mu).fold(0.0, f64::max);
    assert!(center > 10.0 * arm, "center {center} vs arm {arm}");
    // the ratios are finite wherever they are defined
    assert!(report.max_ratios.iter().all(|r| r.is_finite()));
}
