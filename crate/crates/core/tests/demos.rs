use segtrap::demos::demo;
use segtrap::multipole::expand_along_path;
use segtrap::solver::{solve_voltages, SolveMethod, SolveOptions, VoltageSolution};

fn solve(name: &str) -> VoltageSolution {
    let d = demo(name).unwrap();
    let (path, weights) = d.path.build(&d.trap).unwrap();
    let set = expand_along_path(&d.trap, &path, d.order, d.design_points).unwrap();
    solve_voltages(&set, &path, &weights, &d.trap, &SolveOptions::default()).unwrap()
}

#[test]
fn linear_demo_is_translation_symmetric() {
    let sol = solve("linear");
    assert_eq!(sol.method, SolveMethod::ConjugateGradient);
    // moving one segment pitch (100 steps) shifts the pattern by one electrode
    for t in 50..250 {
        for n in 1..5 {
            let (a, b) = (sol.voltage(n, t), sol.voltage(n + 1, t + 100));
            assert!((a - b).abs() < 0.05, "step {t} electrode {n}: {a} vs {b}");
        }
    }
    // and the transport is mirror symmetric about the middle
    for t in 0..400 {
        let (a, b) = (sol.voltage(1, t), sol.voltage(5, 399 - t));
        assert!((a - b).abs() < 1e-6, "step {t}: {a} vs {b}");
    }
}

#[test]
fn junction_demo_loses_radial_confinement_near_center() {
    let sol = solve("junction");
    assert_eq!(sol.method, SolveMethod::ConjugateGradient);
    let steps = &sol.metrics.steps;
    // in-plane radial mode (local y)
    let radial = |t: usize| if steps[t].stable[1] { steps[t].omegas[1] } else { 0.0 };
    let arm = radial(0).min(radial(299));
    let center = (100..200).map(radial).fold(f64::INFINITY, f64::min);
    assert!(center < 0.5 * arm, "center {center} vs arm {arm}");
    let target = 2.0 * std::f64::consts::PI * 2.2e6;
    assert!((arm / target - 1.0).abs() < 0.1);
}
