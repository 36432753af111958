//! The solved linear demo with a field interpolant, shared by the
//! dynamics tests.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::Vector3;
use segtrap::confinement::{secular_modes, SecularModes};
use segtrap::dynamics::{FieldInterpolant, SimulationConfig, SimulationResult, SimulationState, Simulator, VoltageSchedule};

use super::{solved_demo, SolvedDemo};

pub struct Fixture {
    pub demo: SolvedDemo,
    pub fields: FieldInterpolant,
}

pub fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let demo = solved_demo("linear");
        let fields = FieldInterpolant::new(&demo.set, &demo.trap, 0).unwrap();
        Fixture { demo, fields }
    })
}

/// Frozen voltages of the middle step.
pub fn static_schedule() -> VoltageSchedule {
    let sol = &fixture().demo.solution;
    let v: Vec<f64> = (0..sol.electrodes).map(|n| sol.voltage(n, sol.steps / 2)).collect();
    VoltageSchedule::constant(&v).unwrap()
}

pub fn run(schedule: &VoltageSchedule, config: &SimulationConfig, initial: &SimulationState) -> SimulationResult {
    let f = fixture();
    let sim = Simulator {
        fields: &f.fields,
        schedule,
        trap: &f.demo.trap,
        config,
    };
    sim.run(initial).unwrap()
}

/// Equilibrium of the frozen well and its modes.
pub fn static_well(schedule: &VoltageSchedule) -> (Vector3<f64>, SecularModes) {
    let f = fixture();
    let config = SimulationConfig::new(1e-9, 0.0);
    let sim = Simulator {
        fields: &f.fields,
        schedule,
        trap: &f.demo.trap,
        config: &config,
    };
    let mut eq = f.demo.path.position(0, f.demo.solution.steps / 2);
    for _ in 0..5 {
        eq = sim.equilibrium(&eq, 0.0).unwrap();
    }
    let s = f.fields.project(&eq, 0.0);
    let (_, h) = f.fields.fields_at(s).total(&schedule.voltages(0.0));
    let modes = secular_modes(&h, f.demo.trap.charge, f.demo.trap.mass).unwrap();
    (eq, modes)
}

/// Frequency from upward zero crossings of a sampled signal.
pub fn crossing_frequency(t: &[f64], x: &[f64]) -> f64 {
    let mut crossings = Vec::new();
    for k in 1..x.len() {
        if x[k - 1] < 0.0 && x[k] >= 0.0 {
            let f = x[k - 1] / (x[k - 1] - x[k]);
            crossings.push(t[k - 1] + f * (t[k] - t[k - 1]));
        }
    }
    assert!(crossings.len() > 3);
    2.0 * PI * (crossings.len() - 1) as f64 / (crossings[crossings.len() - 1] - crossings[0])
}

pub fn projected(out: &SimulationResult, eq: &Vector3<f64>, axis: &Vector3<f64>) -> (Vec<f64>, Vec<f64>) {
    out.trajectory
        .iter()
        .map(|s| (s.time, (s.positions[0] - eq).dot(axis)))
        .unzip()
}

/// Oscillation frequency of `mode` after a 1 nm kick, sampled at `dt`
/// for twenty periods.
pub fn measured_frequency(mode: usize, dt: f64) -> (f64, f64) {
    let schedule = static_schedule();
    let (eq, modes) = static_well(&schedule);
    let w = modes.omegas[mode];
    let axis = modes.axis(mode);
    let initial = SimulationState::at_rest(vec![eq + axis * 1e-9]);
    let out = run(&schedule, &SimulationConfig::new(dt, 20.0 * 2.0 * PI / w), &initial);
    let (t, x) = projected(&out, &eq, &axis);
    (crossing_frequency(&t, &x), w)
}

/// Final axial coordinate after a kick, integrated with `dt / 2^k` for
/// `k = 0..4`, ending between turning points so the phase error shows.
pub fn halving_sequence(base: f64) -> Vec<f64> {
    let schedule = static_schedule();
    let (eq, modes) = static_well(&schedule);
    let axis = modes.axis(0);
    let duration = 3.25 * 2.0 * PI / modes.omegas[0];
    (0..4)
        .map(|k| {
            let dt = base / f64::from(1 << k);
            let initial = SimulationState::at_rest(vec![eq + axis * 1e-9]);
            let out = run(&schedule, &SimulationConfig::new(dt, duration), &initial);
            (out.final_state.positions[0] - eq).dot(&axis)
        })
        .collect()
}

/// Total final quanta after a sin^2-mapped transport over the whole path
/// lasting each of `periods` axial periods, run in parallel.
pub fn transport_quanta(periods: &[f64]) -> Vec<f64> {
    let f = fixture();
    let sol = &f.demo.solution;
    let axial = f.demo.path.omega_ref[0][0];
    std::thread::scope(|scope| {
        let handles: Vec<_> = periods
            .iter()
            .map(|&p| {
                scope.spawn(move || {
                    let schedule = VoltageSchedule::from_steps(
                        sol.electrodes,
                        &sol.voltages,
                        p * 2.0 * PI / axial,
                        segtrap::waveform::TimeMap::SinSquared,
                    )
                    .unwrap();
                    let mut config = SimulationConfig::new(1.0, schedule.duration);
                    let (initial, dt) = {
                        let sim = Simulator {
                            fields: &f.fields,
                            schedule: &schedule,
                            trap: &f.demo.trap,
                            config: &config,
                        };
                        let start = sim.equilibrium(&f.demo.path.position(0, 0), 0.0).unwrap();
                        let initial = SimulationState::at_rest(vec![start]);
                        let dt = 0.5 * sim.step_limit(&initial).unwrap();
                        (initial, dt)
                    };
                    config.dt = dt;
                    config.decimation = 1000;
                    let out = run(&schedule, &config, &initial);
                    out.excitation.ions[0].quanta.iter().flatten().sum::<f64>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    })
}
