#![allow(dead_code)]

pub mod linear;

use nalgebra::{Matrix3, Vector3};
use segtrap::multipole::{ExpansionSet, LocalFrame};
use segtrap::path::{OmegaSchedule, PenaltyWeights, ShuttlingPath};
use segtrap::potentials::{ElectrodeModel, TrapModel};

/// Small deterministic generator for reproducible random instances.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((self.0 >> 11) as f64) / ((1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next()
    }
}

/// Trap with `n` placeholder dc electrodes and unit constants, so that
/// `alpha_rf = 1/2`.
pub fn unit_trap(n: usize) -> TrapModel {
    TrapModel {
        dc: (0..n)
            .map(|k| ElectrodeModel::multipole(format!("dc{k}"), Vector3::zeros(), &[(2, 0, 1.0)]))
            .collect(),
        rf: ElectrodeModel::multipole("rf", Vector3::zeros(), &[(2, 2, 1.0)]),
        rf_amplitude: 1.0,
        rf_frequency: 1.0,
        charge: 1.0,
        mass: 1.0,
        length_scale: 1.0,
        electrode_locations: (0..n).map(|k| Vector3::new(k as f64, 0.0, 0.0)).collect(),
    }
}

pub fn straight_path(wells: usize, steps: usize, omega: [f64; 3]) -> ShuttlingPath {
    let frames = (0..wells * steps)
        .map(|i| LocalFrame::axis_aligned(Vector3::new(i as f64, 0.0, 0.0), 0.1))
        .collect();
    ShuttlingPath::from_frames(wells, steps, frames, &OmegaSchedule::Constant(omega), 1.0, 1.0).unwrap()
}

/// Expansion set of order 3 with random coefficients.
pub fn random_set(rng: &mut Lcg, wells: usize, steps: usize, n: usize) -> ExpansionSet {
    let frames = (0..wells * steps)
        .map(|i| LocalFrame::axis_aligned(Vector3::new(i as f64, 0.0, 0.0), 0.1))
        .collect();
    let coeffs = (0..wells * steps * (n + 1) * 16).map(|_| rng.range(-1.0, 1.0)).collect();
    ExpansionSet::from_parts(3, 25, wells, steps, n, frames, coeffs).unwrap()
}

pub fn random_weights(rng: &mut Lcg, wells: usize, steps: usize, n: usize) -> PenaltyWeights {
    let mut w = PenaltyWeights::zeros(wells, steps, n);
    for p in &mut w.position {
        *p = [rng.range(0.1, 2.0), rng.range(0.1, 2.0), rng.range(0.1, 2.0)];
    }
    for c in &mut w.confinement {
        *c = Matrix3::from_fn(|_, _| rng.range(0.1, 2.0));
    }
    for v in &mut w.voltage {
        *v = rng.range(0.01, 1.0);
    }
    for f in &mut w.fixed {
        *f = if rng.next() < 0.5 { rng.range(0.1, 3.0) } else { 0.0 };
    }
    for v in &mut w.fixed_voltages {
        *v = rng.range(-2.0, 2.0);
    }
    w.smoothness = rng.range(0.1, 2.0);
    w
}

pub fn random_targets(rng: &mut Lcg, path: &mut ShuttlingPath) {
    for t in &mut path.targets {
        let m = Matrix3::from_fn(|_, _| rng.range(-1.0, 1.0));
        *t = m + m.transpose();
    }
}

/// A named demo expanded and solved with default solver options.
pub struct SolvedDemo {
    pub trap: TrapModel,
    pub path: ShuttlingPath,
    pub set: ExpansionSet,
    pub solution: segtrap::solver::VoltageSolution,
}

pub fn solved_demo(name: &str) -> SolvedDemo {
    let d = segtrap::demos::demo(name).unwrap();
    let (path, weights) = d.path.build(&d.trap).unwrap();
    let set = segtrap::multipole::expand_along_path(&d.trap, &path, d.order, d.design_points).unwrap();
    let solution =
        segtrap::solver::solve_voltages(&set, &path, &weights, &d.trap, &Default::default()).unwrap();
    SolvedDemo {
        trap: d.trap,
        path,
        set,
        solution,
    }
}
