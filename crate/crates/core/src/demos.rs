//! Built-in analytic trap geometries used by the demo scenarios.
//!
//! The linear trap has segmented dc electrode pairs in the planes
//! `y = +-d` around an ideal rf quadrupole. The junction is a surface
//! electrode X-junction with rf rails in the plane `z = 0`.

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::consts::{CA40_MASS, ELEMENTARY_CHARGE};
use crate::error::{Error, Result};
use crate::multipole::harmonics::solid_harmonic_eval;
use crate::path::{ActivationParams, OmegaSchedule, PathSpec, PenaltyParams, Segment, WellSpec};
use crate::potentials::{ElectrodeModel, Rectangle, TrapModel};

pub const DEMO_NAMES: [&str; 2] = ["linear", "junction"];

const UM: f64 = 1e-6;
const MHZ: f64 = 2.0 * PI * 1e6;

/// Trap, path and expansion settings of one demo scenario.
#[derive(Debug, Clone)]
pub struct Demo {
    pub name: &'static str,
    pub trap: TrapModel,
    pub path: PathSpec,
    pub order: usize,
    pub design_points: usize,
}

pub fn demo(name: &str) -> Result<Demo> {
    match name {
        "linear" => Ok(Demo {
            name: "linear",
            trap: linear_trap()?,
            path: linear_path(399),
            order: 3,
            design_points: 25,
        }),
        "junction" => {
            let trap = junction_trap()?;
            let path = junction_path(junction_height(&trap)?);
            Ok(Demo {
                name: "junction",
                trap,
                path,
                order: 3,
                design_points: 25,
            })
        }
        other => Err(Error::Config(format!(
            "unknown demo '{other}', expected one of {}",
            DEMO_NAMES.join(", ")
        ))),
    }
}

/// Secular frequencies of the linear demo (axial, radial, radial).
pub const LINEAR_OMEGAS: [f64; 3] = [1.57 * MHZ, 3.86 * MHZ, 4.73 * MHZ];
pub const LINEAR_DISTANCE: f64 = 224.0 * UM;
pub const LINEAR_PITCH: f64 = 200.0 * UM;
pub const LINEAR_SEGMENTS: usize = 7;
pub const RF_FREQUENCY: f64 = 29.5 * MHZ;

/// Ideal rf quadrupole `(y^2 - z^2) / d^2` with its null on the x axis.
pub fn quadrupole_rf(d: f64) -> Result<ElectrodeModel> {
    // (y^2 - z^2) is a combination of R_{2,0} and R_{2,2}
    let r20_y = solid_harmonic_eval(2, 0, &Vector3::y())?;
    let r22_y = solid_harmonic_eval(2, 2, &Vector3::y())?;
    let r20_z = solid_harmonic_eval(2, 0, &Vector3::z())?;
    let r22_z = solid_harmonic_eval(2, 2, &Vector3::z())?;
    let det = r20_y * r22_z - r22_y * r20_z;
    let c20 = (r22_z + r22_y) / det;
    let c22 = (-r20_z - r20_y) / det;
    let s = 1.0 / (d * d);
    Ok(ElectrodeModel::multipole("rf", Vector3::zeros(), &[(2, 0, c20 * s), (2, 2, c22 * s)]))
}

/// rf amplitude for which the ideal quadrupole `quadrupole_rf(d)` alone
/// supplies the trace `sum omega^2` of the total curvature.
pub fn quadrupole_rf_amplitude(omegas: &[f64; 3], d: f64, charge: f64, mass: f64, rf_frequency: f64) -> f64 {
    let trace = mass / charge * omegas.iter().map(|w| w * w).sum::<f64>();
    let alpha = trace * d.powi(4) / 8.0;
    (2.0 * alpha * mass * rf_frequency * rf_frequency / charge).sqrt()
}

/// Segmented linear trap: dc segment pairs of width `LINEAR_PITCH`
/// centered at `x = k * pitch`, `k = -3..=3`.
pub fn linear_trap() -> Result<TrapModel> {
    let d = LINEAR_DISTANCE;
    let half = (LINEAR_SEGMENTS / 2) as i32;
    let dc = (-half..=half)
        .map(|k| {
            let x = k as f64 * LINEAR_PITCH;
            let plate = |y: f64| Rectangle {
                origin: Vector3::new(0.0, y, 0.0),
                u_axis: Vector3::x(),
                v_axis: Vector3::z(),
                u_range: [x - 0.5 * LINEAR_PITCH, x + 0.5 * LINEAR_PITCH],
                v_range: [-150.0 * UM, 150.0 * UM],
            };
            ElectrodeModel::rectangles(format!("seg{k:+}"), vec![plate(d), plate(-d)])
        })
        .collect();
    let charge = ELEMENTARY_CHARGE;
    let mass = CA40_MASS;
    TrapModel {
        dc,
        rf: quadrupole_rf(d)?,
        rf_amplitude: quadrupole_rf_amplitude(&LINEAR_OMEGAS, d, charge, mass, RF_FREQUENCY),
        rf_frequency: RF_FREQUENCY,
        charge,
        mass,
        length_scale: d,
        electrode_locations: Vec::new(),
    }
    .prepare()
}

/// Transport from the center of segment -2 to the center of segment +2
/// with `steps + 1` points.
pub fn linear_path(steps: usize) -> PathSpec {
    PathSpec {
        wells: vec![WellSpec::Segments {
            start: Vector3::new(-2.0 * LINEAR_PITCH, 0.0, 0.0),
            segments: vec![Segment::Line {
                to: Vector3::new(2.0 * LINEAR_PITCH, 0.0, 0.0),
                steps,
            }],
        }],
        up_hint: Vector3::z(),
        kappa: None,
        omega_ref: OmegaSchedule::Constant(LINEAR_OMEGAS),
        penalties: PenaltyParams {
            delta_u: [1e-8; 3],
            delta_omega: 2.0 * PI * 3e3,
            position_factors: [1.0; 3],
            confinement_factors: [[1.0; 3]; 3],
            voltage: 1e-2,
            activation: Some(ActivationParams {
                d1: LINEAR_PITCH,
                d2: 4.0 * LINEAR_PITCH,
                big: 1e3,
            }),
            smoothness: 1.0,
            fixed: None,
        },
    }
}

/// rf rails span `a..b` from the arm center line. Infinitely long rails
/// would put the rf null at height `sqrt(a b)`.
pub const JUNCTION_RAIL: [f64; 2] = [50.0 * UM, 250.0 * UM];
pub const JUNCTION_DC_WIDTH: f64 = 150.0 * UM;
pub const JUNCTION_SEGMENT: f64 = 100.0 * UM;
pub const JUNCTION_SEGMENTS_PER_SIDE: usize = 4;
pub const JUNCTION_RADIUS: f64 = 50.0 * UM;
pub const JUNCTION_OMEGAS: [f64; 3] = [0.8 * MHZ, 2.2 * MHZ, 2.8 * MHZ];
pub const JUNCTION_RF_AMPLITUDE: f64 = 80.0;

fn junction_arm_start() -> f64 {
    JUNCTION_RAIL[1] + JUNCTION_DC_WIDTH
}

fn junction_arm_middle() -> f64 {
    junction_arm_start() + 0.5 * JUNCTION_SEGMENTS_PER_SIDE as f64 * JUNCTION_SEGMENT
}

/// Height of the rf null above the middle of an arm, by bisection on the
/// vertical rf field.
pub fn junction_height(trap: &TrapModel) -> Result<f64> {
    let x = -junction_arm_middle();
    let guess = (JUNCTION_RAIL[0] * JUNCTION_RAIL[1]).sqrt();
    let dz = 1e-4 * guess;
    let slope = |z: f64| -> Result<f64> {
        let f = |z: f64| trap.rf.eval_point(&Vector3::new(x, 0.0, z));
        Ok((f(z + dz)? - f(z - dz)?) / (2.0 * dz))
    };
    let (mut lo, mut hi) = (0.3 * guess, 3.0 * guess);
    let s_lo = slope(lo)?;
    if s_lo * slope(hi)? > 0.0 {
        return Err(Error::Config("junction rf null not bracketed".into()));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if slope(mid)? * s_lo > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Rectangle in `z = 0`, given in arm coordinates `(along, across)` for an
/// arm pointing along `dir` (one of the four in-plane axis directions).
fn arm_rect(dir: [f64; 2], along: [f64; 2], across: [f64; 2]) -> Rectangle {
    let u = Vector3::new(dir[0], dir[1], 0.0);
    let v = Vector3::new(-dir[1], dir[0], 0.0);
    Rectangle {
        origin: Vector3::zeros(),
        u_axis: u,
        v_axis: v,
        u_range: along,
        v_range: across,
    }
}

/// Surface X-junction in the plane `z = 0`. Each arm has two rf rails,
/// a dc strip between the rails near the center and four dc segments on
/// either side. rf squares and dc squares fill the four corners.
pub fn junction_trap() -> Result<TrapModel> {
    let [a, b] = JUNCTION_RAIL;
    let w = JUNCTION_DC_WIDTH;
    let arm_start = junction_arm_start();
    let rail_end = arm_start + JUNCTION_SEGMENTS_PER_SIDE as f64 * JUNCTION_SEGMENT + 1e-3;
    let dirs = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
    let names = ["e", "n", "w", "s"];

    let mut rf = Vec::new();
    for &dir in &dirs {
        rf.push(arm_rect(dir, [b, rail_end], [a, b]));
        rf.push(arm_rect(dir, [b, rail_end], [-b, -a]));
        // corner between this arm and the next one counterclockwise
        rf.push(arm_rect(dir, [a, b], [a, b]));
    }
    let rf = ElectrodeModel::rectangles("rf", rf);

    let mut dc = Vec::new();
    for (&dir, name) in dirs.iter().zip(names) {
        dc.push(ElectrodeModel::rectangles(format!("{name}c"), vec![arm_rect(dir, [a, arm_start], [-a, a])]));
        dc.push(ElectrodeModel::rectangles(format!("{name}q"), vec![arm_rect(dir, [b, b + w], [b, b + w])]));
        for (side, across) in [("l", [b, b + w]), ("r", [-b - w, -b])] {
            for k in 0..JUNCTION_SEGMENTS_PER_SIDE {
                let start = arm_start + k as f64 * JUNCTION_SEGMENT;
                let rect = arm_rect(dir, [start, start + JUNCTION_SEGMENT], across);
                dc.push(ElectrodeModel::rectangles(format!("{name}{side}{k}"), vec![rect]));
            }
        }
    }

    TrapModel {
        dc,
        rf,
        rf_amplitude: JUNCTION_RF_AMPLITUDE,
        rf_frequency: RF_FREQUENCY,
        charge: ELEMENTARY_CHARGE,
        mass: CA40_MASS,
        length_scale: (a * b).sqrt(),
        electrode_locations: Vec::new(),
    }
    .prepare()
}

/// Corner transport from the west arm to the north arm: 100 steps along
/// the arm, 100 steps on a quarter circle, 99 steps out again.
/// `h` is the transport height, normally [`junction_height`].
pub fn junction_path(h: f64) -> PathSpec {
    let r = JUNCTION_RADIUS;
    let arm_mid = junction_arm_middle();
    PathSpec {
        wells: vec![WellSpec::Segments {
            start: Vector3::new(-arm_mid, 0.0, h),
            segments: vec![
                Segment::Line {
                    to: Vector3::new(-r, 0.0, h),
                    steps: 100,
                },
                Segment::Arc {
                    center: Vector3::new(-r, r, h),
                    angle: 0.5 * PI,
                    axis: Vector3::z(),
                    steps: 100,
                },
                Segment::Line {
                    to: Vector3::new(0.0, arm_mid, h),
                    steps: 99,
                },
            ],
        }],
        up_hint: Vector3::z(),
        kappa: None,
        omega_ref: OmegaSchedule::Constant(JUNCTION_OMEGAS),
        penalties: PenaltyParams {
            delta_u: [1e-6; 3],
            delta_omega: 2.0 * PI * 1e5,
            position_factors: [1.0; 3],
            confinement_factors: [[1.0; 3]; 3],
            voltage: 1e-2,
            activation: Some(ActivationParams {
                d1: 500.0 * UM,
                d2: 1000.0 * UM,
                big: 1e6,
            }),
            smoothness: 1.0,
            fixed: None,
        },
    }
}
