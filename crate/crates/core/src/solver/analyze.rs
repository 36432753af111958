//! Quality metrics of a voltage solution.

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confinement::{secular_modes, ConfinementPoint};
use crate::error::{Error, Result};
use crate::path::ShuttlingPath;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub well: usize,
    pub step: usize,
    /// Equilibrium offset `Q E_u / (m omega_u^2)` along the local axes, m;
    /// `None` along unstable directions.
    pub displacement: [Option<f64>; 3],
    /// Secular frequencies matched to the local axes, rad/s.
    pub omegas: [f64; 3],
    /// `(omega - omega_ref) / omega_ref`.
    pub frequency_deviation: [f64; 3],
    /// Angle between each mode axis and its local frame axis, rad.
    pub axis_angle: [f64; 3],
    pub stable: [bool; 3],
    pub max_voltage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionMetrics {
    pub steps: Vec<StepMetrics>,
    pub max_abs_voltage: f64,
    pub max_voltage_step: f64,
    /// Largest |displacement| per local axis over stable steps, m.
    pub max_displacement: [f64; 3],
    pub max_frequency_deviation: f64,
    pub max_axis_angle: f64,
    pub unstable_steps: usize,
}

/// Metrics at every `(w, t)` for voltages ordered `t * N + n`.
pub fn analyze_points(
    points: &[ConfinementPoint],
    path: &ShuttlingPath,
    voltages: &[f64],
    charge: f64,
    mass: f64,
) -> Result<SolutionMetrics> {
    let n = points.first().map_or(0, |p| p.e_dc.len());
    if voltages.len() != n * path.steps || voltages.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("voltages must be finite and cover every electrode and step"));
    }
    let steps: Vec<StepMetrics> = (0..path.wells * path.steps)
        .into_par_iter()
        .map(|idx| {
            let (w, t) = (idx / path.steps, idx % path.steps);
            let v = &voltages[t * n..(t + 1) * n];
            let (e, h) = points[idx].total(v)?;
            let modes = secular_modes(&h, charge, mass)?.matched_to(&Matrix3::identity());
            let reference = path.omega_ref[idx];
            let mut out = StepMetrics {
                well: w,
                step: t,
                displacement: [None; 3],
                omegas: modes.omegas,
                frequency_deviation: [0.0; 3],
                axis_angle: [0.0; 3],
                stable: modes.stable,
                max_voltage: v.iter().fold(0.0, |m, x| m.max(x.abs())),
            };
            for u in 0..3 {
                if modes.stable[u] {
                    out.displacement[u] = Some(charge * e[u] / (mass * modes.omegas[u].powi(2)));
                }
                out.frequency_deviation[u] = (modes.omegas[u] - reference[u]) / reference[u];
                out.axis_angle[u] = modes.axis(u)[u].abs().min(1.0).acos();
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut max_step: f64 = 0.0;
    for t in 1..path.steps {
        for k in 0..n {
            max_step = max_step.max((voltages[t * n + k] - voltages[(t - 1) * n + k]).abs());
        }
    }
    let mut max_displacement = [0.0f64; 3];
    for s in &steps {
        for u in 0..3 {
            if let Some(d) = s.displacement[u] {
                max_displacement[u] = max_displacement[u].max(d.abs());
            }
        }
    }
    Ok(SolutionMetrics {
        max_abs_voltage: voltages.iter().fold(0.0, |m, x| m.max(x.abs())),
        max_voltage_step: max_step,
        max_displacement,
        max_frequency_deviation: steps
            .iter()
            .flat_map(|s| s.frequency_deviation)
            .fold(0.0, |m, x: f64| m.max(x.abs())),
        max_axis_angle: steps.iter().flat_map(|s| s.axis_angle).fold(0.0, f64::max),
        unstable_steps: steps.iter().filter(|s| s.stable.contains(&false)).count(),
        steps,
    })
}
