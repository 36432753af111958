//! Pseudopotential validity criteria and rf-noise heating along a solved
//! path.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confinement::{secular_modes, ConfinementPoint};
use crate::consts::HBAR;
use crate::error::{Error, Result};
use crate::multipole::ExpansionSet;
use crate::path::ShuttlingPath;
use crate::potentials::TrapModel;
use crate::spline::CubicSpline;
use crate::waveform::TimeMap;

pub const DEFAULT_THRESHOLD: f64 = 0.1;

/// Micromotion amplitudes below this are treated as an rf null, m.
pub const DEFAULT_NULL_TOLERANCE: f64 = 1e-12;

/// `r_mu = Q V_rf |e_rf| / (m Omega^2)` for the unit rf field `e_rf`.
pub fn micromotion_amplitude(e_rf: &Vector3<f64>, trap: &TrapModel) -> f64 {
    trap.charge.abs() * trap.rf_amplitude * e_rf.norm() / (trap.mass * trap.rf_frequency.powi(2))
}

/// `|grad |E||` for a field `E` with Hessian `H` (so that `grad E = -H`);
/// `None` where `E = 0`.
pub fn field_magnitude_gradient(e: &Vector3<f64>, h: &Matrix3<f64>) -> Option<f64> {
    let norm = e.norm();
    (norm > 0.0).then(|| (e.dot(&(h * h * e))).max(0.0).sqrt() / norm)
}

/// Heating rate `Q^2 / (4 m hbar omega) (d_u Phi_rf)^2 S_V / V_rf^2` in
/// quanta per second; zero without rf drive.
pub fn heating_rate(grad_phi_rf: f64, omega: f64, noise_density: f64, trap: &TrapModel) -> f64 {
    if trap.rf_amplitude == 0.0 {
        return 0.0;
    }
    trap.charge.powi(2) / (4.0 * trap.mass * HBAR * omega) * grad_phi_rf.powi(2) * noise_density
        / trap.rf_amplitude.powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub dc_scale: f64,
    pub rf_scale: f64,
    pub field_ratio: f64,
    pub envelope: f64,
    /// Micromotion amplitude counted as zero, m.
    pub null_tolerance: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            dc_scale: DEFAULT_THRESHOLD,
            rf_scale: DEFAULT_THRESHOLD,
            field_ratio: DEFAULT_THRESHOLD,
            envelope: DEFAULT_THRESHOLD,
            null_tolerance: DEFAULT_NULL_TOLERANCE,
        }
    }
}

impl Thresholds {
    fn as_array(&self) -> [f64; 4] {
        [self.dc_scale, self.rf_scale, self.field_ratio, self.envelope]
    }
}

/// Fields at one well.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionInputs {
    /// Total dc field and Hessian.
    pub e_dc: Vector3<f64>,
    pub h_dc: Matrix3<f64>,
    /// Unit rf field and Hessian.
    pub e_rf: Vector3<f64>,
    pub h_rf: Matrix3<f64>,
    /// Well speed, m/s.
    pub velocity: f64,
    /// Lowest secular frequency, rad/s.
    pub omega_min: f64,
}

/// Criterion ratios in the order: micromotion vs dc field scale, vs rf
/// field scale, dc to rf field strength, well speed vs micromotion
/// envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Criteria {
    pub r_mu: f64,
    pub ratios: [f64; 4],
    /// Ratios whose denominator vanishes; these pass.
    pub degenerate: [bool; 4],
    pub pass: [bool; 4],
}

pub fn check_criteria(inp: &CriterionInputs, trap: &TrapModel, thresholds: &Thresholds) -> Criteria {
    let r_mu = micromotion_amplitude(&inp.e_rf, trap);
    let rf_null = r_mu <= thresholds.null_tolerance;
    let e_dc = inp.e_dc.norm();
    let rf_field = trap.rf_amplitude * inp.e_rf.norm();
    let mut ratios = [0.0; 4];
    let mut degenerate = [false; 4];

    if !rf_null {
        match field_magnitude_gradient(&inp.e_dc, &inp.h_dc) {
            Some(g) => ratios[0] = r_mu * g / e_dc,
            None => degenerate[0] = true,
        }
        // the rf gradient scales with V_rf like the field itself
        let g = field_magnitude_gradient(&inp.e_rf, &inp.h_rf).unwrap_or(0.0);
        ratios[1] = r_mu * g / inp.e_rf.norm();
        ratios[2] = e_dc / rf_field;
        if inp.omega_min > 0.0 {
            ratios[3] = inp.velocity / (inp.omega_min * r_mu);
        } else {
            degenerate[3] = true;
        }
    } else {
        degenerate[2] = true;
        degenerate[3] = true;
    }
    let limits = thresholds.as_array();
    let pass = std::array::from_fn(|k| degenerate[k] || ratios[k] < limits[k]);
    Criteria {
        r_mu,
        ratios,
        degenerate,
        pass,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepValidity {
    pub well: usize,
    pub step: usize,
    pub criteria: Criteria,
    /// Heating per secular mode, quanta/s.
    pub heating: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub thresholds: Thresholds,
    pub noise_density: f64,
    pub steps: Vec<StepValidity>,
    pub all_pass: bool,
    pub max_ratios: [f64; 4],
}

/// Transport timing used for the well-speed criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub duration: f64,
    pub map: TimeMap,
}

/// Well speed at every step for a transport of the given timing.
fn well_speeds(path: &ShuttlingPath, w: usize, timing: Option<&Timing>) -> Result<Vec<f64>> {
    let steps = path.steps;
    let Some(timing) = timing.filter(|_| steps > 1) else {
        return Ok(vec![0.0; steps]);
    };
    let s = CubicSpline::uniform(0.0, 1.0, &path.arc_length(w))?;
    Ok((0..steps)
        .map(|t| {
            let x = t as f64 / (steps - 1) as f64;
            // invert the monotone map by bisection
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if timing.map.apply(mid) < x {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let tau = 0.5 * (lo + hi);
            let h = 1e-6;
            let slope = (timing.map.apply((tau + h).min(1.0)) - timing.map.apply((tau - h).max(0.0)))
                / ((tau + h).min(1.0) - (tau - h).max(0.0));
            s.derivative(x).abs() * slope / timing.duration
        })
        .collect())
}

/// Criteria and heating at every `(w, t)` for voltages `V[t * N + n]`.
pub fn validate_solution(
    set: &ExpansionSet,
    path: &ShuttlingPath,
    trap: &TrapModel,
    voltages: &[f64],
    timing: Option<&Timing>,
    noise_density: f64,
    thresholds: &Thresholds,
) -> Result<ValidityReport> {
    let n = trap.num_dc();
    if voltages.len() != n * path.steps {
        return Err(Error::arg(format!("{} voltages for {n} electrodes and {} steps", voltages.len(), path.steps)));
    }
    if !(noise_density >= 0.0) {
        return Err(Error::arg("noise density must be nonnegative"));
    }
    let speeds: Vec<Vec<f64>> = (0..path.wells).map(|w| well_speeds(path, w, timing)).collect::<Result<_>>()?;
    let alpha = trap.alpha_rf();
    let steps: Vec<StepValidity> = (0..path.wells * path.steps)
        .into_par_iter()
        .map(|idx| {
            let (w, t) = (idx / path.steps, idx % path.steps);
            let p = ConfinementPoint::from_expansions(set, w, t, alpha)?;
            let v = &voltages[t * n..(t + 1) * n];
            let mut e_dc = Vector3::zeros();
            let mut h_dc = Matrix3::zeros();
            for ((en, hn), vn) in p.e_dc.iter().zip(&p.h_dc).zip(v) {
                e_dc += en * *vn;
                h_dc += hn * *vn;
            }
            let modes = secular_modes(&(h_dc + p.hessian_rf()), trap.charge, trap.mass)?;
            let omega_min = if modes.stable.iter().all(|s| *s) { modes.omegas[0] } else { 0.0 };
            let criteria = check_criteria(
                &CriterionInputs {
                    e_dc,
                    h_dc,
                    e_rf: p.e_rf,
                    h_rf: p.h_rf,
                    velocity: speeds[w][t],
                    omega_min,
                },
                trap,
                thresholds,
            );
            let heating = std::array::from_fn(|u| {
                if modes.stable[u] {
                    // d_u Phi_rf = -E_rf,u along the mode axis
                    heating_rate(-p.field_rf.dot(&modes.axis(u)), modes.omegas[u], noise_density, trap)
                } else {
                    0.0
                }
            });
            Ok(StepValidity {
                well: w,
                step: t,
                criteria,
                heating,
            })
        })
        .collect::<Result<_>>()?;
    let all_pass = steps.iter().all(|s| s.criteria.pass.iter().all(|p| *p));
    let max_ratios = std::array::from_fn(|k| steps.iter().map(|s| s.criteria.ratios[k]).fold(0.0, f64::max));
    Ok(ValidityReport {
        thresholds: *thresholds,
        noise_density,
        steps,
        all_pass,
        max_ratios,
    })
}
