//! Penalty functional and the banded normal equations `A v = b`.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::banded::BandedSym;
use crate::confinement::ConfinementPoint;
use crate::error::{Error, Result};
use crate::multipole::ExpansionSet;
use crate::path::{PenaltyWeights, ShuttlingPath};
use crate::potentials::TrapModel;

/// Normal equations of the penalty functional. Unknowns are ordered
/// `t * N + n`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub a: BandedSym,
    pub b: Vec<f64>,
    pub electrodes: usize,
    pub steps: usize,
}

impl LinearSystem {
    pub fn index(&self, n: usize, t: usize) -> usize {
        t * self.electrodes + n
    }

    pub fn band_halfwidth(&self) -> usize {
        self.a.halfwidth()
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// `A v - b`.
    pub fn residual_vector(&self, v: &[f64]) -> Vec<f64> {
        let mut r = self.a.mul(v);
        r.iter_mut().zip(&self.b).for_each(|(r, b)| *r -= b);
        r
    }
}

/// Confinement data for every `(w, t)` at index `w * T + t`.
pub fn confinement_points(set: &ExpansionSet, trap: &TrapModel) -> Result<Vec<ConfinementPoint>> {
    let alpha = trap.alpha_rf();
    (0..set.wells * set.steps)
        .into_par_iter()
        .map(|idx| ConfinementPoint::from_expansions(set, idx / set.steps, idx % set.steps, alpha))
        .collect()
}

fn check_dimensions(set: &ExpansionSet, path: &ShuttlingPath, weights: &PenaltyWeights, trap: &TrapModel) -> Result<()> {
    let n = trap.num_dc();
    let bad = |electrode: usize, step: usize, reason: String| Err(Error::Assembly { electrode, step, reason });
    if set.electrodes != n {
        return bad(set.electrodes.min(n), 0, format!("expansions cover {} electrodes, trap has {n}", set.electrodes));
    }
    if set.wells != path.wells || set.steps != path.steps {
        return bad(0, set.steps.min(path.steps), format!(
            "expansions cover {}x{} (wells x steps), path has {}x{}",
            set.wells, set.steps, path.wells, path.steps
        ));
    }
    let wt = path.wells * path.steps;
    if weights.position.len() != wt || weights.confinement.len() != wt {
        return bad(0, weights.position.len().min(weights.confinement.len()) / path.wells.max(1), format!(
            "position/confinement weights need {wt} entries"
        ));
    }
    let nt = n * path.steps;
    for (name, len) in [("voltage", weights.voltage.len()), ("fixed", weights.fixed.len())] {
        if len != nt {
            return bad(len % n.max(1), len / n.max(1), format!("{name} weights have {len} entries, need {nt}"));
        }
    }
    if weights.fixed_voltages.len() != n {
        return bad(weights.fixed_voltages.len(), 0, format!("fixed voltage set needs {n} entries"));
    }
    Ok(())
}

/// Assembles `A = (1/2) grad^2 F` and `b` such that `A v - b = (1/2) grad F`.
pub fn assemble_system(
    set: &ExpansionSet,
    path: &ShuttlingPath,
    weights: &PenaltyWeights,
    trap: &TrapModel,
) -> Result<LinearSystem> {
    check_dimensions(set, path, weights, trap)?;
    let points = confinement_points(set, trap)?;
    assemble_from_points(&points, path, weights, trap.num_dc())
}

pub(crate) fn assemble_from_points(
    points: &[ConfinementPoint],
    path: &ShuttlingPath,
    weights: &PenaltyWeights,
    n: usize,
) -> Result<LinearSystem> {
    let steps = path.steps;
    let halfwidth = if steps > 1 { (2 * n).saturating_sub(1) } else { n.saturating_sub(1) };

    // per-step dense N x N block and right-hand side
    let blocks: Vec<(Vec<f64>, Vec<f64>)> = (0..steps)
        .into_par_iter()
        .map(|t| {
            let mut block = vec![0.0; n * n];
            let mut rhs = vec![0.0; n];
            for w in 0..path.wells {
                let idx = path.index(w, t);
                let p = &points[idx];
                let w1 = &weights.position[idx];
                let w2 = &weights.confinement[idx];
                let dh = p.hessian_rf() - path.targets[idx];
                for i in 0..n {
                    let (ei, hi) = (&p.e_dc[i], &p.h_dc[i]);
                    rhs[i] -= weighted_dot(w1, ei, &p.field_rf) + frobenius(w2, hi, &dh);
                    for j in i..n {
                        let v = weighted_dot(w1, ei, &p.e_dc[j]) + frobenius(w2, hi, &p.h_dc[j]);
                        block[i * n + j] += v;
                    }
                }
            }
            for i in 0..n {
                let k = t * n + i;
                block[i * n + i] += weights.voltage[k] + weights.fixed[k];
                rhs[i] += weights.fixed[k] * weights.fixed_voltages[i];
            }
            (block, rhs)
        })
        .collect();

    let mut a = BandedSym::zeros(n * steps, halfwidth);
    let mut b = vec![0.0; n * steps];
    for (t, (block, rhs)) in blocks.into_iter().enumerate() {
        for i in 0..n {
            b[t * n + i] = rhs[i];
            for j in i..n {
                a.add(t * n + i, t * n + j, block[i * n + j])?;
            }
        }
    }

    let w4 = weights.smoothness;
    if w4 != 0.0 && steps > 1 {
        for t in 0..steps {
            let diag = if t == 0 || t == steps - 1 { w4 } else { 2.0 * w4 };
            for i in 0..n {
                a.add(t * n + i, t * n + i, diag)?;
                if t + 1 < steps {
                    a.add(t * n + i, (t + 1) * n + i, -w4)?;
                }
            }
        }
    }

    if let Some(bad) = b.iter().position(|v| !v.is_finite()) {
        return Err(Error::Assembly {
            electrode: bad % n,
            step: bad / n,
            reason: "non-finite right-hand side".into(),
        });
    }
    Ok(LinearSystem {
        a,
        b,
        electrodes: n,
        steps,
    })
}

fn weighted_dot(w: &[f64; 3], a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (0..3).map(|u| w[u] * a[u] * b[u]).sum()
}

fn frobenius(w: &Matrix3<f64>, a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    w.component_mul(a).component_mul(b).sum()
}

/// Individual penalty terms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PenaltyBreakdown {
    pub position: f64,
    pub confinement: f64,
    pub voltage: f64,
    pub smoothness: f64,
    pub fixed: f64,
}

impl PenaltyBreakdown {
    pub fn total(&self) -> f64 {
        self.position + self.confinement + self.voltage + self.smoothness + self.fixed
    }
}

/// Direct evaluation of the penalty functional for voltages at `t * N + n`.
pub fn penalty_functional(
    points: &[ConfinementPoint],
    path: &ShuttlingPath,
    weights: &PenaltyWeights,
    voltages: &[f64],
) -> Result<PenaltyBreakdown> {
    let n = weights.fixed_voltages.len();
    if voltages.len() != n * path.steps {
        return Err(Error::arg(format!("{} voltages for {n} electrodes and {} steps", voltages.len(), path.steps)));
    }
    let mut out = PenaltyBreakdown::default();
    for w in 0..path.wells {
        for t in 0..path.steps {
            let idx = path.index(w, t);
            let (e, h) = points[idx].total(&voltages[t * n..(t + 1) * n])?;
            out.position += weighted_dot(&weights.position[idx], &e, &e);
            let dh = h - path.targets[idx];
            out.confinement += frobenius(&weights.confinement[idx], &dh, &dh);
        }
    }
    for (k, v) in voltages.iter().enumerate() {
        out.voltage += weights.voltage[k] * v * v;
        let d = v - weights.fixed_voltages[k % n];
        out.fixed += weights.fixed[k] * d * d;
        if k >= n {
            let dv = v - voltages[k - n];
            out.smoothness += weights.smoothness * dv * dv;
        }
    }
    Ok(out)
}
