//! Voltage optimization: penalty assembly, banded solve and solution
//! quality.

pub mod analyze;
pub mod assemble;
pub mod banded;
pub mod solve;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use analyze::{analyze_points, SolutionMetrics, StepMetrics};
pub use assemble::{assemble_system, confinement_points, penalty_functional, LinearSystem, PenaltyBreakdown};
pub use banded::BandedSym;
pub use solve::{conjugate_gradient, solve_cholesky, solve_system, SolveMethod, SolveOutcome, DEFAULT_TOLERANCE};

use crate::error::{Error, Result};
use crate::multipole::ExpansionSet;
use crate::path::{PenaltyWeights, ShuttlingPath};
use crate::potentials::TrapModel;

/// Voltages `V[t * N + n]` with residual, penalties and quality metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageSolution {
    pub electrodes: usize,
    pub steps: usize,
    pub voltages: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub method: SolveMethod,
    pub penalties: PenaltyBreakdown,
    pub metrics: SolutionMetrics,
}

impl VoltageSolution {
    pub fn voltage(&self, n: usize, t: usize) -> f64 {
        self.voltages[t * self.electrodes + n]
    }

    /// Voltages of electrode `n` over all steps.
    pub fn channel(&self, n: usize) -> Vec<f64> {
        (0..self.steps).map(|t| self.voltage(n, t)).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_voltages_csv(path, self.electrodes, &self.voltages)
    }

    pub fn write_metrics(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, &self.metrics)?;
        writeln!(f)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub tolerance: f64,
    /// Defaults to ten times the number of unknowns.
    pub max_iter: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tolerance: DEFAULT_TOLERANCE,
            max_iter: None,
        }
    }
}

/// Assembles, solves and analyzes in one go.
pub fn solve_voltages(
    set: &ExpansionSet,
    path: &ShuttlingPath,
    weights: &PenaltyWeights,
    trap: &TrapModel,
    options: &SolveOptions,
) -> Result<VoltageSolution> {
    let started = std::time::Instant::now();
    let system = assemble_system(set, path, weights, trap)?;
    let points = confinement_points(set, trap)?;
    log::info!("assembled {} unknowns in {:?}", system.dim(), started.elapsed());
    let max_iter = options.max_iter.unwrap_or(10 * system.dim().max(10));
    let out = solve_system(&system, options.tolerance, max_iter)?;
    log::info!("solved by {:?} in {} iterations, residual {:e}", out.method, out.iterations, out.residual);
    let penalties = penalty_functional(&points, path, weights, &out.voltages)?;
    let metrics = analyze_points(&points, path, &out.voltages, trap.charge, trap.mass)?;
    Ok(VoltageSolution {
        electrodes: system.electrodes,
        steps: system.steps,
        voltages: out.voltages,
        residual: out.residual,
        iterations: out.iterations,
        method: out.method,
        penalties,
        metrics,
    })
}

/// Quality metrics of existing voltages.
pub fn analyze_solution(voltages: &[f64], set: &ExpansionSet, path: &ShuttlingPath, trap: &TrapModel) -> Result<SolutionMetrics> {
    let points = confinement_points(set, trap)?;
    analyze_points(&points, path, voltages, trap.charge, trap.mass)
}

#[derive(Debug, Serialize, Deserialize)]
struct VoltageRow {
    t: usize,
    n: usize,
    #[serde(rename = "V")]
    v: f64,
}

/// Writes `t,n,V` rows for voltages ordered `t * N + n`.
pub fn write_voltages_csv(path: &Path, electrodes: usize, voltages: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (k, v) in voltages.iter().enumerate() {
        w.serialize(VoltageRow {
            t: k / electrodes,
            n: k % electrodes,
            v: *v,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `t,n,V` rows; returns `(N, T, V[t * N + n])`.
pub fn read_voltages_csv(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::File {
            path: path.to_path_buf(),
            source,
        },
        kind => Error::Config(format!("{}: {kind:?}", path.display())),
    })?;
    let rows: Vec<VoltageRow> = r
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let n = rows.iter().map(|r| r.n + 1).max().unwrap_or(0);
    let t = rows.iter().map(|r| r.t + 1).max().unwrap_or(0);
    if rows.len() != n * t {
        return Err(Error::Config(format!(
            "{}: {} rows do not form a full {t} x {n} grid",
            path.display(),
            rows.len()
        )));
    }
    let mut v = vec![f64::NAN; n * t];
    for row in rows {
        v[row.t * n + row.n] = row.v;
    }
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::Config(format!("{}: duplicate or missing (t, n) rows", path.display())));
    }
    Ok((n, t, v))
}
