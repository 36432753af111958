//! Jacobi-preconditioned conjugate gradients with a banded Cholesky
//! fallback.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::assemble::LinearSystem;
use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// Largest system still handed to the direct solver when CG stalls.
pub const CHOLESKY_LIMIT: usize = 5000;

/// Number of CG steps kept for the Lanczos condition estimate.
const LANCZOS_STEPS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    ConjugateGradient,
    Cholesky,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub voltages: Vec<f64>,
    /// `|A v - b| / |b|`, or `|A v|` when `b = 0`.
    pub residual: f64,
    pub iterations: usize,
    pub method: SolveMethod,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn relative_residual(system: &LinearSystem, v: &[f64]) -> f64 {
    let r = norm(&system.residual_vector(v));
    let nb = norm(&system.b);
    if nb > 0.0 {
        r / nb
    } else {
        r
    }
}

/// Solves `A v = b`, falling back to a banded Cholesky factorization for
/// systems of at most [`CHOLESKY_LIMIT`] unknowns if CG does not converge.
pub fn solve_system(system: &LinearSystem, tol: f64, max_iter: usize) -> Result<SolveOutcome> {
    match conjugate_gradient(system, tol, max_iter) {
        Ok(out) => Ok(out),
        Err(e @ Error::NotConverged { .. }) if system.dim() <= CHOLESKY_LIMIT => {
            log::warn!("{e}; falling back to banded Cholesky");
            solve_cholesky(system)
        }
        Err(e) => Err(e),
    }
}

pub fn solve_cholesky(system: &LinearSystem) -> Result<SolveOutcome> {
    let v = system.a.cholesky()?.solve(&system.b);
    Ok(SolveOutcome {
        residual: relative_residual(system, &v),
        voltages: v,
        iterations: 0,
        method: SolveMethod::Cholesky,
    })
}

pub fn conjugate_gradient(system: &LinearSystem, tol: f64, max_iter: usize) -> Result<SolveOutcome> {
    let n = system.dim();
    let diag = system.a.diagonal();
    if let Some(i) = diag.iter().position(|d| !(*d > 0.0)) {
        return Err(Error::Singular(format!(
            "diagonal entry {i} is {}; the voltage penalty must be positive",
            diag[i]
        )));
    }
    let inv_diag: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();
    let b = &system.b;
    let nb = norm(b);
    let mut x = vec![0.0; n];
    if nb == 0.0 {
        return Ok(SolveOutcome {
            voltages: x,
            residual: 0.0,
            iterations: 0,
            method: SolveMethod::ConjugateGradient,
        });
    }

    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut alphas = Vec::new();
    let mut betas = Vec::new();

    for it in 1..=max_iter {
        system.a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Singular(format!("matrix is not positive definite (p^T A p = {pap:e})")));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm(&r) <= tol * nb {
            // confirm with the true residual
            let res = relative_residual(system, &x);
            if res <= tol {
                return Ok(SolveOutcome {
                    voltages: x,
                    residual: res,
                    iterations: it,
                    method: SolveMethod::ConjugateGradient,
                });
            }
            // recurrence drifted: restart from the true residual
            r = b.clone();
            let ax = system.a.mul(&x);
            r.iter_mut().zip(&ax).for_each(|(r, a)| *r -= a);
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
                p[i] = z[i];
            }
            rz = dot(&r, &z);
            continue;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        if alphas.len() < LANCZOS_STEPS {
            alphas.push(alpha);
            betas.push(beta);
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual: relative_residual(system, &x),
        condition: lanczos_condition(&alphas, &betas),
    })
}

/// Condition estimate of the preconditioned matrix from the CG
/// coefficients via the associated Lanczos tridiagonal matrix.
pub fn lanczos_condition(alphas: &[f64], betas: &[f64]) -> f64 {
    let k = alphas.len();
    if k == 0 {
        return f64::NAN;
    }
    let mut t = DMatrix::zeros(k, k);
    for j in 0..k {
        t[(j, j)] = 1.0 / alphas[j] + if j > 0 { betas[j - 1] / alphas[j - 1] } else { 0.0 };
        if j + 1 < k {
            let off = betas[j].sqrt() / alphas[j];
            t[(j, j + 1)] = off;
            t[(j + 1, j)] = off;
        }
    }
    let eig = SymmetricEigen::new(t).eigenvalues;
    let max = eig.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.iter().cloned().fold(f64::MAX, f64::min);
    max / min
}
