use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use log::{debug, info};
use nalgebra::{DVector, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::basis::{build_design_basis, DesignBasis};
use super::grid::{fibonacci_grid, DesignGrid};
use super::harmonics::basis_len;
use crate::error::{Error, Result};
use crate::path::ShuttlingPath;
use crate::potentials::TrapModel;

/// Support point with orientation and expansion sphere radius. The columns
/// of `rotation` are the local axes expressed in the trap frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalFrame {
    pub origin: Vector3<f64>,
    pub rotation: Matrix3<f64>,
    pub kappa: f64,
}

impl LocalFrame {
    pub fn new(origin: Vector3<f64>, rotation: Matrix3<f64>, kappa: f64) -> Result<Self> {
        let frame = LocalFrame {
            origin,
            rotation,
            kappa,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn axis_aligned(origin: Vector3<f64>, kappa: f64) -> Self {
        LocalFrame {
            origin,
            rotation: Matrix3::identity(),
            kappa,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        let err = (r.transpose() * r - Matrix3::identity()).amax();
        if !(err <= 1e-12) {
            return Err(Error::arg(format!("frame rotation is not orthogonal (error {err:e})")));
        }
        if r.determinant() < 0.0 {
            return Err(Error::arg("frame rotation has determinant -1"));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::arg(format!("expansion radius must be positive, got {}", self.kappa)));
        }
        if !self.origin.iter().all(|v| v.is_finite()) {
            return Err(Error::arg("frame origin is not finite"));
        }
        Ok(())
    }

    pub fn axis(&self, u: usize) -> Vector3<f64> {
        self.rotation.column(u).into_owned()
    }

    pub fn to_global(&self, local: &Vector3<f64>) -> Vector3<f64> {
        self.origin + self.rotation * local
    }

    pub fn to_local(&self, global: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (global - self.origin)
    }
}

/// `q_k = p + kappa R r_k`.
pub fn transform_design_points(frame: &LocalFrame, grid: &DesignGrid) -> Vec<Vector3<f64>> {
    grid.points
        .iter()
        .map(|r| frame.origin + frame.rotation * r * frame.kappa)
        .collect()
}

/// Multipole coefficients (units 1/m^l per volt) from potential samples at
/// the transformed design points of the basis grid.
pub fn expand_potential(values: &[f64], basis: &DesignBasis, kappa: f64) -> Result<Vec<f64>> {
    if values.len() != basis.grid.len() {
        return Err(Error::arg(format!(
            "{} potential samples for a {}-point design",
            values.len(),
            basis.grid.len()
        )));
    }
    if !(kappa > 0.0) {
        return Err(Error::arg("expansion radius must be positive"));
    }
    let phi = DVector::from_column_slice(values);
    let projected = basis.orthonormal.tr_mul(&phi);
    let coeffs = &basis.gram_inv_sqrt * projected;
    Ok(coeffs
        .iter()
        .zip(&basis.index_map)
        .map(|(c, (l, _))| c / kappa.powi(*l as i32))
        .collect())
}

/// Evaluates `sum c_i R_i(r)` in local coordinates.
pub fn reconstruct(coeffs: &[f64], local: &Vector3<f64>) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| c * super::harmonics::eval_index(i, local))
        .sum()
}

/// Coefficients for every well, step and electrode (dc electrodes first,
/// the rf electrode last).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionSet {
    pub order: usize,
    pub design_points: usize,
    pub wells: usize,
    pub steps: usize,
    /// Number of dc electrodes N.
    pub electrodes: usize,
    pub frames: Vec<LocalFrame>,
    coefficients: Vec<f64>,
    /// Number of unit-potential evaluations used to build the set.
    pub evaluations: usize,
}

impl ExpansionSet {
    pub fn basis_len(&self) -> usize {
        basis_len(self.order)
    }

    fn offset(&self, w: usize, t: usize, n: usize) -> usize {
        debug_assert!(w < self.wells && t < self.steps && n <= self.electrodes);
        (((w * self.steps) + t) * (self.electrodes + 1) + n) * self.basis_len()
    }

    /// Coefficients of dc electrode `n`, or of the rf electrode for
    /// `n == electrodes`.
    pub fn coeffs(&self, w: usize, t: usize, n: usize) -> &[f64] {
        let o = self.offset(w, t, n);
        &self.coefficients[o..o + self.basis_len()]
    }

    pub fn rf_coeffs(&self, w: usize, t: usize) -> &[f64] {
        self.coeffs(w, t, self.electrodes)
    }

    pub fn frame(&self, w: usize, t: usize) -> &LocalFrame {
        &self.frames[w * self.steps + t]
    }

    /// Builds a set from raw per-(w, t, n) coefficient vectors.
    pub fn from_parts(
        order: usize,
        design_points: usize,
        wells: usize,
        steps: usize,
        electrodes: usize,
        frames: Vec<LocalFrame>,
        coefficients: Vec<f64>,
    ) -> Result<Self> {
        let expected = wells * steps * (electrodes + 1) * basis_len(order);
        if coefficients.len() != expected || frames.len() != wells * steps {
            return Err(Error::arg(format!(
                "expansion set needs {expected} coefficients and {} frames, got {} and {}",
                wells * steps,
                coefficients.len(),
                frames.len()
            )));
        }
        Ok(ExpansionSet {
            order,
            design_points,
            wells,
            steps,
            electrodes,
            frames,
            coefficients,
            evaluations: 0,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Expands the unit potential of every electrode around every path point.
/// The `K W T (N+1)` potential queries are issued per support point in
/// batches of `K`, support points in parallel.
pub fn expand_along_path(
    trap: &TrapModel,
    path: &ShuttlingPath,
    order: usize,
    design_points: usize,
) -> Result<ExpansionSet> {
    let grid = fibonacci_grid(design_points)?;
    let basis = build_design_basis(order, &grid)?;
    let n_dc = trap.num_dc();
    let counter = AtomicUsize::new(0);

    let per_point: Vec<Vec<f64>> = (0..path.wells * path.steps)
        .into_par_iter()
        .map(|idx| {
            let (w, t) = (idx / path.steps, idx % path.steps);
            let frame = &path.frames[idx];
            let points = transform_design_points(frame, &grid);
            let mut out = Vec::with_capacity((n_dc + 1) * basis.len());
            for n in 0..=n_dc {
                let electrode = trap.electrode(n);
                let wrap = |source: Error| Error::Expansion {
                    well: w,
                    step: t,
                    electrode: if electrode.name.is_empty() {
                        format!("#{n}")
                    } else {
                        electrode.name.clone()
                    },
                    source: Box::new(source),
                };
                let values = electrode.eval(&points).map_err(wrap)?;
                counter.fetch_add(values.len(), Ordering::Relaxed);
                out.extend(expand_potential(&values, &basis, frame.kappa).map_err(wrap)?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut set = ExpansionSet::from_parts(
        order,
        design_points,
        path.wells,
        path.steps,
        n_dc,
        path.frames.clone(),
        per_point.concat(),
    )?;
    set.evaluations = counter.into_inner();
    Ok(set)
}

/// Cache key over everything the coefficients depend on.
pub fn cache_key(trap: &TrapModel, path: &ShuttlingPath, order: usize, design_points: usize) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_string(trap)?.as_bytes());
    hasher.update(serde_json::to_string(&path.frames)?.as_bytes());
    hasher.update(format!("L={order};K={design_points}").as_bytes());
    Ok(hex::encode(hasher.finalize()))
}

pub fn cache_file(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("expansion-{key}.json"))
}

/// Like [`expand_along_path`], reusing a cached set from `cache_dir` when one
/// exists for the same inputs. Returns whether the cache was hit.
pub fn expand_along_path_cached(
    trap: &TrapModel,
    path: &ShuttlingPath,
    order: usize,
    design_points: usize,
    cache_dir: Option<&Path>,
) -> Result<(ExpansionSet, bool)> {
    let Some(dir) = cache_dir else {
        return Ok((expand_along_path(trap, path, order, design_points)?, false));
    };
    let key = cache_key(trap, path, order, design_points)?;
    let file = cache_file(dir, &key);
    if file.exists() {
        debug!("loading cached expansion {}", file.display());
        return Ok((ExpansionSet::load(&file)?, true));
    }
    let set = expand_along_path(trap, path, order, design_points)?;
    std::fs::create_dir_all(dir)?;
    set.save(&file)?;
    info!("cached expansion in {}", file.display());
    Ok((set, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multipole::harmonics::{eval_index, index_of};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn basis(order: usize, k: usize) -> DesignBasis {
        build_design_basis(order, &fibonacci_grid(k).unwrap()).unwrap()
    }

    #[test]
    fn transform_identity_translation_rotation() {
        let grid = fibonacci_grid(25).unwrap();
        let id = LocalFrame::axis_aligned(Vector3::zeros(), 1.0);
        assert_eq!(transform_design_points(&id, &grid), grid.points);

        let p = Vector3::new(1e-6, 2e-6, 3e-6);
        let shifted = transform_design_points(&LocalFrame::axis_aligned(p, 1e-6), &grid);
        for (q, r) in shifted.iter().zip(&grid.points) {
            assert_relative_eq!(*q, p + r * 1e-6, epsilon = 1e-20);
            assert!(((q - p).norm() - 1e-6).abs() < 1e-12 * 1e-6);
        }

        let rot = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let turned = transform_design_points(&LocalFrame::new(Vector3::zeros(), rot, 1.0).unwrap(), &grid);
        for (q, r) in turned.iter().zip(&grid.points) {
            assert_relative_eq!(q.y, r.x, epsilon = 1e-15);
        }
    }

    #[test]
    fn frame_validation() {
        assert!(LocalFrame::new(Vector3::zeros(), Matrix3::identity() * 2.0, 1.0).is_err());
        assert!(LocalFrame::new(Vector3::zeros(), -Matrix3::identity(), 1.0).is_err());
        assert!(LocalFrame::new(Vector3::zeros(), Matrix3::identity(), 0.0).is_err());
    }

    #[test]
    fn recovers_reference_combination() {
        let b = basis(4, 25);
        let target = [(index_of(2, 0), 0.3), (index_of(2, 2), 0.7), (index_of(4, -2), 1.0)];
        let values: Vec<f64> = b
            .grid
            .points
            .iter()
            .map(|p| target.iter().map(|(i, c)| c * eval_index(*i, p)).sum())
            .collect();
        let c = expand_potential(&values, &b, 1.0).unwrap();
        for (i, ci) in c.iter().enumerate() {
            let expected = target.iter().find(|(j, _)| *j == i).map_or(0.0, |(_, v)| *v);
            assert!((ci - expected).abs() < 1e-13, "c[{i}] = {ci}");
        }
    }

    #[test]
    fn constant_potential() {
        let b = basis(3, 25);
        let c = expand_potential(&[5.0; 25], &b, 0.37).unwrap();
        assert_relative_eq!(c[0], 5.0 * (4.0 * PI).sqrt(), epsilon = 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
        assert!(expand_potential(&[1.0; 24], &b, 1.0).is_err());
    }

    #[test]
    fn round_trip_reproduces_samples() {
        let b = basis(3, 25);
        let coeffs: Vec<f64> = (0..16).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect();
        let kappa = 2.5;
        let values: Vec<f64> = b.grid.points.iter().map(|p| reconstruct(&coeffs, &(p * kappa))).collect();
        let c = expand_potential(&values, &b, kappa).unwrap();
        for (p, v) in b.grid.points.iter().zip(&values) {
            assert!((reconstruct(&c, &(p * kappa)) - v).abs() < 1e-12 * v.abs().max(1.0));
        }
    }
}
