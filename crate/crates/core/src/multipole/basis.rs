use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::grid::DesignGrid;
use super::harmonics::{basis_len, degree_order, eval_index, MAX_ORDER};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_CONDITION: f64 = 1e12;

/// Solid-harmonic basis sampled on a design grid, with its orthonormalized
/// counterpart.
///
/// `values` is `K x (L+1)^2`: column `i` holds basis function `i` at every
/// grid point. The Gram matrix is `G = values^T values` and
/// `orthonormal = values G^{-1/2}` has orthonormal columns.
#[derive(Debug, Clone)]
pub struct DesignBasis {
    pub order: usize,
    pub grid: DesignGrid,
    pub values: DMatrix<f64>,
    pub gram: DMatrix<f64>,
    pub gram_sqrt: DMatrix<f64>,
    pub gram_inv_sqrt: DMatrix<f64>,
    pub orthonormal: DMatrix<f64>,
    pub condition: f64,
    /// `(l, m)` for every basis index.
    pub index_map: Vec<(usize, i32)>,
}

impl DesignBasis {
    pub fn len(&self) -> usize {
        self.index_map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_map.is_empty()
    }

    /// `max |U^T U - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let n = self.len();
        let prod = self.orthonormal.transpose() * &self.orthonormal;
        (prod - DMatrix::<f64>::identity(n, n)).amax()
    }
}

pub fn build_design_basis(order: usize, grid: &DesignGrid) -> Result<DesignBasis> {
    build_design_basis_with(order, grid, DEFAULT_MAX_CONDITION)
}

pub fn build_design_basis_with(
    order: usize,
    grid: &DesignGrid,
    max_condition: f64,
) -> Result<DesignBasis> {
    if order > MAX_ORDER {
        return Err(Error::arg(format!(
            "expansion order {order} exceeds the supported maximum {MAX_ORDER}"
        )));
    }
    let n = basis_len(order);
    let k = grid.len();
    let values = DMatrix::from_fn(k, n, |row, col| eval_index(col, &grid.points[row]));
    let gram = values.transpose() * &values;

    let eig = SymmetricEigen::new(gram.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= max_condition) {
        return Err(Error::IllConditioned {
            points: k,
            order,
            condition,
        });
    }

    let q = &eig.eigenvectors;
    let scaled = |f: fn(f64) -> f64| {
        let d = DVector::from_iterator(n, eig.eigenvalues.iter().map(|v| f(*v)));
        q * DMatrix::from_diagonal(&d) * q.transpose()
    };
    let gram_sqrt = scaled(f64::sqrt);
    let gram_inv_sqrt = scaled(|v| 1.0 / v.sqrt());
    let orthonormal = &values * &gram_inv_sqrt;

    Ok(DesignBasis {
        order,
        grid: grid.clone(),
        values,
        gram,
        gram_sqrt,
        gram_inv_sqrt,
        orthonormal,
        condition,
        index_map: (0..n).map(degree_order).collect(),
    })
}
