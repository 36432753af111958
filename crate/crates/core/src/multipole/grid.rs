use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quasi-uniform point set on the unit sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignGrid {
    pub points: Vec<Vector3<f64>>,
}

impl DesignGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub const GOLDEN_ANGLE: f64 = PI * (3.0 - 2.236_067_977_499_79);

/// Spherical Fibonacci grid with `k = 0..K-1`, so `z` runs from +1 to -1.
pub fn fibonacci_grid(count: usize) -> Result<DesignGrid> {
    if count < 2 {
        return Err(Error::arg(format!(
            "Fibonacci grid needs at least 2 points, got {count}"
        )));
    }
    let points = (0..count)
        .map(|k| {
            let z = 1.0 - 2.0 * k as f64 / (count - 1) as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = k as f64 * GOLDEN_ANGLE;
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect();
    Ok(DesignGrid { points })
}
