//! Natural cubic splines on strictly increasing knots.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CubicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    /// Second derivatives at the knots.
    curvature: Vec<f64>,
}

impl CubicSpline {
    pub fn new(knots: &[f64], values: &[f64]) -> Result<Self> {
        let n = knots.len();
        if n != values.len() {
            return Err(Error::arg(format!(
                "spline needs matching knot and value counts, got {} and {}",
                n,
                values.len()
            )));
        }
        if n < 2 {
            return Err(Error::arg("spline needs at least two knots"));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::arg("spline knots must be strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("spline values must be finite"));
        }

        // Tridiagonal system for interior second derivatives (Thomas algorithm).
        let mut curvature = vec![0.0; n];
        if n > 2 {
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            for i in 0..m {
                let h0 = knots[i + 1] - knots[i];
                let h1 = knots[i + 2] - knots[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0
                    * ((values[i + 2] - values[i + 1]) / h1 - (values[i + 1] - values[i]) / h0);
            }
            for i in 1..m {
                let lower = knots[i + 1] - knots[i];
                let f = lower / diag[i - 1];
                diag[i] -= f * upper[i - 1];
                rhs[i] -= f * rhs[i - 1];
            }
            curvature[m] = rhs[m - 1] / diag[m - 1];
            for i in (0..m - 1).rev() {
                curvature[i + 1] = (rhs[i] - upper[i] * curvature[i + 2]) / diag[i];
            }
        }
        Ok(CubicSpline {
            knots: knots.to_vec(),
            values: values.to_vec(),
            curvature,
        })
    }

    /// Spline over knots `0, 1, ..., n-1` scaled onto `[start, end]`.
    pub fn uniform(start: f64, end: f64, values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(Error::arg("spline needs at least two knots"));
        }
        let knots: Vec<f64> = (0..n)
            .map(|i| start + (end - start) * i as f64 / (n - 1) as f64)
            .collect();
        Self::new(&knots, values)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    fn segment(&self, x: f64) -> usize {
        let n = self.knots.len();
        match self.knots.partition_point(|&k| k <= x) {
            0 => 0,
            i if i >= n => n - 2,
            i => i - 1,
        }
    }

    /// Value, first and second derivative. Outside the knot range the end
    /// cubic is continued.
    pub fn eval_all(&self, x: f64) -> (f64, f64, f64) {
        self.eval_in(self.segment(x), x)
    }

    fn eval_in(&self, i: usize, x: f64) -> (f64, f64, f64) {
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.curvature[i], self.curvature[i + 1]);
        let value = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let slope = (y1 - y0) / h + ((1.0 - 3.0 * a * a) * m0 + (3.0 * b * b - 1.0) * m1) * h / 6.0;
        let second = a * m0 + b * m1;
        (value, slope, second)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_all(x).0
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.eval_all(x).1
    }
}

/// Several splines sharing one knot vector, evaluated together.
#[derive(Debug, Clone)]
pub struct SplineBundle {
    splines: Vec<CubicSpline>,
}

impl SplineBundle {
    /// One spline per column; `columns[c][k]` is component `c` at knot `k`.
    pub fn new(knots: &[f64], columns: &[Vec<f64>]) -> Result<Self> {
        let splines = columns.iter().map(|c| CubicSpline::new(knots, c)).collect::<Result<_>>()?;
        Ok(SplineBundle { splines })
    }

    pub fn components(&self) -> usize {
        self.splines.len()
    }

    pub fn domain(&self) -> (f64, f64) {
        self.splines[0].domain()
    }

    /// Values of every component at `x`.
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        let Some(first) = self.splines.first() else { return };
        let i = first.segment(x);
        for (o, s) in out.iter_mut().zip(&self.splines) {
            *o = s.eval_in(i, x).0;
        }
    }
}
