//! Symmetric banded storage with the upper band kept row by row.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BandedSym {
    n: usize,
    halfwidth: usize,
    /// Row `i` holds entries `(i, i..=i+halfwidth)`.
    data: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(n: usize, halfwidth: usize) -> Self {
        BandedSym {
            n,
            halfwidth,
            data: vec![0.0; n * (halfwidth + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn halfwidth(&self) -> usize {
        self.halfwidth
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        (j - i <= self.halfwidth && j < self.n).then(|| i * (self.halfwidth + 1) + (j - i))
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Adds `v` to `(i, j)` (and thereby `(j, i)`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        let s = self
            .slot(i, j)
            .ok_or_else(|| Error::arg(format!("entry ({i}, {j}) outside the band of half-width {}", self.halfwidth)))?;
        self.data[s] += v;
        Ok(())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.data[i * (self.halfwidth + 1)]).collect()
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let w = self.halfwidth + 1;
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let row = &self.data[i * w..(i + 1) * w];
            let mut acc = row[0] * x[i];
            let xi = x[i];
            for (k, a) in row.iter().enumerate().skip(1) {
                let j = i + k;
                if j >= self.n {
                    break;
                }
                acc += a * x[j];
                y[j] += a * xi;
            }
            y[i] += acc;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Banded Cholesky factor `A = L L^T`.
    pub fn cholesky(&self) -> Result<BandedCholesky> {
        let (n, p) = (self.n, self.halfwidth);
        // l[i][k] = L(i, i - p + k) for k in 0..=p
        let mut l = vec![0.0; n * (p + 1)];
        let at = |i: usize, j: usize| i * (p + 1) + (j + p - i);
        for i in 0..n {
            let lo = i.saturating_sub(p);
            for j in lo..=i {
                let mut s = self.get(i, j);
                for k in lo.max(j.saturating_sub(p))..j {
                    s -= l[at(i, k)] * l[at(j, k)];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::Singular(format!("matrix is not positive definite at row {i}")));
                    }
                    l[at(i, i)] = s.sqrt();
                } else {
                    l[at(i, j)] = s / l[at(j, j)];
                }
            }
        }
        Ok(BandedCholesky { n, halfwidth: p, l })
    }
}

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    halfwidth: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.l[i * (self.halfwidth + 1) + (j + self.halfwidth - i)]
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, p) = (self.n, self.halfwidth);
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(p)..i {
                s -= self.at(i, k) * y[k];
            }
            y[i] = s / self.at(i, i);
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..(i + p + 1).min(n) {
                s -= self.at(k, i) * y[k];
            }
            y[i] = s / self.at(i, i);
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_spd(n: usize, p: usize, seed: &[f64]) -> BandedSym {
        let mut a = BandedSym::zeros(n, p);
        let mut k = 0;
        for i in 0..n {
            for j in i..(i + p + 1).min(n) {
                let v = seed[k % seed.len()];
                k += 1;
                a.add(i, j, if i == j { 2.0 * p as f64 + 1.0 + v.abs() } else { v }).unwrap();
            }
        }
        a
    }

    #[test]
    fn out_of_band_rejected() {
        let mut a = BandedSym::zeros(5, 1);
        assert!(a.add(0, 2, 1.0).is_err());
        a.add(3, 2, 1.5).unwrap();
        assert_eq!(a.get(2, 3), 1.5);
        assert_eq!(a.get(0, 4), 0.0);
    }

    proptest! {
        #[test]
        fn matvec_and_cholesky_match_dense(n in 1usize..30, p in 0usize..6, seed in prop::collection::vec(-1.0f64..1.0, 7), x in prop::collection::vec(-1.0f64..1.0, 30)) {
            let a = random_spd(n, p, &seed);
            let dense = a.to_dense();
            let x = nalgebra::DVector::from_column_slice(&x[..n]);
            let y = a.mul(x.as_slice());
            let yd = &dense * &x;
            for i in 0..n {
                prop_assert!((y[i] - yd[i]).abs() < 1e-12);
            }
            let sol = a.cholesky().unwrap().solve(yd.as_slice());
            for i in 0..n {
                prop_assert!((sol[i] - x[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn indefinite_fails() {
        let mut a = BandedSym::zeros(2, 1);
        a.add(0, 0, 1.0).unwrap();
        a.add(0, 1, 2.0).unwrap();
        a.add(1, 1, 1.0).unwrap();
        assert!(matches!(a.cholesky(), Err(Error::Singular(_))));
    }
}
