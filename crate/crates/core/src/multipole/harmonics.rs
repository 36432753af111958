//! Real regular solid harmonics as explicit Cartesian polynomials.
//!
//! `R_{l,m}` is the real combination of `r^l Y_{l,m}` built from
//! Condon-Shortley spherical harmonics. Relative to the phase-free real
//! harmonics this carries a factor `(-1)^m` for `m > 0` and `-1` for `m < 0`,
//! e.g. `R_{1,1} = -sqrt(3/4pi) x` and `R_{2,-2} = -sqrt(15/4pi) xy`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

/// Number of basis functions through order `l`.
pub const fn basis_len(order: usize) -> usize {
    (order + 1) * (order + 1)
}

/// 0-based basis index of `(l, m)`.
pub fn index_of(l: usize, m: i32) -> usize {
    ((l * l + l) as i32 + m) as usize
}

/// `(l, m)` of a 0-based basis index.
pub fn degree_order(index: usize) -> (usize, i32) {
    let l = (index as f64).sqrt().floor() as usize;
    let l = if (l + 1) * (l + 1) <= index { l + 1 } else { l };
    (l, index as i32 - (l * l + l) as i32)
}

/// Sparse polynomial in x, y, z.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Poly {
    terms: Vec<(f64, [u32; 3])>,
}

impl Poly {
    fn from_map(map: BTreeMap<[u32; 3], f64>) -> Self {
        Poly {
            terms: map.into_iter().filter(|(_, c)| *c != 0.0).map(|(e, c)| (c, e)).collect(),
        }
    }

    pub fn terms(&self) -> &[(f64, [u32; 3])] {
        &self.terms
    }

    pub fn eval(&self, p: &Vector3<f64>) -> f64 {
        self.terms
            .iter()
            .map(|(c, e)| c * p.x.powi(e[0] as i32) * p.y.powi(e[1] as i32) * p.z.powi(e[2] as i32))
            .sum()
    }

    pub fn diff(&self, axis: usize) -> Poly {
        let mut map = BTreeMap::new();
        for (c, e) in &self.terms {
            if e[axis] == 0 {
                continue;
            }
            let mut e2 = *e;
            e2[axis] -= 1;
            *map.entry(e2).or_insert(0.0) += c * e[axis] as f64;
        }
        Poly::from_map(map)
    }

    /// Value at the origin (constant term).
    pub fn constant(&self) -> f64 {
        self.terms
            .iter()
            .find(|(_, e)| *e == [0, 0, 0])
            .map_or(0.0, |(c, _)| *c)
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Coefficients `a_k` of `d^mu/dt^mu P_l(t) = sum a_k t^k`.
fn legendre_derivative(l: usize, mu: usize) -> Vec<f64> {
    // Rodrigues: P_l = 1/(2^l l!) d^l/dt^l (t^2 - 1)^l
    let mut poly = vec![0.0; 2 * l + 1];
    for k in 0..=l {
        let sign = if (l - k) % 2 == 0 { 1.0 } else { -1.0 };
        poly[2 * k] = sign * binomial(l, k);
    }
    for _ in 0..(l + mu) {
        poly = (1..poly.len()).map(|k| poly[k] * k as f64).collect();
        if poly.is_empty() {
            return vec![0.0];
        }
    }
    let scale = 1.0 / (2f64.powi(l as i32) * factorial(l));
    poly.iter().map(|c| c * scale).collect()
}

fn mul(a: &BTreeMap<[u32; 3], f64>, b: &BTreeMap<[u32; 3], f64>) -> BTreeMap<[u32; 3], f64> {
    let mut out = BTreeMap::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let e = [ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]];
            *out.entry(e).or_insert(0.0) += ca * cb;
        }
    }
    out
}

fn build(l: usize, m: i32) -> Poly {
    let mu = m.unsigned_abs() as usize;
    let norm = ((2 * l + 1) as f64 / (4.0 * PI) * factorial(l - mu) / factorial(l + mu)).sqrt();
    let a = legendre_derivative(l, mu);

    // real or imaginary part of (x + iy)^mu
    let mut azimuth = BTreeMap::new();
    for j in 0..=mu {
        // i^j contributes to the real part for even j, imaginary for odd j
        let keep = if m >= 0 { j % 2 == 0 } else { j % 2 == 1 };
        if !keep {
            continue;
        }
        let sign = if (j / 2) % 2 == 0 { 1.0 } else { -1.0 };
        azimuth.insert([(mu - j) as u32, j as u32, 0], sign * binomial(mu, j));
    }

    let r2: BTreeMap<[u32; 3], f64> = [([2, 0, 0], 1.0), ([0, 2, 0], 1.0), ([0, 0, 2], 1.0)]
        .into_iter()
        .collect();
    let mut polar = BTreeMap::new();
    for (k, ak) in a.iter().enumerate() {
        if *ak == 0.0 {
            continue;
        }
        let rest = l - mu - k;
        debug_assert!(rest % 2 == 0);
        let mut term: BTreeMap<[u32; 3], f64> = [([0, 0, k as u32], *ak)].into_iter().collect();
        for _ in 0..rest / 2 {
            term = mul(&term, &r2);
        }
        for (e, c) in term {
            *polar.entry(e).or_insert(0.0) += c;
        }
    }

    let phase = match m.cmp(&0) {
        std::cmp::Ordering::Equal => 1.0,
        std::cmp::Ordering::Greater => {
            let s = if mu % 2 == 0 { 1.0 } else { -1.0 };
            s * 2f64.sqrt()
        }
        std::cmp::Ordering::Less => -(2f64.sqrt()),
    };
    let mut out = mul(&polar, &azimuth);
    for c in out.values_mut() {
        *c *= phase * norm;
    }
    Poly::from_map(out)
}

struct Table {
    polys: Vec<Poly>,
    gradient: Vec<[Poly; 3]>,
    hessian: Vec<[[Poly; 3]; 3]>,
    third: Vec<[[[f64; 3]; 3]; 3]>,
}

fn table() -> &'static Table {
    static TABLE: OnceLock<Table> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = basis_len(MAX_ORDER);
        let polys: Vec<Poly> = (0..n)
            .map(|i| {
                let (l, m) = degree_order(i);
                build(l, m)
            })
            .collect();
        let gradient: Vec<[Poly; 3]> = polys
            .iter()
            .map(|p| [p.diff(0), p.diff(1), p.diff(2)])
            .collect();
        let hessian: Vec<[[Poly; 3]; 3]> = gradient
            .iter()
            .map(|g| std::array::from_fn(|a| std::array::from_fn(|b| g[a].diff(b))))
            .collect();
        let third = hessian
            .iter()
            .map(|h| {
                std::array::from_fn(|a| {
                    std::array::from_fn(|b| std::array::from_fn(|c| h[a][b].diff(c).constant()))
                })
            })
            .collect();
        Table {
            polys,
            gradient,
            hessian,
            third,
        }
    })
}

fn check(l: usize, m: i32) -> Result<usize> {
    if l > MAX_ORDER || m.unsigned_abs() as usize > l {
        return Err(Error::arg(format!(
            "solid harmonic (l={l}, m={m}) outside 0 <= l <= {MAX_ORDER}, |m| <= l"
        )));
    }
    Ok(index_of(l, m))
}

/// Polynomial for `R_{l,m}`.
pub fn polynomial(l: usize, m: i32) -> Result<&'static Poly> {
    Ok(&table().polys[check(l, m)?])
}

pub fn solid_harmonic_eval(l: usize, m: i32, point: &Vector3<f64>) -> Result<f64> {
    Ok(table().polys[check(l, m)?].eval(point))
}

/// Value of basis function `index` at `point`.
pub fn eval_index(index: usize, point: &Vector3<f64>) -> f64 {
    table().polys[index].eval(point)
}

pub fn gradient_index(index: usize, point: &Vector3<f64>) -> Vector3<f64> {
    let g = &table().gradient[index];
    Vector3::new(g[0].eval(point), g[1].eval(point), g[2].eval(point))
}

pub fn hessian_index(index: usize, point: &Vector3<f64>) -> Matrix3<f64> {
    let h = &table().hessian[index];
    Matrix3::from_fn(|a, b| h[a][b].eval(point))
}

/// Constant third derivatives `d_a d_b d_c R_i`, nonzero only for `l = 3`
/// at the origin (and exact everywhere for `l <= 3`).
pub fn third_derivative_index(index: usize) -> &'static [[[f64; 3]; 3]; 3] {
    &table().third[index]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn index_round_trip() {
        for i in 0..basis_len(MAX_ORDER) {
            let (l, m) = degree_order(i);
            assert_eq!(index_of(l, m), i);
        }
        assert_eq!(degree_order(1), (1, -1));
        assert_eq!(degree_order(3), (1, 1));
        assert_eq!(degree_order(6), (2, 0));
        assert_eq!(degree_order(24), (4, 4));
    }

    #[test]
    fn low_order_closed_forms() {
        let c1 = (3.0 / (4.0 * PI)).sqrt();
        let c2 = (15.0 / (4.0 * PI)).sqrt();
        let q = p(0.3, -0.7, 1.1);
        let (x, y, z) = (q.x, q.y, q.z);
        let cases: [(usize, i32, f64); 9] = [
            (0, 0, 1.0 / (4.0 * PI).sqrt()),
            (1, -1, -c1 * y),
            (1, 0, c1 * z),
            (1, 1, -c1 * x),
            (2, -2, -c2 * x * y),
            (2, -1, -c2 * y * z),
            (2, 0, 0.25 * (5.0 / PI).sqrt() * (2.0 * z * z - x * x - y * y)),
            (2, 1, -c2 * x * z),
            (2, 2, 0.5 * c2 * (x * x - y * y)),
        ];
        for (l, m, expected) in cases {
            assert_relative_eq!(solid_harmonic_eval(l, m, &q).unwrap(), expected, epsilon = 1e-14);
        }
    }

    #[test]
    fn examples() {
        let v = solid_harmonic_eval(1, 0, &p(0.0, 0.0, 2.0)).unwrap();
        assert_relative_eq!(v, 2.0 * (3.0 / (4.0 * PI)).sqrt(), epsilon = 1e-15);
        let v = solid_harmonic_eval(2, -2, &p(1.0, 1.0, 0.0)).unwrap();
        assert_relative_eq!(v, -(15.0 / (4.0 * PI)).sqrt(), epsilon = 1e-15);
        assert!(solid_harmonic_eval(5, 0, &p(1.0, 0.0, 0.0)).is_err());
        assert!(solid_harmonic_eval(2, 3, &p(1.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn l3_and_l4_spot_values() {
        // r^l Y_{l,0} on the z axis equals sqrt((2l+1)/4pi) z^l
        for l in 0..=MAX_ORDER {
            let v = solid_harmonic_eval(l, 0, &p(0.0, 0.0, 1.3)).unwrap();
            let expected = ((2 * l + 1) as f64 / (4.0 * PI)).sqrt() * 1.3f64.powi(l as i32);
            assert_relative_eq!(v, expected, epsilon = 1e-13);
        }
        // sectoral l=3 term: R_{3,3} = -sqrt(35/32pi) (x^3 - 3xy^2)
        let q = p(0.4, 0.9, -0.2);
        let expected = -(35.0 / (32.0 * PI)).sqrt() * (q.x.powi(3) - 3.0 * q.x * q.y * q.y);
        assert_relative_eq!(solid_harmonic_eval(3, 3, &q).unwrap(), expected, epsilon = 1e-13);
    }

    #[test]
    fn harmonic_and_homogeneous() {
        let q = p(0.37, -0.52, 0.81);
        for i in 0..basis_len(MAX_ORDER) {
            let (l, _) = degree_order(i);
            let h = hessian_index(i, &q);
            assert!(h.trace().abs() < 1e-12, "index {i} not harmonic");
            let v = eval_index(i, &q);
            let scaled = eval_index(i, &(q * 2.0));
            assert_relative_eq!(scaled, v * 2f64.powi(l as i32), epsilon = 1e-12);
            if l >= 1 {
                assert_eq!(eval_index(i, &Vector3::zeros()), 0.0);
            }
        }
    }

    #[test]
    fn orthonormal_on_sphere() {
        // Monte-Carlo free check: quadrature over a fine Fibonacci grid
        let k = 20000;
        let golden = PI * (3.0 - 5f64.sqrt());
        let pts: Vec<Vector3<f64>> = (0..k)
            .map(|j| {
                let z = 1.0 - (2.0 * j as f64 + 1.0) / k as f64;
                let r = (1.0 - z * z).sqrt();
                let phi = j as f64 * golden;
                p(r * phi.cos(), r * phi.sin(), z)
            })
            .collect();
        let n = basis_len(MAX_ORDER);
        for a in 0..n {
            for b in a..n {
                let s: f64 = pts.iter().map(|q| eval_index(a, q) * eval_index(b, q)).sum::<f64>()
                    * 4.0
                    * PI
                    / k as f64;
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((s - expected).abs() < 2e-3, "({a},{b}) -> {s}");
            }
        }
    }

    #[test]
    fn third_derivatives_only_for_l3() {
        for i in 0..basis_len(MAX_ORDER) {
            let (l, _) = degree_order(i);
            let t = third_derivative_index(i);
            let any = t.iter().flatten().flatten().any(|v| *v != 0.0);
            assert_eq!(any, l == 3, "index {i}");
        }
    }
}
