//! Fields, Hessians, ponderomotive quantities and secular modes from
//! expansion coefficients. All vectors and matrices are in the local frame
//! of the support point.

use std::f64::consts::PI;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multipole::harmonics::{basis_len, third_derivative_index};
use crate::multipole::{ExpansionSet, LocalFrame};
use crate::potentials::TrapModel;

fn coeff(c: &[f64], i: usize) -> f64 {
    c.get(i).copied().unwrap_or(0.0)
}

/// Unit field `e = -grad phi` at the expansion origin, from the `l = 1`
/// coefficients.
pub fn field_from_coeffs(c: &[f64]) -> Vector3<f64> {
    let s = (3.0 / (4.0 * PI)).sqrt();
    Vector3::new(coeff(c, 3), coeff(c, 1), -coeff(c, 2)) * s
}

/// Unit Hessian of the potential at the expansion origin, from the `l = 2`
/// coefficients.
pub fn hessian_from_coeffs(c: &[f64]) -> Matrix3<f64> {
    let s = -(15.0 / (4.0 * PI)).sqrt();
    let r3 = 3f64.sqrt();
    let (c5, c6, c7, c8, c9) = (coeff(c, 4), coeff(c, 5), coeff(c, 6), coeff(c, 7), coeff(c, 8));
    Matrix3::new(
        c7 / r3 - c9, c5, c8,
        c5, c7 / r3 + c9, c6,
        c8, c6, -2.0 * c7 / r3,
    ) * s
}

/// `(e . grad) h`: directional derivative of the unit Hessian along the unit
/// field, from the `l = 1` and `l = 3` coefficients.
fn field_derivative_of_hessian(c: &[f64]) -> Matrix3<f64> {
    let e = field_from_coeffs(c);
    let mut out = Matrix3::zeros();
    for i in basis_len(2)..basis_len(3) {
        let ci = coeff(c, i);
        if ci == 0.0 {
            continue;
        }
        let t = third_derivative_index(i);
        for a in 0..3 {
            for b in 0..3 {
                let d: f64 = (0..3).map(|s| e[s] * t[s][a][b]).sum();
                out[(a, b)] += ci * d;
            }
        }
    }
    out
}

/// Ponderomotive effective field `E_rf = alpha h_rf e_rf` in V/m.
pub fn ponderomotive_field(c_rf: &[f64], alpha_rf: f64) -> Vector3<f64> {
    hessian_from_coeffs(c_rf) * field_from_coeffs(c_rf) * alpha_rf
}

/// Ponderomotive Hessian split into `part_a = alpha h^2` and
/// `part_b = -alpha (e . grad) h`; their sum is the Hessian of
/// `alpha/2 |grad phi_rf|^2`.
pub fn ponderomotive_hessian(c_rf: &[f64], alpha_rf: f64) -> Result<(Matrix3<f64>, Matrix3<f64>)> {
    if c_rf.len() < basis_len(3) {
        return Err(Error::arg(format!(
            "ponderomotive Hessian needs rf coefficients through l=3 ({} values), got {}",
            basis_len(3),
            c_rf.len()
        )));
    }
    let h = hessian_from_coeffs(c_rf);
    let a = h * h * alpha_rf;
    let b = field_derivative_of_hessian(c_rf) * (-alpha_rf);
    Ok((symmetrize(&a), symmetrize(&b)))
}

/// Part a only, for expansions truncated at `l = 2` (rf null).
pub fn ponderomotive_hessian_part_a(c_rf: &[f64], alpha_rf: f64) -> Matrix3<f64> {
    let h = hessian_from_coeffs(c_rf);
    symmetrize(&(h * h * alpha_rf))
}

fn symmetrize(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

/// Confinement data at one support point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfinementPoint {
    pub e_dc: Vec<Vector3<f64>>,
    pub h_dc: Vec<Matrix3<f64>>,
    pub e_rf: Vector3<f64>,
    pub h_rf: Matrix3<f64>,
    /// Ponderomotive effective field E_rf in V/m.
    pub field_rf: Vector3<f64>,
    pub hessian_rf_a: Matrix3<f64>,
    pub hessian_rf_b: Matrix3<f64>,
    pub frame: LocalFrame,
}

impl ConfinementPoint {
    pub fn from_expansions(set: &ExpansionSet, w: usize, t: usize, alpha_rf: f64) -> Result<Self> {
        let rf = set.rf_coeffs(w, t);
        let (a, b) = if rf.len() >= basis_len(3) {
            ponderomotive_hessian(rf, alpha_rf)?
        } else {
            (ponderomotive_hessian_part_a(rf, alpha_rf), Matrix3::zeros())
        };
        Ok(ConfinementPoint {
            e_dc: (0..set.electrodes).map(|n| field_from_coeffs(set.coeffs(w, t, n))).collect(),
            h_dc: (0..set.electrodes).map(|n| hessian_from_coeffs(set.coeffs(w, t, n))).collect(),
            e_rf: field_from_coeffs(rf),
            h_rf: hessian_from_coeffs(rf),
            field_rf: ponderomotive_field(rf, alpha_rf),
            hessian_rf_a: a,
            hessian_rf_b: b,
            frame: *set.frame(w, t),
        })
    }

    pub fn hessian_rf(&self) -> Matrix3<f64> {
        self.hessian_rf_a + self.hessian_rf_b
    }

    /// Total effective field and Hessian for dc voltages `voltages`.
    pub fn total(&self, voltages: &[f64]) -> Result<(Vector3<f64>, Matrix3<f64>)> {
        total_field_and_hessian(self, voltages)
    }
}

pub fn total_field_and_hessian(point: &ConfinementPoint, voltages: &[f64]) -> Result<(Vector3<f64>, Matrix3<f64>)> {
    if voltages.len() != point.e_dc.len() {
        return Err(Error::arg(format!(
            "{} voltages for {} dc electrodes",
            voltages.len(),
            point.e_dc.len()
        )));
    }
    let mut e = point.field_rf;
    let mut h = point.hessian_rf();
    for ((v, en), hn) in voltages.iter().zip(&point.e_dc).zip(&point.h_dc) {
        e += en * *v;
        h += hn * *v;
    }
    Ok((e, h))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecularModes {
    /// Angular secular frequencies; 0 for unstable modes.
    pub omegas: [f64; 3],
    pub eigenvalues: [f64; 3],
    /// Mode axes as columns.
    pub axes: Matrix3<f64>,
    pub stable: [bool; 3],
}

impl SecularModes {
    pub fn axis(&self, k: usize) -> Vector3<f64> {
        self.axes.column(k).into_owned()
    }

    /// Reorders modes so that mode `k` overlaps best with column `k` of
    /// `reference`, flipping signs to keep positive overlap.
    pub fn matched_to(&self, reference: &Matrix3<f64>) -> SecularModes {
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let overlap = |k: usize, j: usize| self.axis(j).dot(&reference.column(k)).abs();
        let best = perms
            .iter()
            .max_by(|p, q| {
                let sp: f64 = (0..3).map(|k| overlap(k, p[k])).sum();
                let sq: f64 = (0..3).map(|k| overlap(k, q[k])).sum();
                sp.total_cmp(&sq)
            })
            .unwrap();
        let mut out = self.clone();
        for k in 0..3 {
            let j = best[k];
            let mut axis = self.axis(j);
            if axis.dot(&reference.column(k)) < 0.0 {
                axis = -axis;
            }
            out.axes.set_column(k, &axis);
            out.omegas[k] = self.omegas[j];
            out.eigenvalues[k] = self.eigenvalues[j];
            out.stable[k] = self.stable[j];
        }
        out
    }
}

/// Eigen-decomposition of the total Hessian. Modes are sorted by ascending
/// eigenvalue; each axis has its first significant component positive.
pub fn secular_modes(h: &Matrix3<f64>, charge: f64, mass: f64) -> Result<SecularModes> {
    let scale = h.amax();
    if (h - h.transpose()).amax() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::arg("Hessian is not symmetric"));
    }
    let eig = SymmetricEigen::new(symmetrize(h));
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut axes = Matrix3::zeros();
    let mut eigenvalues = [0.0; 3];
    let mut omegas = [0.0; 3];
    let mut stable = [false; 3];
    for (k, &j) in order.iter().enumerate() {
        let mut axis = eig.eigenvectors.column(j).into_owned();
        if let Some(first) = axis.iter().find(|v| v.abs() > 1e-9) {
            if *first < 0.0 {
                axis = -axis;
            }
        }
        axes.set_column(k, &axis);
        let lambda = eig.eigenvalues[j];
        eigenvalues[k] = lambda;
        let w2 = lambda * charge / mass;
        stable[k] = w2 > 0.0;
        omegas[k] = if stable[k] { w2.sqrt() } else { 0.0 };
    }
    Ok(SecularModes {
        omegas,
        eigenvalues,
        axes,
        stable,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mathieu {
    pub a: f64,
    pub q: f64,
    pub omega: f64,
}

/// Mathieu parameters and secular frequency for the one-dimensional
/// potentials `phi = c u^2 / r^2`.
pub fn mathieu_parameters(c_dc: f64, c_rf: f64, r_tilde: f64, trap: &TrapModel, v_dc: f64) -> Result<Mathieu> {
    if !(r_tilde > 0.0) {
        return Err(Error::arg(format!("effective electrode distance must be positive, got {r_tilde}")));
    }
    let (q_ion, m, big_omega) = (trap.charge, trap.mass, trap.rf_frequency);
    let denom = m * r_tilde * r_tilde * big_omega * big_omega;
    let a = 8.0 * q_ion * v_dc * c_dc / denom;
    let q = 4.0 * q_ion * trap.rf_amplitude * c_rf / denom;
    let w2 = big_omega * big_omega / 4.0 * (a + q * q / 2.0);
    Ok(Mathieu {
        a,
        q,
        omega: w2.max(0.0).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multipole::harmonics::{gradient_index, hessian_index};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit(i: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; n];
        c[i] = 1.0;
        c
    }

    #[test]
    fn field_examples() {
        let e = field_from_coeffs(&unit(2, 9));
        assert_relative_eq!(e, Vector3::new(0.0, 0.0, -(3.0 / (4.0 * PI)).sqrt()));
        assert_eq!(field_from_coeffs(&[0.0; 9]), Vector3::zeros());
    }

    #[test]
    fn hessian_examples() {
        let h = hessian_from_coeffs(&unit(6, 9));
        let s = -(15.0 / (4.0 * PI)).sqrt() / 3f64.sqrt();
        assert_relative_eq!(h, Matrix3::from_diagonal(&Vector3::new(s, s, -2.0 * s)), epsilon = 1e-15);
        assert_eq!(hessian_from_coeffs(&[0.0; 9]), Matrix3::zeros());
    }

    #[test]
    fn formulas_agree_with_harmonic_derivatives() {
        let c: Vec<f64> = (0..16).map(|i| ((i * 5 % 7) as f64 - 3.0) / 2.0).collect();
        let o = Vector3::zeros();
        let grad: Vector3<f64> = (0..16).map(|i| gradient_index(i, &o) * c[i]).sum();
        let hess: Matrix3<f64> = (0..16).map(|i| hessian_index(i, &o) * c[i]).sum();
        assert_relative_eq!(field_from_coeffs(&c), -grad, epsilon = 1e-14);
        assert_relative_eq!(hessian_from_coeffs(&c), hess, epsilon = 1e-14);
    }

    #[test]
    fn rf_null_cases() {
        let mut c = vec![0.0; 16];
        for (i, v) in c.iter_mut().enumerate().skip(4) {
            *v = (i as f64).sin();
        }
        assert_eq!(ponderomotive_field(&c, 2.0), Vector3::zeros());
        let (_, b) = ponderomotive_hessian(&c, 2.0).unwrap();
        assert_eq!(b, Matrix3::zeros());
        assert!(ponderomotive_hessian(&c[..9], 1.0).is_err());
    }

    #[test]
    fn part_a_for_single_c5() {
        let (a, _) = ponderomotive_hessian(&unit(4, 16), 1.5).unwrap();
        let expected = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0)) * (1.5 * 15.0 / (4.0 * PI));
        assert_relative_eq!(a, expected, epsilon = 1e-14);
    }

    #[test]
    fn field_is_zero_for_c3_c5() {
        // phi = a z + b xy has |grad phi|^2 = a^2 + b^2 (x^2 + y^2): no force at the origin
        let mut c = vec![0.0; 16];
        c[2] = 1.0;
        c[4] = 1.0;
        assert!(ponderomotive_field(&c, 1.0).norm() < 1e-15);
    }

    /// Pseudopotential `alpha/2 |grad phi|^2` of the polynomial with
    /// coefficients `c`, at `r`.
    fn pseudo(c: &[f64], alpha: f64, r: &Vector3<f64>) -> f64 {
        let g: Vector3<f64> = c.iter().enumerate().map(|(i, ci)| gradient_index(i, r) * *ci).sum();
        0.5 * alpha * g.norm_squared()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn identity_and_finite_differences(c in prop::collection::vec(-1.0f64..1.0, 16), alpha in 0.1f64..3.0) {
            let e = field_from_coeffs(&c);
            let h = hessian_from_coeffs(&c);
            let erf = ponderomotive_field(&c, alpha);
            prop_assert!((erf - h * e * alpha).amax() <= 1e-13 * (1.0 + erf.amax()));

            let (a, b) = ponderomotive_hessian(&c, alpha).unwrap();
            let eig = SymmetricEigen::new(a).eigenvalues;
            prop_assert!(eig.min() >= -1e-12 * a.norm());

            let step = 1e-4;
            let mut fd = Matrix3::zeros();
            let mut grad = Vector3::zeros();
            for i in 0..3 {
                let mut di = Vector3::zeros();
                di[i] = step;
                grad[i] = (pseudo(&c, alpha, &di) - pseudo(&c, alpha, &-di)) / (2.0 * step);
                for j in 0..3 {
                    let mut dj = Vector3::zeros();
                    dj[j] = step;
                    fd[(i, j)] = (pseudo(&c, alpha, &(di + dj)) - pseudo(&c, alpha, &(di - dj))
                        - pseudo(&c, alpha, &(dj - di)) + pseudo(&c, alpha, &(-di - dj)))
                        / (4.0 * step * step);
                }
            }
            let total = a + b;
            prop_assert!((total - fd).amax() <= 1e-6 * total.amax().max(1e-3), "{total} vs {fd}");
            prop_assert!((-grad - erf).amax() <= 1e-6 * erf.amax().max(1e-3));
        }

        #[test]
        fn modes_rotate_with_hessian(d in prop::collection::vec(0.5f64..5.0, 3),
                                     ax in -3.0f64..3.0, ay in -3.0f64..3.0, az in -3.0f64..3.0) {
            let mut ds = d.clone();
            ds.sort_by(|a, b| a.total_cmp(b));
            prop_assume!(ds[1] - ds[0] > 1e-3 && ds[2] - ds[1] > 1e-3);
            let rot = nalgebra::Rotation3::from_scaled_axis(Vector3::new(ax, ay, az)).into_inner();
            let h = Matrix3::from_diagonal(&Vector3::new(d[0], d[1], d[2]));
            let base = secular_modes(&h, 1.0, 1.0).unwrap();
            let turned = secular_modes(&(rot * h * rot.transpose()), 1.0, 1.0).unwrap();
            for k in 0..3 {
                prop_assert!((base.omegas[k] - turned.omegas[k]).abs() < 1e-12 * base.omegas[k]);
                let expected = rot * base.axis(k);
                prop_assert!((expected.dot(&turned.axis(k)).abs() - 1.0).abs() < 1e-10);
            }
            prop_assert!((turned.axes.transpose() * turned.axes - Matrix3::identity()).amax() < 1e-12);
        }
    }

    #[test]
    fn diagonal_secular_frequencies() {
        let (q, m) = (1.602e-19, 6.6e-26);
        let w = [2.0 * PI * 1.57e6, 2.0 * PI * 3.86e6, 2.0 * PI * 4.73e6];
        let h = Matrix3::from_diagonal(&Vector3::new(w[2] * w[2], w[0] * w[0], w[1] * w[1])) * (m / q);
        let modes = secular_modes(&h, q, m).unwrap();
        for k in 0..3 {
            assert_relative_eq!(modes.omegas[k], w[k], max_relative = 1e-14);
            assert!(modes.stable[k]);
        }
        assert_eq!(modes.axis(0), Vector3::y());
        let unstable = secular_modes(&Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, 2.0)), 1.0, 1.0).unwrap();
        assert!(!unstable.stable[0] && unstable.stable[1]);
        let asym = Matrix3::new(1.0, 0.5, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(secular_modes(&asym, 1.0, 1.0).is_err());
    }

    #[test]
    fn mode_matching_follows_reference() {
        let modes = secular_modes(&Matrix3::from_diagonal(&Vector3::new(3.0, 1.0, 2.0)), 1.0, 1.0).unwrap();
        let matched = modes.matched_to(&Matrix3::identity());
        assert_eq!(matched.eigenvalues, [3.0, 1.0, 2.0]);
        assert_eq!(matched.axes, Matrix3::identity());
    }

    fn quadrupole_trap(v_rf: f64) -> TrapModel {
        use crate::potentials::ElectrodeModel;
        TrapModel {
            dc: vec![ElectrodeModel::multipole("dc", Vector3::zeros(), &[(2, 0, 1.0)])],
            rf: ElectrodeModel::multipole("rf", Vector3::zeros(), &[(2, 2, 1.0)]),
            rf_amplitude: v_rf,
            rf_frequency: 2.0 * PI * 29.5e6,
            charge: 1.602_176_634e-19,
            mass: 39.962_591 * 1.660_539_066_60e-27,
            length_scale: 224e-6,
            electrode_locations: vec![],
        }
    }

    #[test]
    fn mathieu_limits() {
        let trap = quadrupole_trap(200.0);
        let m = mathieu_parameters(0.0, 0.6, 1e-3, &trap, 0.0).unwrap();
        assert_eq!(m.a, 0.0);
        assert_relative_eq!(m.omega, trap.rf_frequency * m.q / (2.0 * 2f64.sqrt()), max_relative = 1e-14);
        let trap0 = quadrupole_trap(0.0);
        let m = mathieu_parameters(0.4, 0.6, 1e-3, &trap0, 3.0).unwrap();
        assert_eq!(m.q, 0.0);
        assert_relative_eq!(m.omega, trap0.rf_frequency * m.a.sqrt() / 2.0, max_relative = 1e-14);
        assert!(mathieu_parameters(1.0, 1.0, 0.0, &trap, 1.0).is_err());
    }

    #[test]
    fn mathieu_matches_secular_modes() {
        // phi_dc = c_dc x^2 / r^2 + ..., phi_rf = c_rf (x^2 - y^2) / r^2 along x
        let r = 224e-6;
        let mut trap = quadrupole_trap(1.0);
        let denom = trap.mass * r * r * trap.rf_frequency.powi(2);
        let (c_rf, c_dc) = (0.5, -0.25);
        trap.rf_amplitude = 0.1 * denom / (4.0 * trap.charge * c_rf);
        let v_dc = 0.002 * denom / (8.0 * trap.charge * c_dc);
        let m = mathieu_parameters(c_dc, c_rf, r, &trap, v_dc).unwrap();
        assert_relative_eq!(m.a, 0.002, max_relative = 1e-12);
        assert_relative_eq!(m.q, 0.1, max_relative = 1e-12);

        // R_{2,2} = sqrt(15/16pi)(x^2 - y^2), R_{2,0} = sqrt(5/16pi)(2z^2 - x^2 - y^2)
        let k22 = (15.0 / (16.0 * PI)).sqrt();
        let k20 = (5.0 / (16.0 * PI)).sqrt();
        let mut c_rf_vec = vec![0.0; 16];
        c_rf_vec[8] = c_rf / (r * r * k22);
        let mut c_dc_vec = vec![0.0; 9];
        c_dc_vec[6] = -c_dc / (r * r * k20);
        let point = ConfinementPoint {
            e_dc: vec![field_from_coeffs(&c_dc_vec)],
            h_dc: vec![hessian_from_coeffs(&c_dc_vec)],
            e_rf: field_from_coeffs(&c_rf_vec),
            h_rf: hessian_from_coeffs(&c_rf_vec),
            field_rf: ponderomotive_field(&c_rf_vec, trap.alpha_rf()),
            hessian_rf_a: ponderomotive_hessian(&c_rf_vec, trap.alpha_rf()).unwrap().0,
            hessian_rf_b: Matrix3::zeros(),
            frame: LocalFrame::axis_aligned(Vector3::zeros(), 1e-6),
        };
        let (_, h) = point.total(&[v_dc]).unwrap();
        let omega_x = (h[(0, 0)] * trap.charge / trap.mass).sqrt();
        assert_relative_eq!(omega_x, m.omega, max_relative = 1e-10);
        let modes = secular_modes(&h, trap.charge, trap.mass).unwrap();
        assert!(modes.omegas.iter().any(|w| ((w - m.omega) / m.omega).abs() < 1e-10));
    }

    #[test]
    fn total_field_superposition() {
        let point = ConfinementPoint {
            e_dc: vec![Vector3::new(0.0, 0.0, 1.0), Vector3::new(0.0, 0.0, -1.0)],
            h_dc: vec![Matrix3::zeros(), Matrix3::zeros()],
            e_rf: Vector3::zeros(),
            h_rf: Matrix3::identity(),
            field_rf: Vector3::zeros(),
            hessian_rf_a: Matrix3::identity(),
            hessian_rf_b: Matrix3::zeros(),
            frame: LocalFrame::axis_aligned(Vector3::zeros(), 1.0),
        };
        let (e, h) = point.total(&[1.0, 1.0]).unwrap();
        assert_eq!(e, Vector3::zeros());
        assert_eq!(h, Matrix3::identity());
        assert!(point.total(&[1.0]).is_err());
    }
}
