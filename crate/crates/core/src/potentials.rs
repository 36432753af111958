//! Unit potentials of trap electrodes from analytic backends.
//!
//! Every electrode is a sum of parts. A part is a multipole sum, a set of
//! point charges, or a set of rectangular patches held at unit voltage in an
//! otherwise grounded plane (gapless plane approximation).

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multipole::harmonics::{self, index_of};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultipoleTerm {
    pub l: usize,
    pub m: i32,
    /// Coefficient in 1/m^l.
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCharge {
    pub position: Vector3<f64>,
    pub weight: f64,
}

/// Rectangle `origin + u*u_axis + v*v_axis` for `u` in `u_range`, `v` in
/// `v_range`. The axes must be orthonormal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub origin: Vector3<f64>,
    pub u_axis: Vector3<f64>,
    pub v_axis: Vector3<f64>,
    pub u_range: [f64; 2],
    pub v_range: [f64; 2],
}

impl Rectangle {
    /// Axis-aligned rectangle in a plane `z = height` (x and y extents given).
    pub fn horizontal(x: [f64; 2], y: [f64; 2], height: f64) -> Self {
        Rectangle {
            origin: Vector3::new(0.0, 0.0, height),
            u_axis: Vector3::x(),
            v_axis: Vector3::y(),
            u_range: x,
            v_range: y,
        }
    }

    pub fn center(&self) -> Vector3<f64> {
        self.origin
            + self.u_axis * 0.5 * (self.u_range[0] + self.u_range[1])
            + self.v_axis * 0.5 * (self.v_range[0] + self.v_range[1])
    }

    pub fn area(&self) -> f64 {
        (self.u_range[1] - self.u_range[0]).abs() * (self.v_range[1] - self.v_range[0]).abs()
    }

    fn potential(&self, p: &Vector3<f64>) -> f64 {
        let d = p - self.origin;
        let u = d.dot(&self.u_axis);
        let v = d.dot(&self.v_axis);
        let w = d.dot(&self.u_axis.cross(&self.v_axis)).abs();
        let corner = |a: f64, b: f64| {
            let (du, dv) = (a - u, b - v);
            let r = (du * du + dv * dv + w * w).sqrt();
            (du * dv).atan2(w * r)
        };
        let [u1, u2] = self.u_range;
        let [v1, v2] = self.v_range;
        (corner(u2, v2) - corner(u1, v2) - corner(u2, v1) + corner(u1, v1)) / (2.0 * PI)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Source {
    MultipoleSum {
        #[serde(default = "Vector3::zeros")]
        center: Vector3<f64>,
        terms: Vec<MultipoleTerm>,
    },
    PointChargeSet {
        charges: Vec<PointCharge>,
        /// Minimum allowed distance between an evaluation point and a charge.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        exclusion_radius: Option<f64>,
    },
    PlanarRectangleSet {
        rectangles: Vec<Rectangle>,
        #[serde(default = "one")]
        weight: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Source {
    pub fn kind(&self) -> &'static str {
        match self {
            Source::MultipoleSum { .. } => "multipole-sum",
            Source::PointChargeSet { .. } => "point-charge-set",
            Source::PlanarRectangleSet { .. } => "planar-rectangle-set",
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Source::MultipoleSum { terms, .. } => {
                for t in terms {
                    harmonics::polynomial(t.l, t.m)?;
                    if !t.c.is_finite() {
                        return Err(Error::arg("multipole coefficient is not finite"));
                    }
                }
            }
            Source::PointChargeSet {
                charges,
                exclusion_radius,
            } => {
                if charges.iter().any(|c| !c.weight.is_finite() || !finite(&c.position)) {
                    return Err(Error::arg("point charge with non-finite position or weight"));
                }
                if exclusion_radius.is_some_and(|r| !(r >= 0.0)) {
                    return Err(Error::arg("exclusion radius must be nonnegative"));
                }
            }
            Source::PlanarRectangleSet { rectangles, weight } => {
                if !weight.is_finite() {
                    return Err(Error::arg("rectangle weight is not finite"));
                }
                for r in rectangles {
                    let orth = r.u_axis.dot(&r.v_axis).abs();
                    let unit = (r.u_axis.norm() - 1.0).abs().max((r.v_axis.norm() - 1.0).abs());
                    if orth > 1e-9 || unit > 1e-9 {
                        return Err(Error::arg("rectangle axes must be orthonormal"));
                    }
                }
            }
        }
        Ok(())
    }

    fn eval(&self, p: &Vector3<f64>) -> Result<f64> {
        match self {
            Source::MultipoleSum { center, terms } => {
                let d = p - center;
                Ok(terms
                    .iter()
                    .map(|t| t.c * harmonics::eval_index(index_of(t.l, t.m), &d))
                    .sum())
            }
            Source::PointChargeSet {
                charges,
                exclusion_radius,
            } => {
                let radius = exclusion_radius.unwrap_or(0.0);
                let mut sum = 0.0;
                for (k, c) in charges.iter().enumerate() {
                    let dist = (p - c.position).norm();
                    if dist <= radius || dist == 0.0 {
                        return Err(Error::Exclusion {
                            point: [p.x, p.y, p.z],
                            charge: k,
                            distance: dist,
                            radius,
                        });
                    }
                    sum += c.weight / (4.0 * PI * dist);
                }
                Ok(sum)
            }
            Source::PlanarRectangleSet { rectangles, weight } => {
                Ok(weight * rectangles.iter().map(|r| r.potential(p)).sum::<f64>())
            }
        }
    }

    fn gradient_hessian(&self, p: &Vector3<f64>) -> Result<(Vector3<f64>, Matrix3<f64>)> {
        match self {
            Source::MultipoleSum { center, terms } => {
                let d = p - center;
                let mut g = Vector3::zeros();
                let mut h = Matrix3::zeros();
                for t in terms {
                    let i = index_of(t.l, t.m);
                    g += harmonics::gradient_index(i, &d) * t.c;
                    h += harmonics::hessian_index(i, &d) * t.c;
                }
                Ok((g, h))
            }
            Source::PointChargeSet { charges, .. } => {
                // exclusion is checked by a value evaluation first
                self.eval(p)?;
                let mut g = Vector3::zeros();
                let mut h = Matrix3::zeros();
                for c in charges {
                    let d = p - c.position;
                    let r2 = d.norm_squared();
                    let r = r2.sqrt();
                    let s = c.weight / (4.0 * PI);
                    g -= d * (s / (r2 * r));
                    h += (d * d.transpose() * 3.0 - Matrix3::identity() * r2) * (s / (r2 * r2 * r));
                }
                Ok((g, h))
            }
            Source::PlanarRectangleSet { .. } => Err(Error::Unsupported {
                kind: "planar-rectangle-set",
            }),
        }
    }

    fn scaled(&self, factor: f64) -> Source {
        match self {
            Source::MultipoleSum { center, terms } => Source::MultipoleSum {
                center: *center,
                terms: terms
                    .iter()
                    .map(|t| MultipoleTerm { c: t.c * factor, ..t.clone() })
                    .collect(),
            },
            Source::PointChargeSet {
                charges,
                exclusion_radius,
            } => Source::PointChargeSet {
                charges: charges
                    .iter()
                    .map(|c| PointCharge {
                        position: c.position,
                        weight: c.weight * factor,
                    })
                    .collect(),
                exclusion_radius: *exclusion_radius,
            },
            Source::PlanarRectangleSet { rectangles, weight } => Source::PlanarRectangleSet {
                rectangles: rectangles.clone(),
                weight: weight * factor,
            },
        }
    }

    /// Weighted center of the part and its total weight.
    fn centroid(&self) -> (Vector3<f64>, f64) {
        match self {
            Source::MultipoleSum { center, .. } => (*center, 1.0),
            Source::PointChargeSet { charges, .. } => {
                let total: f64 = charges.iter().map(|c| c.weight.abs()).sum();
                let sum: Vector3<f64> = charges.iter().map(|c| c.position * c.weight.abs()).sum();
                if total > 0.0 {
                    (sum / total, 1.0)
                } else {
                    (Vector3::zeros(), 0.0)
                }
            }
            Source::PlanarRectangleSet { rectangles, .. } => {
                let total: f64 = rectangles.iter().map(Rectangle::area).sum();
                let sum: Vector3<f64> = rectangles.iter().map(|r| r.center() * r.area()).sum();
                if total > 0.0 {
                    (sum / total, total)
                } else {
                    (Vector3::zeros(), 0.0)
                }
            }
        }
    }
}

fn finite(v: &Vector3<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Unit potential of one electrode (set): the potential per applied volt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeModel {
    #[serde(default)]
    pub name: String,
    pub parts: Vec<Source>,
}

impl ElectrodeModel {
    pub fn new(name: impl Into<String>, parts: Vec<Source>) -> Self {
        ElectrodeModel {
            name: name.into(),
            parts,
        }
    }

    pub fn multipole(name: impl Into<String>, center: Vector3<f64>, terms: &[(usize, i32, f64)]) -> Self {
        let terms = terms
            .iter()
            .map(|&(l, m, c)| MultipoleTerm { l, m, c })
            .collect();
        Self::new(name, vec![Source::MultipoleSum { center, terms }])
    }

    pub fn point_charges(name: impl Into<String>, charges: Vec<PointCharge>, exclusion_radius: Option<f64>) -> Self {
        Self::new(
            name,
            vec![Source::PointChargeSet {
                charges,
                exclusion_radius,
            }],
        )
    }

    pub fn rectangles(name: impl Into<String>, rectangles: Vec<Rectangle>) -> Self {
        Self::new(
            name,
            vec![Source::PlanarRectangleSet {
                rectangles,
                weight: 1.0,
            }],
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.parts.iter().try_for_each(Source::validate)
    }

    /// Unit potential at each point.
    pub fn eval(&self, points: &[Vector3<f64>]) -> Result<Vec<f64>> {
        points.iter().map(|p| self.eval_point(p)).collect()
    }

    pub fn eval_point(&self, p: &Vector3<f64>) -> Result<f64> {
        if !finite(p) {
            return Err(Error::arg("evaluation point is not finite"));
        }
        let mut sum = 0.0;
        for part in &self.parts {
            sum += part.eval(p)?;
        }
        Ok(sum)
    }

    /// Closed-form gradient and Hessian of the unit potential. Only
    /// multipole sums and point charges have them.
    pub fn gradient_hessian(&self, p: &Vector3<f64>) -> Result<(Vector3<f64>, Matrix3<f64>)> {
        let mut g = Vector3::zeros();
        let mut h = Matrix3::zeros();
        for part in &self.parts {
            let (gp, hp) = part.gradient_hessian(p)?;
            g += gp;
            h += hp;
        }
        Ok((g, h))
    }

    /// Electrode whose unit potential is `sum_k w_k phi_k`.
    pub fn weighted_sum(name: impl Into<String>, items: &[(f64, &ElectrodeModel)]) -> Self {
        let parts = items
            .iter()
            .flat_map(|(w, e)| e.parts.iter().map(move |p| p.scaled(*w)))
            .collect();
        Self::new(name, parts)
    }

    /// Area- or weight-averaged location, used when a model does not give
    /// electrode locations explicitly.
    pub fn centroid(&self) -> Vector3<f64> {
        let mut sum = Vector3::zeros();
        let mut total = 0.0;
        for part in &self.parts {
            let (c, w) = part.centroid();
            sum += c * w;
            total += w;
        }
        if total > 0.0 {
            sum / total
        } else {
            Vector3::zeros()
        }
    }

    fn fill_exclusion(&mut self, radius: f64) {
        for part in &mut self.parts {
            if let Source::PointChargeSet {
                exclusion_radius, ..
            } = part
            {
                exclusion_radius.get_or_insert(radius);
            }
        }
    }
}

/// Electrodes of a trap together with drive parameters and ion constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapModel {
    pub dc: Vec<ElectrodeModel>,
    pub rf: ElectrodeModel,
    /// rf amplitude V_rf in volts.
    pub rf_amplitude: f64,
    /// rf drive frequency Omega in rad/s.
    pub rf_frequency: f64,
    /// Ion charge Q in coulombs.
    pub charge: f64,
    /// Ion mass m in kilograms.
    pub mass: f64,
    /// Characteristic ion-electrode distance d in meters.
    pub length_scale: f64,
    /// Location R_n of each dc electrode. Filled with electrode centroids
    /// when empty.
    #[serde(default)]
    pub electrode_locations: Vec<Vector3<f64>>,
}

impl TrapModel {
    /// Checks parameters and fills defaults (electrode locations, point
    /// charge exclusion radius of `1e-3 * length_scale`).
    pub fn prepare(mut self) -> Result<Self> {
        if !(self.rf_frequency > 0.0 && self.rf_frequency.is_finite()) {
            return Err(Error::Config(format!("rf_frequency must be positive, got {}", self.rf_frequency)));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::Config(format!("mass must be positive, got {}", self.mass)));
        }
        if !(self.rf_amplitude >= 0.0 && self.rf_amplitude.is_finite()) {
            return Err(Error::Config(format!("rf_amplitude must be nonnegative, got {}", self.rf_amplitude)));
        }
        if !(self.charge != 0.0 && self.charge.is_finite()) {
            return Err(Error::Config("charge must be nonzero".into()));
        }
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) {
            return Err(Error::Config(format!("length_scale must be positive, got {}", self.length_scale)));
        }
        if self.dc.is_empty() {
            return Err(Error::Config("trap model has no dc electrodes".into()));
        }
        if self.electrode_locations.is_empty() {
            self.electrode_locations = self.dc.iter().map(ElectrodeModel::centroid).collect();
        } else if self.electrode_locations.len() != self.dc.len() {
            return Err(Error::Config(format!(
                "{} electrode locations given for {} dc electrodes",
                self.electrode_locations.len(),
                self.dc.len()
            )));
        }
        let radius = 1e-3 * self.length_scale;
        for e in self.dc.iter_mut().chain(std::iter::once(&mut self.rf)) {
            e.validate().map_err(|err| Error::Config(format!("electrode '{}': {err}", e.name)))?;
            e.fill_exclusion(radius);
        }
        Ok(self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })?;
        let model: TrapModel = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        model.prepare()
    }

    pub fn num_dc(&self) -> usize {
        self.dc.len()
    }

    /// `alpha_rf = Q V_rf^2 / (2 m Omega^2)` in V m^2.
    pub fn alpha_rf(&self) -> f64 {
        self.charge * self.rf_amplitude.powi(2) / (2.0 * self.mass * self.rf_frequency.powi(2))
    }

    /// Electrode by index, with `num_dc()` meaning the rf electrode.
    pub fn electrode(&self, n: usize) -> &ElectrodeModel {
        if n < self.dc.len() {
            &self.dc[n]
        } else {
            &self.rf
        }
    }
}
