//! Shuttling paths, local frames, target Hessians and penalty weights.

use std::path::Path;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multipole::LocalFrame;
use crate::potentials::TrapModel;
use crate::spline::CubicSpline;

/// Below this norm the up hint is treated as parallel to the tangent.
const DEGENERATE_UP: f64 = 1e-6;

/// Unit tangents of a polyline from a cubic spline in cumulative chord
/// length.
pub fn tangents(positions: &[Vector3<f64>]) -> Result<Vec<Vector3<f64>>> {
    if positions.len() < 2 {
        return Err(Error::arg("tangents need at least two positions"));
    }
    let mut s = vec![0.0];
    for w in positions.windows(2) {
        let d = (w[1] - w[0]).norm();
        if d == 0.0 {
            return Err(Error::arg("consecutive path positions coincide"));
        }
        s.push(s.last().unwrap() + d);
    }
    let splines: Vec<CubicSpline> = (0..3)
        .map(|a| {
            let vals: Vec<f64> = positions.iter().map(|p| p[a]).collect();
            CubicSpline::new(&s, &vals)
        })
        .collect::<Result<_>>()?;
    let n = positions.len();
    let mut out: Vec<Vector3<f64>> = s
        .iter()
        .map(|&si| Vector3::new(splines[0].derivative(si), splines[1].derivative(si), splines[2].derivative(si)))
        .collect();
    // the natural end condition biases the end slopes; use second-order
    // one-sided differences there instead
    if n >= 3 {
        out[0] = one_sided(&positions[..3], &s[..3]);
        let tail: Vec<Vector3<f64>> = positions[n - 3..].iter().rev().copied().collect();
        let ts: Vec<f64> = s[n - 3..].iter().rev().copied().collect();
        out[n - 1] = one_sided(&tail, &ts);
    }
    Ok(out.into_iter().map(|d| d.normalize()).collect())
}

/// Derivative at `s[0]` of the parabola through three samples.
fn one_sided(p: &[Vector3<f64>], s: &[f64]) -> Vector3<f64> {
    let (h1, h2) = (s[1] - s[0], s[2] - s[0]);
    let d = (p[1] - p[0]) * (h2 / (h1 * (h2 - h1))) - (p[2] - p[0]) * (h1 / (h2 * (h2 - h1)));
    d
}

/// Frames with the first axis along the path tangent and the third axis
/// along the part of `up_hint` orthogonal to it. Where the up hint is
/// parallel to the tangent, the previous frame is transported along the
/// path instead.
pub fn build_frames(positions: &[Vector3<f64>], up_hint: &Vector3<f64>, kappa: f64) -> Result<Vec<LocalFrame>> {
    if positions.len() == 1 {
        return Err(Error::arg(
            "a single support point needs an explicit frame (use LocalFrame directly)",
        ));
    }
    let tangent = tangents(positions)?;
    let up = up_hint.normalize();
    let mut normal: Vec<Option<Vector3<f64>>> = tangent
        .iter()
        .map(|t| {
            let z = up - t * up.dot(t);
            (z.norm() > DEGENERATE_UP).then(|| z.normalize())
        })
        .collect();

    let Some(first) = normal.iter().position(Option::is_some) else {
        return Err(Error::FrameDegenerate { step: 0 });
    };
    let transport = |prev: Vector3<f64>, t: &Vector3<f64>| {
        let z = prev - t * prev.dot(t);
        (z.norm() > DEGENERATE_UP).then(|| z.normalize())
    };
    for i in (0..first).rev() {
        let prev = normal[i + 1].unwrap();
        normal[i] = Some(transport(prev, &tangent[i]).ok_or(Error::FrameDegenerate { step: i })?);
    }
    for i in first + 1..normal.len() {
        if normal[i].is_none() {
            let prev = normal[i - 1].unwrap();
            normal[i] = Some(transport(prev, &tangent[i]).ok_or(Error::FrameDegenerate { step: i })?);
        }
    }

    positions
        .iter()
        .zip(tangent.iter().zip(&normal))
        .map(|(p, (x, z))| {
            let y = z.unwrap().cross(x).normalize();
            let z = x.cross(&y);
            LocalFrame::new(*p, Matrix3::from_columns(&[*x, y, z]), kappa)
        })
        .collect()
}

/// Largest angle between corresponding axes of consecutive frames.
pub fn max_frame_step(frames: &[LocalFrame]) -> f64 {
    frames
        .windows(2)
        .flat_map(|w| (0..3).map(move |u| w[0].axis(u).dot(&w[1].axis(u)).clamp(-1.0, 1.0).acos()))
        .fold(0.0, f64::max)
}

/// Diagonal target Hessians `(m/Q) omega^2` in the local frame.
pub fn target_hessians(omegas: &[[f64; 3]], charge: f64, mass: f64) -> Vec<Matrix3<f64>> {
    omegas
        .iter()
        .map(|w| Matrix3::from_diagonal(&Vector3::new(w[0] * w[0], w[1] * w[1], w[2] * w[2])) * (mass / charge))
        .collect()
}

/// Bathtub activation: 1 below `d1`, `big` from `d2` on, rising linearly
/// (but never below 1) in between.
pub fn activation(distance: f64, d1: f64, d2: f64, big: f64) -> f64 {
    if distance >= d2 {
        big
    } else if distance >= d1 {
        (big * (distance - d1) / (d2 - d1)).max(1.0)
    } else {
        1.0
    }
}

/// Activation factor per `(n, t)` at index `t * N + n`, minimized over wells.
pub fn activation_weights(path: &ShuttlingPath, locations: &[Vector3<f64>], d1: f64, d2: f64, big: f64) -> Result<Vec<f64>> {
    if !(d1 < d2) {
        return Err(Error::arg(format!("activation distances need D1 < D2, got {d1} and {d2}")));
    }
    let n = locations.len();
    let mut out = vec![0.0; n * path.steps];
    for t in 0..path.steps {
        for (k, r) in locations.iter().enumerate() {
            out[t * n + k] = (0..path.wells)
                .map(|w| activation((path.position(w, t) - r).norm(), d1, d2, big))
                .fold(f64::INFINITY, f64::min);
        }
    }
    Ok(out)
}

/// Scale factors for the position and confinement penalties: one unit of
/// penalty for a displacement `delta_u` or a frequency error `delta_omega`
/// at `omega_ref`.
pub fn penalty_scale_factors(charge: f64, mass: f64, omega_ref: f64, delta_u: f64, delta_omega: f64) -> Result<(f64, f64)> {
    if [charge.abs(), mass, omega_ref, delta_u, delta_omega].iter().any(|v| !(*v > 0.0)) {
        return Err(Error::arg("penalty scale inputs must be positive"));
    }
    let q2m2 = (charge / mass).powi(2);
    let w1 = q2m2 / (omega_ref.powi(4) * delta_u * delta_u);
    let w2 = q2m2 / (4.0 * omega_ref * omega_ref * delta_omega * delta_omega);
    Ok((w1, w2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuttlingPath {
    pub wells: usize,
    pub steps: usize,
    /// Positions at index `w * steps + t`.
    pub positions: Vec<Vector3<f64>>,
    pub frames: Vec<LocalFrame>,
    /// Reference secular frequencies along the local axes, rad/s.
    pub omega_ref: Vec<[f64; 3]>,
    /// Target Hessians in the local frames, V/m^2.
    pub targets: Vec<Matrix3<f64>>,
}

impl ShuttlingPath {
    /// Path with frames built from the positions of every well.
    pub fn from_wells(
        wells: &[Vec<Vector3<f64>>],
        up_hint: &Vector3<f64>,
        kappa: f64,
        omega_ref: &OmegaSchedule,
        charge: f64,
        mass: f64,
    ) -> Result<Self> {
        let steps = wells.first().map_or(0, Vec::len);
        if steps == 0 || wells.iter().any(|w| w.len() != steps) {
            return Err(Error::arg("every well needs the same nonzero number of steps"));
        }
        let mut frames = Vec::with_capacity(wells.len() * steps);
        for w in wells {
            frames.extend(build_frames(w, up_hint, kappa)?);
        }
        Self::from_frames(wells.len(), steps, frames, omega_ref, charge, mass)
    }

    /// Path from explicit frames at index `w * steps + t`.
    pub fn from_frames(
        wells: usize,
        steps: usize,
        frames: Vec<LocalFrame>,
        omega_ref: &OmegaSchedule,
        charge: f64,
        mass: f64,
    ) -> Result<Self> {
        if frames.len() != wells * steps || frames.is_empty() {
            return Err(Error::arg(format!(
                "{} frames for {wells} wells and {steps} steps",
                frames.len()
            )));
        }
        for f in &frames {
            f.validate()?;
        }
        let omega = omega_ref.expand(steps)?;
        let omega: Vec<[f64; 3]> = (0..wells).flat_map(|_| omega.iter().copied()).collect();
        let targets = target_hessians(&omega, charge, mass);
        Ok(ShuttlingPath {
            wells,
            steps,
            positions: frames.iter().map(|f| f.origin).collect(),
            frames,
            omega_ref: omega,
            targets,
        })
    }

    pub fn index(&self, w: usize, t: usize) -> usize {
        w * self.steps + t
    }

    pub fn position(&self, w: usize, t: usize) -> Vector3<f64> {
        self.positions[self.index(w, t)]
    }

    pub fn frame(&self, w: usize, t: usize) -> &LocalFrame {
        &self.frames[self.index(w, t)]
    }

    pub fn target(&self, w: usize, t: usize) -> &Matrix3<f64> {
        &self.targets[self.index(w, t)]
    }

    /// Cumulative path length of well `w` at every step.
    pub fn arc_length(&self, w: usize) -> Vec<f64> {
        let mut s = vec![0.0];
        for t in 1..self.steps {
            s.push(s[t - 1] + (self.position(w, t) - self.position(w, t - 1)).norm());
        }
        s
    }
}

/// Reference frequencies: one triple for the whole path or one per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OmegaSchedule {
    Constant([f64; 3]),
    PerStep(Vec<[f64; 3]>),
}

impl OmegaSchedule {
    pub fn expand(&self, steps: usize) -> Result<Vec<[f64; 3]>> {
        let out = match self {
            OmegaSchedule::Constant(w) => vec![*w; steps],
            OmegaSchedule::PerStep(v) if v.len() == steps => v.clone(),
            OmegaSchedule::PerStep(v) => {
                return Err(Error::arg(format!("{} reference frequencies for {steps} steps", v.len())))
            }
        };
        if out.iter().flatten().any(|w| !(*w > 0.0)) {
            return Err(Error::arg("reference frequencies must be positive"));
        }
        Ok(out)
    }
}

/// Piece of a path. Each piece adds `steps` points after the current one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Segment {
    Line {
        to: Vector3<f64>,
        steps: usize,
    },
    /// Rotation of the current point about `center` by `angle` radians
    /// around `axis`.
    Arc {
        center: Vector3<f64>,
        angle: f64,
        #[serde(default = "Vector3::z")]
        axis: Vector3<f64>,
        steps: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WellSpec {
    Waypoints { waypoints: Vec<Vector3<f64>> },
    Segments { start: Vector3<f64>, segments: Vec<Segment> },
}

impl WellSpec {
    pub fn positions(&self) -> Result<Vec<Vector3<f64>>> {
        match self {
            WellSpec::Waypoints { waypoints } => Ok(waypoints.clone()),
            WellSpec::Segments { start, segments } => sample_segments(start, segments),
        }
    }
}

/// Points along consecutive segments; `1 + sum steps` in total.
pub fn sample_segments(start: &Vector3<f64>, segments: &[Segment]) -> Result<Vec<Vector3<f64>>> {
    let mut out = vec![*start];
    for seg in segments {
        let from = *out.last().unwrap();
        match seg {
            Segment::Line { to, steps } => {
                if *steps == 0 {
                    return Err(Error::arg("line segment with zero steps"));
                }
                for k in 1..=*steps {
                    out.push(from + (to - from) * (k as f64 / *steps as f64));
                }
            }
            Segment::Arc {
                center,
                angle,
                axis,
                steps,
            } => {
                if *steps == 0 || axis.norm() == 0.0 {
                    return Err(Error::arg("arc segment needs steps and a nonzero axis"));
                }
                let axis = Unit::new_normalize(*axis);
                let r = from - center;
                for k in 1..=*steps {
                    let rot = Rotation3::from_axis_angle(&axis, angle * k as f64 / *steps as f64);
                    out.push(center + rot * r);
                }
            }
        }
    }
    Ok(out)
}

/// Bathtub activation parameters for the voltage penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivationParams {
    pub d1: f64,
    pub d2: f64,
    #[serde(default = "default_big")]
    pub big: f64,
}

fn default_big() -> f64 {
    1e6
}

/// A fixed voltage set enforced at some steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedVoltages {
    pub voltages: Vec<f64>,
    pub steps: Vec<usize>,
    pub weight: f64,
}

/// Penalty configuration as read from a path file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyParams {
    /// Reference position deviations along the local axes, m.
    pub delta_u: [f64; 3],
    /// Reference secular-frequency deviation, rad/s.
    pub delta_omega: f64,
    #[serde(default = "ones3")]
    pub position_factors: [f64; 3],
    #[serde(default = "ones33")]
    pub confinement_factors: [[f64; 3]; 3],
    /// Voltage penalty scale, 1/V^2.
    pub voltage: f64,
    #[serde(default)]
    pub activation: Option<ActivationParams>,
    /// Voltage-difference penalty, 1/V^2.
    pub smoothness: f64,
    #[serde(default)]
    pub fixed: Option<FixedVoltages>,
}

fn ones3() -> [f64; 3] {
    [1.0; 3]
}

fn ones33() -> [[f64; 3]; 3] {
    [[1.0; 3]; 3]
}

/// Fully expanded penalty weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyWeights {
    /// Position penalty per `(w, t)` and local axis.
    pub position: Vec<[f64; 3]>,
    /// Confinement penalty per `(w, t)` and Hessian entry.
    pub confinement: Vec<Matrix3<f64>>,
    /// Voltage penalty per `(n, t)` at `t * N + n`.
    pub voltage: Vec<f64>,
    pub smoothness: f64,
    /// Fixed-set penalty per `(n, t)` at `t * N + n`.
    pub fixed: Vec<f64>,
    pub fixed_voltages: Vec<f64>,
}

impl PenaltyWeights {
    pub fn zeros(wells: usize, steps: usize, electrodes: usize) -> Self {
        PenaltyWeights {
            position: vec![[0.0; 3]; wells * steps],
            confinement: vec![Matrix3::zeros(); wells * steps],
            voltage: vec![0.0; electrodes * steps],
            smoothness: 0.0,
            fixed: vec![0.0; electrodes * steps],
            fixed_voltages: vec![0.0; electrodes],
        }
    }

    pub fn build(params: &PenaltyParams, path: &ShuttlingPath, trap: &TrapModel) -> Result<Self> {
        let n = trap.num_dc();
        let (q, m) = (trap.charge, trap.mass);
        let mut out = Self::zeros(path.wells, path.steps, n);
        for (idx, omega) in path.omega_ref.iter().enumerate() {
            for u in 0..3 {
                let (w1, _) = penalty_scale_factors(q, m, omega[u], params.delta_u[u], params.delta_omega)?;
                out.position[idx][u] = w1 * params.position_factors[u];
                for v in 0..3 {
                    // off-diagonal entries use the geometric mean of the two frequencies
                    let (_, w2) = penalty_scale_factors(q, m, (omega[u] * omega[v]).sqrt(), 1.0, params.delta_omega)?;
                    out.confinement[idx][(u, v)] = w2 * params.confinement_factors[u][v];
                }
            }
        }
        if params.voltage < 0.0 || params.smoothness < 0.0 {
            return Err(Error::arg("penalty scales must be nonnegative"));
        }
        let factors = match &params.activation {
            Some(a) => activation_weights(path, &trap.electrode_locations, a.d1, a.d2, a.big)?,
            None => vec![1.0; n * path.steps],
        };
        out.voltage = factors.iter().map(|f| f * params.voltage).collect();
        out.smoothness = params.smoothness;
        if let Some(fixed) = &params.fixed {
            if fixed.voltages.len() != n {
                return Err(Error::arg(format!(
                    "fixed voltage set has {} entries for {n} electrodes",
                    fixed.voltages.len()
                )));
            }
            for &t in &fixed.steps {
                if t >= path.steps {
                    return Err(Error::arg(format!("fixed voltage step {t} beyond path length {}", path.steps)));
                }
                for k in 0..n {
                    out.fixed[t * n + k] = fixed.weight;
                }
            }
            out.fixed_voltages = fixed.voltages.clone();
        }
        Ok(out)
    }
}

/// Path file: well geometry, frame hints, reference frequencies and
/// penalties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub wells: Vec<WellSpec>,
    #[serde(default = "Vector3::z")]
    pub up_hint: Vector3<f64>,
    /// Expansion sphere radius; defaults to `1e-2 * length_scale`.
    #[serde(default)]
    pub kappa: Option<f64>,
    pub omega_ref: OmegaSchedule,
    pub penalties: PenaltyParams,
}

impl PathSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn build(&self, trap: &TrapModel) -> Result<(ShuttlingPath, PenaltyWeights)> {
        let wells: Vec<Vec<Vector3<f64>>> = self.wells.iter().map(WellSpec::positions).collect::<Result<_>>()?;
        let kappa = self.kappa.unwrap_or(1e-2 * trap.length_scale);
        let path = ShuttlingPath::from_wells(&wells, &self.up_hint, kappa, &self.omega_ref, trap.charge, trap.mass)?;
        let weights = PenaltyWeights::build(&self.penalties, &path, trap)?;
        Ok((path, weights))
    }
}
