//! Classical ion motion along a shuttling path by velocity Verlet, either
//! in the pseudopotential or with the rf field resolved.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confinement::{secular_modes, ConfinementPoint};
use crate::consts::{COULOMB_K, HBAR};
use crate::error::{Error, Result};
use crate::multipole::ExpansionSet;
use crate::potentials::TrapModel;
use crate::spline::{CubicSpline, SplineBundle};
use crate::waveform::{TimeMap, Waveform};

/// Steps per period required by the stability check.
pub const STEPS_PER_SECULAR_PERIOD: f64 = 20.0;
pub const STEPS_PER_RF_PERIOD: f64 = 50.0;

const NEWTON_ITERATIONS: usize = 30;

/// Fields near a path point, in the global frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFields {
    pub e_dc: Vec<Vector3<f64>>,
    pub h_dc: Vec<Matrix3<f64>>,
    /// Ponderomotive field and Hessian.
    pub field_rf: Vector3<f64>,
    pub hessian_rf: Matrix3<f64>,
    /// Unit rf field and Hessian.
    pub e_rf: Vector3<f64>,
    pub h_rf: Matrix3<f64>,
}

impl LocalFields {
    /// Pseudopotential field and Hessian for dc voltages `v`.
    pub fn total(&self, v: &[f64]) -> (Vector3<f64>, Matrix3<f64>) {
        let mut e = self.field_rf;
        let mut h = self.hessian_rf;
        for ((en, hn), vn) in self.e_dc.iter().zip(&self.h_dc).zip(v) {
            e += en * *vn;
            h += hn * *vn;
        }
        (e, h)
    }
}

const SYM: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

fn push_vec(out: &mut Vec<f64>, v: &Vector3<f64>) {
    out.extend(v.iter());
}

fn push_sym(out: &mut Vec<f64>, m: &Matrix3<f64>) {
    out.extend(SYM.iter().map(|&(i, j)| 0.5 * (m[(i, j)] + m[(j, i)])));
}

fn read_vec(x: &[f64]) -> Vector3<f64> {
    Vector3::new(x[0], x[1], x[2])
}

fn read_sym(x: &[f64]) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    for (k, &(i, j)) in SYM.iter().enumerate() {
        m[(i, j)] = x[k];
        m[(j, i)] = x[k];
    }
    m
}

/// Fields along one well's path as splines in arc length.
#[derive(Debug, Clone)]
pub struct FieldInterpolant {
    position: Vec<CubicSpline>,
    fields: SplineBundle,
    knots: Vec<f64>,
    electrodes: usize,
    length: f64,
}

impl FieldInterpolant {
    /// Interpolant for well `well` of an expansion set.
    pub fn new(set: &ExpansionSet, trap: &TrapModel, well: usize) -> Result<Self> {
        if well >= set.wells {
            return Err(Error::arg(format!("well {well} out of range ({} wells)", set.wells)));
        }
        let alpha = trap.alpha_rf();
        let points: Vec<ConfinementPoint> = (0..set.steps)
            .map(|t| ConfinementPoint::from_expansions(set, well, t, alpha))
            .collect::<Result<_>>()?;
        Self::from_points(&points)
    }

    /// Interpolant through confinement points given in their local frames.
    pub fn from_points(points: &[ConfinementPoint]) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::arg("no path points"));
        };
        let electrodes = first.e_dc.len();
        // a single point becomes a constant track of zero length
        let points: Vec<&ConfinementPoint> = if points.len() == 1 {
            vec![first, first]
        } else {
            points.iter().collect()
        };
        let mut knots = vec![0.0];
        for w in points.windows(2) {
            let d = (w[1].frame.origin - w[0].frame.origin).norm();
            knots.push(knots.last().unwrap() + d);
        }
        let length = *knots.last().unwrap();
        if length == 0.0 {
            knots = (0..points.len()).map(|k| k as f64).collect();
        } else if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::arg("path points must be distinct"));
        }

        let width = 9 * electrodes + 18;
        let rows: Vec<Vec<f64>> = points
            .iter()
            .map(|p| {
                let r = p.frame.rotation;
                let v = |x: &Vector3<f64>| r * x;
                let m = |x: &Matrix3<f64>| r * x * r.transpose();
                let mut row = Vec::with_capacity(width);
                for n in 0..electrodes {
                    push_vec(&mut row, &v(&p.e_dc[n]));
                    push_sym(&mut row, &m(&p.h_dc[n]));
                }
                push_vec(&mut row, &v(&p.field_rf));
                push_sym(&mut row, &m(&p.hessian_rf()));
                push_vec(&mut row, &v(&p.e_rf));
                push_sym(&mut row, &m(&p.h_rf));
                row
            })
            .collect();
        let columns: Vec<Vec<f64>> = (0..width).map(|c| rows.iter().map(|r| r[c]).collect()).collect();
        let position = (0..3)
            .map(|a| CubicSpline::new(&knots, &points.iter().map(|p| p.frame.origin[a]).collect::<Vec<_>>()))
            .collect::<Result<_>>()?;
        Ok(FieldInterpolant {
            position,
            fields: SplineBundle::new(&knots, &columns)?,
            knots,
            electrodes,
            length,
        })
    }

    pub fn electrodes(&self) -> usize {
        self.electrodes
    }

    /// Path length; zero for a static point.
    pub fn length(&self) -> f64 {
        self.length
    }

    fn param(&self, s: f64) -> f64 {
        if self.length == 0.0 {
            0.0
        } else {
            s.clamp(0.0, self.length)
        }
    }

    pub fn point(&self, s: f64) -> Vector3<f64> {
        let s = self.param(s);
        Vector3::new(self.position[0].eval(s), self.position[1].eval(s), self.position[2].eval(s))
    }

    pub fn fields_at(&self, s: f64) -> LocalFields {
        let mut buf = vec![0.0; self.fields.components()];
        self.fields.eval_into(self.param(s), &mut buf);
        let n = self.electrodes;
        let rf = &buf[9 * n..];
        LocalFields {
            e_dc: (0..n).map(|k| read_vec(&buf[9 * k..])).collect(),
            h_dc: (0..n).map(|k| read_sym(&buf[9 * k + 3..])).collect(),
            field_rf: read_vec(rf),
            hessian_rf: read_sym(&rf[3..]),
            e_rf: read_vec(&rf[9..]),
            h_rf: read_sym(&rf[12..]),
        }
    }

    /// Arc length of the path point nearest to `r`, by Newton iteration
    /// from `seed`.
    pub fn project(&self, r: &Vector3<f64>, seed: f64) -> f64 {
        if self.length == 0.0 {
            return 0.0;
        }
        if let Some(s) = self.newton(r, seed) {
            return s;
        }
        // restart from the nearest knot
        let nearest = self
            .knots
            .iter()
            .copied()
            .min_by(|a, b| (self.point(*a) - r).norm().total_cmp(&(self.point(*b) - r).norm()))
            .unwrap();
        self.newton(r, nearest).unwrap_or(nearest)
    }

    fn newton(&self, r: &Vector3<f64>, seed: f64) -> Option<f64> {
        let mut s = seed.clamp(0.0, self.length);
        let tol = 1e-13 * self.length;
        for _ in 0..NEWTON_ITERATIONS {
            let (mut p, mut d1, mut d2) = (Vector3::zeros(), Vector3::zeros(), Vector3::zeros());
            for a in 0..3 {
                (p[a], d1[a], d2[a]) = self.position[a].eval_all(s);
            }
            let g = (p - r).dot(&d1);
            let gp = d1.dot(&d1) + (p - r).dot(&d2);
            if !(gp > 0.0) {
                return None;
            }
            let next = (s - g / gp).clamp(0.0, self.length);
            if (next - s).abs() <= tol {
                return Some(next);
            }
            s = next;
        }
        None
    }
}

/// dc voltages as functions of time.
#[derive(Debug, Clone)]
pub struct VoltageSchedule {
    splines: Vec<CubicSpline>,
    /// Transport duration in seconds.
    pub duration: f64,
    pub map: TimeMap,
}

impl VoltageSchedule {
    /// Per-step voltages `V[t * N + n]` spread over `[0, duration]` through
    /// `map`.
    pub fn from_steps(electrodes: usize, voltages: &[f64], duration: f64, map: TimeMap) -> Result<Self> {
        if electrodes == 0 || voltages.is_empty() || voltages.len() % electrodes != 0 {
            return Err(Error::arg("voltages do not split into whole steps"));
        }
        if !(duration > 0.0) {
            return Err(Error::arg("duration must be positive"));
        }
        let steps = voltages.len() / electrodes;
        let splines = (0..electrodes)
            .map(|n| {
                let mut c: Vec<f64> = (0..steps).map(|t| voltages[t * electrodes + n]).collect();
                if c.len() == 1 {
                    c.push(c[0]);
                }
                CubicSpline::uniform(0.0, 1.0, &c)
            })
            .collect::<Result<_>>()?;
        Ok(VoltageSchedule { splines, duration, map })
    }

    /// Fixed voltages.
    pub fn constant(voltages: &[f64]) -> Result<Self> {
        Self::from_steps(voltages.len(), voltages, 1.0, TimeMap::Linear)
    }

    /// Sampled waveform played at its sample period; sample `i` sits at
    /// `(i + 1/2)` periods.
    pub fn from_waveform(w: &Waveform) -> Result<Self> {
        w.validate()?;
        let len = w.len();
        if len < 2 {
            return Err(Error::arg("waveform needs at least two samples"));
        }
        let knots: Vec<f64> = (0..len).map(|i| (i as f64 + 0.5) / len as f64).collect();
        let splines = w.samples.iter().map(|c| CubicSpline::new(&knots, c)).collect::<Result<_>>()?;
        Ok(VoltageSchedule {
            splines,
            duration: len as f64 * w.sample_period,
            map: TimeMap::Linear,
        })
    }

    pub fn electrodes(&self) -> usize {
        self.splines.len()
    }

    pub fn voltages(&self, t: f64) -> Vec<f64> {
        let x = self.map.apply((t / self.duration).clamp(0.0, 1.0));
        self.splines
            .iter()
            .map(|s| {
                let (lo, hi) = s.domain();
                s.eval(x.clamp(lo, hi))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum SimulationMode {
    Pseudopotential,
    RfResolved { phase: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub dt: f64,
    pub duration: f64,
    pub mode: SimulationMode,
    /// Largest allowed distance from the path, m.
    pub max_distance: f64,
    /// Keep every `decimation`-th step in the trajectory.
    pub decimation: usize,
    pub coulomb: bool,
    /// Largest secular frequency for the step-size check; estimated from
    /// the start and end wells when absent.
    pub omega_max: Option<f64>,
}

impl SimulationConfig {
    pub fn new(dt: f64, duration: f64) -> Self {
        SimulationConfig {
            dt,
            duration,
            mode: SimulationMode::Pseudopotential,
            max_distance: 1e-4,
            decimation: 1,
            coulomb: false,
            omega_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationState {
    pub positions: Vec<Vector3<f64>>,
    pub velocities: Vec<Vector3<f64>>,
    pub time: f64,
}

impl SimulationState {
    pub fn at_rest(positions: Vec<Vector3<f64>>) -> Self {
        let n = positions.len();
        SimulationState {
            positions,
            velocities: vec![Vector3::zeros(); n],
            time: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.positions.is_empty() || self.positions.len() != self.velocities.len() {
            return Err(Error::arg("state needs at least one ion and one velocity per ion"));
        }
        if self.positions.iter().chain(&self.velocities).any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::arg("state is not finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub time: f64,
    pub positions: Vec<Vector3<f64>>,
    pub velocities: Vec<Vector3<f64>>,
    /// Kinetic energy, J.
    pub kinetic: f64,
    /// Pseudopotential energy relative to the nearest path point, J.
    pub potential: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IonExcitation {
    /// Offset from the final equilibrium, m.
    pub offset: Vector3<f64>,
    /// Mode energies, J; `None` along unstable modes.
    pub energies: [Option<f64>; 3],
    pub quanta: [Option<f64>; 3],
}

/// Residual motion after the transport, relative to the final well of each
/// ion on its own (Coulomb coupling is not included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationReport {
    pub omegas: [f64; 3],
    pub axes: Matrix3<f64>,
    pub ions: Vec<IonExcitation>,
    /// Largest distance from the path during the run, m.
    pub max_path_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub trajectory: Vec<TrajectorySample>,
    pub final_state: SimulationState,
    pub excitation: ExcitationReport,
}

impl SimulationResult {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let ions = self.final_state.positions.len();
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string()];
        for i in 0..ions {
            let suffix = if ions == 1 { String::new() } else { i.to_string() };
            for c in ["x", "y", "z", "vx", "vy", "vz"] {
                header.push(format!("{c}{suffix}"));
            }
        }
        w.write_record(&header)?;
        for s in &self.trajectory {
            let mut row = vec![s.time.to_string()];
            for (p, v) in s.positions.iter().zip(&s.velocities) {
                row.extend(p.iter().chain(v.iter()).map(|x| x.to_string()));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Everything needed to evaluate forces.
pub struct Simulator<'a> {
    pub fields: &'a FieldInterpolant,
    pub schedule: &'a VoltageSchedule,
    pub trap: &'a TrapModel,
    pub config: &'a SimulationConfig,
}

impl Simulator<'_> {
    fn check(&self) -> Result<()> {
        if self.schedule.electrodes() != self.fields.electrodes() {
            return Err(Error::arg(format!(
                "schedule drives {} electrodes, fields describe {}",
                self.schedule.electrodes(),
                self.fields.electrodes()
            )));
        }
        let c = self.config;
        if !(c.dt > 0.0 && c.duration >= 0.0 && c.max_distance > 0.0) || c.decimation == 0 {
            return Err(Error::arg("simulation needs dt > 0, duration >= 0, max_distance > 0, decimation >= 1"));
        }
        Ok(())
    }

    /// Acceleration of one ion (without Coulomb terms) and its updated
    /// path parameter.
    pub fn acceleration(&self, r: &Vector3<f64>, t: f64, seed: f64) -> Result<(Vector3<f64>, f64)> {
        let s = self.fields.project(r, seed);
        let rd = r - self.fields.point(s);
        let dist = rd.norm();
        if dist > self.config.max_distance {
            return Err(Error::OutOfDomain {
                distance: dist,
                limit: self.config.max_distance,
            });
        }
        let f = self.fields.fields_at(s);
        let v = self.schedule.voltages(t);
        let mut e = Vector3::zeros();
        for ((en, hn), vn) in f.e_dc.iter().zip(&f.h_dc).zip(&v) {
            e += (en - hn * rd) * *vn;
        }
        match self.config.mode {
            SimulationMode::Pseudopotential => e += f.field_rf - f.hessian_rf * rd,
            SimulationMode::RfResolved { phase } => {
                let drive = (self.trap.rf_frequency * t + phase).cos();
                e += (f.e_rf - f.h_rf * rd) * (self.trap.rf_amplitude * drive);
            }
        }
        Ok((e * (self.trap.charge / self.trap.mass), s))
    }

    fn accelerations(&self, positions: &[Vector3<f64>], t: f64, seeds: &mut [f64]) -> Result<Vec<Vector3<f64>>> {
        let mut out = Vec::with_capacity(positions.len());
        for (r, seed) in positions.iter().zip(seeds.iter_mut()) {
            let (a, s) = self.acceleration(r, t, *seed)?;
            *seed = s;
            out.push(a);
        }
        if self.config.coulomb {
            let k = COULOMB_K * self.trap.charge * self.trap.charge / self.trap.mass;
            for i in 0..positions.len() {
                for j in 0..positions.len() {
                    if i != j {
                        let d = positions[i] - positions[j];
                        out[i] += d * (k / d.norm().powi(3));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Pseudopotential energy about the nearest path point.
    fn potential(&self, positions: &[Vector3<f64>], t: f64, seeds: &[f64]) -> f64 {
        let v = self.schedule.voltages(t);
        positions
            .iter()
            .zip(seeds)
            .map(|(r, &s)| {
                let rd = r - self.fields.point(s);
                let (e, h) = self.fields.fields_at(s).total(&v);
                self.trap.charge * (-e.dot(&rd) + 0.5 * rd.dot(&(h * rd)))
            })
            .sum()
    }

    /// Pseudopotential Hessian and field at the path point nearest `r`.
    fn well(&self, r: &Vector3<f64>, t: f64, seed: f64) -> (f64, Vector3<f64>, Matrix3<f64>) {
        let s = self.fields.project(r, seed);
        let (e, h) = self.fields.fields_at(s).total(&self.schedule.voltages(t));
        (s, e, h)
    }

    /// Equilibrium position of a single ion near `r` at time `t`.
    pub fn equilibrium(&self, r: &Vector3<f64>, t: f64) -> Result<Vector3<f64>> {
        let (s, e, h) = self.well(r, t, 0.0);
        let rd = h
            .try_inverse()
            .ok_or_else(|| Error::Singular("pseudopotential Hessian is singular".into()))?
            * e;
        Ok(self.fields.point(s) + rd)
    }

    pub fn step_limit(&self, initial: &SimulationState) -> Result<f64> {
        match self.config.mode {
            SimulationMode::RfResolved { .. } => {
                Ok(2.0 * std::f64::consts::PI / self.trap.rf_frequency / STEPS_PER_RF_PERIOD)
            }
            SimulationMode::Pseudopotential => {
                let omega = match self.config.omega_max {
                    Some(w) => w,
                    None => {
                        let mut w: f64 = 0.0;
                        for r in &initial.positions {
                            for t in [initial.time, self.config.duration] {
                                let (_, _, h) = self.well(r, t, 0.0);
                                let modes = secular_modes(&h, self.trap.charge, self.trap.mass)?;
                                w = modes.omegas.iter().fold(w, |m, x| m.max(*x));
                            }
                        }
                        w
                    }
                };
                Ok(if omega > 0.0 {
                    2.0 * std::f64::consts::PI / omega / STEPS_PER_SECULAR_PERIOD
                } else {
                    f64::INFINITY
                })
            }
        }
    }

    /// Velocity-Verlet integration from `initial` up to the configured
    /// duration.
    pub fn run(&self, initial: &SimulationState) -> Result<SimulationResult> {
        self.check()?;
        initial.validate()?;
        let limit = self.step_limit(initial)?;
        let dt = self.config.dt;
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::StepTooLarge { dt, limit });
        }
        let steps = ((self.config.duration - initial.time) / dt).ceil().max(0.0) as usize;
        let m = self.trap.mass;
        let mut seeds: Vec<f64> = initial.positions.iter().map(|r| self.fields.project(r, 0.0)).collect();
        let mut x = initial.positions.clone();
        let mut v = initial.velocities.clone();
        let mut t = initial.time;
        let mut a = self.accelerations(&x, t, &mut seeds)?;
        let mut max_offset: f64 = 0.0;

        let sample = |x: &[Vector3<f64>], v: &[Vector3<f64>], t: f64, seeds: &[f64]| TrajectorySample {
            time: t,
            positions: x.to_vec(),
            velocities: v.to_vec(),
            kinetic: v.iter().map(|v| 0.5 * m * v.norm_squared()).sum(),
            potential: self.potential(x, t, seeds),
        };
        let mut trajectory = vec![sample(&x, &v, t, &seeds)];

        for k in 1..=steps {
            // last step lands exactly on the duration
            let h = if k == steps { self.config.duration - t } else { dt };
            for i in 0..x.len() {
                x[i] += v[i] * h + a[i] * (0.5 * h * h);
            }
            t = if k == steps { self.config.duration } else { initial.time + k as f64 * dt };
            let a_new = self.accelerations(&x, t, &mut seeds)?;
            for i in 0..x.len() {
                v[i] += (a[i] + a_new[i]) * (0.5 * h);
                max_offset = max_offset.max((x[i] - self.fields.point(seeds[i])).norm());
            }
            a = a_new;
            if k % self.config.decimation == 0 || k == steps {
                trajectory.push(sample(&x, &v, t, &seeds));
            }
        }

        let final_state = SimulationState {
            positions: x,
            velocities: v,
            time: t,
        };
        let excitation = self.excitation(&final_state, &seeds, max_offset)?;
        Ok(SimulationResult {
            trajectory,
            final_state,
            excitation,
        })
    }

    fn excitation(&self, state: &SimulationState, seeds: &[f64], max_offset: f64) -> Result<ExcitationReport> {
        let (q, m) = (self.trap.charge, self.trap.mass);
        let mut report = None;
        let mut ions = Vec::new();
        for ((r, vel), &seed) in state.positions.iter().zip(&state.velocities).zip(seeds) {
            let (s, e, h) = self.well(r, state.time, seed);
            let modes = secular_modes(&h, q, m)?;
            let eq = self.fields.point(s)
                + h.try_inverse()
                    .ok_or_else(|| Error::Singular("pseudopotential Hessian is singular".into()))?
                    * e;
            let offset = r - eq;
            let mut energies = [None; 3];
            let mut quanta = [None; 3];
            for u in 0..3 {
                if modes.stable[u] {
                    let axis = modes.axis(u);
                    let (x, v, w) = (offset.dot(&axis), vel.dot(&axis), modes.omegas[u]);
                    let energy = 0.5 * m * (v * v + w * w * x * x);
                    energies[u] = Some(energy);
                    quanta[u] = Some(energy / (HBAR * w));
                }
            }
            ions.push(IonExcitation { offset, energies, quanta });
            report.get_or_insert((modes.omegas, modes.axes));
        }
        let (omegas, axes) = report.unwrap();
        Ok(ExcitationReport {
            omegas,
            axes,
            ions,
            max_path_offset: max_offset,
        })
    }
}

/// Final quanta of the first ion for a set of rf phases, run in parallel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseScan {
    pub phases: Vec<f64>,
    pub total_quanta: Vec<f64>,
    /// `(max - min) / max` of the final quanta.
    pub spread: f64,
    pub phase_sensitive: bool,
}

pub fn scan_rf_phase(
    fields: &FieldInterpolant,
    schedule: &VoltageSchedule,
    trap: &TrapModel,
    config: &SimulationConfig,
    initial: &SimulationState,
    phases: &[f64],
    threshold: f64,
) -> Result<PhaseScan> {
    let totals: Vec<f64> = phases
        .par_iter()
        .map(|&phase| {
            let config = SimulationConfig {
                mode: SimulationMode::RfResolved { phase },
                ..config.clone()
            };
            let sim = Simulator {
                fields,
                schedule,
                trap,
                config: &config,
            };
            let out = sim.run(initial)?;
            Ok(out.excitation.ions[0].quanta.iter().flatten().sum())
        })
        .collect::<Result<_>>()?;
    let max = totals.iter().cloned().fold(0.0, f64::max);
    let min = totals.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = if max > 0.0 { (max - min) / max } else { 0.0 };
    Ok(PhaseScan {
        phases: phases.to_vec(),
        total_quanta: totals,
        spread,
        phase_sensitive: spread > threshold,
    })
}

/// Equilibrium offsets of `n` ions in a one-dimensional harmonic well of
/// frequency `omega`, sorted, by Newton iteration from an even spacing.
pub fn chain_offsets(n: usize, omega: f64, charge: f64, mass: f64) -> Result<Vec<f64>> {
    if !(omega > 0.0) {
        return Err(Error::arg("chain needs a positive axial frequency"));
    }
    let k = COULOMB_K * charge * charge;
    let spring = mass * omega * omega;
    let scale = (k / spring).cbrt();
    let mut u: Vec<f64> = (0..n).map(|i| (i as f64 - 0.5 * (n as f64 - 1.0)) * scale).collect();
    for _ in 0..100 {
        let mut g = nalgebra::DVector::<f64>::zeros(n);
        let mut h = nalgebra::DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            g[i] += spring * u[i];
            h[(i, i)] += spring;
            for j in 0..n {
                if i != j {
                    let d = u[i] - u[j];
                    g[i] -= k * d.signum() / (d * d);
                    let c = 2.0 * k / d.abs().powi(3);
                    h[(i, i)] += c;
                    h[(i, j)] -= c;
                }
            }
        }
        let step = h
            .cholesky()
            .ok_or_else(|| Error::Singular("chain Hessian is not positive definite".into()))?
            .solve(&g);
        for i in 0..n {
            u[i] -= step[i];
        }
        if step.amax() < 1e-14 * scale {
            return Ok(u);
        }
    }
    Err(Error::arg("chain equilibrium did not converge"))
}
