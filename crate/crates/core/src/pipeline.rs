//! Config-driven pipeline: expand, solve, build waveforms, simulate and
//! check validity, writing every artifact to an output directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::confinement::secular_modes;
use crate::demos::{self, Demo};
use crate::dynamics::{chain_offsets, FieldInterpolant, SimulationConfig, SimulationMode, SimulationResult, SimulationState, Simulator, VoltageSchedule};
use crate::error::{Error, Result};
use crate::multipole::{expand_along_path_cached, ExpansionSet};
use crate::path::{PathSpec, PenaltyParams, PenaltyWeights, ShuttlingPath};
use crate::potentials::TrapModel;
use crate::solver::{read_voltages_csv, solve_voltages, SolveOptions, VoltageSolution};
use crate::validity::{validate_solution, Thresholds, Timing, ValidityReport};
use crate::waveform::{gamma_lowpass, invert_waveform, lowpass_fixture, waveform_from_solution, FirKernel, InversionReport, TimeMap, Waveform};

/// Either a file to load or the value itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Input<T> {
    File(PathBuf),
    Inline(T),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpansionParams {
    pub order: usize,
    pub design_points: usize,
    /// Overrides the path file's expansion radius.
    pub kappa: Option<f64>,
}

impl Default for ExpansionParams {
    fn default() -> Self {
        ExpansionParams {
            order: 3,
            design_points: 25,
            kappa: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum KernelSource {
    Identity,
    /// The 70-tap gamma low-pass used in the tests.
    LowpassFixture,
    Gamma { len: usize, onset: usize, scale: f64 },
    /// Impulse or step response from a one-column CSV file.
    Csv {
        path: PathBuf,
        #[serde(default)]
        step_response: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformParams {
    /// Output samples over the transport.
    pub samples: usize,
    #[serde(default = "default_kernel")]
    pub kernel: KernelSource,
    #[serde(default = "default_weight")]
    pub weight: f64,
    #[serde(default = "default_padding")]
    pub padding: usize,
    #[serde(default)]
    pub slew_limit: Option<f64>,
}

fn default_kernel() -> KernelSource {
    KernelSource::Identity
}

fn default_weight() -> f64 {
    0.1
}

fn default_padding() -> usize {
    25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationParams {
    #[serde(default = "default_mode")]
    pub mode: SimulationMode,
    /// Defaults to half the stability limit.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_ions")]
    pub ions: usize,
    #[serde(default = "default_decimation")]
    pub decimation: usize,
    #[serde(default)]
    pub well: usize,
}

fn default_mode() -> SimulationMode {
    SimulationMode::Pseudopotential
}

fn default_ions() -> usize {
    1
}

fn default_decimation() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityParams {
    /// Voltage noise density of the rf drive, V^2/Hz.
    #[serde(default)]
    pub noise_density: f64,
    #[serde(default)]
    pub thresholds: Thresholds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub trap: Input<TrapModel>,
    pub path: Input<PathSpec>,
    #[serde(default)]
    pub expansion: ExpansionParams,
    /// Overrides the penalties of the path file.
    #[serde(default)]
    pub penalties: Option<PenaltyParams>,
    #[serde(default)]
    pub solver: SolveOptions,
    /// Transport duration and time map, needed by every stage after the
    /// solve.
    #[serde(default)]
    pub timing: Option<Timing>,
    #[serde(default)]
    pub waveform: Option<WaveformParams>,
    #[serde(default)]
    pub simulation: Option<SimulationParams>,
    #[serde(default)]
    pub validity: Option<ValidityParams>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl PipelineConfig {
    /// Reads a config. Relative paths inside it are taken relative to the
    /// config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.rebase(base);
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Input::File(p) = &mut self.trap {
            fix(p);
        }
        if let Input::File(p) = &mut self.path {
            fix(p);
        }
        if let Some(WaveformParams {
            kernel: KernelSource::Csv { path, .. },
            ..
        }) = &mut self.waveform
        {
            fix(path);
        }
        fix(&mut self.output);
        if let Some(dir) = &mut self.cache_dir {
            fix(dir);
        }
    }

    /// Full config of a built-in demo with inline trap and path.
    pub fn demo(name: &str, output: PathBuf) -> Result<Self> {
        let Demo {
            trap,
            path,
            order,
            design_points,
            ..
        } = demos::demo(name)?;
        let duration = 20e-6;
        let linear = name == "linear";
        Ok(PipelineConfig {
            trap: Input::Inline(trap),
            path: Input::Inline(path),
            expansion: ExpansionParams {
                order,
                design_points,
                kappa: None,
            },
            penalties: None,
            solver: SolveOptions::default(),
            timing: Some(Timing {
                duration,
                map: TimeMap::SinSquared,
            }),
            waveform: Some(WaveformParams {
                samples: 500,
                kernel: KernelSource::LowpassFixture,
                weight: 0.01,
                padding: 25,
                slew_limit: None,
            }),
            // the junction well is not stable everywhere near the center
            simulation: linear.then(|| SimulationParams {
                mode: SimulationMode::Pseudopotential,
                dt: None,
                ions: 1,
                decimation: 10,
                well: 0,
            }),
            validity: Some(ValidityParams {
                noise_density: 1e-16,
                thresholds: Thresholds::default(),
            }),
            output,
            cache_dir: None,
        })
    }

    fn timing(&self, stage: &'static str) -> Result<Timing> {
        let t = self
            .timing
            .ok_or_else(|| Error::Config(format!("the {stage} stage needs a timing section")))?;
        if !(t.duration > 0.0) {
            return Err(Error::Config(format!("timing duration must be positive, got {}", t.duration)));
        }
        Ok(t)
    }
}

/// Trap, path and weights ready for the numerical stages.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: PipelineConfig,
    pub trap: TrapModel,
    pub path: ShuttlingPath,
    pub weights: PenaltyWeights,
}

/// Loads the trap and path and expands the penalties.
pub fn prepare(config: &PipelineConfig) -> Result<Prepared> {
    let trap = match &config.trap {
        Input::File(p) => TrapModel::load(p)?,
        Input::Inline(t) => t.clone().prepare()?,
    };
    let mut spec = match &config.path {
        Input::File(p) => PathSpec::load(p)?,
        Input::Inline(s) => s.clone(),
    };
    if let Some(p) = &config.penalties {
        spec.penalties = p.clone();
    }
    if config.expansion.kappa.is_some() {
        spec.kappa = config.expansion.kappa;
    }
    let (path, weights) = spec.build(&trap).map_err(|e| match e {
        Error::InvalidArgument(msg) => Error::Config(format!("path: {msg}")),
        other => other,
    })?;
    Ok(Prepared {
        config: config.clone(),
        trap,
        path,
        weights,
    })
}

pub fn stage_expand(prep: &Prepared) -> Result<(ExpansionSet, bool)> {
    let e = &prep.config.expansion;
    expand_along_path_cached(&prep.trap, &prep.path, e.order, e.design_points, prep.config.cache_dir.as_deref())
        .map_err(|err| err.in_stage("expand"))
}

pub fn stage_solve(prep: &Prepared, set: &ExpansionSet) -> Result<VoltageSolution> {
    let sol = solve_voltages(set, &prep.path, &prep.weights, &prep.trap, &prep.config.solver)
        .map_err(|e| e.in_stage("solve"))?;
    if sol.metrics.unstable_steps > 0 {
        warn!("{} steps have an unstable secular mode", sol.metrics.unstable_steps);
    }
    Ok(sol)
}

/// Desired and pre-ramped waveforms with the kernel used.
#[derive(Debug, Clone)]
pub struct WaveformOutput {
    pub desired: Waveform,
    pub preramp: Waveform,
    pub kernel: FirKernel,
    pub report: InversionReport,
}

pub fn load_kernel(source: &KernelSource, sample_period: f64) -> Result<FirKernel> {
    match source {
        KernelSource::Identity => Ok(FirKernel::identity(sample_period)),
        KernelSource::LowpassFixture => {
            let k = lowpass_fixture();
            Ok(FirKernel::new(k.taps, sample_period)?)
        }
        KernelSource::Gamma { len, onset, scale } => gamma_lowpass(*len, *onset, *scale, sample_period),
        KernelSource::Csv { path, step_response } => FirKernel::load_csv(path, sample_period, *step_response),
    }
}

pub fn stage_waveform(prep: &Prepared, electrodes: usize, voltages: &[f64]) -> Result<Option<WaveformOutput>> {
    let Some(params) = &prep.config.waveform else {
        return Ok(None);
    };
    let run = || -> Result<WaveformOutput> {
        let timing = prep.config.timing("waveform")?;
        let period = timing.duration / params.samples as f64;
        let mut desired = waveform_from_solution(electrodes, voltages, |x| timing.map.apply(x), params.samples, period)?;
        desired.channels = channel_names(&prep.trap);
        let kernel = load_kernel(&params.kernel, period)?;
        let (preramp, report) = invert_waveform(&desired, &kernel, params.padding, params.weight, params.slew_limit)?;
        Ok(WaveformOutput {
            desired,
            preramp,
            kernel,
            report,
        })
    };
    run().map(Some).map_err(|e| e.in_stage("waveform"))
}

pub fn stage_simulate(prep: &Prepared, set: &ExpansionSet, voltages: &[f64]) -> Result<Option<SimulationResult>> {
    let Some(params) = &prep.config.simulation else {
        return Ok(None);
    };
    let run = || -> Result<SimulationResult> {
        let timing = prep.config.timing("simulate")?;
        if params.ions == 0 || params.well >= prep.path.wells {
            return Err(Error::Config("simulation needs at least one ion in an existing well".into()));
        }
        let fields = FieldInterpolant::new(set, &prep.trap, params.well)?;
        let schedule = VoltageSchedule::from_steps(prep.trap.num_dc(), voltages, timing.duration, timing.map)?;
        let mut config = SimulationConfig::new(1.0, timing.duration);
        config.mode = params.mode;
        config.decimation = params.decimation;
        config.coulomb = params.ions > 1;
        let mut sim = Simulator {
            fields: &fields,
            schedule: &schedule,
            trap: &prep.trap,
            config: &config,
        };
        let start = prep.path.position(params.well, 0);
        let center = sim.equilibrium(&start, 0.0)?;
        let positions = if params.ions == 1 {
            vec![center]
        } else {
            let (_, h) = fields.fields_at(0.0).total(&schedule.voltages(0.0));
            let modes = secular_modes(&h, prep.trap.charge, prep.trap.mass)?;
            let axial = (0..3)
                .filter(|&u| modes.stable[u])
                .min_by(|&a, &b| modes.omegas[a].total_cmp(&modes.omegas[b]))
                .ok_or_else(|| Error::Singular("no stable mode at the start".into()))?;
            let axis: Vector3<f64> = modes.axis(axial);
            chain_offsets(params.ions, modes.omegas[axial], prep.trap.charge, prep.trap.mass)?
                .into_iter()
                .map(|u| center + axis * u)
                .collect()
        };
        let initial = SimulationState::at_rest(positions);
        let dt = match params.dt {
            Some(dt) => dt,
            None => 0.5 * sim.step_limit(&initial)?,
        };
        let config = SimulationConfig { dt, ..config.clone() };
        sim.config = &config;
        sim.run(&initial)
    };
    run().map(Some).map_err(|e| e.in_stage("simulate"))
}

pub fn stage_validate(prep: &Prepared, set: &ExpansionSet, voltages: &[f64]) -> Result<Option<ValidityReport>> {
    let Some(params) = &prep.config.validity else {
        return Ok(None);
    };
    validate_solution(
        set,
        &prep.path,
        &prep.trap,
        voltages,
        prep.config.timing.as_ref(),
        params.noise_density,
        &params.thresholds,
    )
    .map(Some)
    .map_err(|e| e.in_stage("validate"))
}

fn channel_names(trap: &TrapModel) -> Vec<String> {
    trap.dc
        .iter()
        .enumerate()
        .map(|(n, e)| if e.name.is_empty() { format!("V{n}") } else { e.name.clone() })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Solve summary written next to the voltages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveSummary<'a> {
    pub residual: f64,
    pub iterations: usize,
    pub method: crate::solver::SolveMethod,
    pub penalties: &'a crate::solver::PenaltyBreakdown,
    pub metrics: &'a crate::solver::SolutionMetrics,
}

/// Everything one pipeline run produced.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub output: PathBuf,
    pub files: Vec<PathBuf>,
    pub timings: Vec<StageTiming>,
    pub cache_hit: bool,
    pub prepared: Prepared,
    pub solution: VoltageSolution,
    pub waveform: Option<WaveformOutput>,
    pub simulation: Option<SimulationResult>,
    pub validity: Option<ValidityReport>,
}

struct Timer(Vec<StageTiming>);

impl Timer {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        let seconds = start.elapsed().as_secs_f64();
        info!("{stage}: {seconds:.3} s");
        self.0.push(StageTiming {
            stage: stage.to_string(),
            seconds,
        });
        Ok(out)
    }
}

/// Runs every configured stage and writes the artifacts.
pub fn run_pipeline(config: &PipelineConfig) -> Result<Artifacts> {
    let mut timer = Timer(Vec::new());
    let prep = timer.time("prepare", || prepare(config))?;
    let (set, cache_hit) = timer.time("expand", || stage_expand(&prep))?;
    let solution = timer.time("solve", || stage_solve(&prep, &set))?;
    let n = prep.trap.num_dc();
    let waveform = timer.time("waveform", || stage_waveform(&prep, n, &solution.voltages))?;
    let simulation = timer.time("simulate", || stage_simulate(&prep, &set, &solution.voltages))?;
    let validity = timer.time("validate", || stage_validate(&prep, &set, &solution.voltages))?;

    let mut artifacts = Artifacts {
        output: config.output.clone(),
        files: Vec::new(),
        timings: timer.0,
        cache_hit,
        prepared: prep,
        solution,
        waveform,
        simulation,
        validity,
    };
    write_artifacts(&mut artifacts).map_err(|e| e.in_stage("write"))?;
    Ok(artifacts)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn write_artifacts(a: &mut Artifacts) -> Result<()> {
    let dir = a.output.clone();
    std::fs::create_dir_all(&dir)?;
    let mut files = Vec::new();

    let f = dir.join("voltages.csv");
    a.solution.write_csv(&f)?;
    files.push(f);
    let f = dir.join("metrics.json");
    write_json(
        &f,
        &SolveSummary {
            residual: a.solution.residual,
            iterations: a.solution.iterations,
            method: a.solution.method,
            penalties: &a.solution.penalties,
            metrics: &a.solution.metrics,
        },
    )?;
    files.push(f);
    if let Some(w) = &a.waveform {
        let f = dir.join("waveform.csv");
        w.preramp.write_csv(&f)?;
        files.push(f);
        let f = dir.join("waveform_desired.csv");
        w.desired.write_csv(&f)?;
        files.push(f);
        let f = dir.join("waveform_report.json");
        write_json(&f, &w.report)?;
        files.push(f);
    }
    if let Some(s) = &a.simulation {
        let f = dir.join("trajectory.csv");
        s.write_csv(&f)?;
        files.push(f);
        let f = dir.join("excitation.json");
        write_json(&f, &s.excitation)?;
        files.push(f);
    }
    if let Some(v) = &a.validity {
        let f = dir.join("validity.json");
        write_json(&f, v)?;
        files.push(f);
    }
    files.extend(emit_plot_data(a, &dir.join("plot"))?);
    // timings differ between runs; everything else is reproducible
    let f = dir.join("timings.json");
    write_json(&f, &a.timings)?;
    files.push(f);
    a.files = files;
    Ok(())
}

fn fmt(x: f64) -> String {
    format!("{x:e}")
}

/// Columnar files for plotting: voltages, well offsets and secular
/// frequencies against arc length, and the pre-ramp of the channel with
/// the largest swing.
pub fn emit_plot_data(a: &Artifacts, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let prep = &a.prepared;
    let names = channel_names(&prep.trap);
    let n = names.len();
    let mut files = Vec::new();

    for w in 0..prep.path.wells {
        let suffix = if prep.path.wells == 1 { String::new() } else { format!("_well{w}") };
        let arc = prep.path.arc_length(w);
        let steps: Vec<_> = a.solution.metrics.steps.iter().filter(|s| s.well == w).collect();

        let f = dir.join(format!("voltage_vs_position{suffix}.csv"));
        let mut out = csv::Writer::from_path(&f)?;
        out.write_record(std::iter::once("s".to_string()).chain(names.iter().cloned()))?;
        for (t, s) in arc.iter().enumerate() {
            out.write_record(std::iter::once(fmt(*s)).chain((0..n).map(|k| fmt(a.solution.voltage(k, t)))))?;
        }
        out.flush()?;
        files.push(f);

        let f = dir.join(format!("displacement_vs_position{suffix}.csv"));
        let mut out = csv::Writer::from_path(&f)?;
        out.write_record(["s", "dx", "dy", "dz"])?;
        for (s, m) in arc.iter().zip(&steps) {
            let d = m.displacement.map(|d| d.map(fmt).unwrap_or_default());
            out.write_record([fmt(*s), d[0].clone(), d[1].clone(), d[2].clone()])?;
        }
        out.flush()?;
        files.push(f);

        let f = dir.join(format!("omega_vs_position{suffix}.csv"));
        let mut out = csv::Writer::from_path(&f)?;
        out.write_record(["s", "omega_x", "omega_y", "omega_z", "deviation_x", "deviation_y", "deviation_z"])?;
        for (s, m) in arc.iter().zip(&steps) {
            let mut row = vec![fmt(*s)];
            row.extend(m.omegas.iter().map(|x| fmt(*x)));
            row.extend(m.frequency_deviation.iter().map(|x| fmt(*x)));
            out.write_record(&row)?;
        }
        out.flush()?;
        files.push(f);
    }

    if let (Some(w), Some(params)) = (&a.waveform, &prep.config.waveform) {
        let swing = |c: &Vec<f64>| {
            let (lo, hi) = c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(*x), h.max(*x)));
            hi - lo
        };
        let k = (0..w.desired.samples.len())
            .max_by(|&i, &j| swing(&w.desired.samples[i]).total_cmp(&swing(&w.desired.samples[j])))
            .unwrap_or(0);
        let desired = &w.desired.samples[k];
        let s = params.padding;
        let padded: Vec<f64> = std::iter::repeat(desired[0])
            .take(s)
            .chain(desired.iter().copied())
            .chain(std::iter::repeat(desired[desired.len() - 1]).take(s))
            .collect();
        let filtered = w.kernel.apply(&padded);
        // the pre-ramp file holds only the unpadded part
        let ramp = crate::waveform::invert_filter(desired, &w.kernel, s, params.weight)?;
        let f = dir.join("preramp.csv");
        let mut out = csv::Writer::from_path(&f)?;
        out.write_record(["i", "desired", "filtered", "preramp", "filtered_preramp"])?;
        for i in 0..padded.len() {
            out.write_record([
                (i as i64 - s as i64).to_string(),
                fmt(padded[i]),
                fmt(filtered[i]),
                fmt(ramp.input[i]),
                fmt(ramp.filtered[i]),
            ])?;
        }
        out.flush()?;
        files.push(f);
    }
    Ok(files)
}

/// Loads voltages written by an earlier solve and checks them against
/// the prepared trap and path.
pub fn load_voltages(prep: &Prepared, path: &Path) -> Result<Vec<f64>> {
    let (n, t, v) = read_voltages_csv(path)?;
    if n != prep.trap.num_dc() || t != prep.path.steps {
        return Err(Error::Config(format!(
            "{} holds {n} electrodes x {t} steps, the config has {} x {}",
            path.display(),
            prep.trap.num_dc(),
            prep.path.steps
        )));
    }
    Ok(v)
}
