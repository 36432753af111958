//! `segtrap`: runs the shuttling pipeline, or single stages of it, from a
//! JSON config.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use segtrap::multipole::ExpansionSet;
use segtrap::pipeline::{
    load_voltages, prepare, run_pipeline, stage_expand, stage_simulate, stage_solve, stage_validate,
    stage_waveform, write_json, Artifacts, PipelineConfig, Prepared, SolveSummary,
};
use segtrap::validity::Timing;
use segtrap::{Error, Result};

#[derive(Parser)]
#[command(name = "segtrap", version, about = "Shuttling solutions and voltage waveforms for segmented ion traps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expand the unit potentials along the path and save the coefficients.
    Expand(StageArgs),
    /// Solve for the electrode voltages.
    Solve(SolveArgs),
    /// Turn a solution into pre-ramped waveforms.
    Waveform(FromVoltages),
    /// Simulate the ion motion under a solution.
    Simulate(FromVoltages),
    /// Check the pseudopotential validity criteria for a solution.
    Validate(FromVoltages),
    /// Run every configured stage and write all artifacts.
    Run(StageArgs),
    /// Run one of the built-in demos.
    Demo(DemoArgs),
}

#[derive(Args)]
struct StageArgs {
    /// Pipeline config (JSON).
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    stage: StageArgs,
    /// Coefficients saved by `expand`; expanded afresh when absent.
    #[arg(long)]
    expansion: Option<PathBuf>,
}

#[derive(Args)]
struct FromVoltages {
    #[command(flatten)]
    stage: StageArgs,
    /// Voltages written by `solve`; defaults to `voltages.csv` in the
    /// output directory.
    #[arg(long)]
    voltages: Option<PathBuf>,
}

#[derive(Args)]
struct DemoArgs {
    /// Demo name: linear or junction.
    name: String,
    /// Write the demo config here and stop.
    #[arg(long)]
    write_config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

/// Command-line values that replace the config's.
#[derive(Args, Default)]
struct Overrides {
    /// Output directory.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Directory for cached expansions.
    #[arg(long, env = "SEGTRAP_CACHE_DIR")]
    cache_dir: Option<PathBuf>,
    /// Always expand afresh.
    #[arg(long)]
    no_cache: bool,
    /// Expansion order L.
    #[arg(long)]
    order: Option<usize>,
    /// Number of design points K.
    #[arg(long)]
    design_points: Option<usize>,
    /// Expansion radius, m.
    #[arg(long)]
    kappa: Option<f64>,
    /// Relative residual for the conjugate gradient solve.
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Transport duration, s.
    #[arg(long)]
    duration: Option<f64>,
    /// Waveform samples.
    #[arg(long)]
    samples: Option<usize>,
    /// Regularization weight of the filter inversion.
    #[arg(long)]
    weight: Option<f64>,
    /// Padding samples on each side of the waveform.
    #[arg(long)]
    padding: Option<usize>,
    /// Number of simulated ions.
    #[arg(long)]
    ions: Option<usize>,
    /// Simulation time step, s.
    #[arg(long)]
    dt: Option<f64>,
}

impl Overrides {
    fn apply(&self, c: &mut PipelineConfig) -> Result<()> {
        if let Some(o) = &self.output {
            c.output = o.clone();
        }
        if let Some(d) = &self.cache_dir {
            c.cache_dir = Some(d.clone());
        }
        if self.no_cache {
            c.cache_dir = None;
        }
        if let Some(l) = self.order {
            c.expansion.order = l;
        }
        if let Some(k) = self.design_points {
            c.expansion.design_points = k;
        }
        if let Some(k) = self.kappa {
            c.expansion.kappa = Some(k);
        }
        if let Some(t) = self.tolerance {
            c.solver.tolerance = t;
        }
        if let Some(m) = self.max_iter {
            c.solver.max_iter = Some(m);
        }
        if let Some(d) = self.duration {
            match &mut c.timing {
                Some(t) => t.duration = d,
                None => {
                    c.timing = Some(Timing {
                        duration: d,
                        map: Default::default(),
                    })
                }
            }
        }
        if self.samples.is_some() || self.weight.is_some() || self.padding.is_some() {
            let w = c
                .waveform
                .as_mut()
                .ok_or_else(|| Error::Config("waveform flags need a waveform section in the config".into()))?;
            if let Some(s) = self.samples {
                w.samples = s;
            }
            if let Some(x) = self.weight {
                w.weight = x;
            }
            if let Some(p) = self.padding {
                w.padding = p;
            }
        }
        if self.ions.is_some() || self.dt.is_some() {
            let s = c
                .simulation
                .as_mut()
                .ok_or_else(|| Error::Config("simulation flags need a simulation section in the config".into()))?;
            if let Some(n) = self.ions {
                s.ions = n;
            }
            if self.dt.is_some() {
                s.dt = self.dt;
            }
        }
        Ok(())
    }
}

fn load(args: &StageArgs) -> Result<PipelineConfig> {
    let mut config = PipelineConfig::load(&args.config)?;
    args.overrides.apply(&mut config)?;
    Ok(config)
}

fn out_dir(prep: &Prepared) -> Result<PathBuf> {
    let dir = prep.config.output.clone();
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn expansion(prep: &Prepared, file: Option<&Path>) -> Result<ExpansionSet> {
    match file {
        Some(f) => ExpansionSet::load(f),
        None => Ok(stage_expand(prep)?.0),
    }
}

fn voltages(prep: &Prepared, file: Option<&Path>) -> Result<Vec<f64>> {
    let default = prep.config.output.join("voltages.csv");
    load_voltages(prep, file.unwrap_or(&default))
}

fn section_missing(stage: &str) -> Error {
    Error::Config(format!("the config has no {stage} section"))
}

fn report(a: &Artifacts) {
    let m = &a.solution.metrics;
    println!(
        "solved {} electrodes x {} steps ({:?}, {} iterations, residual {:.1e}{})",
        a.solution.electrodes,
        a.solution.steps,
        a.solution.method,
        a.solution.iterations,
        a.solution.residual,
        if a.cache_hit { ", cached expansion" } else { "" }
    );
    println!(
        "max |V| {:.3} V, frequency deviation {:.2e}, unstable steps {}",
        m.max_abs_voltage, m.max_frequency_deviation, m.unstable_steps
    );
    if let Some(v) = &a.validity {
        println!("validity: {}", if v.all_pass { "all criteria pass" } else { "some criteria fail" });
    }
    println!("wrote {} files to {}", a.files.len(), a.output.display());
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => report(&run_pipeline(&load(&args)?)?),
        Command::Demo(args) => {
            let output = args.overrides.output.clone().unwrap_or_else(|| PathBuf::from(format!("demo-{}", args.name)));
            let mut config = PipelineConfig::demo(&args.name, output)?;
            args.overrides.apply(&mut config)?;
            match &args.write_config {
                Some(path) => {
                    write_json(path, &config)?;
                    println!("wrote {}", path.display());
                }
                None => report(&run_pipeline(&config)?),
            }
        }
        Command::Expand(args) => {
            let prep = prepare(&load(&args)?)?;
            let (set, cached) = stage_expand(&prep)?;
            let f = out_dir(&prep)?.join("expansion.json");
            set.save(&f)?;
            println!("wrote {}{}", f.display(), if cached { " (cached)" } else { "" });
        }
        Command::Solve(args) => {
            let prep = prepare(&load(&args.stage)?)?;
            let set = expansion(&prep, args.expansion.as_deref())?;
            let sol = stage_solve(&prep, &set)?;
            let dir = out_dir(&prep)?;
            sol.write_csv(&dir.join("voltages.csv"))?;
            write_json(
                &dir.join("metrics.json"),
                &SolveSummary {
                    residual: sol.residual,
                    iterations: sol.iterations,
                    method: sol.method,
                    penalties: &sol.penalties,
                    metrics: &sol.metrics,
                },
            )?;
            println!(
                "solved {} electrodes x {} steps, max |V| {:.3} V; wrote {}",
                sol.electrodes,
                sol.steps,
                sol.metrics.max_abs_voltage,
                dir.display()
            );
        }
        Command::Waveform(args) => {
            let prep = prepare(&load(&args.stage)?)?;
            let v = voltages(&prep, args.voltages.as_deref())?;
            let w = stage_waveform(&prep, prep.trap.num_dc(), &v)?.ok_or_else(|| section_missing("waveform"))?;
            let dir = out_dir(&prep)?;
            w.preramp.write_csv(&dir.join("waveform.csv"))?;
            w.desired.write_csv(&dir.join("waveform_desired.csv"))?;
            write_json(&dir.join("waveform_report.json"), &w.report)?;
            println!("wrote waveforms to {}", dir.display());
        }
        Command::Simulate(args) => {
            let prep = prepare(&load(&args.stage)?)?;
            let v = voltages(&prep, args.voltages.as_deref())?;
            let set = expansion(&prep, None)?;
            let s = stage_simulate(&prep, &set, &v)?.ok_or_else(|| section_missing("simulation"))?;
            let dir = out_dir(&prep)?;
            s.write_csv(&dir.join("trajectory.csv"))?;
            write_json(&dir.join("excitation.json"), &s.excitation)?;
            let quanta: f64 = s.excitation.ions.iter().flat_map(|i| i.quanta.iter().flatten()).sum();
            println!("final motional quanta {quanta:.3}; wrote {}", dir.display());
        }
        Command::Validate(args) => {
            let prep = prepare(&load(&args.stage)?)?;
            let v = voltages(&prep, args.voltages.as_deref())?;
            let set = expansion(&prep, None)?;
            let r = stage_validate(&prep, &set, &v)?.ok_or_else(|| section_missing("validity"))?;
            write_json(&out_dir(&prep)?.join("validity.json"), &r)?;
            println!(
                "validity: {}; max ratios {:.2e} {:.2e} {:.2e} {:.2e}",
                if r.all_pass { "all criteria pass" } else { "some criteria fail" },
                r.max_ratios[0],
                r.max_ratios[1],
                r.max_ratios[2],
                r.max_ratios[3]
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // help and version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                let text = s.to_string();
                if !msg.contains(&text) {
                    msg.push_str(": ");
                    msg.push_str(&text);
                }
                source = s.source();
            }
            eprintln!("error: {msg}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_replace_config_values() {
        let mut c = PipelineConfig::demo("linear", "a".into()).unwrap();
        let o = Overrides {
            output: Some("b".into()),
            cache_dir: Some("cache".into()),
            order: Some(4),
            tolerance: Some(1e-8),
            duration: Some(5e-5),
            weight: Some(0.5),
            ions: Some(2),
            ..Default::default()
        };
        o.apply(&mut c).unwrap();
        assert_eq!(c.output, PathBuf::from("b"));
        assert_eq!(c.cache_dir, Some(PathBuf::from("cache")));
        assert_eq!(c.expansion.order, 4);
        assert_eq!(c.solver.tolerance, 1e-8);
        assert_eq!(c.timing.unwrap().duration, 5e-5);
        assert_eq!(c.waveform.unwrap().weight, 0.5);
        assert_eq!(c.simulation.unwrap().ions, 2);

        let mut c = PipelineConfig::demo("linear", "a".into()).unwrap();
        c.cache_dir = Some("cache".into());
        Overrides {
            no_cache: true,
            ..Default::default()
        }
        .apply(&mut c)
        .unwrap();
        assert_eq!(c.cache_dir, None);
    }

    #[test]
    fn flags_need_their_section() {
        let mut c = PipelineConfig::demo("junction", "a".into()).unwrap();
        let o = Overrides {
            dt: Some(1e-9),
            ..Default::default()
        };
        assert!(o.apply(&mut c).unwrap_err().is_config());
    }

    #[test]
    fn cli_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
        let cli = Cli::try_parse_from(["segtrap", "solve", "c.json", "--expansion", "e.json", "--tolerance", "1e-9"]).unwrap();
        assert!(matches!(cli.command, Command::Solve(SolveArgs { expansion: Some(_), .. })));
    }
}
