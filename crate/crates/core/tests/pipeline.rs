use std::path::Path;

use segtrap::pipeline::{run_pipeline, PipelineConfig};

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn linear_demo_runs_end_to_end_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cache = tmp.path().join("cache");
    let mut config = PipelineConfig::demo("linear", tmp.path().join("a")).unwrap();
    config.cache_dir = Some(cache.clone());

    let first = run_pipeline(&config).unwrap();
    assert!(!first.cache_hit);
    let sim = first.simulation.as_ref().unwrap();
    assert!(sim.excitation.max_path_offset < 1e-6);
    assert!(first.validity.as_ref().unwrap().all_pass);
    let report = &first.waveform.as_ref().unwrap().report;
    assert!(report.max_deviation < 1e-3, "pre-ramp deviation {}", report.max_deviation);

    config.output = tmp.path().join("b");
    let second = run_pipeline(&config).unwrap();
    assert!(second.cache_hit);

    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for name in [
        "voltages.csv",
        "metrics.json",
        "waveform.csv",
        "waveform_desired.csv",
        "trajectory.csv",
        "validity.json",
        "plot/voltage_vs_position.csv",
        "plot/displacement_vs_position.csv",
        "plot/omega_vs_position.csv",
        "plot/preramp.csv",
    ] {
        assert_eq!(read(&a, name), read(&b, name), "{name} differs between runs");
    }

    // cached and freshly computed expansions give the same solution
    config.cache_dir = None;
    config.output = tmp.path().join("c");
    let third = run_pipeline(&config).unwrap();
    assert_eq!(third.solution.voltages, first.solution.voltages);
}

#[test]
fn voltage_plot_has_one_column_per_electrode() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = PipelineConfig::demo("linear", tmp.path().to_path_buf()).unwrap();
    config.waveform = None;
    config.simulation = None;
    config.validity = None;
    let out = run_pipeline(&config).unwrap();
    let text = std::fs::read_to_string(tmp.path().join("plot/voltage_vs_position.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 1 + out.prepared.trap.num_dc());
    assert_eq!(lines.count(), out.prepared.path.steps);
    assert!(!tmp.path().join("trajectory.csv").exists());
}
