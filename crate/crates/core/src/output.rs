//! Report writers: traces, aggregates, verdicts, and the output manifest.
//!
//! Per-run files are written by the workers' coordinator after the join;
//! the manifest is written last and lists every produced file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{ConfigError, ExperimentConfig};
use crate::engine::RunConfig;
use crate::harness::{aggregate, aggregate_csv, execute_runs, Experiment, HarnessError, Measure};

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("serialization: {0}")]
    Serialize(#[from] serde_json::Error),
}

/// Files produced by one invocation, written as `manifest.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub name: String,
    pub spec_version: u32,
    pub files: Vec<String>,
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, OutputError> {
    fs::create_dir_all(dir).map_err(|source| OutputError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| OutputError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(path)
}

pub fn write_manifest(dir: &Path, name: &str, files: Vec<String>) -> Result<(), OutputError> {
    let manifest = Manifest {
        name: name.to_string(),
        spec_version: crate::config::SPEC_VERSION,
        files,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    write_file(dir, "manifest.json", &json)?;
    Ok(())
}

/// Run one plan/seed grid and write the per-plan aggregate CSV plus
/// per-run trace CSVs. Returns the file names written.
pub fn run_sweep_plan(
    name: &str,
    runs: &[RunConfig],
    measure: Measure,
    jobs: usize,
    dir: &Path,
    write_traces: bool,
) -> Result<Vec<String>, OutputError> {
    let traces = execute_runs(runs, jobs)?;
    let mut files = Vec::new();
    if write_traces {
        for trace in &traces {
            let fname = format!("{}.csv", trace.file_stem());
            write_file(dir, &fname, &trace.to_csv())?;
            files.push(fname);
        }
    }
    let estimates = aggregate(&traces, measure)?;
    let csv = aggregate_csv(&[(name.to_string(), estimates)]);
    let fname = format!("aggregate_{name}.csv");
    write_file(dir, &fname, &csv)?;
    files.push(fname);
    Ok(files)
}

/// Execute a sweep config: the base plan plus every named variant, all on
/// the same problem and seed grid. One combined aggregate CSV covers all
/// plans; the manifest lists everything.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    override_seed: Option<u64>,
    override_seeds: Option<u64>,
    jobs: usize,
    dir: &Path,
    write_traces: bool,
) -> Result<Vec<String>, OutputError> {
    let problem = cfg.build_problem()?;
    let master = cfg.master_seed(override_seed);
    let seeds = override_seeds.unwrap_or(cfg.run.seeds);
    let mut files = Vec::new();
    let mut combined: Vec<(String, Vec<crate::harness::StepEstimate>)> = Vec::new();

    for (plan_name, plan_spec) in cfg.sweep_plans() {
        let plan = plan_spec.build(problem.n() as u64)?;
        let theta0 = cfg.run.theta0.materialize(problem.dim());
        let base = RunConfig::new(plan, problem.clone(), theta0, 0, cfg.run.record_every)
            .map_err(ConfigError::from)?;
        let exp = Experiment::seed_grid(plan_name.clone(), &base, master, seeds);
        let traces = execute_runs(&exp.runs, jobs)?;
        if write_traces {
            for trace in &traces {
                let fname = format!("{plan_name}_{}.csv", trace.file_stem());
                write_file(dir, &fname, &trace.to_csv())?;
                files.push(fname);
            }
        }
        combined.push((plan_name, aggregate(&traces, cfg.measure)?));
    }

    let csv = aggregate_csv(&combined);
    write_file(dir, "aggregate.csv", &csv)?;
    files.push("aggregate.csv".to_string());
    write_manifest(dir, &cfg.name, files.clone())?;
    files.push("manifest.json".to_string());
    Ok(files)
}
