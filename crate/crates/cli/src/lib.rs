//! Command-line front end: schedule dumps, bound reports, seeded runs,
//! verification experiments, parallel sweeps, batch-moment enumeration,
//! and problem-constant certification.
//!
//! Exit codes: 0 every verdict passed, 1 any verdict failed, 2 usage or
//! configuration error.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sgdsched::bounds::{bound_report, BoundReport};
use sgdsched::config::ExperimentConfig;
use sgdsched::engine::{enumerate_batch_moments, run_rng, sgd_run, RunConfig};
use sgdsched::harness::{verify_experiment, VerdictReport};
use sgdsched::output::{run_sweep, write_file, write_manifest};
use sgdsched::problems::bound_constants;
use sgdsched::{mc_variance, Problem, SchedulerPlan};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED_VERDICT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "sgdsched",
    about = "Mini-batch SGD schedulers, convergence bounds, and verification sweeps",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment configuration document.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Master seed override (falls back to config, then SCHED_BOUND_SEED).
    #[arg(long)]
    seed: Option<u64>,
    /// Number of seeded runs, overriding the config.
    #[arg(long)]
    seeds: Option<u64>,
    /// Output directory; reports land here alongside a manifest.json.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Rendering for stdout.
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Worker threads for parallel runs (0 = default).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dump the per-step learning-rate and batch-size table for a plan.
    Schedule {
        #[command(flatten)]
        common: Common,
        /// Print every Nth step.
        #[arg(long, default_value_t = 1)]
        every: u64,
    },
    /// Evaluate exact sums and closed-form bounds for a plan.
    Bounds {
        #[command(flatten)]
        common: Common,
    },
    /// Execute one seeded run and write its trace CSV.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Run the seed grid and verify the bound inequality.
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// Run every plan variant of the config in parallel and aggregate.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Also write per-run trace CSVs.
        #[arg(long)]
        traces: bool,
    },
    /// Enumerate all ordered mini-batches and report the exact moments.
    Enumerate {
        #[command(flatten)]
        common: Common,
        /// Batch size to enumerate.
        #[arg(long, default_value_t = 2)]
        batch: u64,
        /// Monte-Carlo draws for the cross-check estimate.
        #[arg(long, default_value_t = 10_000)]
        draws: u64,
    },
    /// Print the certified problem constants.
    Constants {
        #[command(flatten)]
        common: Common,
    },
}

/// Parse and execute; returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders --help/--version through the same path.
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32, String> {
    match cli.command {
        Command::Schedule { common, every } => cmd_schedule(&common, every),
        Command::Bounds { common } => cmd_bounds(&common),
        Command::Run { common } => cmd_run(&common),
        Command::Verify { common } => cmd_verify(&common),
        Command::Sweep { common, traces } => cmd_sweep(&common, traces),
        Command::Enumerate {
            common,
            batch,
            draws,
        } => cmd_enumerate(&common, batch, draws),
        Command::Constants { common } => cmd_constants(&common),
    }
}

fn load(common: &Common) -> Result<ExperimentConfig, String> {
    ExperimentConfig::load(&common.config).map_err(|e| e.to_string())
}

fn build_plan(cfg: &ExperimentConfig) -> Result<SchedulerPlan, String> {
    cfg.build_plan().map_err(|e| e.to_string())
}

fn build_problem(cfg: &ExperimentConfig) -> Result<Problem, String> {
    cfg.build_problem().map_err(|e| e.to_string())
}

fn cmd_schedule(common: &Common, every: u64) -> Result<i32, String> {
    let cfg = load(common)?;
    let plan = build_plan(&cfg)?;
    let every = every.max(1);
    let total = plan.total_steps();
    let mut lines = Vec::new();
    for t in (0..total).step_by(every as usize) {
        let eta = plan.lr_at(t).map_err(|e| e.to_string())?;
        let b = plan.bs_at(t).map_err(|e| e.to_string())?;
        lines.push((t, eta, b));
    }
    match common.format {
        Format::Json => {
            let rows: Vec<serde_json::Value> = lines
                .iter()
                .map(|&(t, eta, b)| serde_json::json!({"t": t, "eta": eta, "b": b}))
                .collect();
            println!("{}", serde_json::to_string_pretty(&rows).unwrap());
        }
        Format::Csv => {
            println!("t,eta,b");
            for (t, eta, b) in &lines {
                println!("{t},{eta},{b}");
            }
        }
        Format::Table => {
            println!("plan: {} over {} steps", plan.case_tag(), total);
            println!("{:>10}  {:>14}  {:>8}", "t", "eta", "b");
            for (t, eta, b) in &lines {
                println!("{t:>10}  {eta:>14.8}  {b:>8}");
            }
        }
    }
    Ok(EXIT_OK)
}

fn render_bound_report(report: &BoundReport, format: Format) {
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(report).unwrap()),
        Format::Csv => {
            println!("case,steps,b_exact,b_bound,v_exact,v_bound,nonconvex_exact,nonconvex_bound,b_dominated,v_dominated");
            println!(
                "{},{},{},{},{},{},{},{},{},{}",
                report.case_tag,
                report.total_steps,
                report.b_exact,
                report.b_bound.map(|v| v.to_string()).unwrap_or_default(),
                report.v_exact,
                report.v_bound.map(|v| v.to_string()).unwrap_or_default(),
                report.nonconvex_rhs_exact,
                report
                    .nonconvex_rhs_bound
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
                report.b_dominated.map(|v| v.to_string()).unwrap_or_default(),
                report.v_dominated.map(|v| v.to_string()).unwrap_or_default(),
            );
        }
        Format::Table => {
            println!("case: {} ({} steps)", report.case_tag, report.total_steps);
            let flag = |d: Option<bool>| match d {
                Some(true) => "pass",
                Some(false) => "VIOLATED",
                None => "-",
            };
            println!(
                "{:<16} {:>16} {:>16} {:>10}",
                "quantity", "exact", "bound", "dominated"
            );
            println!(
                "{:<16} {:>16.9e} {:>16} {:>10}",
                "B",
                report.b_exact,
                report
                    .b_bound
                    .map(|v| format!("{v:.9e}"))
                    .unwrap_or_else(|| "-".into()),
                flag(report.b_dominated)
            );
            println!(
                "{:<16} {:>16.9e} {:>16} {:>10}",
                "V",
                report.v_exact,
                report
                    .v_bound
                    .map(|v| format!("{v:.9e}"))
                    .unwrap_or_else(|| "-".into()),
                flag(report.v_dominated)
            );
            println!(
                "{:<16} {:>16.9e} {:>16} {:>10}",
                "rhs (nonconvex)",
                report.nonconvex_rhs_exact,
                report
                    .nonconvex_rhs_bound
                    .map(|v| format!("{v:.9e}"))
                    .unwrap_or_else(|| "-".into()),
                "-"
            );
            if let Some(note) = &report.bound_note {
                println!("note: {note}");
            }
        }
    }
}

fn cmd_bounds(common: &Common) -> Result<i32, String> {
    let cfg = load(common)?;
    let plan = build_plan(&cfg)?;
    let problem = build_problem(&cfg)?;
    let theta0 = cfg.run.theta0.materialize(problem.dim());
    let consts = bound_constants(&problem, &theta0, plan.eta_max()).map_err(|e| e.to_string())?;
    let report = bound_report(&plan, &consts).map_err(|e| e.to_string())?;
    render_bound_report(&report, common.format);
    if let Some(dir) = &common.out {
        let json = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
        write_file(dir, "bounds.json", &json).map_err(|e| e.to_string())?;
        write_manifest(dir, &cfg.name, vec!["bounds.json".into()]).map_err(|e| e.to_string())?;
    }
    let dominated = report.b_dominated.unwrap_or(true) && report.v_dominated.unwrap_or(true);
    Ok(if dominated { EXIT_OK } else { EXIT_FAILED_VERDICT })
}

fn cmd_run(common: &Common) -> Result<i32, String> {
    let cfg = load(common)?;
    let plan = build_plan(&cfg)?;
    let problem = build_problem(&cfg)?;
    let theta0 = cfg.run.theta0.materialize(problem.dim());
    let seed = cfg.master_seed(common.seed);
    let run_cfg = RunConfig::new(plan, problem, theta0, seed, cfg.run.record_every)
        .map_err(|e| e.to_string())?;
    let trace = sgd_run(&run_cfg).map_err(|e| e.to_string())?;
    let (fname, body) = match common.format {
        Format::Json => (
            format!("{}.json", trace.file_stem()),
            serde_json::to_string_pretty(&trace).map_err(|e| e.to_string())?,
        ),
        _ => (format!("{}.csv", trace.file_stem()), trace.to_csv()),
    };
    match &common.out {
        Some(dir) => {
            write_file(dir, &fname, &body).map_err(|e| e.to_string())?;
            write_manifest(dir, &cfg.name, vec![fname.clone()]).map_err(|e| e.to_string())?;
            println!("wrote {}", fname);
        }
        None => println!("{body}"),
    }
    Ok(EXIT_OK)
}

fn render_verdict(report: &VerdictReport, format: Format) {
    match format {
        Format::Json | Format::Csv => {
            println!("{}", serde_json::to_string_pretty(report).unwrap())
        }
        Format::Table => {
            println!(
                "{} [{}] measure={:?} seeds={} T={}",
                report.name, report.case_tag, report.measure, report.seeds, report.total_steps
            );
            println!(
                "  min_t mean = {:.6e} at t = {} (se {:.2e}, slack {} se)",
                report.min_mean, report.min_step, report.se_at_min, report.slack_se
            );
            println!(
                "  rhs exact  = {:.6e}  -> {}",
                report.rhs_exact,
                if report.pass_exact { "pass" } else { "FAIL" }
            );
            match (report.rhs_bound, report.pass_bound) {
                (Some(rhs), Some(pass)) => println!(
                    "  rhs bound  = {:.6e}  -> {}",
                    rhs,
                    if pass { "pass" } else { "FAIL" }
                ),
                _ => println!("  rhs bound  = (no closed-form row)"),
            }
            if report.vacuous {
                println!("  note: vacuous (rhs >= measure at t = 0)");
            }
            if let Some(w) = &report.warning {
                println!("  warning: {w}");
            }
        }
    }
}

fn cmd_verify(common: &Common) -> Result<i32, String> {
    let cfg = load(common)?;
    let exp = cfg
        .build_experiment(common.seed, common.seeds)
        .map_err(|e| e.to_string())?;
    let report = verify_experiment(&exp, common.jobs).map_err(|e| e.to_string())?;
    render_verdict(&report, common.format);
    if let Some(dir) = &common.out {
        let json = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
        write_file(dir, "verdict.json", &json).map_err(|e| e.to_string())?;
        write_manifest(dir, &cfg.name, vec!["verdict.json".into()]).map_err(|e| e.to_string())?;
    }
    Ok(if report.passed() {
        EXIT_OK
    } else {
        EXIT_FAILED_VERDICT
    })
}

fn cmd_sweep(common: &Common, traces: bool) -> Result<i32, String> {
    let cfg = load(common)?;
    let dir = common
        .out
        .clone()
        .ok_or_else(|| "sweep requires --out <dir>".to_string())?;
    let files = run_sweep(&cfg, common.seed, common.seeds, common.jobs, &dir, traces)
        .map_err(|e| e.to_string())?;
    println!("wrote {} files to {}", files.len(), dir.display());
    Ok(EXIT_OK)
}

fn cmd_enumerate(common: &Common, batch: u64, draws: u64) -> Result<i32, String> {
    let cfg = load(common)?;
    let problem = build_problem(&cfg)?;
    let theta = cfg.run.theta0.materialize(problem.dim());
    let moments = enumerate_batch_moments(&problem, &theta, batch).map_err(|e| e.to_string())?;
    let full = problem.full_gradient(&theta).map_err(|e| e.to_string())?;
    let cert = problem.certify();
    let mut rng = run_rng(cfg.master_seed(common.seed), 0);
    let mc = mc_variance(&problem, &theta, batch, draws, &mut rng).map_err(|e| e.to_string())?;
    let expected = cert.sigma2 / batch as f64;

    let mean_err = moments
        .mean
        .iter()
        .zip(&full)
        .map(|(&m, &f)| (m - f).abs())
        .fold(0.0f64, f64::max);
    match common.format {
        Format::Json => {
            let value = serde_json::json!({
                "batch": batch,
                "mean": moments.mean,
                "full_gradient": full,
                "max_mean_abs_error": mean_err,
                "variance": moments.variance,
                "sigma2_over_b": expected,
                "mc_estimate": mc.mean,
                "mc_standard_error": mc.standard_error,
            });
            println!("{}", serde_json::to_string_pretty(&value).unwrap());
        }
        _ => {
            println!("enumerated {}^{} ordered batches", problem.n(), batch);
            println!("  max |mean - full_gradient| = {mean_err:.3e}");
            println!("  exact variance             = {:.12e}", moments.variance);
            println!("  sigma2 / b                 = {expected:.12e}");
            println!(
                "  monte-carlo ({} draws)  = {:.6e} +- {:.2e}",
                mc.draws, mc.mean, mc.standard_error
            );
        }
    }
    Ok(EXIT_OK)
}

fn cmd_constants(common: &Common) -> Result<i32, String> {
    let cfg = load(common)?;
    let problem = build_problem(&cfg)?;
    let cert = problem.certify();
    match common.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&cert).unwrap()),
        _ => {
            println!(
                "problem: {} (n = {}, d = {})",
                problem.kind_name(),
                problem.n(),
                problem.dim()
            );
            println!("  l_bar   = {} ", cert.l_bar);
            println!("  sigma2  = {} [{:?}]", cert.sigma2, cert.sigma2_flag);
            println!("  f_lower = {} [{:?}]", cert.f_lower, cert.f_lower_flag);
            if let Some(fs) = cert.f_star {
                println!("  f_star  = {fs}");
            }
            if cert.theta_star.is_some() {
                println!("  theta_star known (convex)");
            }
        }
    }
    Ok(EXIT_OK)
}
