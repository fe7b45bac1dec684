//! Experiment orchestration: multi-seed Monte-Carlo aggregation,
//! inequality verification with statistical slack, and rate-fit
//! diagnostics.
//!
//! Runs inside an experiment are independent and execute in parallel;
//! aggregation is a deterministic post-join reduction, so the numbers do
//! not depend on the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{self, BoundError, ProblemConstants};
use crate::engine::{sgd_run, EngineError, RunConfig, Trace};
use crate::problems::bound_constants;
use crate::schedules::CaseTag;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("experiment needs at least one run")]
    NoRuns,
    #[error("traces are not aligned on recorded steps")]
    MisalignedTraces,
    #[error("rate fit needs at least {min} grid points, got {got}")]
    TooFewPoints { min: usize, got: usize },
    #[error("rate fit needs positive estimates on a log scale")]
    NonPositiveEstimate,
    #[error("run failed: {0}")]
    Run(#[from] EngineError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Problem(#[from] crate::problems::ProblemError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Which per-step quantity an experiment verifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    #[default]
    GradNorm2,
    Suboptimality,
}

/// A named set of runs sharing one problem and plan, differing in seed.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub name: String,
    pub runs: Vec<RunConfig>,
    pub measure: Measure,
    /// Standard-error multiplier for the one-sided pass criterion.
    pub slack_se: f64,
}

impl Experiment {
    /// Seed grid over one run configuration: run `i` uses the stream
    /// derived from `(master_seed, i)`.
    pub fn seed_grid(name: impl Into<String>, base: &RunConfig, master_seed: u64, seeds: u64) -> Self {
        let runs = (0..seeds)
            .map(|i| {
                let mut cfg = base.clone();
                cfg.seed = crate::engine::derive_seed(master_seed, i);
                cfg
            })
            .collect();
        Experiment {
            name: name.into(),
            runs,
            measure: Measure::GradNorm2,
            slack_se: 2.0,
        }
    }

    pub fn with_measure(mut self, measure: Measure) -> Self {
        self.measure = measure;
        self
    }
}

/// Seed-mean and standard error of the measure at one recorded step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepEstimate {
    pub t: u64,
    pub mean: f64,
    pub standard_error: f64,
}

fn measure_value(trace: &Trace, idx: usize, measure: Measure) -> f64 {
    let step = &trace.steps[idx];
    match measure {
        Measure::GradNorm2 => step.grad_norm2,
        Measure::Suboptimality => step.subopt.unwrap_or(f64::NAN),
    }
}

/// Per-step sample mean and standard error across aligned traces.
pub fn aggregate(traces: &[Trace], measure: Measure) -> Result<Vec<StepEstimate>, HarnessError> {
    let first = traces.first().ok_or(HarnessError::NoRuns)?;
    let steps: Vec<u64> = first.recorded_steps().collect();
    for t in traces {
        if t.recorded_steps().collect::<Vec<_>>() != steps {
            return Err(HarnessError::MisalignedTraces);
        }
    }
    let k = traces.len() as f64;
    let mut out = Vec::with_capacity(steps.len());
    for (idx, &t) in steps.iter().enumerate() {
        let mut sum = 0.0;
        for trace in traces {
            sum += measure_value(trace, idx, measure);
        }
        let mean = sum / k;
        // Two-pass variance: the one-pass form cancels catastrophically
        // when seeds agree to many digits.
        let standard_error = if traces.len() < 2 {
            0.0
        } else {
            let ss: f64 = traces
                .iter()
                .map(|trace| {
                    let d = measure_value(trace, idx, measure) - mean;
                    d * d
                })
                .sum();
            (ss / (k - 1.0) / k).sqrt()
        };
        out.push(StepEstimate {
            t,
            mean,
            standard_error,
        });
    }
    Ok(out)
}

/// Execute every run of an experiment, optionally on a bounded pool.
///
/// `jobs = 0` uses the default parallelism. Results are joined in run
/// order, so the output is identical for any worker count.
pub fn execute_runs(runs: &[RunConfig], jobs: usize) -> Result<Vec<Trace>, HarnessError> {
    let work = || -> Result<Vec<Trace>, HarnessError> {
        runs.par_iter()
            .map(|cfg| sgd_run(cfg).map_err(HarnessError::from))
            .collect()
    };
    if jobs == 0 {
        work()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| HarnessError::ThreadPool(e.to_string()))?;
        pool.install(work)
    }
}

/// Least-squares slope diagnostics for a rate fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
    pub points: usize,
}

/// Fit `y = intercept + slope * x` by least squares.
fn least_squares(xs: &[f64], ys: &[f64]) -> RateFit {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum::<f64>()
        / k)
        .sqrt();
    RateFit {
        slope,
        intercept,
        residual,
        points: xs.len(),
    }
}

/// Axis transformation for [`rate_fit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateAxis {
    /// `log(estimate)` against `log(x)`; slope is the power-law exponent.
    LogLog,
    /// `log(estimate)` against `x`; slope is the geometric decay per unit.
    SemiLog,
}

/// Fit the decay of gradient-norm estimates against a step or block grid.
///
/// `points` pairs `(x, estimate)` where the estimate is the min-over-steps
/// seed-mean of `||grad f||` (the square root of the aggregated squared
/// measure; min and sqrt commute).
pub fn rate_fit(points: &[(f64, f64)], axis: RateAxis) -> Result<RateFit, HarnessError> {
    const MIN_POINTS: usize = 4;
    if points.len() < MIN_POINTS {
        return Err(HarnessError::TooFewPoints {
            min: MIN_POINTS,
            got: points.len(),
        });
    }
    if points.iter().any(|&(x, y)| y <= 0.0 || x <= 0.0) {
        return Err(HarnessError::NonPositiveEstimate);
    }
    let xs: Vec<f64> = points
        .iter()
        .map(|&(x, _)| match axis {
            RateAxis::LogLog => x.ln(),
            RateAxis::SemiLog => x,
        })
        .collect();
    let ys: Vec<f64> = points.iter().map(|&(_, y)| y.ln()).collect();
    Ok(least_squares(&xs, &ys))
}

/// Outcome of checking an experiment's minimum estimate against a bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub name: String,
    pub case_tag: String,
    pub measure: Measure,
    pub seeds: usize,
    pub total_steps: u64,
    /// Minimum over recorded steps of the seed-mean measure. This matches
    /// the bounds' left-hand side (expectation inside the min).
    pub min_mean: f64,
    /// Step attaining the minimum and its standard error.
    pub min_step: u64,
    pub se_at_min: f64,
    /// Seed-mean of the per-seed minimum: a smaller quantity, reported for
    /// reference and never used in pass/fail decisions.
    pub mean_of_per_seed_min: f64,
    pub slack_se: f64,
    /// Right-hand side from exact schedule sums.
    pub rhs_exact: f64,
    /// Right-hand side from the closed-form bounds, when the plan has a
    /// matching family row.
    pub rhs_bound: Option<f64>,
    pub pass_exact: bool,
    pub pass_bound: Option<bool>,
    /// The inequality holds without information: RHS is no smaller than
    /// the measure at step 0.
    pub vacuous: bool,
    pub warning: Option<String>,
    pub rate_fit: Option<RateFit>,
    pub per_step: Vec<StepEstimate>,
}

impl VerdictReport {
    pub fn passed(&self) -> bool {
        self.pass_exact && self.pass_bound.unwrap_or(true)
    }
}

fn min_estimate(estimates: &[StepEstimate]) -> (f64, u64, f64) {
    let best = estimates
        .iter()
        .min_by(|a, b| a.mean.total_cmp(&b.mean))
        .expect("non-empty estimates");
    (best.mean, best.t, best.standard_error)
}

/// Run an experiment and compare its minimum seed-mean measure against the
/// matching right-hand side (nonconvex bound for the squared gradient
/// norm, convex bound for suboptimality).
///
/// Pass criterion: `min_t mean <= RHS + slack_se * SE(min step)`. Control
/// plans report a vacuous pass with a divergent-bound warning instead of
/// being compared against a bound that does not exist.
pub fn verify_experiment(exp: &Experiment, jobs: usize) -> Result<VerdictReport, HarnessError> {
    let first = exp.runs.first().ok_or(HarnessError::NoRuns)?;
    let plan = first.plan.clone();
    let problem = first.problem.clone();
    let theta0 = first.theta0.clone();

    let traces = execute_runs(&exp.runs, jobs)?;
    let per_step = aggregate(&traces, exp.measure)?;
    let (min_mean, min_step, se_at_min) = min_estimate(&per_step);
    let mean_of_per_seed_min = traces
        .iter()
        .map(|trace| {
            (0..trace.steps.len())
                .map(|idx| measure_value(trace, idx, exp.measure))
                .fold(f64::INFINITY, f64::min)
        })
        .sum::<f64>()
        / traces.len() as f64;

    let consts: ProblemConstants = bound_constants(&problem, &theta0, plan.eta_max())?;
    let b_exact = bounds::exact_b(&plan)?;
    let v_exact = bounds::exact_v(&plan)?;
    let rhs_exact = match exp.measure {
        Measure::GradNorm2 => bounds::nonconvex_rhs(&consts, b_exact, v_exact)?,
        Measure::Suboptimality => bounds::convex_rhs(&consts, b_exact, v_exact)?,
    };
    let mut warning = None;
    let rhs_bound = match (bounds::bound_b(&plan), bounds::bound_v(&plan)) {
        (Ok(b), Ok(v)) => Some(match exp.measure {
            Measure::GradNorm2 => bounds::nonconvex_rhs(&consts, b, v)?,
            Measure::Suboptimality => bounds::convex_rhs(&consts, b, v)?,
        }),
        (b, v) => {
            warning = b.err().or(v.err()).map(|e| e.to_string());
            None
        }
    };
    if plan.case_tag() == CaseTag::Control {
        warning = Some(
            "control plan: variance term is nondecreasing in T, bound divergent".to_string(),
        );
    }

    let slack = exp.slack_se * se_at_min;
    let pass_exact = min_mean <= rhs_exact + slack;
    let pass_bound = rhs_bound.map(|rhs| min_mean <= rhs + slack);
    let vacuous = rhs_exact >= per_step.first().expect("t=0 recorded").mean;

    Ok(VerdictReport {
        name: exp.name.clone(),
        case_tag: plan.case_tag().to_string(),
        measure: exp.measure,
        seeds: exp.runs.len(),
        total_steps: plan.total_steps(),
        min_mean,
        min_step,
        se_at_min,
        mean_of_per_seed_min,
        slack_se: exp.slack_se,
        rhs_exact,
        rhs_bound,
        pass_exact,
        pass_bound,
        vacuous,
        warning,
        rate_fit: None,
        per_step,
    })
}

/// Minimum seed-mean gradient norm of one experiment, for rate grids.
pub fn min_grad_norm_estimate(exp: &Experiment, jobs: usize) -> Result<f64, HarnessError> {
    let traces = execute_runs(&exp.runs, jobs)?;
    let per_step = aggregate(&traces, Measure::GradNorm2)?;
    let (min_mean, _, _) = min_estimate(&per_step);
    Ok(min_mean.max(0.0).sqrt())
}

/// Aggregate CSV with columns `plan,t,mean,se`, formatted with shortest
/// round-trip floats so byte-level comparison is meaningful.
pub fn aggregate_csv(rows: &[(String, Vec<StepEstimate>)]) -> String {
    let mut out = String::from("plan,t,mean,se\n");
    for (name, estimates) in rows {
        for e in estimates {
            out.push_str(&format!("{},{},{},{}\n", name, e.t, e.mean, e.standard_error));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::Problem;
    use crate::schedules::{build_structure, BsSchedule, LrSchedule, SchedulerPlan};

    fn quadratic_experiment(seeds: u64) -> Experiment {
        let problem = Problem::seeded_quadratic(32, 4, 1.0, 5).unwrap();
        let bs = BsSchedule::Constant { b0: 8 };
        let structure = build_structure(32, &bs, &[50]).unwrap();
        let plan =
            SchedulerPlan::new(LrSchedule::Constant { eta_max: 0.1 }, bs, structure).unwrap();
        // Start away from the centroid so the initial gradient is large
        // and the bound check is informative rather than vacuous.
        let base = RunConfig::new(plan, problem, vec![2.0; 4], 0, 1).unwrap();
        Experiment::seed_grid("quadratic", &base, 42, seeds)
    }

    #[test]
    fn aggregate_single_trace_has_zero_se() {
        let exp = quadratic_experiment(1);
        let traces = execute_runs(&exp.runs, 1).unwrap();
        let agg = aggregate(&traces, Measure::GradNorm2).unwrap();
        assert!(agg.iter().all(|e| e.standard_error == 0.0));
        assert_eq!(agg[0].mean, traces[0].steps[0].grad_norm2);
    }

    #[test]
    fn aggregate_zero_variance_problem_has_zero_se() {
        // Equal centers: dynamics are deterministic across seeds.
        let problem = Problem::quadratic(1.0, vec![vec![0.5, -0.5]; 8]).unwrap();
        let bs = BsSchedule::Constant { b0: 2 };
        let structure = build_structure(8, &bs, &[10]).unwrap();
        let plan =
            SchedulerPlan::new(LrSchedule::Constant { eta_max: 0.1 }, bs, structure).unwrap();
        let base = RunConfig::new(plan, problem, vec![0.0; 2], 0, 1).unwrap();
        let exp = Experiment::seed_grid("deterministic", &base, 7, 5);
        let traces = execute_runs(&exp.runs, 1).unwrap();
        let agg = aggregate(&traces, Measure::GradNorm2).unwrap();
        assert!(agg.iter().all(|e| e.standard_error < 1e-14));
    }

    #[test]
    fn aggregate_rejects_misaligned_traces() {
        let exp = quadratic_experiment(2);
        let mut traces = execute_runs(&exp.runs, 1).unwrap();
        traces[1].steps.pop();
        assert!(matches!(
            aggregate(&traces, Measure::GradNorm2),
            Err(HarnessError::MisalignedTraces)
        ));
    }

    #[test]
    fn execute_runs_is_join_order_deterministic() {
        let exp = quadratic_experiment(6);
        let seq = execute_runs(&exp.runs, 1).unwrap();
        let par = execute_runs(&exp.runs, 4).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn rate_fit_recovers_power_law() {
        // y = 3 x^(-1/2) exactly.
        let points: Vec<(f64, f64)> = [1000.0, 2000.0, 4000.0, 8000.0]
            .iter()
            .map(|&t: &f64| (t, 3.0 * t.powf(-0.5)))
            .collect();
        let fit = rate_fit(&points, RateAxis::LogLog).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn rate_fit_recovers_geometric_decay() {
        // y = 2 * gamma^(-m/2): semi-log slope is -ln(gamma)/2.
        let gamma: f64 = 1.4;
        let points: Vec<(f64, f64)> = (4..=10)
            .map(|m| (m as f64, 2.0 * gamma.powf(-(m as f64) / 2.0)))
            .collect();
        let fit = rate_fit(&points, RateAxis::SemiLog).unwrap();
        assert!((fit.slope + gamma.ln() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn rate_fit_needs_four_points() {
        let points = vec![(1.0, 1.0), (2.0, 0.5), (3.0, 0.3)];
        assert!(matches!(
            rate_fit(&points, RateAxis::LogLog),
            Err(HarnessError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn verify_simple_constant_plan_passes() {
        let exp = quadratic_experiment(20);
        let report = verify_experiment(&exp, 2).unwrap();
        assert!(report.pass_exact, "min {} vs rhs {}", report.min_mean, report.rhs_exact);
        assert_eq!(report.pass_bound, Some(true));
        assert!(!report.vacuous);
        // The expectation-of-minimum reference value cannot exceed the
        // minimum-of-expectations that the bounds control.
        assert!(report.mean_of_per_seed_min <= report.min_mean);
        // Round-trips through JSON.
        let json = serde_json::to_string(&report).unwrap();
        let back: VerdictReport = serde_json::from_str(&json).unwrap();
        assert_eq!(report, back);
    }

    #[test]
    fn verdict_pass_requires_both_flavors() {
        let exp = quadratic_experiment(5);
        let mut report = verify_experiment(&exp, 2).unwrap();
        assert!(report.passed());
        report.pass_bound = Some(false);
        assert!(!report.passed());
        report.pass_bound = None;
        assert!(report.passed());
        report.pass_exact = false;
        assert!(!report.passed());
    }

    #[test]
    fn verify_control_plan_is_flagged() {
        let problem = Problem::seeded_quadratic(32, 4, 1.0, 5).unwrap();
        let bs = BsSchedule::DecayingControl { b0: 32 };
        let structure = build_structure(32, &bs, &[400]).unwrap();
        let plan =
            SchedulerPlan::new(LrSchedule::Constant { eta_max: 0.1 }, bs, structure).unwrap();
        let base = RunConfig::new(plan, problem, vec![0.0; 4], 0, 1).unwrap();
        let exp = Experiment::seed_grid("control", &base, 3, 10);
        let report = verify_experiment(&exp, 2).unwrap();
        assert!(report.rhs_bound.is_none());
        assert!(report.warning.as_deref().unwrap().contains("control"));
        assert!(report.pass_exact);
    }

    #[test]
    fn verify_noiseless_plan_passes_with_zero_slack() {
        let problem = Problem::quadratic(1.0, vec![vec![1.0, 2.0]; 16]).unwrap();
        let bs = BsSchedule::Constant { b0: 4 };
        let structure = build_structure(16, &bs, &[30]).unwrap();
        let plan =
            SchedulerPlan::new(LrSchedule::Constant { eta_max: 0.1 }, bs, structure).unwrap();
        let base = RunConfig::new(plan, problem, vec![0.0; 2], 0, 1).unwrap();
        let mut exp = Experiment::seed_grid("noiseless", &base, 11, 8);
        exp.slack_se = 0.0;
        let report = verify_experiment(&exp, 2).unwrap();
        assert!(report.pass_exact);
        assert!(report.se_at_min < 1e-14);
    }

    #[test]
    fn clt_scaling_of_standard_errors() {
        // SE from 100 seeds is about 1/sqrt(4) of SE from 25 seeds.
        let exp25 = {
            let mut e = quadratic_experiment(25);
            e.name = "s25".into();
            e
        };
        let exp100 = quadratic_experiment(100);
        let agg25 =
            aggregate(&execute_runs(&exp25.runs, 0).unwrap(), Measure::GradNorm2).unwrap();
        let agg100 =
            aggregate(&execute_runs(&exp100.runs, 0).unwrap(), Measure::GradNorm2).unwrap();
        // Compare at the last recorded step where the chains are stationary.
        let a = agg25.last().unwrap();
        let b = agg100.last().unwrap();
        let ratio = a.standard_error / b.standard_error;
        // 3-SE-style slack: the ratio estimate itself is noisy.
        assert!(ratio > 1.0 && ratio < 4.0, "ratio {ratio}");
    }

    #[test]
    fn aggregate_csv_shape() {
        let exp = quadratic_experiment(3);
        let traces = execute_runs(&exp.runs, 1).unwrap();
        let agg = aggregate(&traces, Measure::GradNorm2).unwrap();
        let csv = aggregate_csv(&[("p0".to_string(), agg)]);
        assert!(csv.starts_with("plan,t,mean,se\n"));
        assert!(csv.lines().nth(1).unwrap().starts_with("p0,0,"));
    }
}
