//! Mini-batch SGD with joint batch-size/learning-rate schedules,
//! exact and closed-form convergence-bound evaluation, certified
//! synthetic finite-sum problems, and a seeded verification harness.

pub mod bounds;
pub mod config;
pub mod engine;
pub mod harness;
pub mod kahan;
pub mod output;
pub mod problems;
pub mod schedules;

pub use bounds::{
    bound_b, bound_report, bound_v, convex_rhs, exact_b, exact_v, limsup_asymptote, nonconvex_rhs,
    AsymptoteFamily, BoundError, BoundReport, ProblemConstants,
};
pub use config::{ConfigError, ExperimentConfig, NamedPlan, PlanSpec, ProblemSpec, RunSpec, Theta0};
pub use engine::{
    derive_seed, enumerate_batch_moments, mc_variance, minibatch_gradient, run_rng, sgd_run,
    BatchMoments, EngineError, RunConfig, Trace, TraceStep, VarianceEstimate,
};
pub use harness::{
    aggregate, aggregate_csv, execute_runs, min_grad_norm_estimate, rate_fit, verify_experiment,
    Experiment, HarnessError, Measure, RateAxis, RateFit, StepEstimate, VerdictReport,
};
pub use output::{run_sweep, run_sweep_plan, write_manifest, Manifest, OutputError};
pub use problems::{bound_constants, CertFlag, Certificate, GradientSample, Problem, ProblemError};
pub use schedules::{
    build_structure, validate_candidate, BlockStructure, BsSchedule, CaseTag, LrSchedule,
    PlanError, SchedulerPlan, ValidationReport,
};
