//! JSON experiment documents.
//!
//! One document describes one experiment: a problem, a joint scheduler
//! plan, and run settings. The same format feeds every CLI subcommand.
//!
//! ```json
//! {
//!   "spec_version": 1,
//!   "name": "caseii-cosine",
//!   "problem": { "kind": "equal_curvature_quadratic",
//!                "n": 64, "dim": 10, "lambda": 1.0, "seed": 7 },
//!   "plan": {
//!     "lr": { "family": "cosine", "eta_max": 0.1, "eta_min": 0.0 },
//!     "bs": { "family": "exponential_growth", "b0": 8, "delta": 2.0 },
//!     "epochs_per_block": [133, 133, 133, 133]
//!   },
//!   "run": { "theta0": 2.0, "master_seed": 42, "seeds": 100,
//!            "record_every": 1 },
//!   "measure": "grad_norm2",
//!   "slack_se": 2.0
//! }
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineError, RunConfig};
use crate::harness::{Experiment, Measure};
use crate::problems::{Problem, ProblemError};
use crate::schedules::{build_structure, BsSchedule, LrSchedule, PlanError, SchedulerPlan};

pub const SPEC_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    /// serde_json errors carry line/column anchors into the document.
    #[error("{path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("unsupported spec_version {got}; this build reads version {want}")]
    Version { got: u32, want: u32 },
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Problem section: which synthetic objective to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    EqualCurvatureQuadratic {
        n: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        lambda: f64,
        seed: u64,
    },
    Logistic {
        n: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        seed: u64,
    },
    SineQuadratic {
        n: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        lambda: f64,
        amp: f64,
        seed: u64,
    },
}

fn default_dim() -> usize {
    10
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Problem, ConfigError> {
        Ok(match *self {
            ProblemSpec::EqualCurvatureQuadratic { n, dim, lambda, seed } => {
                Problem::seeded_quadratic(n, dim, lambda, seed)?
            }
            ProblemSpec::Logistic { n, dim, seed } => Problem::seeded_logistic(n, dim, seed)?,
            ProblemSpec::SineQuadratic {
                n,
                dim,
                lambda,
                amp,
                seed,
            } => Problem::seeded_sine_quadratic(n, dim, lambda, amp, seed)?,
        })
    }

    pub fn n(&self) -> usize {
        match *self {
            ProblemSpec::EqualCurvatureQuadratic { n, .. }
            | ProblemSpec::Logistic { n, .. }
            | ProblemSpec::SineQuadratic { n, .. } => n,
        }
    }
}

/// Plan section: LR rule, BS rule, and the per-block epoch counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSpec {
    pub lr: LrSchedule,
    pub bs: BsSchedule,
    pub epochs_per_block: Vec<u64>,
}

impl PlanSpec {
    pub fn build(&self, n: u64) -> Result<SchedulerPlan, ConfigError> {
        let structure = build_structure(n, &self.bs, &self.epochs_per_block)?;
        Ok(SchedulerPlan::new(
            self.lr.clone(),
            self.bs.clone(),
            structure,
        )?)
    }
}

/// Initial point: a scalar fill or an explicit vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Theta0 {
    Fill(f64),
    Vector(Vec<f64>),
}

impl Default for Theta0 {
    fn default() -> Self {
        Theta0::Fill(0.0)
    }
}

impl Theta0 {
    pub fn materialize(&self, dim: usize) -> Vec<f64> {
        match self {
            Theta0::Fill(v) => vec![*v; dim],
            Theta0::Vector(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default)]
    pub theta0: Theta0,
    #[serde(default)]
    pub master_seed: Option<u64>,
    #[serde(default = "default_seeds")]
    pub seeds: u64,
    #[serde(default = "default_record_every")]
    pub record_every: u64,
}

fn default_seeds() -> u64 {
    1
}

fn default_record_every() -> u64 {
    1
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            theta0: Theta0::default(),
            master_seed: None,
            seeds: default_seeds(),
            record_every: default_record_every(),
        }
    }
}

/// Top-level experiment document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub spec_version: u32,
    pub name: String,
    pub problem: ProblemSpec,
    pub plan: PlanSpec,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default)]
    pub measure: Measure,
    #[serde(default = "default_slack_se")]
    pub slack_se: f64,
    /// Extra plan variants for `sweep`; each reuses problem and run
    /// settings and overrides the plan.
    #[serde(default)]
    pub sweep: Vec<NamedPlan>,
}

fn default_slack_se() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedPlan {
    pub name: String,
    pub plan: PlanSpec,
}

impl ExperimentConfig {
    pub fn from_str_anchored(text: &str, path: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|source| ConfigError::Parse {
                path: path.to_string(),
                source,
            })?;
        if cfg.spec_version != SPEC_VERSION {
            return Err(ConfigError::Version {
                got: cfg.spec_version,
                want: SPEC_VERSION,
            });
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_str_anchored(&text, &path.display().to_string())
    }

    /// Master seed with env fallback: config value, then `SCHED_BOUND_SEED`,
    /// then 0.
    pub fn master_seed(&self, override_seed: Option<u64>) -> u64 {
        override_seed
            .or(self.run.master_seed)
            .or_else(|| {
                std::env::var("SCHED_BOUND_SEED")
                    .ok()
                    .and_then(|s| s.parse().ok())
            })
            .unwrap_or(0)
    }

    pub fn build_problem(&self) -> Result<Problem, ConfigError> {
        self.problem.build()
    }

    pub fn build_plan(&self) -> Result<SchedulerPlan, ConfigError> {
        self.plan.build(self.problem.n() as u64)
    }

    /// Materialize the experiment: base run plus the seed grid.
    pub fn build_experiment(
        &self,
        override_seed: Option<u64>,
        override_seeds: Option<u64>,
    ) -> Result<Experiment, ConfigError> {
        let problem = self.build_problem()?;
        let plan = self.build_plan()?;
        let theta0 = self.run.theta0.materialize(problem.dim());
        let base = RunConfig::new(plan, problem, theta0, 0, self.run.record_every)?;
        let master = self.master_seed(override_seed);
        let seeds = override_seeds.unwrap_or(self.run.seeds);
        let mut exp = Experiment::seed_grid(self.name.clone(), &base, master, seeds)
            .with_measure(self.measure);
        exp.slack_se = self.slack_se;
        Ok(exp)
    }

    /// All named plans of a sweep: the base plan first, then each variant.
    pub fn sweep_plans(&self) -> Vec<(String, PlanSpec)> {
        let mut out = vec![(self.name.clone(), self.plan.clone())];
        for np in &self.sweep {
            out.push((np.name.clone(), np.plan.clone()));
        }
        out
    }
}
