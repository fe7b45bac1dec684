//! Mini-batch SGD execution with replacement sampling, trace recording,
//! and exact/Monte-Carlo batch-moment oracles.
//!
//! A single run is inherently sequential; independent runs may execute in
//! parallel. Every run draws from its own ChaCha8 stream whose seed is
//! derived from `(master seed, run index)` by a SplitMix64 mix, so sweep
//! results do not depend on scheduling order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problems::{Problem, ProblemError};
use crate::schedules::{PlanError, SchedulerPlan};

/// Any coordinate beyond this norm is treated as divergence.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("batch size must be >= 1")]
    EmptyBatch,
    #[error("iterate diverged at step {last_step}")]
    Diverged { last_step: u64 },
    #[error("enumeration of n^b = {count} batches exceeds the 10^6 budget")]
    EnumerationTooLarge { count: u128 },
    #[error("plan covers n = {plan_n} samples but problem has n = {problem_n}")]
    SampleCountMismatch { plan_n: u64, problem_n: usize },
    #[error("need at least {min} Monte-Carlo draws, got {got}")]
    TooFewDraws { min: u64, got: u64 },
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Derive an independent per-run seed from a master seed and run index.
///
/// SplitMix64 finalizer over `master + index * golden_gamma`; consecutive
/// indices land in statistically unrelated streams.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded generator for one run.
pub fn run_rng(master: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, index))
}

/// Everything one SGD run needs; two equal configs replay identically.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub plan: SchedulerPlan,
    pub problem: Problem,
    pub theta0: Vec<f64>,
    pub seed: u64,
    pub record_every: u64,
}

impl RunConfig {
    pub fn new(
        plan: SchedulerPlan,
        problem: Problem,
        theta0: Vec<f64>,
        seed: u64,
        record_every: u64,
    ) -> Result<Self, EngineError> {
        if plan.structure().n() != problem.n() as u64 {
            return Err(EngineError::SampleCountMismatch {
                plan_n: plan.structure().n(),
                problem_n: problem.n(),
            });
        }
        if theta0.iter().any(|v| !v.is_finite()) {
            return Err(EngineError::Problem(ProblemError::NonFinite));
        }
        Ok(Self {
            plan,
            problem,
            theta0,
            seed,
            record_every: record_every.max(1),
        })
    }
}

/// One recorded step of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub t: u64,
    pub eta: f64,
    pub b: u64,
    /// Exact `||grad f(theta_t)||^2` from the closed-form full gradient.
    pub grad_norm2: f64,
    pub loss: f64,
    /// `f(theta_t) - f_star` when the optimum is known.
    pub subopt: Option<f64>,
}

/// Recorded trajectory of one run. Step `t = 0` and the final step are
/// always present; intermediate steps are thinned by `record_every`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub case_tag: String,
    pub seed: u64,
    pub steps: Vec<TraceStep>,
    pub final_theta: Vec<f64>,
}

impl Trace {
    pub fn recorded_steps(&self) -> impl Iterator<Item = u64> + '_ {
        self.steps.iter().map(|s| s.t)
    }

    /// CSV rendering with columns `t,eta,b,grad_norm2,loss,subopt`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,eta,b,grad_norm2,loss,subopt\n");
        for s in &self.steps {
            let subopt = s.subopt.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.t, s.eta, s.b, s.grad_norm2, s.loss, subopt
            ));
        }
        out
    }

    /// File stem embedding the plan case and seed.
    pub fn file_stem(&self) -> String {
        format!("trace_{}_seed{}", self.case_tag, self.seed)
    }
}

/// Mean of `b` per-sample gradients drawn i.i.d. uniform with replacement.
pub fn minibatch_gradient(
    problem: &Problem,
    theta: &[f64],
    b: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, EngineError> {
    if b == 0 {
        return Err(EngineError::EmptyBatch);
    }
    let mut grad = vec![0.0; problem.dim()];
    minibatch_gradient_into(problem, theta, b, rng, &mut grad);
    Ok(grad)
}

fn minibatch_gradient_into(
    problem: &Problem,
    theta: &[f64],
    b: u64,
    rng: &mut ChaCha8Rng,
    out: &mut [f64],
) {
    out.fill(0.0);
    let n = problem.n();
    let weight = 1.0 / b as f64;
    for _ in 0..b {
        let i = rng.random_range(0..n);
        problem.accumulate_sample_gradient(theta, i, weight, out);
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|&x| x * x).sum()
}

/// Run mini-batch SGD over the plan's full horizon.
///
/// `theta_{t+1} = theta_t - eta_t * g_t` with `g_t` the mini-batch gradient
/// at batch size `b_t`. Deterministic given the config. Divergence (any
/// non-finite coordinate or `||theta|| > 1e12`) aborts with the last
/// finite step; it is surfaced, never swallowed.
pub fn sgd_run(config: &RunConfig) -> Result<Trace, EngineError> {
    let plan = &config.plan;
    let problem = &config.problem;
    let total = plan.total_steps();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut theta = config.theta0.clone();
    let mut grad = vec![0.0; problem.dim()];
    let mut full = vec![0.0; problem.dim()];
    let f_star = problem.certify().f_star;
    let mut steps = Vec::new();

    for t in 0..total {
        let eta = plan.lr_at(t)?;
        let b = plan.bs_at(t)?;

        if t % config.record_every == 0 || t == total - 1 {
            problem.full_gradient_into(&theta, &mut full);
            let loss = problem.loss(&theta)?;
            steps.push(TraceStep {
                t,
                eta,
                b,
                grad_norm2: norm2(&full),
                loss,
                subopt: f_star.map(|fs| loss - fs),
            });
        }

        minibatch_gradient_into(problem, &theta, b, &mut rng, &mut grad);
        for (x, g) in theta.iter_mut().zip(&grad) {
            *x -= eta * g;
        }

        if theta.iter().any(|v| !v.is_finite()) || norm2(&theta) > DIVERGENCE_NORM * DIVERGENCE_NORM
        {
            return Err(EngineError::Diverged { last_step: t });
        }
    }

    Ok(Trace {
        case_tag: plan.case_tag().to_string(),
        seed: config.seed,
        steps,
        final_theta: theta,
    })
}

/// Exact first and second moments of the mini-batch gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchMoments {
    pub mean: Vec<f64>,
    /// `E ||grad f_B - grad f||^2` over all ordered batches.
    pub variance: f64,
}

/// Enumerate all `n^b` ordered with-replacement batches and return the
/// exact mean (which must equal the full gradient) and variance.
pub fn enumerate_batch_moments(
    problem: &Problem,
    theta: &[f64],
    b: u64,
) -> Result<BatchMoments, EngineError> {
    if b == 0 {
        return Err(EngineError::EmptyBatch);
    }
    let n = problem.n();
    let count = (n as u128).pow(b as u32);
    if count > 1_000_000 {
        return Err(EngineError::EnumerationTooLarge { count });
    }
    let d = problem.dim();
    // Per-sample gradients once; each batch is a mean over an index tuple.
    let sample_grads: Vec<Vec<f64>> = (0..n)
        .map(|i| Ok(problem.sample_gradient(theta, i)?.value))
        .collect::<Result<_, EngineError>>()?;
    let full = problem.full_gradient(theta)?;

    let mut mean = vec![0.0; d];
    let mut variance = 0.0;
    let mut indices = vec![0usize; b as usize];
    let mut batch = vec![0.0; d];
    loop {
        batch.fill(0.0);
        for &i in &indices {
            for (acc, &g) in batch.iter_mut().zip(&sample_grads[i]) {
                *acc += g;
            }
        }
        let inv_b = 1.0 / b as f64;
        for acc in &mut batch {
            *acc *= inv_b;
        }
        for (m, &g) in mean.iter_mut().zip(&batch) {
            *m += g;
        }
        variance += batch
            .iter()
            .zip(&full)
            .map(|(&g, &f)| (g - f) * (g - f))
            .sum::<f64>();

        // Odometer over [0, n)^b.
        let mut pos = 0;
        loop {
            if pos == indices.len() {
                let inv = 1.0 / count as f64;
                for m in &mut mean {
                    *m *= inv;
                }
                return Ok(BatchMoments {
                    mean,
                    variance: variance * inv,
                });
            }
            indices[pos] += 1;
            if indices[pos] < n {
                break;
            }
            indices[pos] = 0;
            pos += 1;
        }
    }
}

/// Monte-Carlo estimate of `E ||grad f_B - grad f||^2` with standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceEstimate {
    pub mean: f64,
    pub standard_error: f64,
    pub draws: u64,
}

/// Unbiased Monte-Carlo estimator of the mini-batch gradient variance,
/// for batch/problem sizes where enumeration is infeasible.
pub fn mc_variance(
    problem: &Problem,
    theta: &[f64],
    b: u64,
    draws: u64,
    rng: &mut ChaCha8Rng,
) -> Result<VarianceEstimate, EngineError> {
    const MIN_DRAWS: u64 = 1000;
    if draws < MIN_DRAWS {
        return Err(EngineError::TooFewDraws {
            min: MIN_DRAWS,
            got: draws,
        });
    }
    let full = problem.full_gradient(theta)?;
    let mut grad = vec![0.0; problem.dim()];
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..draws {
        minibatch_gradient_into(problem, theta, b, rng, &mut grad);
        let dev2: f64 = grad
            .iter()
            .zip(&full)
            .map(|(&g, &f)| (g - f) * (g - f))
            .sum();
        sum += dev2;
        sum_sq += dev2 * dev2;
    }
    let k = draws as f64;
    let mean = sum / k;
    let var = (sum_sq / k - mean * mean).max(0.0) * k / (k - 1.0);
    Ok(VarianceEstimate {
        mean,
        standard_error: (var / k).sqrt(),
        draws,
    })
}
