//! Learning-rate and batch-size schedules over a block/epoch structure.
//!
//! Training is divided into blocks `m = 0..=M` of `E_m` epochs each. The
//! batch size is constant within a block, `K_m = ceil(n / b_m)` steps make
//! one epoch, and the total step count is `T = sum_m K_m * E_m`. Growth
//! schedules (batch size and/or learning rate) update once per block;
//! decaying learning rates update per epoch or per step depending on the
//! family. All evaluation is pure: a plan is immutable after construction
//! and safe to share across threads.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("step index {t} out of range (total steps {total})")]
    StepOutOfRange { t: u64, total: u64 },
    #[error("epochs_per_block must not be empty")]
    EmptyEpochs,
    #[error("epochs_per_block entries must be >= 1")]
    ZeroEpochs,
    #[error("sample count n must be >= 1")]
    ZeroSamples,
    #[error("invalid plan: {0}")]
    Invalid(String),
}

/// Learning-rate rule, evaluated at a global step index.
///
/// `eta_max`/`eta_min` bound decaying families; growth families start from
/// `eta0` and increase once per block. Warm-up families grow for the first
/// `warmup_increases + 1` blocks and decay afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum LrSchedule {
    Constant {
        eta_max: f64,
    },
    /// `eta_max / sqrt(t + 1)`, updated each step.
    Diminishing {
        eta_max: f64,
    },
    /// Half-cosine from `eta_max` down to near `eta_min`, updated each epoch.
    Cosine {
        eta_max: f64,
        #[serde(default)]
        eta_min: f64,
    },
    /// `(eta_max - eta_min) * (1 - t/T)^p + eta_min`, updated each step.
    PolynomialDecay {
        eta_max: f64,
        #[serde(default)]
        eta_min: f64,
        p: f64,
    },
    /// `eta0 * gamma^m` on block `m`.
    ExponentialGrowth {
        eta0: f64,
        gamma: f64,
    },
    /// `(a2 * m + eta0)^c2` on block `m`.
    PolynomialGrowth {
        a2: f64,
        c2: f64,
        eta0: f64,
    },
    /// Grows like `eta0 * gamma^m` through block `warmup_increases`, then
    /// holds at `eta0 * gamma^warmup_increases`.
    WarmupConstant {
        eta0: f64,
        gamma: f64,
        warmup_increases: usize,
    },
    /// Grows like `eta0 * gamma^m` through block `warmup_increases`, then
    /// cosine-decays over the remaining epochs from
    /// `eta_max = eta0 * gamma^warmup_increases` towards `eta_min`.
    WarmupCosine {
        eta0: f64,
        gamma: f64,
        warmup_increases: usize,
        #[serde(default)]
        eta_min: f64,
    },
}

impl LrSchedule {
    /// Decaying families satisfy `eta_{t+1} <= eta_t`.
    pub fn is_decaying(&self) -> bool {
        matches!(
            self,
            LrSchedule::Constant { .. }
                | LrSchedule::Diminishing { .. }
                | LrSchedule::Cosine { .. }
                | LrSchedule::PolynomialDecay { .. }
        )
    }

    /// Growing families satisfy `eta_t <= eta_{t+1}`.
    pub fn is_growing(&self) -> bool {
        matches!(
            self,
            LrSchedule::ExponentialGrowth { .. } | LrSchedule::PolynomialGrowth { .. }
        )
    }

    pub fn is_warmup(&self) -> bool {
        matches!(
            self,
            LrSchedule::WarmupConstant { .. } | LrSchedule::WarmupCosine { .. }
        )
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            LrSchedule::Constant { .. } => "constant",
            LrSchedule::Diminishing { .. } => "diminishing",
            LrSchedule::Cosine { .. } => "cosine",
            LrSchedule::PolynomialDecay { .. } => "polynomial_decay",
            LrSchedule::ExponentialGrowth { .. } => "exponential_growth",
            LrSchedule::PolynomialGrowth { .. } => "polynomial_growth",
            LrSchedule::WarmupConstant { .. } => "warmup_constant",
            LrSchedule::WarmupCosine { .. } => "warmup_cosine",
        }
    }
}

/// Batch-size rule. Growth families update once per block; the decaying
/// control shrinks every step and exists to demonstrate a schedule whose
/// variance term does not vanish.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum BsSchedule {
    Constant {
        b0: u64,
    },
    /// `round((a * m + b0)^c)` on block `m`.
    PolynomialGrowth {
        a: f64,
        b0: u64,
        c: f64,
    },
    /// `round(delta^m * b0)` on block `m`.
    ExponentialGrowth {
        b0: u64,
        delta: f64,
    },
    /// `ceil(b0 / (t + 1))` at step `t`.
    DecayingControl {
        b0: u64,
    },
}

impl BsSchedule {
    pub fn is_growing(&self) -> bool {
        matches!(
            self,
            BsSchedule::PolynomialGrowth { .. } | BsSchedule::ExponentialGrowth { .. }
        )
    }

    pub fn b0(&self) -> u64 {
        match *self {
            BsSchedule::Constant { b0 }
            | BsSchedule::PolynomialGrowth { b0, .. }
            | BsSchedule::ExponentialGrowth { b0, .. }
            | BsSchedule::DecayingControl { b0 } => b0,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            BsSchedule::Constant { .. } => "constant",
            BsSchedule::PolynomialGrowth { .. } => "polynomial_growth",
            BsSchedule::ExponentialGrowth { .. } => "exponential_growth",
            BsSchedule::DecayingControl { .. } => "decaying_control",
        }
    }

    /// Batch size on block `m`, rounded to an integer in `[1, n]`.
    ///
    /// The decaying control is step-indexed, not block-indexed; its block
    /// value is the initial batch so that the block structure stays
    /// well defined.
    pub fn block_batch(&self, m: usize, n: u64) -> u64 {
        let raw = match *self {
            BsSchedule::Constant { b0 } | BsSchedule::DecayingControl { b0 } => b0 as f64,
            BsSchedule::PolynomialGrowth { a, b0, c } => (a * m as f64 + b0 as f64).powf(c),
            BsSchedule::ExponentialGrowth { b0, delta } => delta.powi(m as i32) * b0 as f64,
        };
        let rounded = raw.round();
        if !rounded.is_finite() || rounded >= n as f64 {
            n
        } else if rounded < 1.0 {
            1
        } else {
            rounded as u64
        }
    }
}

/// Block/epoch bookkeeping derived from a batch-size schedule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockStructure {
    n: u64,
    epochs_per_block: Vec<u64>,
    block_batches: Vec<u64>,
    steps_per_epoch: Vec<u64>,
    /// Cumulative step counts; entry `m` is `sum_{k<=m} K_k * E_k`.
    block_boundaries: Vec<u64>,
    total_steps: u64,
}

impl BlockStructure {
    pub fn n(&self) -> u64 {
        self.n
    }

    /// Number of batch-size increases `M` (one less than the block count).
    pub fn increases(&self) -> usize {
        self.epochs_per_block.len() - 1
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn epochs_per_block(&self) -> &[u64] {
        &self.epochs_per_block
    }

    pub fn steps_per_epoch(&self) -> &[u64] {
        &self.steps_per_epoch
    }

    pub fn block_batches(&self) -> &[u64] {
        &self.block_batches
    }

    pub fn block_boundaries(&self) -> &[u64] {
        &self.block_boundaries
    }

    pub fn epochs_total(&self) -> u64 {
        self.epochs_per_block.iter().sum()
    }

    /// Epochs in blocks `0..m`.
    pub fn epochs_before_block(&self, m: usize) -> u64 {
        self.epochs_per_block[..m].iter().sum()
    }

    /// Steps in blocks `0..m`, i.e. the first step index of block `m`.
    pub fn block_start(&self, m: usize) -> u64 {
        if m == 0 {
            0
        } else {
            self.block_boundaries[m - 1]
        }
    }

    /// Block index containing step `t`.
    pub fn block_of(&self, t: u64) -> usize {
        debug_assert!(t < self.total_steps);
        self.block_boundaries.partition_point(|&end| end <= t)
    }

    /// Global epoch index of step `t` (counted across blocks).
    pub fn epoch_of(&self, t: u64) -> u64 {
        let m = self.block_of(t);
        self.epochs_before_block(m) + (t - self.block_start(m)) / self.steps_per_epoch[m]
    }

    pub fn k_min(&self) -> u64 {
        *self.steps_per_epoch.iter().min().expect("non-empty")
    }

    pub fn k_max(&self) -> u64 {
        *self.steps_per_epoch.iter().max().expect("non-empty")
    }

    pub fn e_min(&self) -> u64 {
        *self.epochs_per_block.iter().min().expect("non-empty")
    }

    pub fn e_max(&self) -> u64 {
        *self.epochs_per_block.iter().max().expect("non-empty")
    }
}

/// Derive the block structure for `n` samples under a batch-size schedule.
///
/// `K_m = ceil(n / b_m)` where `b_m` is the block-`m` batch size, and the
/// boundaries are exact integer partial sums of `K_m * E_m`.
pub fn build_structure(
    n: u64,
    bs: &BsSchedule,
    epochs_per_block: &[u64],
) -> Result<BlockStructure, PlanError> {
    if n == 0 {
        return Err(PlanError::ZeroSamples);
    }
    if epochs_per_block.is_empty() {
        return Err(PlanError::EmptyEpochs);
    }
    if epochs_per_block.contains(&0) {
        return Err(PlanError::ZeroEpochs);
    }
    let block_batches: Vec<u64> = (0..epochs_per_block.len())
        .map(|m| bs.block_batch(m, n))
        .collect();
    let steps_per_epoch: Vec<u64> = block_batches.iter().map(|&b| n.div_ceil(b)).collect();
    let mut block_boundaries = Vec::with_capacity(epochs_per_block.len());
    let mut total = 0u64;
    for (k, e) in steps_per_epoch.iter().zip(epochs_per_block) {
        total += k * e;
        block_boundaries.push(total);
    }
    Ok(BlockStructure {
        n,
        epochs_per_block: epochs_per_block.to_vec(),
        block_batches,
        steps_per_epoch,
        block_boundaries,
        total_steps: total,
    })
}

/// Scheduler regime a joint plan falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseTag {
    /// Constant batch size, decaying learning rate.
    CaseI,
    /// Increasing batch size, decaying learning rate.
    CaseII,
    /// Increasing batch size, increasing learning rate.
    CaseIII,
    /// Increasing batch size, warm-up then decaying learning rate.
    CaseIV,
    /// Decaying batch size; intentionally non-convergent control.
    Control,
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CaseTag::CaseI => "case_i",
            CaseTag::CaseII => "case_ii",
            CaseTag::CaseIII => "case_iii",
            CaseTag::CaseIV => "case_iv",
            CaseTag::Control => "control",
        };
        f.write_str(s)
    }
}

/// One pass/fail entry of a plan validation report.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationCheck {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// Result of checking a candidate plan against every construction invariant.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
    pub case_tag: Option<CaseTag>,
    /// Control plans are valid but flagged as intentionally non-convergent.
    pub control: bool,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn push(&mut self, name: &'static str, pass: bool, detail: String) {
        self.checks.push(ValidationCheck { name, pass, detail });
    }

    pub fn failures(&self) -> impl Iterator<Item = &ValidationCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

fn classify(lr: &LrSchedule, bs: &BsSchedule) -> Option<CaseTag> {
    match bs {
        BsSchedule::DecayingControl { .. } if lr.is_decaying() => Some(CaseTag::Control),
        BsSchedule::DecayingControl { .. } => None,
        BsSchedule::Constant { .. } if lr.is_decaying() => Some(CaseTag::CaseI),
        BsSchedule::Constant { .. } => None,
        _ if lr.is_decaying() => Some(CaseTag::CaseII),
        _ if lr.is_growing() => Some(CaseTag::CaseIII),
        _ if lr.is_warmup() => Some(CaseTag::CaseIV),
        _ => None,
    }
}

/// Check every plan invariant and classify the candidate into a case.
///
/// Report-style: each check is recorded as pass/fail rather than failing
/// fast, so a CLI can show the whole picture at once.
pub fn validate_candidate(
    lr: &LrSchedule,
    bs: &BsSchedule,
    structure: &BlockStructure,
) -> ValidationReport {
    let case_tag = classify(lr, bs);
    let mut report = ValidationReport {
        checks: Vec::new(),
        case_tag,
        control: matches!(case_tag, Some(CaseTag::Control)),
    };

    report.push(
        "case_assignment",
        case_tag.is_some(),
        match case_tag {
            Some(tag) => format!("{} LR with {} BS -> {tag}", lr.family_name(), bs.family_name()),
            None => format!(
                "{} LR with {} BS matches no analyzed regime",
                lr.family_name(),
                bs.family_name()
            ),
        },
    );

    // Learning-rate parameter ranges.
    let (lr_ok, lr_detail) = match *lr {
        LrSchedule::Constant { eta_max } | LrSchedule::Diminishing { eta_max } => {
            (eta_max > 0.0, format!("eta_max = {eta_max}"))
        }
        LrSchedule::Cosine { eta_max, eta_min } => (
            eta_max > 0.0 && (0.0..=eta_max).contains(&eta_min),
            format!("0 <= eta_min = {eta_min} <= eta_max = {eta_max}"),
        ),
        LrSchedule::PolynomialDecay { eta_max, eta_min, p } => (
            eta_max > 0.0 && (0.0..=eta_max).contains(&eta_min) && p > 0.0,
            format!("eta_min = {eta_min}, eta_max = {eta_max}, p = {p}"),
        ),
        LrSchedule::ExponentialGrowth { eta0, gamma } => (
            eta0 > 0.0 && gamma > 1.0,
            format!("eta0 = {eta0}, gamma = {gamma}"),
        ),
        LrSchedule::PolynomialGrowth { a2, c2, eta0 } => (
            a2 > 0.0 && c2 > 0.0 && eta0 > 0.0,
            format!("a2 = {a2}, c2 = {c2}, eta0 = {eta0}"),
        ),
        LrSchedule::WarmupConstant { eta0, gamma, .. } => (
            eta0 > 0.0 && gamma > 1.0,
            format!("eta0 = {eta0}, gamma = {gamma}"),
        ),
        LrSchedule::WarmupCosine {
            eta0,
            gamma,
            eta_min,
            ..
        } => (
            eta0 > 0.0 && gamma > 1.0 && eta_min >= 0.0,
            format!("eta0 = {eta0}, gamma = {gamma}, eta_min = {eta_min}"),
        ),
    };
    report.push("lr_parameters", lr_ok, lr_detail);

    // Batch-size parameter ranges.
    let b0 = bs.b0();
    let (bs_ok, bs_detail) = match *bs {
        BsSchedule::Constant { .. } | BsSchedule::DecayingControl { .. } => {
            (b0 >= 1, format!("b0 = {b0}"))
        }
        BsSchedule::PolynomialGrowth { a, c, .. } => (
            b0 >= 1 && a > 0.0 && c > 1.0,
            format!("b0 = {b0}, a = {a}, c = {c}"),
        ),
        BsSchedule::ExponentialGrowth { delta, .. } => {
            (b0 >= 1 && delta > 1.0, format!("b0 = {b0}, delta = {delta}"))
        }
    };
    report.push("bs_parameters", bs_ok, bs_detail);
    report.push(
        "b0_within_n",
        b0 >= 1 && b0 <= structure.n(),
        format!("b0 = {b0}, n = {}", structure.n()),
    );

    // Joint growth must keep the squared LR factor below the batch factor.
    if let (
        LrSchedule::ExponentialGrowth { gamma, .. }
        | LrSchedule::WarmupConstant { gamma, .. }
        | LrSchedule::WarmupCosine { gamma, .. },
        BsSchedule::ExponentialGrowth { delta, .. },
    ) = (lr, bs)
    {
        report.push(
            "gamma_squared_below_delta",
            gamma * gamma < *delta,
            format!("gamma^2 = {} vs delta = {delta}", gamma * gamma),
        );
    }
    if let (
        LrSchedule::PolynomialGrowth { c2, .. },
        BsSchedule::PolynomialGrowth { c: c1, .. },
    ) = (lr, bs)
    {
        report.push(
            "exponent_gap",
            c1 - 2.0 * c2 > 1.0,
            format!("c1 - 2*c2 = {}", c1 - 2.0 * c2),
        );
    }

    // Warm-up must leave at least one decay block.
    if let LrSchedule::WarmupConstant {
        warmup_increases, ..
    }
    | LrSchedule::WarmupCosine {
        warmup_increases, ..
    } = lr
    {
        report.push(
            "warmup_within_blocks",
            *warmup_increases < structure.increases(),
            format!(
                "warmup_increases = {warmup_increases}, increases = {}",
                structure.increases()
            ),
        );
    }

    // Emitted batch sizes stay within [1, n] and growth is monotone.
    let batches = structure.block_batches();
    let within = batches.iter().all(|&b| b >= 1 && b <= structure.n());
    report.push(
        "batch_within_bounds",
        within,
        format!("block batches {batches:?}"),
    );
    if bs.is_growing() {
        let monotone = batches.windows(2).all(|w| w[0] <= w[1]);
        report.push(
            "batch_nondecreasing",
            monotone,
            format!("block batches {batches:?}"),
        );
    }

    if report.control {
        report.push(
            "control_flagged",
            true,
            "decaying batch size; convergence intentionally not guaranteed".into(),
        );
    }

    report
}

/// A joint (batch size, learning rate) plan over a fixed block structure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchedulerPlan {
    lr: LrSchedule,
    bs: BsSchedule,
    structure: BlockStructure,
    case_tag: CaseTag,
}

impl SchedulerPlan {
    /// Validate and assemble a plan; any failing invariant rejects it.
    pub fn new(
        lr: LrSchedule,
        bs: BsSchedule,
        structure: BlockStructure,
    ) -> Result<Self, PlanError> {
        let report = validate_candidate(&lr, &bs, &structure);
        if !report.ok() {
            let reasons: Vec<String> = report
                .failures()
                .map(|c| format!("{}: {}", c.name, c.detail))
                .collect();
            return Err(PlanError::Invalid(reasons.join("; ")));
        }
        let case_tag = report.case_tag.expect("ok report always classifies");
        Ok(Self {
            lr,
            bs,
            structure,
            case_tag,
        })
    }

    pub fn lr(&self) -> &LrSchedule {
        &self.lr
    }

    pub fn bs(&self) -> &BsSchedule {
        &self.bs
    }

    pub fn structure(&self) -> &BlockStructure {
        &self.structure
    }

    pub fn case_tag(&self) -> CaseTag {
        self.case_tag
    }

    pub fn total_steps(&self) -> u64 {
        self.structure.total_steps()
    }

    /// First step of the decay phase for warm-up plans:
    /// `T_w = sum_{m <= warmup_increases} K_m * E_m`.
    pub fn warmup_steps(&self) -> Option<u64> {
        match self.lr {
            LrSchedule::WarmupConstant {
                warmup_increases, ..
            }
            | LrSchedule::WarmupCosine {
                warmup_increases, ..
            } => Some(self.structure.block_boundaries()[warmup_increases]),
            _ => None,
        }
    }

    fn check_step(&self, t: u64) -> Result<(), PlanError> {
        if t >= self.structure.total_steps() {
            return Err(PlanError::StepOutOfRange {
                t,
                total: self.structure.total_steps(),
            });
        }
        Ok(())
    }

    /// Learning rate at global step `t`.
    pub fn lr_at(&self, t: u64) -> Result<f64, PlanError> {
        self.check_step(t)?;
        let s = &self.structure;
        let eta = match self.lr {
            LrSchedule::Constant { eta_max } => eta_max,
            LrSchedule::Diminishing { eta_max } => eta_max / ((t + 1) as f64).sqrt(),
            LrSchedule::Cosine { eta_max, eta_min } => {
                let epoch = s.epoch_of(t) as f64;
                let total = s.epochs_total() as f64;
                eta_min + 0.5 * (eta_max - eta_min) * (1.0 + (epoch * PI / total).cos())
            }
            LrSchedule::PolynomialDecay { eta_max, eta_min, p } => {
                let frac = 1.0 - t as f64 / s.total_steps() as f64;
                (eta_max - eta_min) * frac.powf(p) + eta_min
            }
            LrSchedule::ExponentialGrowth { eta0, gamma } => {
                gamma.powi(s.block_of(t) as i32) * eta0
            }
            LrSchedule::PolynomialGrowth { a2, c2, eta0 } => {
                (a2 * s.block_of(t) as f64 + eta0).powf(c2)
            }
            LrSchedule::WarmupConstant {
                eta0,
                gamma,
                warmup_increases,
            } => gamma.powi(s.block_of(t).min(warmup_increases) as i32) * eta0,
            LrSchedule::WarmupCosine {
                eta0,
                gamma,
                warmup_increases,
                eta_min,
            } => {
                let m = s.block_of(t);
                if m <= warmup_increases {
                    gamma.powi(m as i32) * eta0
                } else {
                    let warm_epochs = s.epochs_before_block(warmup_increases + 1);
                    let epoch = (s.epoch_of(t) - warm_epochs) as f64;
                    let span = (s.epochs_total() - warm_epochs) as f64;
                    let eta_max = gamma.powi(warmup_increases as i32) * eta0;
                    eta_min + 0.5 * (eta_max - eta_min) * (1.0 + (epoch * PI / span).cos())
                }
            }
        };
        Ok(eta)
    }

    /// Batch size at global step `t`.
    pub fn bs_at(&self, t: u64) -> Result<u64, PlanError> {
        self.check_step(t)?;
        let b = match self.bs {
            BsSchedule::DecayingControl { b0 } => ((b0 + t) / (t + 1)).clamp(1, self.structure.n()),
            _ => self.structure.block_batches()[self.structure.block_of(t)],
        };
        Ok(b)
    }

    /// Largest learning rate the plan emits (enters every bound coefficient).
    pub fn eta_max(&self) -> f64 {
        let m = self.structure.increases() as i32;
        match self.lr {
            LrSchedule::Constant { eta_max }
            | LrSchedule::Diminishing { eta_max }
            | LrSchedule::Cosine { eta_max, .. }
            | LrSchedule::PolynomialDecay { eta_max, .. } => eta_max,
            LrSchedule::ExponentialGrowth { eta0, gamma } => gamma.powi(m) * eta0,
            LrSchedule::PolynomialGrowth { a2, c2, eta0 } => (a2 * m as f64 + eta0).powf(c2),
            LrSchedule::WarmupConstant {
                eta0,
                gamma,
                warmup_increases,
            }
            | LrSchedule::WarmupCosine {
                eta0,
                gamma,
                warmup_increases,
                ..
            } => gamma.powi(warmup_increases as i32) * eta0,
        }
    }

    /// Smallest learning rate the plan emits over its finite horizon.
    pub fn eta_min(&self) -> f64 {
        match self.lr {
            LrSchedule::Constant { eta_max } => eta_max,
            LrSchedule::Diminishing { eta_max } => {
                eta_max / (self.structure.total_steps() as f64).sqrt()
            }
            LrSchedule::Cosine { eta_min, .. } => eta_min,
            LrSchedule::PolynomialDecay { eta_min, .. } => eta_min,
            LrSchedule::ExponentialGrowth { eta0, .. }
            | LrSchedule::WarmupConstant { eta0, .. } => eta0,
            LrSchedule::PolynomialGrowth { a2: _, c2, eta0 } => eta0.powf(c2),
            LrSchedule::WarmupCosine { eta0, eta_min, .. } => eta_min.min(eta0),
        }
    }

    pub fn validate(&self) -> ValidationReport {
        validate_candidate(&self.lr, &self.bs, &self.structure)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_plan(eta: f64, b: u64, n: u64, epochs: u64) -> SchedulerPlan {
        let bs = BsSchedule::Constant { b0: b };
        let structure = build_structure(n, &bs, &[epochs]).unwrap();
        SchedulerPlan::new(LrSchedule::Constant { eta_max: eta }, bs, structure).unwrap()
    }

    fn doubling_structure(n: u64, b0: u64, blocks: usize, epochs: u64) -> (BsSchedule, BlockStructure) {
        let bs = BsSchedule::ExponentialGrowth { b0, delta: 2.0 };
        let structure = build_structure(n, &bs, &vec![epochs; blocks]).unwrap();
        (bs, structure)
    }

    #[test]
    fn constant_lr_everywhere() {
        let plan = constant_plan(0.1, 16, 64, 100);
        assert_eq!(plan.lr_at(57).unwrap(), 0.1);
        assert_eq!(plan.lr_at(0).unwrap(), 0.1);
    }

    #[test]
    fn diminishing_lr_at_perfect_square() {
        let bs = BsSchedule::Constant { b0: 16 };
        let structure = build_structure(64, &bs, &[100]).unwrap();
        let plan =
            SchedulerPlan::new(LrSchedule::Diminishing { eta_max: 0.1 }, bs, structure).unwrap();
        // t = 3 -> 0.1 / sqrt(4)
        assert!((plan.lr_at(3).unwrap() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn cosine_lr_mid_cycle() {
        // K = 10, E = 4; t = 39 sits in epoch 3: 0.05 * (1 + cos(3 pi / 4)).
        let bs = BsSchedule::Constant { b0: 1 };
        let structure = build_structure(10, &bs, &[4]).unwrap();
        assert_eq!(structure.steps_per_epoch(), &[10]);
        let plan = SchedulerPlan::new(
            LrSchedule::Cosine {
                eta_max: 0.1,
                eta_min: 0.0,
            },
            bs,
            structure,
        )
        .unwrap();
        let expected = 0.05 * (1.0 - std::f64::consts::FRAC_1_SQRT_2);
        assert!((plan.lr_at(39).unwrap() - expected).abs() < 1e-12);
        assert!((plan.lr_at(39).unwrap() - 0.0146447).abs() < 1e-7);
    }

    #[test]
    fn exponential_growth_lr_reaches_eta_max() {
        // gamma = 2^(1/9) doubles the rate over nine increases: 0.1 -> 0.2.
        let (bs, structure) = doubling_structure(1 << 16, 8, 10, 2);
        let gamma = 2f64.powf(1.0 / 9.0);
        let plan = SchedulerPlan::new(
            LrSchedule::ExponentialGrowth { eta0: 0.1, gamma },
            bs,
            structure,
        )
        .unwrap();
        let last = plan.total_steps() - 1;
        assert_eq!(plan.structure().block_of(last), 9);
        assert!((plan.lr_at(last).unwrap() - 0.2).abs() < 1e-12);
        assert!((plan.eta_max() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn exponential_bs_doubles_per_block() {
        let (bs, structure) = doubling_structure(1 << 16, 8, 10, 2);
        let plan = SchedulerPlan::new(
            LrSchedule::Constant { eta_max: 0.1 },
            bs,
            structure,
        )
        .unwrap();
        assert_eq!(plan.bs_at(0).unwrap(), 8);
        let last = plan.total_steps() - 1;
        assert_eq!(plan.structure().block_of(last), 9);
        assert_eq!(plan.bs_at(last).unwrap(), 4096);
        // Exact doubling before any capping.
        let batches = plan.structure().block_batches();
        for w in batches.windows(2) {
            assert_eq!(w[1], 2 * w[0]);
        }
    }

    #[test]
    fn polynomial_bs_block_value() {
        let bs = BsSchedule::PolynomialGrowth {
            a: 2.0,
            b0: 4,
            c: 2.0,
        };
        // (2 * 3 + 4)^2 = 100 on block 3.
        assert_eq!(bs.block_batch(3, 1 << 20), 100);
        // Block 0 is b0^c.
        assert_eq!(bs.block_batch(0, 1 << 20), 16);
    }

    #[test]
    fn structure_from_doubling_batches() {
        // n = 50000, b0 = 8, delta = 2, 10 blocks of 30 epochs.
        // Frozen from the integer oracle below.
        let bs = BsSchedule::ExponentialGrowth { b0: 8, delta: 2.0 };
        let structure = build_structure(50_000, &bs, &[30; 10]).unwrap();
        assert_eq!(structure.steps_per_epoch()[0], 6250);

        let mut expected_total = 0u64;
        for m in 0..10u32 {
            expected_total += 50_000u64.div_ceil(8 << m) * 30;
        }
        assert_eq!(expected_total, 374_760);
        assert_eq!(structure.total_steps(), expected_total);
    }

    #[test]
    fn structure_full_batch_and_ceiling() {
        let bs = BsSchedule::Constant { b0: 10 };
        let s = build_structure(10, &bs, &[5]).unwrap();
        assert_eq!(s.steps_per_epoch(), &[1]);
        assert_eq!(s.total_steps(), 5);

        let bs = BsSchedule::Constant { b0: 2 };
        let s = build_structure(7, &bs, &[1]).unwrap();
        assert_eq!(s.steps_per_epoch(), &[4]);
    }

    #[test]
    fn structure_rejects_empty_epochs() {
        let bs = BsSchedule::Constant { b0: 2 };
        assert!(matches!(
            build_structure(7, &bs, &[]),
            Err(PlanError::EmptyEpochs)
        ));
    }

    #[test]
    fn gamma_delta_constraint_checked() {
        let mk = |gamma: f64, delta: f64| {
            let bs = BsSchedule::ExponentialGrowth { b0: 8, delta };
            let structure = build_structure(1 << 16, &bs, &[2, 2, 2]).unwrap();
            validate_candidate(
                &LrSchedule::ExponentialGrowth { eta0: 0.1, gamma },
                &bs,
                &structure,
            )
        };
        // 1.5^2 = 2.25 >= 2 fails; 1.4^2 = 1.96 < 2 passes; 1.9^2 < 4 passes.
        assert!(!mk(1.5, 2.0).ok());
        assert!(mk(1.4, 2.0).ok());
        assert!(mk(1.9, 4.0).ok());
    }

    #[test]
    fn plan_rejects_gamma_delta_violation() {
        let bs = BsSchedule::ExponentialGrowth { b0: 8, delta: 2.0 };
        let structure = build_structure(1 << 16, &bs, &[2, 2, 2]).unwrap();
        let err = SchedulerPlan::new(
            LrSchedule::ExponentialGrowth {
                eta0: 0.1,
                gamma: 1.5,
            },
            bs,
            structure,
        )
        .unwrap_err();
        assert!(err.to_string().contains("gamma_squared_below_delta"));
    }

    #[test]
    fn growth_lr_with_constant_bs_has_no_case() {
        let bs = BsSchedule::Constant { b0: 8 };
        let structure = build_structure(64, &bs, &[2, 2]).unwrap();
        assert!(SchedulerPlan::new(
            LrSchedule::ExponentialGrowth {
                eta0: 0.1,
                gamma: 1.2,
            },
            bs,
            structure,
        )
        .is_err());
    }

    #[test]
    fn case_tags() {
        let plan = constant_plan(0.1, 16, 64, 10);
        assert_eq!(plan.case_tag(), CaseTag::CaseI);

        let (bs, structure) = doubling_structure(1 << 16, 8, 4, 2);
        let plan = SchedulerPlan::new(
            LrSchedule::Cosine {
                eta_max: 0.1,
                eta_min: 0.0,
            },
            bs,
            structure,
        )
        .unwrap();
        assert_eq!(plan.case_tag(), CaseTag::CaseII);

        let (bs, structure) = doubling_structure(1 << 16, 8, 4, 2);
        let plan = SchedulerPlan::new(
            LrSchedule::ExponentialGrowth {
                eta0: 0.1,
                gamma: 1.4,
            },
            bs,
            structure,
        )
        .unwrap();
        assert_eq!(plan.case_tag(), CaseTag::CaseIII);

        let (bs, structure) = doubling_structure(1 << 16, 8, 4, 2);
        let plan = SchedulerPlan::new(
            LrSchedule::WarmupCosine {
                eta0: 0.1,
                gamma: 1.4,
                warmup_increases: 1,
                eta_min: 0.0,
            },
            bs,
            structure,
        )
        .unwrap();
        assert_eq!(plan.case_tag(), CaseTag::CaseIV);

        let bs = BsSchedule::DecayingControl { b0: 64 };
        let structure = build_structure(64, &bs, &[100]).unwrap();
        let plan =
            SchedulerPlan::new(LrSchedule::Constant { eta_max: 0.1 }, bs, structure).unwrap();
        assert_eq!(plan.case_tag(), CaseTag::Control);
    }

    #[test]
    fn decaying_control_batch_sizes() {
        let bs = BsSchedule::DecayingControl { b0: 64 };
        let structure = build_structure(64, &bs, &[200]).unwrap();
        let plan =
            SchedulerPlan::new(LrSchedule::Constant { eta_max: 0.1 }, bs, structure).unwrap();
        assert_eq!(plan.bs_at(0).unwrap(), 64);
        assert_eq!(plan.bs_at(1).unwrap(), 32);
        assert_eq!(plan.bs_at(63).unwrap(), 1);
        assert_eq!(plan.bs_at(199).unwrap(), 1);
    }

    #[test]
    fn zero_learning_rate_rejected() {
        let bs = BsSchedule::Constant { b0: 8 };
        let structure = build_structure(64, &bs, &[10]).unwrap();
        assert!(SchedulerPlan::new(LrSchedule::Constant { eta_max: 0.0 }, bs, structure).is_err());
    }

    #[test]
    fn step_out_of_range() {
        let plan = constant_plan(0.1, 16, 64, 10);
        let total = plan.total_steps();
        assert!(matches!(
            plan.lr_at(total),
            Err(PlanError::StepOutOfRange { .. })
        ));
        assert!(matches!(
            plan.bs_at(total + 5),
            Err(PlanError::StepOutOfRange { .. })
        ));
    }

    #[test]
    fn warmup_constant_shape() {
        let (bs, structure) = doubling_structure(1 << 16, 8, 5, 2);
        let plan = SchedulerPlan::new(
            LrSchedule::WarmupConstant {
                eta0: 0.1,
                gamma: 1.4,
                warmup_increases: 2,
            },
            bs,
            structure,
        )
        .unwrap();
        let tw = plan.warmup_steps().unwrap();
        let eta_peak = 0.1 * 1.4f64.powi(2);
        // Nondecreasing up to T_w, flat at the peak afterwards.
        let mut prev = 0.0;
        for t in 0..tw {
            let eta = plan.lr_at(t).unwrap();
            assert!(eta >= prev - 1e-15);
            prev = eta;
        }
        for t in tw..plan.total_steps() {
            assert!((plan.lr_at(t).unwrap() - eta_peak).abs() < 1e-15);
        }
    }

    #[test]
    fn warmup_cosine_peaks_then_decays() {
        let (bs, structure) = doubling_structure(1 << 16, 8, 6, 3);
        let plan = SchedulerPlan::new(
            LrSchedule::WarmupCosine {
                eta0: 0.1,
                gamma: 1.4,
                warmup_increases: 1,
                eta_min: 0.01,
            },
            bs,
            structure,
        )
        .unwrap();
        let tw = plan.warmup_steps().unwrap();
        let eta_peak = 0.1 * 1.4;
        // First decay step restarts the cosine at its peak.
        assert!((plan.lr_at(tw).unwrap() - eta_peak).abs() < 1e-15);
        // Nonincreasing from T_w on.
        let mut prev = f64::INFINITY;
        for t in tw..plan.total_steps() {
            let eta = plan.lr_at(t).unwrap();
            assert!(eta <= prev + 1e-15);
            assert!(eta >= 0.01 - 1e-15);
            prev = eta;
        }
    }

    #[test]
    fn block_lookup_matches_boundaries() {
        let (_, structure) = doubling_structure(1000, 3, 5, 2);
        for t in 0..structure.total_steps() {
            let m = structure.block_of(t);
            assert!(t < structure.block_boundaries()[m]);
            assert!(t >= structure.block_start(m));
        }
    }
}
