//! Exact bias/variance sums and their closed-form upper bounds.
//!
//! For a plan with learning rates `eta_t` and batch sizes `b_t` over `T`
//! steps, the two quantities that control the best expected gradient norm
//! are
//!
//! ```text
//!   B = 1 / sum_t eta_t                 (bias coefficient)
//!   V = (sum_t eta_t^2 / b_t) / sum_t eta_t   (variance coefficient)
//! ```
//!
//! `exact_b`/`exact_v` evaluate these by compensated summation over the
//! realized schedule; `bound_b`/`bound_v` evaluate the matching closed-form
//! upper bound for the plan's scheduler family. The exact value never
//! exceeds the bound when the plan satisfies the family's hypotheses.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kahan::KahanSum;
use crate::schedules::{BsSchedule, LrSchedule, SchedulerPlan};

#[derive(Debug, Error)]
pub enum BoundError {
    #[error("learning-rate sum is zero; plan is degenerate")]
    DegeneratePlan,
    #[error("no closed-form bound for {lr} LR with {bs} BS{detail}")]
    UnsupportedSchedule {
        lr: &'static str,
        bs: &'static str,
        detail: String,
    },
    #[error("constraint violated: {0}")]
    Constraint(String),
}

/// Problem- and run-level constants entering the gradient-norm bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    /// Mean smoothness constant of the finite sum.
    pub l_bar: f64,
    /// Initial optimality gap `f(theta_0) - f_lower`.
    pub f0_gap: f64,
    /// Uniform bound on the single-sample gradient variance.
    pub sigma2: f64,
    /// `||theta_0 - theta_star||^2` when a minimizer is known (convex case).
    pub theta0_dist2: Option<f64>,
    /// Largest learning rate of the plan; must satisfy `l_bar * eta_max < 2`.
    pub eta_max: f64,
}

impl ProblemConstants {
    pub fn new(
        l_bar: f64,
        f0_gap: f64,
        sigma2: f64,
        theta0_dist2: Option<f64>,
        eta_max: f64,
    ) -> Result<Self, BoundError> {
        let margin = 2.0 - l_bar * eta_max;
        if margin <= 0.0 || margin.is_nan() {
            return Err(BoundError::Constraint(format!(
                "need l_bar * eta_max < 2, got {} * {} = {}",
                l_bar,
                eta_max,
                l_bar * eta_max
            )));
        }
        if f0_gap < 0.0 || sigma2 < 0.0 {
            return Err(BoundError::Constraint(
                "f0_gap and sigma2 must be nonnegative".into(),
            ));
        }
        Ok(Self {
            l_bar,
            f0_gap,
            sigma2,
            theta0_dist2,
            eta_max,
        })
    }
}

/// Exact `B = 1 / sum_t eta_t` by direct compensated summation.
pub fn exact_b(plan: &SchedulerPlan) -> Result<f64, BoundError> {
    let mut sum = KahanSum::new();
    for t in 0..plan.total_steps() {
        sum.add(plan.lr_at(t).expect("t < T"));
    }
    let total = sum.value();
    if total == 0.0 {
        return Err(BoundError::DegeneratePlan);
    }
    Ok(1.0 / total)
}

/// Exact `V = (sum_t eta_t^2 / b_t) / sum_t eta_t` by direct summation.
pub fn exact_v(plan: &SchedulerPlan) -> Result<f64, BoundError> {
    let mut eta_sum = KahanSum::new();
    let mut weighted = KahanSum::new();
    for t in 0..plan.total_steps() {
        let eta = plan.lr_at(t).expect("t < T");
        let b = plan.bs_at(t).expect("t < T") as f64;
        eta_sum.add(eta);
        weighted.add(eta * eta / b);
    }
    let total = eta_sum.value();
    if total == 0.0 {
        return Err(BoundError::DegeneratePlan);
    }
    Ok(weighted.value() / total)
}

fn unsupported(plan: &SchedulerPlan, detail: &str) -> BoundError {
    BoundError::UnsupportedSchedule {
        lr: plan.lr().family_name(),
        bs: plan.bs().family_name(),
        detail: if detail.is_empty() {
            String::new()
        } else {
            format!(" ({detail})")
        },
    }
}

/// `B` bound for the four decaying learning-rate families.
fn decay_b_bound(lr: &LrSchedule, steps: f64) -> Option<f64> {
    match *lr {
        LrSchedule::Constant { eta_max } => Some(1.0 / (eta_max * steps)),
        LrSchedule::Diminishing { eta_max } => {
            Some(1.0 / (2.0 * eta_max * ((steps + 1.0).sqrt() - 1.0)))
        }
        LrSchedule::Cosine { eta_max, eta_min } => Some(2.0 / ((eta_min + eta_max) * steps)),
        LrSchedule::PolynomialDecay { eta_max, eta_min, p } => {
            Some((p + 1.0) / ((p * eta_min + eta_max) * steps))
        }
        _ => None,
    }
}

/// Closed-form upper bound on `B` for the plan's scheduler family.
pub fn bound_b(plan: &SchedulerPlan) -> Result<f64, BoundError> {
    let s = plan.structure();
    let steps = plan.total_steps() as f64;
    let k_min = s.k_min() as f64;
    let e_min = s.e_min() as f64;
    let m = s.increases() as f64;

    if matches!(plan.bs(), BsSchedule::DecayingControl { .. }) {
        return Err(unsupported(plan, "decaying batch size has no convergence bound"));
    }

    if let Some(b) = decay_b_bound(plan.lr(), steps) {
        return Ok(b);
    }

    match (plan.lr(), plan.bs()) {
        (
            LrSchedule::ExponentialGrowth { eta0, gamma },
            BsSchedule::ExponentialGrowth { delta, .. },
        ) => Ok(delta / (eta0 * k_min * e_min * gamma.powf(m))),
        (LrSchedule::PolynomialGrowth { a2, c2, eta0 }, BsSchedule::PolynomialGrowth { .. }) => {
            if m < 1.0 {
                return Err(BoundError::Constraint(
                    "polynomial joint growth bound needs at least one increase".into(),
                ));
            }
            let eta_lo = a2.min(*eta0);
            Ok((1.0 + c2) / (eta_lo.powf(*c2) * k_min * e_min * m.powf(1.0 + c2)))
        }
        (
            LrSchedule::WarmupConstant {
                eta0,
                gamma,
                warmup_increases,
            },
            BsSchedule::ExponentialGrowth { delta, .. },
        ) => {
            let tw = plan.warmup_steps().expect("warm-up plan") as f64;
            let eta_peak = gamma.powi(*warmup_increases as i32) * eta0;
            let warm = delta / (eta0 * k_min * e_min * gamma.powi(*warmup_increases as i32));
            Ok(warm + 1.0 / (eta_peak * (steps - tw)))
        }
        (
            LrSchedule::WarmupCosine {
                eta0,
                gamma,
                warmup_increases,
                eta_min,
            },
            BsSchedule::ExponentialGrowth { delta, .. },
        ) => {
            let tw = plan.warmup_steps().expect("warm-up plan") as f64;
            let eta_peak = gamma.powi(*warmup_increases as i32) * eta0;
            let warm = delta / (eta0 * k_min * e_min * gamma.powi(*warmup_increases as i32));
            Ok(warm + 2.0 / ((eta_min + eta_peak) * (steps - tw)))
        }
        _ => Err(unsupported(plan, "")),
    }
}

/// Variance bound for a decaying LR with constant batch size `b`.
fn constant_bs_v_bound(lr: &LrSchedule, b: f64, steps: f64, epochs: f64) -> Option<f64> {
    match *lr {
        LrSchedule::Constant { eta_max } => Some(eta_max / b),
        LrSchedule::Diminishing { eta_max } => {
            Some(eta_max * (1.0 + steps.ln()) / (2.0 * b * ((steps + 1.0).sqrt() - 1.0)))
        }
        LrSchedule::Cosine { eta_max, eta_min } => {
            let head = (3.0 * eta_min * eta_min
                + 2.0 * eta_min * eta_max
                + 3.0 * eta_max * eta_max)
                / (4.0 * (eta_min + eta_max) * b);
            // Tail term (eta_max - eta_min) K / (b T) with T = K E, i.e.
            // (eta_max - eta_min) / (b E).
            Some(head + (eta_max - eta_min) / (b * epochs))
        }
        LrSchedule::PolynomialDecay { eta_max, eta_min, p } => {
            let head = (2.0 * p * p * eta_min * eta_min
                + 2.0 * p * eta_min * eta_max
                + (p + 1.0) * eta_max * eta_max)
                / ((2.0 * p + 1.0) * (p * eta_min + eta_max) * b);
            let tail = (p + 1.0) * (eta_max * eta_max - eta_min * eta_min)
                / ((p * eta_min + eta_max) * b * steps);
            Some(head + tail)
        }
        _ => None,
    }
}

/// Numerator coefficient `eta_max * f(eta)` of the decaying-LR variance rows
/// under an exponentially growing batch: `eta_max` for a constant rate,
/// `2 eta_max^2 / (eta_min + eta_max)` for cosine, and so on.
fn decay_v_rate_factor(lr: &LrSchedule, steps: f64) -> Option<(f64, f64)> {
    // Returns (coefficient, divisor-in-steps): bound = coeff * KE-term / divisor.
    match *lr {
        LrSchedule::Constant { eta_max } => Some((eta_max, steps)),
        LrSchedule::Diminishing { eta_max } => {
            Some((eta_max / 2.0, (steps + 1.0).sqrt() - 1.0))
        }
        LrSchedule::Cosine { eta_max, eta_min } => {
            Some((2.0 * eta_max * eta_max / (eta_min + eta_max), steps))
        }
        LrSchedule::PolynomialDecay { eta_max, eta_min, p } => Some((
            (p + 1.0) * eta_max * eta_max / (eta_max + eta_min * p),
            steps,
        )),
        _ => None,
    }
}

/// Closed-form upper bound on `V` for the plan's scheduler family.
pub fn bound_v(plan: &SchedulerPlan) -> Result<f64, BoundError> {
    let s = plan.structure();
    let steps = plan.total_steps() as f64;
    let k_min = s.k_min() as f64;
    let k_max = s.k_max() as f64;
    let e_min = s.e_min() as f64;
    let e_max = s.e_max() as f64;
    let m = s.increases() as f64;

    match (plan.lr(), plan.bs()) {
        (_, BsSchedule::DecayingControl { .. }) => {
            Err(unsupported(plan, "decaying batch size has no convergence bound"))
        }
        (lr, BsSchedule::Constant { b0 }) => {
            constant_bs_v_bound(lr, *b0 as f64, steps, s.epochs_total() as f64)
                .ok_or_else(|| unsupported(plan, ""))
        }
        (lr, BsSchedule::ExponentialGrowth { b0, delta }) if lr.is_decaying() => {
            let (coeff, divisor) = decay_v_rate_factor(lr, steps).expect("decaying family");
            Ok(coeff * delta * k_max * e_max / ((delta - 1.0) * *b0 as f64 * divisor))
        }
        (lr, BsSchedule::PolynomialGrowth { a, b0, c }) if lr.is_decaying() => {
            // The constant 3 absorbs 1 + zeta(c), which needs c >= 2.
            if *c < 2.0 {
                return Err(BoundError::Constraint(format!(
                    "polynomial batch growth bound requires c >= 2, got c = {c}"
                )));
            }
            let (coeff, divisor) = decay_v_rate_factor(lr, steps).expect("decaying family");
            let u = a.min(*b0 as f64);
            Ok(3.0 * coeff * k_max * e_max / (u.powf(*c) * divisor))
        }
        (
            LrSchedule::ExponentialGrowth { eta0, gamma },
            BsSchedule::ExponentialGrowth { b0, delta },
        ) => {
            let gamma_hat = gamma * gamma / delta;
            if gamma_hat >= 1.0 {
                return Err(BoundError::Constraint(format!(
                    "need gamma^2 / delta < 1, got {gamma_hat}"
                )));
            }
            Ok(k_max * e_max * eta0 * delta
                / (k_min * e_min * *b0 as f64 * (1.0 - gamma_hat) * gamma.powf(m)))
        }
        (
            LrSchedule::PolynomialGrowth { a2, c2, eta0 },
            BsSchedule::PolynomialGrowth { a, b0, c: c1 },
        ) => {
            // The constant 2 absorbs zeta(c1 - 2*c2), which needs c1 - 2*c2 >= 2.
            if c1 - 2.0 * c2 < 2.0 {
                return Err(BoundError::Constraint(format!(
                    "polynomial joint growth bound requires c1 - 2*c2 >= 2, got {}",
                    c1 - 2.0 * c2
                )));
            }
            if m < 1.0 {
                return Err(BoundError::Constraint(
                    "polynomial joint growth bound needs at least one increase".into(),
                ));
            }
            let eta_lo = a2.min(*eta0);
            let eta_hi = a2.max(*eta0);
            let b_lo = a.min(*b0 as f64);
            Ok(2.0 * k_max * e_max * (1.0 + c2) * eta_hi.powf(2.0 * c2)
                / (k_min * e_min * eta_lo.powf(*c2) * b_lo.powf(*c1) * m.powf(1.0 + c2)))
        }
        (
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
            },
            BsSchedule::ExponentialGrowth { b0, delta },
        ) => {
            let gamma_hat = gamma * gamma / delta;
            if gamma_hat >= 1.0 {
                return Err(BoundError::Constraint(format!(
                    "need gamma^2 / delta < 1, got {gamma_hat}"
                )));
            }
            let tw = plan.warmup_steps().expect("warm-up plan") as f64;
            let eta_peak = gamma.powi(*warmup_increases as i32) * eta0;
            let warm = k_max * e_max * eta0 * delta
                / (k_min * e_min * *b0 as f64 * (1.0 - gamma_hat)
                    * gamma.powi(*warmup_increases as i32));
            let decay = match plan.lr() {
                LrSchedule::WarmupConstant { .. } => {
                    delta * eta_peak * k_max * e_max / ((delta - 1.0) * *b0 as f64 * (steps - tw))
                }
                LrSchedule::WarmupCosine { eta_min, .. } => {
                    2.0 * delta * eta_peak * eta_peak * k_max * e_max
                        / ((delta - 1.0) * (eta_min + eta_peak) * *b0 as f64 * (steps - tw))
                }
                _ => unreachable!(),
            };
            Ok(warm + decay)
        }
        _ => Err(unsupported(plan, "")),
    }
}

/// Right-hand side of the nonconvex bound on `min_t E||grad f(theta_t)||^2`:
/// `[2 f0_gap / (2 - L eta_max)] B + [L sigma2 / (2 - L eta_max)] V`.
pub fn nonconvex_rhs(consts: &ProblemConstants, b: f64, v: f64) -> Result<f64, BoundError> {
    let denom = 2.0 - consts.l_bar * consts.eta_max;
    if denom <= 0.0 {
        return Err(BoundError::Constraint(format!(
            "need l_bar * eta_max < 2, got denominator {denom}"
        )));
    }
    Ok(2.0 * consts.f0_gap / denom * b + consts.l_bar * consts.sigma2 / denom * v)
}

/// Right-hand side of the convex bound on `min_t E[f(theta_t) - f_star]`.
pub fn convex_rhs(consts: &ProblemConstants, b: f64, v: f64) -> Result<f64, BoundError> {
    let denom = 2.0 - consts.l_bar * consts.eta_max;
    if denom <= 0.0 {
        return Err(BoundError::Constraint(format!(
            "need l_bar * eta_max < 2, got denominator {denom}"
        )));
    }
    let dist2 = consts.theta0_dist2.ok_or_else(|| {
        BoundError::Constraint("convex bound needs ||theta_0 - theta_star||^2".into())
    })?;
    let bias_coeff = dist2 / 2.0 + consts.eta_max * consts.f0_gap / denom;
    let var_coeff = consts.sigma2 / 2.0 * (1.0 + consts.l_bar * consts.eta_max / denom);
    Ok(bias_coeff * b + var_coeff * v)
}

/// Learning-rate families with a long-run variance-floor asymptote.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsymptoteFamily {
    Constant,
    Cosine,
    Polynomial,
}

/// Long-run floor of the squared-gradient bound under a constant batch `b`:
/// `L sigma2 / ((2 - L eta) b)` times a family factor of `eta`, `3 eta / 4`,
/// or `(p + 1) eta / (2p + 1)`.
pub fn limsup_asymptote(
    family: AsymptoteFamily,
    eta: f64,
    p: f64,
    consts: &ProblemConstants,
    batch: u64,
) -> Result<f64, BoundError> {
    let denom = 2.0 - consts.l_bar * eta;
    if denom <= 0.0 {
        return Err(BoundError::Constraint(format!(
            "need l_bar * eta < 2, got denominator {denom}"
        )));
    }
    let factor = match family {
        AsymptoteFamily::Constant => eta,
        AsymptoteFamily::Cosine => 0.75 * eta,
        AsymptoteFamily::Polynomial => {
            if p <= 0.0 {
                return Err(BoundError::Constraint("need p > 0".into()));
            }
            (p + 1.0) * eta / (2.0 * p + 1.0)
        }
    };
    Ok(consts.l_bar * consts.sigma2 / (denom * batch as f64) * factor)
}

/// Every exact and closed-form quantity for one plan, plus domination flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub case_tag: String,
    pub total_steps: u64,
    pub b_exact: f64,
    pub v_exact: f64,
    pub b_bound: Option<f64>,
    pub v_bound: Option<f64>,
    pub nonconvex_rhs_exact: f64,
    pub nonconvex_rhs_bound: Option<f64>,
    pub convex_rhs_exact: Option<f64>,
    pub limsup_asymptote: Option<f64>,
    pub b_dominated: Option<bool>,
    pub v_dominated: Option<bool>,
    /// Set when the plan has no closed-form bound row.
    pub bound_note: Option<String>,
}

/// Relative slack allowed when asserting `exact <= bound`: rounding only.
pub const DOMINATION_REL_TOL: f64 = 1e-12;

pub fn dominates(exact: f64, bound: f64) -> bool {
    exact <= bound * (1.0 + DOMINATION_REL_TOL)
}

/// Assemble a [`BoundReport`] for a plan and its problem constants.
pub fn bound_report(
    plan: &SchedulerPlan,
    consts: &ProblemConstants,
) -> Result<BoundReport, BoundError> {
    let b_exact = exact_b(plan)?;
    let v_exact = exact_v(plan)?;
    let (b_bound, v_bound, bound_note) = match (bound_b(plan), bound_v(plan)) {
        (Ok(b), Ok(v)) => (Some(b), Some(v), None),
        (b, v) => {
            let note = b.err().or(v.err()).map(|e| e.to_string());
            (None, None, note)
        }
    };
    let nonconvex_exact = nonconvex_rhs(consts, b_exact, v_exact)?;
    let nonconvex_bound = match (b_bound, v_bound) {
        (Some(b), Some(v)) => Some(nonconvex_rhs(consts, b, v)?),
        _ => None,
    };
    let convex_exact = if consts.theta0_dist2.is_some() {
        Some(convex_rhs(consts, b_exact, v_exact)?)
    } else {
        None
    };
    let limsup = match (plan.lr(), plan.bs()) {
        (LrSchedule::Constant { eta_max }, BsSchedule::Constant { b0 }) => Some(
            limsup_asymptote(AsymptoteFamily::Constant, *eta_max, 0.0, consts, *b0)?,
        ),
        (LrSchedule::Cosine { eta_max, eta_min }, BsSchedule::Constant { b0 })
            if *eta_min == 0.0 =>
        {
            Some(limsup_asymptote(AsymptoteFamily::Cosine, *eta_max, 0.0, consts, *b0)?)
        }
        (LrSchedule::PolynomialDecay { eta_max, eta_min, p }, BsSchedule::Constant { b0 })
            if *eta_min == 0.0 =>
        {
            Some(limsup_asymptote(AsymptoteFamily::Polynomial, *eta_max, *p, consts, *b0)?)
        }
        _ => None,
    };
    Ok(BoundReport {
        case_tag: plan.case_tag().to_string(),
        total_steps: plan.total_steps(),
        b_exact,
        v_exact,
        b_bound,
        v_bound,
        nonconvex_rhs_exact: nonconvex_exact,
        nonconvex_rhs_bound: nonconvex_bound,
        convex_rhs_exact: convex_exact,
        limsup_asymptote: limsup,
        b_dominated: b_bound.map(|b| dominates(b_exact, b)),
        v_dominated: v_bound.map(|v| dominates(v_exact, v)),
        bound_note,
    })
}
