//! Synthetic finite-sum objectives with analytically certified constants.
//!
//! Each kind ships exact closed-form per-sample gradients (no autodiff),
//! per-sample smoothness constants, a lower bound on the mean loss, and a
//! variance certificate that holds uniformly over parameter space. For the
//! equal-curvature quadratic the variance certificate is an equality; the
//! other kinds carry provable upper bounds. Problems are immutable after
//! construction and all evaluations are pure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{BoundError, ProblemConstants};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("sample index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("non-finite parameter vector")]
    NonFinite,
    #[error("parameter dimension {got} does not match problem dimension {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("problem must have n >= 1 and dim >= 1")]
    EmptyProblem,
    #[error(transparent)]
    Bound(#[from] BoundError),
}

/// Exact per-sample gradient together with the sample it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub value: Vec<f64>,
    pub index: usize,
}

/// Whether a certified constant is exact or only a valid upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertFlag {
    Exact,
    UpperBound,
}

/// Analytically certified constants of a finite-sum problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    /// Per-sample smoothness constants `L_i`.
    pub l_per_sample: Vec<f64>,
    /// Mean smoothness `L_bar = mean(L_i)`.
    pub l_bar: f64,
    /// Uniform bound on `(1/n) sum_i ||grad f_i - grad f||^2`.
    pub sigma2: f64,
    pub sigma2_flag: CertFlag,
    /// Lower bound `f_lower = mean(inf f_i)` on the mean loss.
    pub f_lower: f64,
    pub f_lower_flag: CertFlag,
    /// Global minimizer and optimal value, when known (convex kinds).
    pub theta_star: Option<Vec<f64>>,
    pub f_star: Option<f64>,
}

/// Synthetic finite-sum objective `f = (1/n) sum_i f_i` over `R^d`.
///
/// * `EqualCurvatureQuadratic`: `f_i = (lambda/2) ||theta - c_i||^2`.
/// * `Logistic`: `f_i = ln(1 + exp(-y_i <x_i, theta>))`, labels in {-1, +1}.
/// * `SineQuadratic`: the quadratic plus `amp * sum_j sin^2(theta_j)`,
///   globally smooth and bounded below but nonconvex.
#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    EqualCurvatureQuadratic {
        lambda: f64,
        /// Row-major `n x d` sample centers.
        centers: Vec<Vec<f64>>,
        center_mean: Vec<f64>,
        /// `(1/n) sum_i ||c_i - c_mean||^2`.
        center_spread2: f64,
    },
    Logistic {
        features: Vec<Vec<f64>>,
        labels: Vec<f64>,
    },
    SineQuadratic {
        lambda: f64,
        amp: f64,
        centers: Vec<Vec<f64>>,
        center_mean: Vec<f64>,
        center_spread2: f64,
    },
}

fn center_stats(centers: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let n = centers.len();
    let d = centers[0].len();
    let mut mean = vec![0.0; d];
    for c in centers {
        for (m, &x) in mean.iter_mut().zip(c) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let spread2 = centers
        .iter()
        .map(|c| {
            c.iter()
                .zip(&mean)
                .map(|(&x, &m)| (x - m) * (x - m))
                .sum::<f64>()
        })
        .sum::<f64>()
        / n as f64;
    (mean, spread2)
}

impl Problem {
    /// Quadratic with identical curvature `lambda` and given centers.
    pub fn quadratic(lambda: f64, centers: Vec<Vec<f64>>) -> Result<Self, ProblemError> {
        if centers.is_empty() || centers[0].is_empty() {
            return Err(ProblemError::EmptyProblem);
        }
        let (center_mean, center_spread2) = center_stats(&centers);
        Ok(Problem::EqualCurvatureQuadratic {
            lambda,
            centers,
            center_mean,
            center_spread2,
        })
    }

    /// Seeded quadratic with centers drawn uniformly from `[-1, 1]^d`.
    pub fn seeded_quadratic(n: usize, d: usize, lambda: f64, seed: u64) -> Result<Self, ProblemError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        Self::quadratic(lambda, centers)
    }

    pub fn logistic(features: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self, ProblemError> {
        if features.is_empty() || features[0].is_empty() || features.len() != labels.len() {
            return Err(ProblemError::EmptyProblem);
        }
        Ok(Problem::Logistic { features, labels })
    }

    /// Seeded logistic testbed: features uniform on `[-1, 1]^d` (resampled if
    /// degenerate), labels alternating so both classes are present.
    pub fn seeded_logistic(n: usize, d: usize, seed: u64) -> Result<Self, ProblemError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut features = Vec::with_capacity(n);
        while features.len() < n {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            if x.iter().any(|&v| v.abs() > 1e-9) {
                features.push(x);
            }
        }
        let labels = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        Self::logistic(features, labels)
    }

    pub fn sine_quadratic(
        lambda: f64,
        amp: f64,
        centers: Vec<Vec<f64>>,
    ) -> Result<Self, ProblemError> {
        if centers.is_empty() || centers[0].is_empty() {
            return Err(ProblemError::EmptyProblem);
        }
        let (center_mean, center_spread2) = center_stats(&centers);
        Ok(Problem::SineQuadratic {
            lambda,
            amp,
            centers,
            center_mean,
            center_spread2,
        })
    }

    pub fn seeded_sine_quadratic(
        n: usize,
        d: usize,
        lambda: f64,
        amp: f64,
        seed: u64,
    ) -> Result<Self, ProblemError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        Self::sine_quadratic(lambda, amp, centers)
    }

    pub fn n(&self) -> usize {
        match self {
            Problem::EqualCurvatureQuadratic { centers, .. }
            | Problem::SineQuadratic { centers, .. } => centers.len(),
            Problem::Logistic { features, .. } => features.len(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Problem::EqualCurvatureQuadratic { centers, .. }
            | Problem::SineQuadratic { centers, .. } => centers[0].len(),
            Problem::Logistic { features, .. } => features[0].len(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Problem::EqualCurvatureQuadratic { .. } => "equal_curvature_quadratic",
            Problem::Logistic { .. } => "logistic",
            Problem::SineQuadratic { .. } => "sine_quadratic",
        }
    }

    fn check_theta(&self, theta: &[f64]) -> Result<(), ProblemError> {
        if theta.len() != self.dim() {
            return Err(ProblemError::DimensionMismatch {
                got: theta.len(),
                want: self.dim(),
            });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::NonFinite);
        }
        Ok(())
    }

    /// Exact mean loss `f(theta)`.
    pub fn loss(&self, theta: &[f64]) -> Result<f64, ProblemError> {
        self.check_theta(theta)?;
        Ok(match self {
            Problem::EqualCurvatureQuadratic {
                lambda,
                center_mean,
                center_spread2,
                ..
            } => {
                let dist2: f64 = theta
                    .iter()
                    .zip(center_mean)
                    .map(|(&t, &m)| (t - m) * (t - m))
                    .sum();
                0.5 * lambda * (dist2 + center_spread2)
            }
            Problem::Logistic { features, labels } => {
                let n = features.len() as f64;
                features
                    .iter()
                    .zip(labels)
                    .map(|(x, &y)| {
                        let z = y * dot(x, theta);
                        ln_1p_exp(-z)
                    })
                    .sum::<f64>()
                    / n
            }
            Problem::SineQuadratic {
                lambda,
                amp,
                center_mean,
                center_spread2,
                ..
            } => {
                let dist2: f64 = theta
                    .iter()
                    .zip(center_mean)
                    .map(|(&t, &m)| (t - m) * (t - m))
                    .sum();
                let sines: f64 = theta.iter().map(|&t| t.sin() * t.sin()).sum();
                0.5 * lambda * (dist2 + center_spread2) + amp * sines
            }
        })
    }

    /// Exact full gradient `grad f(theta)` in closed form.
    pub fn full_gradient(&self, theta: &[f64]) -> Result<Vec<f64>, ProblemError> {
        self.check_theta(theta)?;
        let mut out = vec![0.0; self.dim()];
        self.full_gradient_into(theta, &mut out);
        Ok(out)
    }

    pub(crate) fn full_gradient_into(&self, theta: &[f64], out: &mut [f64]) {
        match self {
            Problem::EqualCurvatureQuadratic {
                lambda,
                center_mean,
                ..
            } => {
                for ((o, &t), &m) in out.iter_mut().zip(theta).zip(center_mean) {
                    *o = lambda * (t - m);
                }
            }
            Problem::Logistic { features, labels } => {
                out.fill(0.0);
                let n = features.len() as f64;
                for (x, &y) in features.iter().zip(labels) {
                    let z = y * dot(x, theta);
                    let w = -y * sigmoid(-z) / n;
                    for (o, &xi) in out.iter_mut().zip(x) {
                        *o += w * xi;
                    }
                }
            }
            Problem::SineQuadratic {
                lambda,
                amp,
                center_mean,
                ..
            } => {
                for ((o, &t), &m) in out.iter_mut().zip(theta).zip(center_mean) {
                    *o = lambda * (t - m) + amp * (2.0 * t).sin();
                }
            }
        }
    }

    /// Exact per-sample gradient `grad f_i(theta)`.
    pub fn sample_gradient(&self, theta: &[f64], index: usize) -> Result<GradientSample, ProblemError> {
        self.check_theta(theta)?;
        if index >= self.n() {
            return Err(ProblemError::IndexOutOfRange {
                index,
                n: self.n(),
            });
        }
        let mut value = vec![0.0; self.dim()];
        self.accumulate_sample_gradient(theta, index, 1.0, &mut value);
        Ok(GradientSample { value, index })
    }

    /// `out += weight * grad f_i(theta)`; shared by the mini-batch loop.
    pub(crate) fn accumulate_sample_gradient(
        &self,
        theta: &[f64],
        index: usize,
        weight: f64,
        out: &mut [f64],
    ) {
        match self {
            Problem::EqualCurvatureQuadratic {
                lambda, centers, ..
            } => {
                for ((o, &t), &c) in out.iter_mut().zip(theta).zip(&centers[index]) {
                    *o += weight * lambda * (t - c);
                }
            }
            Problem::Logistic { features, labels } => {
                let x = &features[index];
                let y = labels[index];
                let z = y * dot(x, theta);
                let w = -y * sigmoid(-z) * weight;
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o += w * xi;
                }
            }
            Problem::SineQuadratic {
                lambda,
                amp,
                centers,
                ..
            } => {
                for ((o, &t), &c) in out.iter_mut().zip(theta).zip(&centers[index]) {
                    *o += weight * (lambda * (t - c) + amp * (2.0 * t).sin());
                }
            }
        }
    }

    /// Certify the constants the convergence bounds depend on.
    pub fn certify(&self) -> Certificate {
        match self {
            Problem::EqualCurvatureQuadratic {
                lambda,
                centers,
                center_mean,
                center_spread2,
            } => {
                let n = centers.len();
                // Gradient deviations are theta-independent:
                // grad f_i - grad f = lambda (c_mean - c_i) exactly.
                let sigma2 = lambda * lambda * center_spread2;
                Certificate {
                    l_per_sample: vec![*lambda; n],
                    l_bar: *lambda,
                    sigma2,
                    sigma2_flag: CertFlag::Exact,
                    f_lower: 0.0,
                    f_lower_flag: CertFlag::Exact,
                    theta_star: Some(center_mean.clone()),
                    f_star: Some(0.5 * lambda * center_spread2),
                }
            }
            Problem::Logistic { features, .. } => {
                let n = features.len() as f64;
                let l_per_sample: Vec<f64> =
                    features.iter().map(|x| dot(x, x) / 4.0).collect();
                let l_bar = l_per_sample.iter().sum::<f64>() / n;
                // |f_i'(z)| <= 1, so ||grad f_i|| <= ||x_i|| everywhere.
                let sigma2 = features.iter().map(|x| dot(x, x)).sum::<f64>() / n;
                Certificate {
                    l_per_sample,
                    l_bar,
                    sigma2,
                    sigma2_flag: CertFlag::UpperBound,
                    f_lower: 0.0,
                    f_lower_flag: CertFlag::Exact,
                    theta_star: None,
                    f_star: None,
                }
            }
            Problem::SineQuadratic {
                lambda,
                amp,
                centers,
                center_spread2,
                ..
            } => {
                let n = centers.len();
                let d = centers[0].len() as f64;
                let l_i = lambda + 2.0 * amp;
                // Quadratic part is exact; the shared sine term is bounded
                // by 2*amp per coordinate, giving 4*amp^2*d of slack.
                let sigma2 = lambda * lambda * center_spread2 + 4.0 * amp * amp * d;
                Certificate {
                    l_per_sample: vec![l_i; n],
                    l_bar: l_i,
                    sigma2,
                    sigma2_flag: if *amp == 0.0 {
                        CertFlag::Exact
                    } else {
                        CertFlag::UpperBound
                    },
                    f_lower: 0.0,
                    f_lower_flag: CertFlag::UpperBound,
                    theta_star: None,
                    f_star: None,
                }
            }
        }
    }

    /// Suboptimality `f(theta) - f_star` when the optimum is known.
    pub fn suboptimality(&self, theta: &[f64]) -> Result<Option<f64>, ProblemError> {
        let cert = self.certify();
        match cert.f_star {
            Some(f_star) => Ok(Some(self.loss(theta)? - f_star)),
            None => Ok(None),
        }
    }
}

/// Bundle problem certificate, start point, and plan peak rate into the
/// constants consumed by the bound right-hand sides.
pub fn bound_constants(
    problem: &Problem,
    theta0: &[f64],
    eta_max: f64,
) -> Result<ProblemConstants, ProblemError> {
    let cert = problem.certify();
    let f0_gap = problem.loss(theta0)? - cert.f_lower;
    let theta0_dist2 = cert.theta_star.as_ref().map(|star| {
        theta0
            .iter()
            .zip(star)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum()
    });
    Ok(ProblemConstants::new(
        cert.l_bar,
        f0_gap,
        cert.sigma2,
        theta0_dist2,
        eta_max,
    )?)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(z))` without overflow for large `z`.
fn ln_1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}
