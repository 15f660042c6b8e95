//! Inversion-bias correction for row-sampling sketches.
//!
//! The inverse of a sampled Gram matrix `(A^T S^T S A + C)^{-1}` does not
//! estimate `(A^T A + C)^{-1}`; it concentrates around `(A^T D A + C)^{-1}`
//! for the self-consistent diagonal `D` computed by [`solve_fixed_point_d`].
//! Re-weighting each sampled row by `sqrt(m / (m - l_i / pi_i))` removes
//! that bias ([`fine_grained_weights`]); for leverage-proportional sampling
//! the re-weighting collapses to the scalar `m / (m - d_eff)`
//! ([`scalar_factor`]).

use crate::error::{Error, Result};
use crate::linalg::{cholesky, DenseMatrix, SymmetricPsd};
use crate::sampling::{
    approximation_factors, effective_dimension, exact_leverage_scores, SamplingPlan, SketchDraw,
};

pub const DEFAULT_FIXED_POINT_TOL: f64 = 1e-10;
pub const DEFAULT_FIXED_POINT_ITERS: usize = 500;
/// Iterations after which the fixed-point residual is expected to be non-increasing.
const CONTRACTION_WARMUP: usize = 3;

/// Solution of `D_ii = m pi_i / (m pi_i + a_i^T (A^T D A + C)^{-1} a_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointD {
    pub diag: Vec<f64>,
    pub iterations: usize,
    /// Max absolute change of any entry in the last sweep.
    pub residual: f64,
    /// `m / (m + 2 rho_max d_eff)`, the proven lower bound on every entry.
    pub lower_bound: f64,
    /// `m / (m + rho_min d_eff)`, the proven upper bound on every entry.
    pub upper_bound: f64,
    /// Whether `m > 2 rho_max d_eff`, the sketch size the range bounds assume.
    pub bounds_apply: bool,
    /// False when the residual increased after the warm-up sweeps.
    pub contraction_monotone: bool,
    probs_positive: Vec<bool>,
}

impl FixedPointD {
    /// Whether every sampled row's entry lies within the proven range,
    /// allowing `slack` relative to the bounds.
    pub fn within_bounds(&self, slack: f64) -> bool {
        self.diag
            .iter()
            .zip(&self.probs_positive)
            .filter(|(_, &p)| p)
            .all(|(&v, _)| {
                v >= self.lower_bound * (1.0 - slack) && v <= self.upper_bound * (1.0 + slack)
            })
    }

    /// `(A^T D A + C)^{-1}`, the matrix the undebiased sketched inverse estimates.
    pub fn implied_inverse(&self, a: &DenseMatrix, c: &SymmetricPsd) -> Result<SymmetricPsd> {
        Ok(cholesky(&weighted_gram(a, &self.diag)?.add(c)?)?.inverse())
    }
}

fn weighted_gram(a: &DenseMatrix, diag: &[f64]) -> Result<SymmetricPsd> {
    let rows: Vec<usize> = (0..a.rows()).collect();
    let w: Vec<f64> = diag.iter().map(|v| v.sqrt()).collect();
    a.weighted_row_gram(&rows, &w)
}

/// Plain fixed-point iteration for the self-consistent `D`, started at
/// `m / (m + d_eff)`.
pub fn solve_fixed_point_d(
    a: &DenseMatrix,
    c: &SymmetricPsd,
    plan: &SamplingPlan,
    m: usize,
    tol: f64,
    max_iters: usize,
) -> Result<FixedPointD> {
    if m == 0 {
        return Err(Error::InvalidArgument("sketch size must be >= 1".into()));
    }
    if plan.len() != a.rows() {
        return Err(Error::DimensionMismatch("plan length vs rows of A".into()));
    }
    let exact = exact_leverage_scores(a, c)?;
    let d_eff = effective_dimension(&exact);
    let factors = approximation_factors(plan, &exact)?;
    let mf = m as f64;
    let lower_bound = mf / (mf + 2.0 * factors.rho_max * d_eff);
    let upper_bound = mf / (mf + factors.rho_min * d_eff);

    let probs = plan.probs();
    let mut diag = vec![mf / (mf + d_eff); a.rows()];
    let mut prev_residual = f64::INFINITY;
    let mut contraction_monotone = true;
    for iter in 1..=max_iters {
        let q = cholesky(&weighted_gram(a, &diag)?.add(c)?)?.row_quadratic_forms(a);
        let mut residual = 0.0_f64;
        for (i, di) in diag.iter_mut().enumerate() {
            let mp = mf * probs[i];
            let next = if mp > 0.0 {
                mp / (mp + q[i])
            } else if q[i] > 0.0 {
                0.0
            } else {
                1.0
            };
            residual = residual.max((next - *di).abs());
            *di = next;
        }
        if iter > CONTRACTION_WARMUP && residual > prev_residual {
            contraction_monotone = false;
            log::warn!(
                "fixed-point residual increased at sweep {iter}: {prev_residual:e} -> {residual:e}"
            );
        }
        prev_residual = residual;
        if residual < tol {
            let out = FixedPointD {
                diag,
                iterations: iter,
                residual,
                lower_bound,
                upper_bound,
                bounds_apply: mf > 2.0 * factors.rho_max * d_eff,
                contraction_monotone,
                probs_positive: probs.iter().map(|&p| p > 0.0).collect(),
            };
            if out.bounds_apply && !out.within_bounds(1e-12) {
                log::warn!(
                    "self-consistent D leaves [{lower_bound}, {upper_bound}]; m may be too small"
                );
            }
            return Ok(out);
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
    })
}

/// `m / (m - d_eff)`.
pub fn scalar_factor(m: usize, d_eff: f64) -> Result<f64> {
    let mf = m as f64;
    if !(mf > d_eff) {
        return Err(Error::SketchTooSmall {
            m,
            required: d_eff,
            index: None,
        });
    }
    Ok(mf / (mf - d_eff))
}

/// Per-row weight multipliers `sqrt(m / (m - l_i / pi_i))`; rows that are
/// never sampled or carry no leverage get 1.
pub fn fine_grained_weights(plan: &SamplingPlan, scores: &[f64], m: usize) -> Result<Vec<f64>> {
    if scores.len() != plan.len() {
        return Err(Error::DimensionMismatch("scores vs plan length".into()));
    }
    let mf = m as f64;
    scores
        .iter()
        .zip(plan.probs())
        .enumerate()
        .map(|(i, (&l, &p))| {
            if p == 0.0 || l == 0.0 {
                return Ok(1.0);
            }
            let ratio = plan.score_ratio(i, l);
            if !(mf > ratio) {
                return Err(Error::SketchTooSmall {
                    m,
                    required: ratio,
                    index: Some(i),
                });
            }
            Ok((mf / (mf - ratio)).sqrt())
        })
        .collect()
}

/// [`fine_grained_weights`] evaluated with approximate leverage scores.
pub fn approx_fine_grained_weights(
    plan: &SamplingPlan,
    approx_scores: &[f64],
    m: usize,
) -> Result<Vec<f64>> {
    fine_grained_weights(plan, approx_scores, m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DebiasMode {
    None,
    Scalar,
    FineGrainedExact,
    FineGrainedApprox,
}

impl DebiasMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DebiasMode::None => "none",
            DebiasMode::Scalar => "scalar",
            DebiasMode::FineGrainedExact => "fine",
            DebiasMode::FineGrainedApprox => "fine_approx",
        }
    }
}

impl std::str::FromStr for DebiasMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(DebiasMode::None),
            "scalar" => Ok(DebiasMode::Scalar),
            "fine" | "fine_exact" => Ok(DebiasMode::FineGrainedExact),
            "fine_approx" => Ok(DebiasMode::FineGrainedApprox),
            other => Err(Error::InvalidArgument(format!(
                "unknown debias mode `{other}`"
            ))),
        }
    }
}

/// A validated correction applied to sketch weights.
#[derive(Debug, Clone, PartialEq)]
pub enum DebiasSpec {
    None,
    /// Gram scaled by `factor = m / (m - d_eff)`.
    Scalar {
        factor: f64,
    },
    /// Weight multipliers indexed by row of `A`.
    FineGrainedExact {
        row_weights: Vec<f64>,
    },
    /// As above, built from approximate scores; `omega_hint` is the claimed
    /// relative accuracy of those scores and is not verified.
    FineGrainedApprox {
        row_weights: Vec<f64>,
        omega_hint: f64,
    },
}

impl DebiasSpec {
    pub fn scalar(m: usize, d_eff: f64) -> Result<Self> {
        Ok(DebiasSpec::Scalar {
            factor: scalar_factor(m, d_eff)?,
        })
    }

    pub fn fine_grained(plan: &SamplingPlan, exact_scores: &[f64], m: usize) -> Result<Self> {
        Ok(DebiasSpec::FineGrainedExact {
            row_weights: fine_grained_weights(plan, exact_scores, m)?,
        })
    }

    pub fn fine_grained_approx(
        plan: &SamplingPlan,
        approx_scores: &[f64],
        m: usize,
        omega_hint: f64,
    ) -> Result<Self> {
        Ok(DebiasSpec::FineGrainedApprox {
            row_weights: approx_fine_grained_weights(plan, approx_scores, m)?,
            omega_hint,
        })
    }

    pub fn mode(&self) -> DebiasMode {
        match self {
            DebiasSpec::None => DebiasMode::None,
            DebiasSpec::Scalar { .. } => DebiasMode::Scalar,
            DebiasSpec::FineGrainedExact { .. } => DebiasMode::FineGrainedExact,
            DebiasSpec::FineGrainedApprox { .. } => DebiasMode::FineGrainedApprox,
        }
    }
}

/// Re-weights a draw according to `spec`.
pub fn apply_debias(draw: &SketchDraw, spec: &DebiasSpec) -> Result<SketchDraw> {
    match spec {
        DebiasSpec::None => Ok(draw.clone()),
        DebiasSpec::Scalar { factor } => {
            let s = factor.sqrt();
            Ok(draw.with_weights(draw.weights().iter().map(|w| w * s).collect()))
        }
        DebiasSpec::FineGrainedExact { row_weights }
        | DebiasSpec::FineGrainedApprox { row_weights, .. } => {
            let weights = draw
                .indices()
                .iter()
                .zip(draw.weights())
                .map(|(&i, &w)| {
                    row_weights
                        .get(i)
                        .map(|f| w * f)
                        .ok_or(Error::IndexOutOfRange {
                            index: i,
                            rows: row_weights.len(),
                        })
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(draw.with_weights(weights))
        }
    }
}
