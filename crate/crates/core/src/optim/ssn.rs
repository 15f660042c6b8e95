//! Sub-sampled Newton steps: the data part of the Hessian is replaced by a
//! fresh (optionally de-biased) sketch of `A(beta)` at every iteration.

use rand::seq::index::sample;
use rand::Rng;

use crate::debias::{apply_debias, scalar_factor, DebiasMode, DebiasSpec};
use crate::error::{Error, Result};
use crate::hadamard::{rotated_leverage_scores, srht_apply, SrhtDraw};
use crate::linalg::{cholesky, gram, DenseMatrix, SymmetricPsd};
use crate::rng::{derive_seed, stream, StreamRng};
use crate::sampling::{
    approximation_factors, build_plan, draw_with_rng, effective_dimension, exact_leverage_scores,
    sjlt_approx_leverage, sketched_gram, PlanKind, PlanParams, SamplingPlan, SketchDraw,
};

use super::newton::{armijo_step, step_to};
use super::objective::{objective_eval, GlmProblem, ObjectiveEval};

/// `m x d` sketch whose rows each combine `nnz` distinct rows of `A` with
/// random signs, scaled so that `E[A~^T A~] = A^T A`.
pub fn sparse_rademacher_sketch(
    a: &DenseMatrix,
    m: usize,
    nnz_per_row: usize,
    seed: u64,
) -> Result<DenseMatrix> {
    sparse_rademacher_with_rng(a, m, nnz_per_row, &mut stream(seed, 0))
}

fn sparse_rademacher_with_rng(
    a: &DenseMatrix,
    m: usize,
    nnz: usize,
    rng: &mut StreamRng,
) -> Result<DenseMatrix> {
    let n = a.rows();
    if nnz == 0 || nnz > n || m == 0 {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= nnz ({nnz}) <= n ({n}) and m >= 1"
        )));
    }
    let scale = (n as f64 / (m * nnz) as f64).sqrt();
    let mut out = DenseMatrix::zeros(m, a.cols());
    for s in 0..m {
        for i in sample(rng, n, nnz) {
            let sign = if rng.random::<bool>() { scale } else { -scale };
            for (o, x) in out.row_mut(s).iter_mut().zip(a.row(i)) {
                *o += sign * x;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SsnSketch {
    Plan(PlanKind),
    Srht,
    SparseRademacher { nnz: usize },
}

impl SsnSketch {
    pub fn label(&self) -> &'static str {
        match self {
            SsnSketch::Plan(k) => k.label(),
            SsnSketch::Srht => "srht",
            SsnSketch::SparseRademacher { .. } => "sparse_rademacher",
        }
    }
}

/// `srht`, `sparse:<nnz>`, or a sampling plan label.
impl std::str::FromStr for SsnSketch {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "srht" {
            return Ok(SsnSketch::Srht);
        }
        if let Some(nnz) = s.strip_prefix("sparse:") {
            let nnz = nnz
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad sparse sketch `{s}`")))?;
            return Ok(SsnSketch::SparseRademacher { nnz });
        }
        s.parse::<PlanKind>().map(SsnSketch::Plan)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `mu = 1 - rho_max / (m / d_eff + rho_max)` from the current iterate.
    Theorem,
    Armijo,
    Fixed(f64),
}

impl StepRule {
    pub fn label(&self) -> String {
        match self {
            StepRule::Theorem => "theorem".into(),
            StepRule::Armijo => "armijo".into(),
            StepRule::Fixed(mu) => format!("fixed:{mu}"),
        }
    }
}

impl std::str::FromStr for StepRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theorem" => Ok(StepRule::Theorem),
            "armijo" => Ok(StepRule::Armijo),
            _ => match s.strip_prefix("fixed:").map(str::parse::<f64>) {
                Some(Ok(mu)) => Ok(StepRule::Fixed(mu)),
                _ => Err(Error::InvalidArgument(format!("unknown step rule `{s}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsnConfig {
    pub sketch: SsnSketch,
    pub m: usize,
    pub debias: DebiasMode,
    pub step: StepRule,
    pub plan_params: PlanParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsnDiagnostics {
    pub step_size: f64,
    pub d_eff: f64,
    pub rho_min: f64,
    pub rho_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsnStep {
    pub beta: Vec<f64>,
    pub eval: ObjectiveEval,
    pub diagnostics: SsnDiagnostics,
}

pub fn theorem_step_size(m: usize, d_eff: f64, rho_max: f64) -> f64 {
    1.0 - rho_max / (m as f64 / d_eff + rho_max)
}

fn finish_step(
    p: &GlmProblem,
    beta: &[f64],
    eval: ObjectiveEval,
    sketched: SymmetricPsd,
    step: StepRule,
    m: usize,
    d_eff: f64,
    rho: (f64, f64),
) -> Result<SsnStep> {
    let h = sketched.add(&p.regularizer())?;
    let dir = cholesky(&h)?.solve_vec(&eval.gradient);
    let mu = match step {
        StepRule::Theorem => theorem_step_size(m, d_eff, rho.1),
        StepRule::Armijo => armijo_step(p, beta, eval.value, &eval.gradient, &dir)?,
        StepRule::Fixed(mu) => mu,
    };
    Ok(SsnStep {
        beta: step_to(beta, &dir, mu),
        eval,
        diagnostics: SsnDiagnostics {
            step_size: mu,
            d_eff,
            rho_min: rho.0,
            rho_max: rho.1,
        },
    })
}

/// One step with a caller-supplied draw over the rows of `A(beta)`; with a
/// full-coverage draw and no correction this is an exact Newton step.
pub fn ssn_step_with_draw(
    p: &GlmProblem,
    beta: &[f64],
    draw: &SketchDraw,
    debias: &DebiasSpec,
    step: StepRule,
) -> Result<SsnStep> {
    let eval = objective_eval(p, beta)?;
    let rows = &eval.hessian_sqrt.rows;
    let d_eff = if step == StepRule::Theorem {
        effective_dimension(&exact_leverage_scores(rows, &p.regularizer())?)
    } else {
        f64::NAN
    };
    let g = sketched_gram(&apply_debias(draw, debias)?, rows)?;
    finish_step(p, beta, eval, g, step, draw.m(), d_eff, (1.0, 1.0))
}

fn plan_debias(
    mode: DebiasMode,
    plan: &SamplingPlan,
    exact: Option<&[f64]>,
    d_eff: f64,
    m: usize,
    rows: &DenseMatrix,
    c: &SymmetricPsd,
    params: &PlanParams,
) -> Result<DebiasSpec> {
    match mode {
        DebiasMode::None => Ok(DebiasSpec::None),
        DebiasMode::Scalar => DebiasSpec::scalar(m, d_eff),
        DebiasMode::FineGrainedExact => {
            DebiasSpec::fine_grained(plan, exact.expect("exact scores requested"), m)
        }
        DebiasMode::FineGrainedApprox => {
            let approx = match (plan.kind(), plan.scores()) {
                (PlanKind::ApproxLeverage | PlanKind::DoubleSketchApproxLeverage, Some(s)) => {
                    s.to_vec()
                }
                _ => sjlt_approx_leverage(
                    rows,
                    c,
                    params.sjlt.m1_for(rows.cols()),
                    None,
                    params.sjlt.sparsity,
                    params.seed,
                )?,
            };
            DebiasSpec::fine_grained_approx(plan, &approx, m, f64::NAN)
        }
    }
}

/// One sub-sampled Newton step from `beta` with a fresh sketch drawn from `seed`.
///
/// Exact leverage scores of `A(beta)` cost as much as the exact Hessian, so
/// they are computed only when the step rule or the correction needs them.
/// Otherwise the scalar correction uses the plan's own `d_eff` estimate and
/// the reported `rho` factors are NaN.
pub fn ssn_step(p: &GlmProblem, beta: &[f64], cfg: &SsnConfig, seed: u64) -> Result<SsnStep> {
    let eval = objective_eval(p, beta)?;
    let rows = &eval.hessian_sqrt.rows;
    let c = p.regularizer();
    let m = cfg.m;
    let theorem = cfg.step == StepRule::Theorem;
    let nan = (f64::NAN, f64::NAN);
    let mut rng = stream(seed, 0);
    let (g, d_eff, rho) = match cfg.sketch {
        SsnSketch::Plan(kind) => {
            let params = PlanParams {
                seed: derive_seed(seed, 1),
                ..cfg.plan_params
            };
            let plan = build_plan(kind, rows, &c, &params)?;
            let exact = if kind == PlanKind::ExactLeverage {
                plan.scores().map(<[f64]>::to_vec)
            } else if theorem || cfg.debias == DebiasMode::FineGrainedExact {
                Some(exact_leverage_scores(rows, &c)?)
            } else {
                None
            };
            let (d_eff, rho) = match &exact {
                Some(e) => {
                    let f = approximation_factors(&plan, e)?;
                    (effective_dimension(e), (f.rho_min, f.rho_max))
                }
                None => (plan.d_eff(), nan),
            };
            let spec = plan_debias(
                cfg.debias,
                &plan,
                exact.as_deref(),
                d_eff,
                m,
                rows,
                &c,
                &params,
            )?;
            let draw = apply_debias(&draw_with_rng(&plan, m, &mut rng)?, &spec)?;
            (sketched_gram(&draw, rows)?, d_eff, rho)
        }
        SsnSketch::Srht => {
            let draw = SrhtDraw::with_rng(p.n(), m, &mut rng)?;
            let (d_eff, rho, spec) = if theorem || cfg.debias != DebiasMode::None {
                // Rotation preserves d_eff, so the rotated scores carry everything.
                let scores = rotated_leverage_scores(rows, &c, draw.signs())?;
                let d_eff = effective_dimension(&scores);
                let uniform = SamplingPlan::uniform(draw.n_padded(), d_eff);
                let f = approximation_factors(&uniform, &scores)?;
                let spec = match cfg.debias {
                    DebiasMode::None => DebiasSpec::None,
                    DebiasMode::Scalar => DebiasSpec::scalar(m, d_eff)?,
                    DebiasMode::FineGrainedExact => DebiasSpec::fine_grained(&uniform, &scores, m)?,
                    DebiasMode::FineGrainedApprox => {
                        return Err(Error::InvalidArgument(
                            "approximate fine-grained correction is not defined for SRHT".into(),
                        ))
                    }
                };
                (d_eff, (f.rho_min, f.rho_max), spec)
            } else {
                (f64::NAN, nan, DebiasSpec::None)
            };
            let draw = draw.with_sample(apply_debias(draw.sample(), &spec)?);
            (gram(&srht_apply(&draw, rows)?), d_eff, rho)
        }
        SsnSketch::SparseRademacher { nnz } => {
            if !matches!(cfg.debias, DebiasMode::None | DebiasMode::Scalar) {
                return Err(Error::InvalidArgument(
                    "sparse sign sketches take only none or scalar correction".into(),
                ));
            }
            let d_eff = if theorem || cfg.debias == DebiasMode::Scalar {
                effective_dimension(&exact_leverage_scores(rows, &c)?)
            } else {
                f64::NAN
            };
            let g = gram(&sparse_rademacher_with_rng(rows, m, nnz, &mut rng)?);
            let g = match cfg.debias {
                DebiasMode::Scalar => g.scaled(scalar_factor(m, d_eff)?),
                _ => g,
            };
            (g, d_eff, (1.0, 1.0))
        }
    };
    finish_step(p, beta, eval, g, cfg.step, m, d_eff, rho)
}
