//! Monte-Carlo estimation of the inversion bias
//! `|| H^{1/2} (E[(A~^T A~ + C)^{-1}] - H^{-1}) H^{1/2} ||` with `H = A^T A + C`.
//!
//! Trials are split into fixed batches of [`JACKKNIFE_BATCH`]; batches run in
//! parallel and are reduced in index order, so results do not depend on the
//! thread count.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::debias::{apply_debias, fine_grained_weights, scalar_factor, DebiasMode, DebiasSpec};
use crate::error::{Error, Result};
use crate::hadamard::{rotated_leverage_scores, srht_apply, SrhtDraw};
use crate::linalg::{
    cholesky, gram, psd_relative_error, symmetric_eigen, DenseMatrix, LowerTriangularFactor,
    SymmetricPsd,
};
use crate::rng::{derive_seed, stream, StreamRng};
use crate::sampling::{
    build_plan, draw_with_rng, effective_dimension, exact_leverage_scores, sjlt_approx_leverage,
    sketched_gram, PlanKind, PlanParams, SamplingPlan,
};

pub const JACKKNIFE_BATCH: usize = 64;

/// How each trial's sketch is drawn.
#[derive(Debug, Clone, PartialEq)]
pub enum SketchScheme {
    Sampling(SamplingPlan),
    Srht,
    /// Dense `N(0, 1/m)` sketch; the inverse-Wishart reference.
    Gaussian,
}

impl SketchScheme {
    pub fn label(&self) -> &'static str {
        match self {
            SketchScheme::Sampling(plan) => plan.kind().label(),
            SketchScheme::Srht => "srht",
            SketchScheme::Gaussian => "gaussian",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasEstimate {
    pub m: usize,
    pub trials: usize,
    /// Trials whose sketched Gram was singular and were left out of the mean.
    pub discarded: usize,
    pub bias: f64,
    /// Jackknife standard error of `bias` over trial batches.
    pub stderr_proxy: f64,
    /// Two-sided relative error of the mean inverse against `H^{-1}`.
    pub eps_relative: f64,
    pub debias_mode: DebiasMode,
    pub mean_inverse: SymmetricPsd,
}

/// `S A` with `S` an `m x n` matrix of i.i.d. `N(0, 1/m)` entries.
pub fn gaussian_sketch(a: &DenseMatrix, m: usize, seed: u64) -> DenseMatrix {
    gaussian_sketch_with_rng(a, m, &mut stream(seed, 0))
}

fn gaussian_sketch_with_rng(a: &DenseMatrix, m: usize, rng: &mut StreamRng) -> DenseMatrix {
    let scale = 1.0 / (m as f64).sqrt();
    let mut out = DenseMatrix::zeros(m, a.cols());
    for s in 0..m {
        for i in 0..a.rows() {
            let g: f64 = StandardNormal.sample(rng);
            let g = g * scale;
            for (o, x) in out.row_mut(s).iter_mut().zip(a.row(i)) {
                *o += g * x;
            }
        }
    }
    out
}

/// Per-trial correction; SRHT fine-grained weights depend on the sign draw.
#[derive(Debug, Clone)]
enum TrialDebias {
    Fixed(DebiasSpec),
    SrhtFineGrained,
}

/// Runs `trials` independent evaluations of `trial` (which returns `None`
/// for a discarded trial) and returns per-batch sums and counts in batch order.
pub fn batched_trials<F>(
    dim: usize,
    trials: usize,
    seed: u64,
    trial: F,
) -> Result<Vec<(Vec<f64>, usize)>>
where
    F: Fn(&mut StreamRng) -> Result<Option<SymmetricPsd>> + Sync,
{
    let batches = trials.div_ceil(JACKKNIFE_BATCH);
    (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut sum = vec![0.0; dim * dim];
            let mut count = 0;
            let end = ((b + 1) * JACKKNIFE_BATCH).min(trials);
            for t in b * JACKKNIFE_BATCH..end {
                let mut rng = stream(seed, t as u64);
                if let Some(q) = trial(&mut rng)? {
                    sum.iter_mut().zip(q.data()).for_each(|(s, v)| *s += v);
                    count += 1;
                }
            }
            Ok((sum, count))
        })
        .collect()
}

fn inverse_or_singular(g: SymmetricPsd, c: &SymmetricPsd) -> Result<Option<SymmetricPsd>> {
    match cholesky(&g.add(c)?) {
        Ok(l) => Ok(Some(l.inverse())),
        Err(Error::NotPositiveDefinite { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn run_trial(
    a: &DenseMatrix,
    c: &SymmetricPsd,
    scheme: &SketchScheme,
    debias: &TrialDebias,
    m: usize,
    rng: &mut StreamRng,
) -> Result<Option<SymmetricPsd>> {
    let g = match (scheme, debias) {
        (SketchScheme::Sampling(plan), TrialDebias::Fixed(spec)) => {
            let draw = apply_debias(&draw_with_rng(plan, m, rng)?, spec)?;
            sketched_gram(&draw, a)?
        }
        (SketchScheme::Srht, _) => {
            let draw = SrhtDraw::with_rng(a.rows(), m, rng)?;
            let draw = match debias {
                TrialDebias::Fixed(spec) => draw.with_sample(apply_debias(draw.sample(), spec)?),
                TrialDebias::SrhtFineGrained => {
                    let scores = rotated_leverage_scores(a, c, draw.signs())?;
                    let plan = SamplingPlan::uniform(draw.n_padded(), effective_dimension(&scores));
                    let spec = DebiasSpec::FineGrainedExact {
                        row_weights: fine_grained_weights(&plan, &scores, m)?,
                    };
                    draw.with_sample(apply_debias(draw.sample(), &spec)?)
                }
            };
            gram(&srht_apply(&draw, a)?)
        }
        (SketchScheme::Gaussian, TrialDebias::Fixed(spec)) => {
            let g = gram(&gaussian_sketch_with_rng(a, m, rng));
            match spec {
                DebiasSpec::None => g,
                DebiasSpec::Scalar { factor } => g.scaled(*factor),
                _ => {
                    return Err(Error::InvalidArgument(
                        "Gaussian sketches take no per-row correction".into(),
                    ))
                }
            }
        }
        (_, TrialDebias::SrhtFineGrained) => unreachable!("constructed only for SRHT"),
    };
    inverse_or_singular(g, c)
}

/// `max |eig(H^{1/2} (mean - H^{-1}) H^{1/2})|`, evaluated as the spectrum
/// of the similar matrix `L^T (mean - H^{-1}) L` with `H = L L^T`.
pub fn bias_metric(mean: &SymmetricPsd, h_factor: &LowerTriangularFactor) -> Result<f64> {
    let diff = mean.sub(&h_factor.inverse())?;
    Ok(symmetric_eigen(&h_factor.congruence_transpose(&diff)).max_abs())
}

fn mean_from(sum: &[f64], count: usize, dim: usize) -> SymmetricPsd {
    SymmetricPsd::from_upper(dim, sum.iter().map(|v| v / count as f64).collect())
}

fn summarize(
    batches: &[(Vec<f64>, usize)],
    dim: usize,
    h_factor: &LowerTriangularFactor,
    h_inv: &SymmetricPsd,
    m: usize,
    trials: usize,
    mode: DebiasMode,
) -> Result<BiasEstimate> {
    let mut total = vec![0.0; dim * dim];
    let mut kept = 0;
    for (sum, count) in batches {
        total.iter_mut().zip(sum).for_each(|(t, v)| *t += v);
        kept += count;
    }
    if kept == 0 {
        return Err(Error::AllTrialsSingular);
    }
    let mean = mean_from(&total, kept, dim);
    let bias = bias_metric(&mean, h_factor)?;

    let mut loo = Vec::with_capacity(batches.len());
    for (sum, count) in batches {
        if kept > *count {
            let rest: Vec<f64> = total.iter().zip(sum).map(|(t, s)| t - s).collect();
            loo.push(bias_metric(&mean_from(&rest, kept - count, dim), h_factor)?);
        }
    }
    let stderr_proxy = if loo.len() >= 2 {
        let k = loo.len() as f64;
        let avg = loo.iter().sum::<f64>() / k;
        ((k - 1.0) / k * loo.iter().map(|v| (v - avg).powi(2)).sum::<f64>()).sqrt()
    } else {
        f64::NAN
    };

    Ok(BiasEstimate {
        m,
        trials,
        discarded: trials - kept,
        bias,
        stderr_proxy,
        eps_relative: psd_relative_error(&mean, h_inv)?,
        debias_mode: mode,
        mean_inverse: mean,
    })
}

fn estimate(
    a: &DenseMatrix,
    c: &SymmetricPsd,
    scheme: &SketchScheme,
    debias: &TrialDebias,
    mode: DebiasMode,
    m: usize,
    trials: usize,
    seed: u64,
) -> Result<BiasEstimate> {
    if m == 0 {
        return Err(Error::InvalidArgument("sketch size must be >= 1".into()));
    }
    if trials < 2 {
        return Err(Error::InvalidArgument("need at least 2 trials".into()));
    }
    if let SketchScheme::Sampling(plan) = scheme {
        if plan.len() != a.rows() {
            return Err(Error::DimensionMismatch("plan length vs rows of A".into()));
        }
    }
    let dim = a.cols();
    let h_factor = cholesky(&gram(a).add(c)?)?;
    let h_inv = h_factor.inverse();
    let batches = batched_trials(dim, trials, seed, |rng| {
        run_trial(a, c, scheme, debias, m, rng)
    })?;
    summarize(&batches, dim, &h_factor, &h_inv, m, trials, mode)
}

/// Monte-Carlo inversion bias of `(A~^T A~ + C)^{-1}` for one configuration.
/// SRHT accepts only `None` or `Scalar` here; see [`bias_sweep`] for
/// per-draw fine-grained SRHT weights.
pub fn estimate_bias(
    a: &DenseMatrix,
    c: &SymmetricPsd,
    scheme: &SketchScheme,
    debias: &DebiasSpec,
    m: usize,
    trials: usize,
    seed: u64,
) -> Result<BiasEstimate> {
    let fixed_only = !matches!(scheme, SketchScheme::Sampling(_));
    if fixed_only && !matches!(debias, DebiasSpec::None | DebiasSpec::Scalar { .. }) {
        return Err(Error::InvalidArgument(format!(
            "{} sketches accept only none or scalar correction here",
            scheme.label()
        )));
    }
    estimate(
        a,
        c,
        scheme,
        &TrialDebias::Fixed(debias.clone()),
        debias.mode(),
        m,
        trials,
        seed,
    )
}

/// Scheme axis of a sweep; sampling plans are built once per sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepScheme {
    Plan(PlanKind),
    Srht,
    Gaussian,
}

impl SweepScheme {
    pub fn label(&self) -> &'static str {
        match self {
            SweepScheme::Plan(k) => k.label(),
            SweepScheme::Srht => "srht",
            SweepScheme::Gaussian => "gaussian",
        }
    }
}

impl std::str::FromStr for SweepScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "srht" => Ok(SweepScheme::Srht),
            "gaussian" => Ok(SweepScheme::Gaussian),
            other => Ok(SweepScheme::Plan(other.parse()?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasRow {
    pub scheme: &'static str,
    pub d_eff: f64,
    pub estimate: BiasEstimate,
}

/// Seed used by cell `index` (row-major over schemes, modes, m) of a sweep.
pub fn cell_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, index as u64)
}

/// Seed used to build approximate-leverage plans in a sweep.
pub fn sweep_plan_seed(seed: u64) -> u64 {
    derive_seed(seed, u64::MAX)
}

/// Cross product of schemes x debias modes x sketch sizes. Rows come out in
/// that nesting order; each cell uses [`cell_seed`].
pub fn bias_sweep(
    a: &DenseMatrix,
    c: &SymmetricPsd,
    schemes: &[SweepScheme],
    modes: &[DebiasMode],
    m_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<BiasRow>> {
    if m_grid.is_empty() || m_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "sketch-size grid must be nonempty and ascending".into(),
        ));
    }
    let exact = exact_leverage_scores(a, c)?;
    let d_eff = effective_dimension(&exact);
    // Reject undersized grids before spending any trials.
    if modes.contains(&DebiasMode::Scalar) {
        for &m in m_grid {
            scalar_factor(m, d_eff)?;
        }
    }
    let params = PlanParams {
        seed: sweep_plan_seed(seed),
        ..PlanParams::default()
    };
    let mut approx_cache: Option<Vec<f64>> = None;
    let mut rows = Vec::new();
    let mut cell = 0;
    for scheme in schemes {
        let built = match scheme {
            SweepScheme::Plan(kind) => SketchScheme::Sampling(build_plan(*kind, a, c, &params)?),
            SweepScheme::Srht => SketchScheme::Srht,
            SweepScheme::Gaussian => SketchScheme::Gaussian,
        };
        for &mode in modes {
            for &m in m_grid {
                let debias = match (mode, &built) {
                    (DebiasMode::None, _) => TrialDebias::Fixed(DebiasSpec::None),
                    (DebiasMode::Scalar, _) => TrialDebias::Fixed(DebiasSpec::Scalar {
                        factor: scalar_factor(m, d_eff)?,
                    }),
                    (_, SketchScheme::Srht) => TrialDebias::SrhtFineGrained,
                    (_, SketchScheme::Gaussian) => {
                        return Err(Error::InvalidArgument(
                            "Gaussian sketches take no per-row correction".into(),
                        ))
                    }
                    (DebiasMode::FineGrainedExact, SketchScheme::Sampling(plan)) => {
                        TrialDebias::Fixed(DebiasSpec::fine_grained(plan, &exact, m)?)
                    }
                    (DebiasMode::FineGrainedApprox, SketchScheme::Sampling(plan)) => {
                        let scores = match plan.scores() {
                            Some(s) if plan.kind() != PlanKind::ExactLeverage => s.to_vec(),
                            _ => {
                                if approx_cache.is_none() {
                                    approx_cache = Some(sjlt_approx_leverage(
                                        a,
                                        c,
                                        params.sjlt.m1_for(a.cols()),
                                        None,
                                        params.sjlt.sparsity,
                                        params.seed,
                                    )?);
                                }
                                approx_cache.clone().unwrap_or_default()
                            }
                        };
                        TrialDebias::Fixed(DebiasSpec::fine_grained_approx(
                            plan,
                            &scores,
                            m,
                            f64::NAN,
                        )?)
                    }
                };
                let estimate = estimate(
                    a,
                    c,
                    &built,
                    &debias,
                    mode,
                    m,
                    trials,
                    cell_seed(seed, cell),
                )?;
                rows.push(BiasRow {
                    scheme: scheme.label(),
                    d_eff,
                    estimate,
                });
                cell += 1;
            }
        }
    }
    Ok(rows)
}
