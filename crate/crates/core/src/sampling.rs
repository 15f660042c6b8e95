//! Importance-sampling distributions, with-replacement row sketches and the
//! approximation factors that compare a distribution to leverage sampling.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, gram, psd_relative_error, DenseMatrix, SymmetricPsd};
use crate::rng::{stream, StreamRng};

/// Tolerance on `sum(probs) == 1`.
pub const PROB_SUM_TOL: f64 = 1e-12;
pub const DEFAULT_SJLT_SPARSITY: usize = 4;
pub const DEFAULT_SHRINKAGE_MIX: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlanKind {
    Uniform,
    RowNorm,
    ExactLeverage,
    ApproxLeverage,
    DoubleSketchApproxLeverage,
    /// `mix * uniform + (1 - mix) * leverage`.
    Shrinkage {
        mix: f64,
    },
    /// Caller-supplied probabilities.
    Custom,
}

impl PlanKind {
    pub fn label(&self) -> &'static str {
        match self {
            PlanKind::Uniform => "uniform",
            PlanKind::RowNorm => "rownorm",
            PlanKind::ExactLeverage => "rlev",
            PlanKind::ApproxLeverage => "arlev",
            PlanKind::DoubleSketchApproxLeverage => "darlev",
            PlanKind::Shrinkage { .. } => "shrinkage",
            PlanKind::Custom => "custom",
        }
    }

    /// Plans whose probabilities are exactly `scores / sum(scores)`.
    pub fn is_pure_leverage(&self) -> bool {
        matches!(
            self,
            PlanKind::ExactLeverage
                | PlanKind::ApproxLeverage
                | PlanKind::DoubleSketchApproxLeverage
        )
    }
}

impl std::str::FromStr for PlanKind {
    type Err = Error;

    /// Accepts the labels of [`PlanKind::label`]; `shrinkage` may carry a
    /// mix as `shrinkage:0.3`.
    fn from_str(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let kind = match head {
            "uniform" => PlanKind::Uniform,
            "rownorm" => PlanKind::RowNorm,
            "rlev" | "exact" => PlanKind::ExactLeverage,
            "arlev" | "approx" => PlanKind::ApproxLeverage,
            "darlev" => PlanKind::DoubleSketchApproxLeverage,
            "shrinkage" => PlanKind::Shrinkage {
                mix: match arg {
                    Some(a) => a
                        .parse()
                        .map_err(|_| Error::InvalidArgument(format!("bad shrinkage mix `{a}`")))?,
                    None => DEFAULT_SHRINKAGE_MIX,
                },
            },
            _ => return Err(Error::InvalidArgument(format!("unknown plan `{s}`"))),
        };
        if arg.is_some() && !matches!(kind, PlanKind::Shrinkage { .. }) {
            return Err(Error::InvalidArgument(format!("unknown plan `{s}`")));
        }
        Ok(kind)
    }
}

/// Which leverage scores a shrinkage plan mixes with the uniform distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LeverageSource {
    #[default]
    Exact,
    Approx,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SjltConfig {
    /// First sketch size; defaults to `8 d`.
    pub m1: Option<usize>,
    /// Second sketch size for the double-sketch estimator; defaults to `ceil(8 ln n)`.
    pub m2: Option<usize>,
    pub sparsity: usize,
}

impl Default for SjltConfig {
    fn default() -> Self {
        Self {
            m1: None,
            m2: None,
            sparsity: DEFAULT_SJLT_SPARSITY,
        }
    }
}

impl SjltConfig {
    pub fn m1_for(&self, d: usize) -> usize {
        self.m1.unwrap_or(8 * d)
    }

    pub fn m2_for(&self, n: usize) -> usize {
        self.m2
            .unwrap_or_else(|| (8.0 * (n.max(2) as f64).ln()).ceil() as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlanParams {
    pub sjlt: SjltConfig,
    pub shrinkage_base: LeverageSource,
    /// Seed for the SJLT draws of approximate plans.
    pub seed: u64,
}

/// An importance-sampling distribution over the rows of `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    kind: PlanKind,
    probs: Vec<f64>,
    scores: Option<Vec<f64>>,
    d_eff: f64,
}

impl SamplingPlan {
    /// Plan from caller-supplied probabilities (normalized here).
    pub fn custom(probs: Vec<f64>, d_eff: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidArgument("empty distribution".into()));
        }
        if let Some(i) = probs.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "probability {i} is negative or not finite"
            )));
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument("probabilities sum to zero".into()));
        }
        Ok(Self {
            kind: PlanKind::Custom,
            probs: probs.into_iter().map(|p| p / total).collect(),
            scores: None,
            d_eff,
        })
    }

    pub fn uniform(n: usize, d_eff: f64) -> Self {
        Self {
            kind: PlanKind::Uniform,
            probs: vec![1.0 / n as f64; n],
            scores: None,
            d_eff,
        }
    }

    /// `pi_i = scores_i / sum(scores)`; rows with zero score get zero probability.
    pub fn from_scores(kind: PlanKind, scores: Vec<f64>) -> Result<Self> {
        let d_eff: f64 = scores.iter().sum();
        if !(d_eff > 0.0) {
            return Err(Error::AllZeroRows);
        }
        Ok(Self {
            kind,
            probs: scores.iter().map(|s| s / d_eff).collect(),
            scores: Some(scores),
            d_eff,
        })
    }

    pub fn kind(&self) -> PlanKind {
        self.kind
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn scores(&self) -> Option<&[f64]> {
        self.scores.as_deref()
    }

    pub fn d_eff(&self) -> f64 {
        self.d_eff
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// `scores_i / pi_i` for row `i`. For pure leverage plans queried with
    /// their own scores this is `d_eff` by construction and is returned
    /// as such, avoiding the rounding of the division round trip.
    pub(crate) fn score_ratio(&self, i: usize, score: f64) -> f64 {
        if self.kind.is_pure_leverage() {
            if let Some(own) = &self.scores {
                if own[i].to_bits() == score.to_bits() && score > 0.0 {
                    return self.d_eff;
                }
            }
        }
        score / self.probs[i]
    }
}

fn check_regularizer(a: &DenseMatrix, c: &SymmetricPsd) -> Result<()> {
    if c.dim() != a.cols() {
        return Err(Error::DimensionMismatch(format!(
            "regularizer is {0}x{0} but A has {1} columns",
            c.dim(),
            a.cols()
        )));
    }
    Ok(())
}

/// `l_i = a_i^T (A^T A + C)^{-1} a_i`.
pub fn exact_leverage_scores(a: &DenseMatrix, c: &SymmetricPsd) -> Result<Vec<f64>> {
    check_regularizer(a, c)?;
    let h = gram(a).add(c)?;
    Ok(cholesky(&h)?.row_quadratic_forms(a))
}

pub fn effective_dimension(scores: &[f64]) -> f64 {
    scores.iter().sum()
}

/// Sparse sign embedding with a fixed number of `+-1/sqrt(s)` entries per column.
#[derive(Debug, Clone)]
pub struct SparseSignSketch {
    rows: usize,
    cols: usize,
    /// Nonzeros of each column as `(row, value)`.
    columns: Vec<Vec<(usize, f64)>>,
}

impl SparseSignSketch {
    pub fn new(rows: usize, cols: usize, sparsity: usize, rng: &mut StreamRng) -> Result<Self> {
        if rows == 0 || sparsity == 0 {
            return Err(Error::InvalidArgument(
                "sparse sign sketch needs rows >= 1 and sparsity >= 1".into(),
            ));
        }
        let s = sparsity.min(rows);
        let value = 1.0 / (s as f64).sqrt();
        let columns = (0..cols)
            .map(|_| {
                sample(rng, rows, s)
                    .into_iter()
                    .map(|r| (r, if rng.random::<bool>() { value } else { -value }))
                    .collect()
            })
            .collect();
        Ok(Self {
            rows,
            cols,
            columns,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// `S A` for `A` with `self.cols` rows.
    pub fn apply(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        if a.rows() != self.cols {
            return Err(Error::DimensionMismatch("sparse sketch apply".into()));
        }
        let mut out = DenseMatrix::zeros(self.rows, a.cols());
        for (j, col) in self.columns.iter().enumerate() {
            let src = a.row(j);
            for &(r, v) in col {
                for (o, x) in out.row_mut(r).iter_mut().zip(src) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }

    /// `R S^T` for `R` with `self.cols` columns.
    pub fn right_apply_transpose(&self, r: &DenseMatrix) -> Result<DenseMatrix> {
        if r.cols() != self.cols {
            return Err(Error::DimensionMismatch("sparse sketch right apply".into()));
        }
        let mut out = DenseMatrix::zeros(r.rows(), self.rows);
        for i in 0..r.rows() {
            for (j, col) in self.columns.iter().enumerate() {
                let rij = r[(i, j)];
                for &(k, v) in col {
                    out[(i, k)] += rij * v;
                }
            }
        }
        Ok(out)
    }
}

/// Ridge leverage estimates `|| a_i^T (B^T B + C)^{-1/2} T ||^2` from a
/// precomputed sketch `B = S1 A`, where `T` is the identity or `S2^T`.
pub fn approx_leverage_from_sketch(
    a: &DenseMatrix,
    c: &SymmetricPsd,
    sketched: &DenseMatrix,
    second: Option<&SparseSignSketch>,
) -> Result<Vec<f64>> {
    check_regularizer(a, c)?;
    if sketched.cols() != a.cols() {
        return Err(Error::DimensionMismatch(
            "sketch width differs from A".into(),
        ));
    }
    // Any square root of the inverse gives the same scores; the Cholesky one
    // avoids an eigendecomposition.
    let l = cholesky(&gram(sketched).add(c)?)?;
    match second {
        None => Ok(l.row_quadratic_forms(a)),
        Some(s2) => {
            // Row j of L^{-T} is L^{-1} e_j.
            let d = a.cols();
            let mut root = DenseMatrix::identity(d);
            for j in 0..d {
                l.forward_solve_in_place(root.row_mut(j));
            }
            Ok(a.matmul(&s2.right_apply_transpose(&root)?)?.row_norms_sq())
        }
    }
}

/// Approximate ridge leverage scores through a sparse Johnson-Lindenstrauss
/// sketch of size `m1`, optionally compressed further by a second sketch of
/// width `m2 < m1`.
pub fn sjlt_approx_leverage(
    a: &DenseMatrix,
    c: &SymmetricPsd,
    m1: usize,
    m2: Option<usize>,
    sparsity: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let d = a.cols();
    if m1 < d {
        return Err(Error::SketchTooSmall {
            m: m1,
            required: d as f64,
            index: None,
        });
    }
    if let Some(m2) = m2 {
        if m2 == 0 || m2 >= m1 {
            return Err(Error::InvalidArgument(format!(
                "second sketch width {m2} must lie in [1, m1 = {m1})"
            )));
        }
    }
    let s1 = SparseSignSketch::new(m1, a.rows(), sparsity, &mut stream(seed, 0))?;
    let sketched = s1.apply(a)?;
    let s2 = match m2 {
        Some(m2) => Some(SparseSignSketch::new(
            m2,
            d,
            sparsity,
            &mut stream(seed, 1),
        )?),
        None => None,
    };
    approx_leverage_from_sketch(a, c, &sketched, s2.as_ref())
}

/// Builds the sampling distribution of the requested kind for `A` given `C`.
pub fn build_plan(
    kind: PlanKind,
    a: &DenseMatrix,
    c: &SymmetricPsd,
    params: &PlanParams,
) -> Result<SamplingPlan> {
    let n = a.rows();
    if n == 0 {
        return Err(Error::InvalidArgument("A has no rows".into()));
    }
    let approx = |double: bool| -> Result<Vec<f64>> {
        let m2 = double.then(|| params.sjlt.m2_for(n));
        sjlt_approx_leverage(
            a,
            c,
            params.sjlt.m1_for(a.cols()),
            m2,
            params.sjlt.sparsity,
            params.seed,
        )
    };
    match kind {
        PlanKind::Uniform => {
            let d_eff = effective_dimension(&exact_leverage_scores(a, c)?);
            Ok(SamplingPlan::uniform(n, d_eff))
        }
        PlanKind::RowNorm => {
            let norms = a.row_norms_sq();
            let total: f64 = norms.iter().sum();
            if !(total > 0.0) {
                return Err(Error::AllZeroRows);
            }
            let d_eff = effective_dimension(&exact_leverage_scores(a, c)?);
            Ok(SamplingPlan {
                kind,
                probs: norms.iter().map(|v| v / total).collect(),
                scores: None,
                d_eff,
            })
        }
        PlanKind::ExactLeverage => SamplingPlan::from_scores(kind, exact_leverage_scores(a, c)?),
        PlanKind::ApproxLeverage => SamplingPlan::from_scores(kind, approx(false)?),
        PlanKind::DoubleSketchApproxLeverage => SamplingPlan::from_scores(kind, approx(true)?),
        PlanKind::Shrinkage { mix } => {
            if !(0.0..=1.0).contains(&mix) {
                return Err(Error::InvalidArgument(format!(
                    "shrinkage mix {mix} outside [0, 1]"
                )));
            }
            let scores = match params.shrinkage_base {
                LeverageSource::Exact => exact_leverage_scores(a, c)?,
                LeverageSource::Approx => approx(false)?,
            };
            let lev = SamplingPlan::from_scores(PlanKind::ExactLeverage, scores)?;
            let uniform = 1.0 / n as f64;
            Ok(SamplingPlan {
                kind,
                probs: lev
                    .probs
                    .iter()
                    .map(|p| mix * uniform + (1.0 - mix) * p)
                    .collect(),
                d_eff: lev.d_eff,
                scores: lev.scores,
            })
        }
        PlanKind::Custom => Err(Error::InvalidArgument(
            "custom plans are built with SamplingPlan::custom".into(),
        )),
    }
}

/// Extremes of `l_i / (pi_i d_eff)` over the rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxFactors {
    pub rho_min: f64,
    pub rho_max: f64,
    pub argmax_index: usize,
}

/// Approximation factors of `plan` against the exact leverage scores.
/// Rows with zero score and zero probability are skipped.
pub fn approximation_factors(plan: &SamplingPlan, exact_scores: &[f64]) -> Result<ApproxFactors> {
    if exact_scores.len() != plan.len() {
        return Err(Error::DimensionMismatch("scores vs plan length".into()));
    }
    let d_eff = effective_dimension(exact_scores);
    if !(d_eff > 0.0) {
        return Err(Error::InvalidArgument("effective dimension is zero".into()));
    }
    if plan.kind == PlanKind::ExactLeverage && plan.scores.as_deref() == Some(exact_scores) {
        let argmax_index = exact_scores.iter().position(|&s| s > 0.0).unwrap_or(0);
        return Ok(ApproxFactors {
            rho_min: 1.0,
            rho_max: 1.0,
            argmax_index,
        });
    }
    let mut rho_min = f64::INFINITY;
    let mut rho_max = f64::NEG_INFINITY;
    let mut argmax_index = 0;
    for (i, (&l, &p)) in exact_scores.iter().zip(&plan.probs).enumerate() {
        if p == 0.0 {
            if l > 0.0 {
                return Err(Error::ZeroProbabilityWithPositiveScore(i));
            }
            continue;
        }
        let rho = l / (p * d_eff);
        rho_min = rho_min.min(rho);
        if rho > rho_max {
            rho_max = rho;
            argmax_index = i;
        }
    }
    Ok(ApproxFactors {
        rho_min,
        rho_max,
        argmax_index,
    })
}

/// One realized row-sampling sketch: `m` sampled rows with their scales.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchDraw {
    indices: Vec<usize>,
    weights: Vec<f64>,
}

impl SketchDraw {
    pub fn new(indices: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if indices.len() != weights.len() || indices.is_empty() {
            return Err(Error::DimensionMismatch(
                "a draw needs equally many (>= 1) indices and weights".into(),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidArgument(
                "weights must be finite and positive".into(),
            ));
        }
        Ok(Self { indices, weights })
    }

    /// Every row exactly once with unit weight, so `apply_sketch` returns `A`.
    pub fn full_coverage(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
            weights: vec![1.0; n],
        }
    }

    pub fn m(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn with_weights(&self, weights: Vec<f64>) -> Self {
        debug_assert_eq!(weights.len(), self.indices.len());
        Self {
            indices: self.indices.clone(),
            weights,
        }
    }
}

/// `m` i.i.d. rows from `plan` by inverse CDF, each scaled by `1/sqrt(m pi_i)`.
pub fn draw(plan: &SamplingPlan, m: usize, seed: u64) -> Result<SketchDraw> {
    draw_with_rng(plan, m, &mut stream(seed, 0))
}

pub fn draw_with_rng(plan: &SamplingPlan, m: usize, rng: &mut StreamRng) -> Result<SketchDraw> {
    if m == 0 {
        return Err(Error::InvalidArgument("sketch size must be >= 1".into()));
    }
    let mut cdf = Vec::with_capacity(plan.len());
    let mut acc = 0.0;
    for &p in &plan.probs {
        acc += p;
        cdf.push(acc);
    }
    let last_positive = plan
        .probs
        .iter()
        .rposition(|&p| p > 0.0)
        .ok_or_else(|| Error::InvalidArgument("distribution has no mass".into()))?;
    let mut indices = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for _ in 0..m {
        let u = rng.random::<f64>() * acc;
        let i = cdf.partition_point(|&c| c <= u).min(last_positive);
        indices.push(i);
        weights.push(1.0 / (m as f64 * plan.probs[i]).sqrt());
    }
    Ok(SketchDraw { indices, weights })
}

/// Materializes `S A`: row `s` is `weights[s] * a_{indices[s]}`.
pub fn apply_sketch(draw: &SketchDraw, a: &DenseMatrix) -> Result<DenseMatrix> {
    let mut out = DenseMatrix::zeros(draw.m(), a.cols());
    for (s, (&i, &w)) in draw.indices.iter().zip(&draw.weights).enumerate() {
        if i >= a.rows() {
            return Err(Error::IndexOutOfRange {
                index: i,
                rows: a.rows(),
            });
        }
        for (o, x) in out.row_mut(s).iter_mut().zip(a.row(i)) {
            *o = w * x;
        }
    }
    Ok(out)
}

/// `(S A)^T (S A)` accumulated directly from the draw.
pub fn sketched_gram(draw: &SketchDraw, a: &DenseMatrix) -> Result<SymmetricPsd> {
    a.weighted_row_gram(&draw.indices, &draw.weights)
}

/// Sketch size `8 rho_max d_eff ln(d_eff / delta) / eps^2` at which a sampling
/// sketch embeds the column space with distortion `eps` with probability
/// at least `1 - delta`.
pub fn embedding_sketch_size(rho_max: f64, d_eff: f64, eps: f64, delta: f64) -> usize {
    (8.0 * rho_max * d_eff * (d_eff / delta).ln() / (eps * eps)).ceil() as usize
}

/// Distortion of the sketched Gram against `A^T A` in the PSD order.
///
/// The measure is invariant under `A -> A M` for invertible `M`, so it also
/// equals the distortion of `A (A^T A + C)^{-1/2}`.
pub fn embedding_distortion(draw: &SketchDraw, a: &DenseMatrix) -> Result<f64> {
    psd_relative_error(&sketched_gram(draw, a)?, &gram(a))
}
