//! Regularized generalized linear objectives
//! `F(beta) = (1/n) sum_i loss_i(a_i^T beta) + (lambda/2) ||beta||^2`.

use crate::error::{Error, Result};
use crate::linalg::{dot, gram, DenseMatrix, SymmetricPsd};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    /// `log(1 + exp(-y_i a_i^T beta))` with `y_i` in `{-1, +1}`.
    Logistic,
    /// `(a_i^T beta - y_i)^2 / 2`.
    LeastSquares,
}

impl ProblemKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProblemKind::Logistic => "logistic",
            ProblemKind::LeastSquares => "least_squares",
        }
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(ProblemKind::Logistic),
            "least_squares" | "ls" => Ok(ProblemKind::LeastSquares),
            other => Err(Error::InvalidArgument(format!("unknown problem `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmProblem {
    a: DenseMatrix,
    y: Vec<f64>,
    lambda: f64,
    kind: ProblemKind,
}

impl GlmProblem {
    pub fn new(a: DenseMatrix, y: Vec<f64>, lambda: f64, kind: ProblemKind) -> Result<Self> {
        if y.len() != a.rows() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} rows",
                y.len(),
                a.rows()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda {lambda} must be >= 0"
            )));
        }
        if kind == ProblemKind::Logistic {
            if let Some(row) = y.iter().position(|&v| v != 1.0 && v != -1.0) {
                return Err(Error::LabelDomain { row, value: y[row] });
            }
        }
        Ok(Self { a, y, lambda, kind })
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn d(&self) -> usize {
        self.a.cols()
    }

    /// `C = lambda I`, the Hessian of the regularizer.
    pub fn regularizer(&self) -> SymmetricPsd {
        SymmetricPsd::scaled_identity(self.d(), self.lambda)
    }

    fn check_beta(&self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.d() {
            return Err(Error::DimensionMismatch(format!(
                "beta has length {}, expected {}",
                beta.len(),
                self.d()
            )));
        }
        Ok(())
    }
}

/// Rows `A(beta)` with `grad^2 f(beta) = A(beta)^T A(beta)` (data term only).
#[derive(Debug, Clone, PartialEq)]
pub struct HessianSqrt {
    pub rows: DenseMatrix,
}

impl HessianSqrt {
    /// Full Hessian `A(beta)^T A(beta) + lambda I`.
    pub fn hessian(&self, lambda: f64) -> SymmetricPsd {
        let mut h = gram(&self.rows);
        let d = h.dim();
        h = h
            .add(&SymmetricPsd::scaled_identity(d, lambda))
            .expect("dimensions agree");
        h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian_sqrt: HessianSqrt,
}

/// `log(1 + exp(x))` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `1 / (1 + exp(-x))` without overflow.
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-row loss, derivative with respect to `a_i^T beta`, and curvature.
fn row_terms(kind: ProblemKind, t: f64, y: f64) -> (f64, f64, f64) {
    match kind {
        ProblemKind::Logistic => {
            let z = y * t;
            let s_neg = sigmoid(-z);
            (softplus(-z), -y * s_neg, sigmoid(z) * s_neg)
        }
        ProblemKind::LeastSquares => {
            let r = t - y;
            (0.5 * r * r, r, 1.0)
        }
    }
}

pub fn objective_value(p: &GlmProblem, beta: &[f64]) -> Result<f64> {
    p.check_beta(beta)?;
    let n = p.n() as f64;
    let loss: f64 = (0..p.n())
        .map(|i| row_terms(p.kind, dot(p.a.row(i), beta), p.y[i]).0)
        .sum();
    Ok(loss / n + 0.5 * p.lambda * dot(beta, beta))
}

pub fn objective_eval(p: &GlmProblem, beta: &[f64]) -> Result<ObjectiveEval> {
    p.check_beta(beta)?;
    let n = p.n();
    let d = p.d();
    let inv_n = 1.0 / n as f64;
    let inv_sqrt_n = inv_n.sqrt();
    let mut loss = 0.0;
    let mut gradient: Vec<f64> = beta.iter().map(|b| p.lambda * b).collect();
    let mut rows = DenseMatrix::zeros(n, d);
    for i in 0..n {
        let a_i = p.a.row(i);
        let (l, dl, curv) = row_terms(p.kind, dot(a_i, beta), p.y[i]);
        loss += l;
        for (g, x) in gradient.iter_mut().zip(a_i) {
            *g += inv_n * dl * x;
        }
        let s = curv.sqrt() * inv_sqrt_n;
        for (o, x) in rows.row_mut(i).iter_mut().zip(a_i) {
            *o = s * x;
        }
    }
    Ok(ObjectiveEval {
        value: loss * inv_n + 0.5 * p.lambda * dot(beta, beta),
        gradient,
        hessian_sqrt: HessianSqrt { rows },
    })
}

/// Gradient of the objective restricted to the rows in `batch` (loss
/// averaged over the batch, full regularizer).
pub fn minibatch_gradient(p: &GlmProblem, beta: &[f64], batch: &[usize]) -> Result<Vec<f64>> {
    p.check_beta(beta)?;
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty minibatch".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut g: Vec<f64> = beta.iter().map(|b| p.lambda * b).collect();
    for &i in batch {
        if i >= p.n() {
            return Err(Error::IndexOutOfRange {
                index: i,
                rows: p.n(),
            });
        }
        let a_i = p.a.row(i);
        let (_, dl, _) = row_terms(p.kind, dot(a_i, beta), p.y[i]);
        for (gj, x) in g.iter_mut().zip(a_i) {
            *gj += scale * dl * x;
        }
    }
    Ok(g)
}
