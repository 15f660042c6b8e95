//! Python bindings. Matrices cross the boundary as lists of rows (any nested
//! sequence of floats, including 2-D numpy arrays); ridge regularizers are
//! given as the scalar `lam` and mean `lam * I`.

// Python keyword signatures map one-to-one onto arguments.
#![allow(clippy::too_many_arguments)]

use std::collections::BTreeMap;

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use randskew::bias_lab::{bias_sweep as core_bias_sweep, SweepScheme};
use randskew::debias::{self as core_debias, DebiasMode, DebiasSpec};
use randskew::linalg::{self, DenseMatrix, SymmetricPsd};
use randskew::optim::{
    self as core_optim, ProblemKind, RunOptions, SsnConfig, SsnSketch, StepRule,
};
use randskew::sampling::{self as core_sampling, PlanParams, SjltConfig};
use randskew::{datasets, hadamard};

create_exception!(randskew, RandskewError, PyValueError);

fn err(e: randskew::Error) -> PyErr {
    RandskewError::new_err(format!("{}: {e}", e.name()))
}

fn parse<T>(s: &str) -> PyResult<T>
where
    T: std::str::FromStr<Err = randskew::Error>,
{
    s.parse().map_err(err)
}

pub fn matrix(rows: Vec<Vec<f64>>) -> Result<DenseMatrix, randskew::Error> {
    DenseMatrix::from_rows(&rows)
}

fn mat(rows: Vec<Vec<f64>>) -> PyResult<DenseMatrix> {
    matrix(rows).map_err(err)
}

pub fn rows_of(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn sym_rows(m: &SymmetricPsd) -> Vec<Vec<f64>> {
    rows_of(&m.to_dense())
}

fn sym(rows: Vec<Vec<f64>>) -> PyResult<SymmetricPsd> {
    SymmetricPsd::from_dense(&mat(rows)?).map_err(err)
}

pub fn ridge(d: usize, lam: f64) -> SymmetricPsd {
    SymmetricPsd::scaled_identity(d, lam)
}

/// Ridge leverage scores of the rows of `a`.
#[pyfunction]
#[pyo3(signature = (a, lam = 0.0))]
fn leverage_scores(a: Vec<Vec<f64>>, lam: f64) -> PyResult<Vec<f64>> {
    let a = mat(a)?;
    core_sampling::exact_leverage_scores(&a, &ridge(a.cols(), lam)).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (a, lam = 0.0))]
fn effective_dimension(a: Vec<Vec<f64>>, lam: f64) -> PyResult<f64> {
    Ok(core_sampling::effective_dimension(&leverage_scores(
        a, lam,
    )?))
}

/// Leverage estimates through a sparse sketch of `m1` rows (default `8 d`),
/// compressed to `m2` columns when given.
#[pyfunction]
#[pyo3(signature = (a, lam = 0.0, m1 = None, m2 = None, sparsity = core_sampling::DEFAULT_SJLT_SPARSITY, seed = 0))]
fn approximate_leverage_scores(
    a: Vec<Vec<f64>>,
    lam: f64,
    m1: Option<usize>,
    m2: Option<usize>,
    sparsity: usize,
    seed: u64,
) -> PyResult<Vec<f64>> {
    let a = mat(a)?;
    let m1 = m1.unwrap_or(8 * a.cols());
    core_sampling::sjlt_approx_leverage(&a, &ridge(a.cols(), lam), m1, m2, sparsity, seed)
        .map_err(err)
}

/// Smallest `eps` with `X / (1 + eps) <= X_hat <= (1 + eps) X`.
#[pyfunction]
fn psd_relative_error(x_hat: Vec<Vec<f64>>, x: Vec<Vec<f64>>) -> PyResult<f64> {
    linalg::psd_relative_error(&sym(x_hat)?, &sym(x)?).map_err(err)
}

#[pyfunction]
fn scalar_factor(m: usize, d_eff: f64) -> PyResult<f64> {
    core_debias::scalar_factor(m, d_eff).map_err(err)
}

/// Unnormalized Walsh-Hadamard transform; the length must be a power of two.
#[pyfunction]
fn fwht(v: Vec<f64>) -> PyResult<Vec<f64>> {
    hadamard::fwht(&v).map_err(err)
}

/// An `m x d` SRHT sketch of `a`.
#[pyfunction]
fn srht_sketch(a: Vec<Vec<f64>>, m: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let a = mat(a)?;
    let draw = hadamard::SrhtDraw::new(a.rows(), m, seed).map_err(err)?;
    Ok(rows_of(&hadamard::srht_apply(&draw, &a).map_err(err)?))
}

#[pyfunction]
fn counterexample_matrix(d: usize) -> PyResult<Vec<Vec<f64>>> {
    if d < 2 {
        return Err(RandskewError::new_err("counterexample needs d >= 2"));
    }
    Ok(rows_of(&datasets::counterexample_matrix(d)))
}

/// Synthetic design: `gaussian`, `spiked` (column scales `decay^j`) or
/// `coherent` (`heavy_rows` rows scaled up).
#[pyfunction]
#[pyo3(signature = (n, d, distribution = "gaussian", seed = 0, decay = 0.9, heavy_rows = 4))]
fn synthetic_matrix(
    n: usize,
    d: usize,
    distribution: &str,
    seed: u64,
    decay: f64,
    heavy_rows: usize,
) -> PyResult<Vec<Vec<f64>>> {
    let dist = match distribution {
        "gaussian" => datasets::Distribution::GaussianIid,
        "spiked" => datasets::Distribution::Spiked { decay },
        "coherent" => datasets::Distribution::Coherent { heavy_rows },
        other => {
            return Err(RandskewError::new_err(format!(
                "unknown distribution `{other}`"
            )))
        }
    };
    Ok(rows_of(&datasets::generate(n, d, dist, seed)))
}

/// An importance-sampling distribution over the rows of a matrix.
#[pyclass(frozen)]
struct SamplingPlan {
    inner: core_sampling::SamplingPlan,
}

#[pymethods]
impl SamplingPlan {
    /// `kind` is `uniform`, `rownorm`, `rlev`, `arlev`, `darlev` or
    /// `shrinkage:<mix>`; `seed` drives the sketches of approximate plans.
    #[new]
    #[pyo3(signature = (kind, a, lam = 0.0, seed = 0))]
    fn new(kind: &str, a: Vec<Vec<f64>>, lam: f64, seed: u64) -> PyResult<Self> {
        let a = mat(a)?;
        let params = PlanParams {
            sjlt: SjltConfig::default(),
            seed,
            ..PlanParams::default()
        };
        let inner = core_sampling::build_plan(parse(kind)?, &a, &ridge(a.cols(), lam), &params)
            .map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().label()
    }

    #[getter]
    fn probs(&self) -> Vec<f64> {
        self.inner.probs().to_vec()
    }

    #[getter]
    fn scores(&self) -> Option<Vec<f64>> {
        self.inner.scores().map(<[f64]>::to_vec)
    }

    #[getter]
    fn d_eff(&self) -> f64 {
        self.inner.d_eff()
    }

    /// `(rho_min, rho_max)` against the exact scores of `a`.
    #[pyo3(signature = (a, lam = 0.0))]
    fn approximation_factors(&self, a: Vec<Vec<f64>>, lam: f64) -> PyResult<(f64, f64)> {
        let exact = leverage_scores(a, lam)?;
        let f = core_sampling::approximation_factors(&self.inner, &exact).map_err(err)?;
        Ok((f.rho_min, f.rho_max))
    }

    /// `m` rows drawn with replacement.
    fn draw(&self, m: usize, seed: u64) -> PyResult<SketchDraw> {
        Ok(SketchDraw {
            inner: core_sampling::draw(&self.inner, m, seed).map_err(err)?,
        })
    }

    /// Self-consistent diagonal `D` for sketch size `m`.
    #[pyo3(signature = (a, m, lam = 0.0, tol = 1e-10, max_iters = 1000))]
    fn fixed_point(
        &self,
        a: Vec<Vec<f64>>,
        m: usize,
        lam: f64,
        tol: f64,
        max_iters: usize,
    ) -> PyResult<FixedPoint> {
        let a = mat(a)?;
        let c = ridge(a.cols(), lam);
        let inner = core_debias::solve_fixed_point_d(&a, &c, &self.inner, m, tol, max_iters)
            .map_err(err)?;
        Ok(FixedPoint { inner, a, c })
    }

    /// Per-row multipliers `sqrt(m / (m - l_i / pi_i))` from the exact scores of `a`.
    #[pyo3(signature = (a, m, lam = 0.0))]
    fn fine_grained_weights(&self, a: Vec<Vec<f64>>, m: usize, lam: f64) -> PyResult<Vec<f64>> {
        let exact = leverage_scores(a, lam)?;
        core_debias::fine_grained_weights(&self.inner, &exact, m).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "SamplingPlan(kind={}, n={}, d_eff={})",
            self.kind(),
            self.inner.len(),
            self.inner.d_eff()
        )
    }
}

/// Sampled row indices with their rescaling weights.
#[pyclass(frozen)]
struct SketchDraw {
    inner: core_sampling::SketchDraw,
}

#[pymethods]
impl SketchDraw {
    #[getter]
    fn indices(&self) -> Vec<usize> {
        self.inner.indices().to_vec()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    /// `A~^T A~` for the sampled rows of `a`.
    fn gram(&self, a: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(sym_rows(
            &core_sampling::sketched_gram(&self.inner, &mat(a)?).map_err(err)?,
        ))
    }

    /// The draw re-weighted by a correction: `scalar` uses the exact `d_eff`
    /// of `a`, `fine` the exact scores under `plan`.
    #[pyo3(signature = (mode, plan, a, lam = 0.0))]
    fn corrected(
        &self,
        mode: &str,
        plan: &SamplingPlan,
        a: Vec<Vec<f64>>,
        lam: f64,
    ) -> PyResult<Self> {
        let m = self.inner.m();
        let exact = leverage_scores(a, lam)?;
        let spec = match parse::<DebiasMode>(mode)? {
            DebiasMode::None => DebiasSpec::None,
            DebiasMode::Scalar => {
                DebiasSpec::scalar(m, core_sampling::effective_dimension(&exact)).map_err(err)?
            }
            DebiasMode::FineGrainedExact => {
                DebiasSpec::fine_grained(&plan.inner, &exact, m).map_err(err)?
            }
            DebiasMode::FineGrainedApprox => {
                let scores = plan.inner.scores().ok_or_else(|| {
                    RandskewError::new_err("fine_approx needs a plan built from scores")
                })?;
                DebiasSpec::fine_grained_approx(&plan.inner, scores, m, f64::NAN).map_err(err)?
            }
        };
        Ok(Self {
            inner: core_debias::apply_debias(&self.inner, &spec).map_err(err)?,
        })
    }
}

/// Solution of the self-consistent equation for `D`.
#[pyclass(frozen)]
struct FixedPoint {
    inner: core_debias::FixedPointD,
    a: DenseMatrix,
    c: SymmetricPsd,
}

#[pymethods]
impl FixedPoint {
    #[getter]
    fn diag(&self) -> Vec<f64> {
        self.inner.diag.clone()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn lower_bound(&self) -> f64 {
        self.inner.lower_bound
    }

    #[getter]
    fn upper_bound(&self) -> f64 {
        self.inner.upper_bound
    }

    #[getter]
    fn bounds_apply(&self) -> bool {
        self.inner.bounds_apply
    }

    #[pyo3(signature = (slack = 0.0))]
    fn within_bounds(&self, slack: f64) -> bool {
        self.inner.within_bounds(slack)
    }

    /// `(A^T D A + C)^{-1}`.
    fn implied_inverse(&self) -> PyResult<Vec<Vec<f64>>> {
        Ok(sym_rows(
            &self.inner.implied_inverse(&self.a, &self.c).map_err(err)?,
        ))
    }
}

/// One cell of a Monte-Carlo bias estimate.
#[pyclass(frozen, get_all)]
struct BiasEstimate {
    scheme: String,
    debias: String,
    d_eff: f64,
    m: usize,
    trials: usize,
    discarded: usize,
    bias: f64,
    stderr_proxy: f64,
    eps_relative: f64,
    mean_inverse: Vec<Vec<f64>>,
}

#[pymethods]
impl BiasEstimate {
    fn __repr__(&self) -> String {
        format!(
            "BiasEstimate(scheme={}, debias={}, m={}, bias={:e})",
            self.scheme, self.debias, self.m, self.bias
        )
    }
}

/// Inversion bias of `(A~^T A~ + lam I)^{-1}` for every scheme, correction
/// and sketch size. Schemes are plan labels, `srht` or `gaussian`;
/// corrections are `none`, `scalar`, `fine` or `fine_approx`.
#[pyfunction]
#[pyo3(signature = (a, schemes, debias, ms, lam = 0.0, trials = 500, seed = 0))]
fn bias_sweep(
    py: Python<'_>,
    a: Vec<Vec<f64>>,
    schemes: Vec<String>,
    debias: Vec<String>,
    ms: Vec<usize>,
    lam: f64,
    trials: usize,
    seed: u64,
) -> PyResult<Vec<BiasEstimate>> {
    let a = mat(a)?;
    let c = ridge(a.cols(), lam);
    let schemes = schemes
        .iter()
        .map(|s| parse::<SweepScheme>(s))
        .collect::<PyResult<Vec<_>>>()?;
    let modes = debias
        .iter()
        .map(|s| parse::<DebiasMode>(s))
        .collect::<PyResult<Vec<_>>>()?;
    let rows = py
        .detach(|| core_bias_sweep(&a, &c, &schemes, &modes, &ms, trials, seed))
        .map_err(err)?;
    Ok(rows
        .into_iter()
        .map(|r| BiasEstimate {
            scheme: r.scheme.to_string(),
            debias: r.estimate.debias_mode.as_str().to_string(),
            d_eff: r.d_eff,
            m: r.estimate.m,
            trials: r.estimate.trials,
            discarded: r.estimate.discarded,
            bias: r.estimate.bias,
            stderr_proxy: r.estimate.stderr_proxy,
            eps_relative: r.estimate.eps_relative,
            mean_inverse: sym_rows(&r.estimate.mean_inverse),
        })
        .collect())
}

/// A solver and its settings.
#[pyclass(frozen)]
struct Method {
    inner: core_optim::Method,
}

#[pymethods]
impl Method {
    #[staticmethod]
    fn gd(lr: f64) -> Self {
        Self {
            inner: core_optim::Method::Gd { lr },
        }
    }

    #[staticmethod]
    #[pyo3(signature = (lr, batch = 32))]
    fn sgd(lr: f64, batch: usize) -> Self {
        Self {
            inner: core_optim::Method::Sgd { lr, batch },
        }
    }

    #[staticmethod]
    #[pyo3(signature = (line_search = true))]
    fn newton(line_search: bool) -> Self {
        Self {
            inner: core_optim::Method::NewtonExact { line_search },
        }
    }

    /// Sub-sampled Newton. `sketch` is a plan label, `srht` or
    /// `sparse:<nnz>`; `step` is `armijo`, `theorem` or `fixed:<mu>`.
    #[staticmethod]
    #[pyo3(signature = (m, sketch = "arlev", debias = "scalar", step = "armijo"))]
    fn ssn(m: usize, sketch: &str, debias: &str, step: &str) -> PyResult<Self> {
        Ok(Self {
            inner: core_optim::Method::Ssn(SsnConfig {
                sketch: parse::<SsnSketch>(sketch)?,
                m,
                debias: parse(debias)?,
                step: parse::<StepRule>(step)?,
                plan_params: PlanParams::default(),
            }),
        })
    }

    #[staticmethod]
    #[pyo3(signature = (m, nnz = 4, step = "armijo"))]
    fn newton_sparse_proj(m: usize, nnz: usize, step: &str) -> PyResult<Self> {
        Ok(Self {
            inner: core_optim::Method::NewtonSparseProj {
                m,
                nnz,
                step: parse(step)?,
            },
        })
    }

    fn describe(&self) -> BTreeMap<String, String> {
        self.inner.describe()
    }

    fn __repr__(&self) -> String {
        let parts: Vec<String> = self
            .inner
            .describe()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        format!("Method({})", parts.join(", "))
    }
}

/// Per-iteration solver records, one list per field.
#[pyclass(frozen, get_all)]
struct RunTrace {
    method: String,
    config: BTreeMap<String, String>,
    beta: Vec<f64>,
    reference_beta: Option<Vec<f64>>,
    t: Vec<usize>,
    rel_error_h: Vec<Option<f64>>,
    objective: Vec<f64>,
    grad_norm: Vec<f64>,
    step_size: Vec<f64>,
    wall_ns: Vec<u64>,
    mean_contraction: Option<f64>,
}

impl From<core_optim::RunTrace> for RunTrace {
    fn from(tr: core_optim::RunTrace) -> Self {
        let mean_contraction = tr.mean_contraction();
        let r = &tr.records;
        Self {
            t: r.iter().map(|x| x.t).collect(),
            rel_error_h: r.iter().map(|x| x.rel_error_h).collect(),
            objective: r.iter().map(|x| x.objective).collect(),
            grad_norm: r.iter().map(|x| x.grad_norm).collect(),
            step_size: r.iter().map(|x| x.step_size).collect(),
            wall_ns: r.iter().map(|x| x.wall_ns).collect(),
            reference_beta: tr.reference.as_ref().map(|x| x.beta.clone()),
            method: tr.method,
            config: tr.config,
            beta: tr.beta,
            mean_contraction,
        }
    }
}

/// Regularized logistic regression or least squares.
#[pyclass(frozen)]
struct GlmProblem {
    inner: core_optim::GlmProblem,
}

#[pymethods]
impl GlmProblem {
    /// `kind` is `logistic` (labels +-1) or `least_squares`.
    #[new]
    #[pyo3(signature = (a, y, lam, kind = "logistic"))]
    fn new(a: Vec<Vec<f64>>, y: Vec<f64>, lam: f64, kind: &str) -> PyResult<Self> {
        let kind: ProblemKind = parse(kind)?;
        Ok(Self {
            inner: core_optim::GlmProblem::new(mat(a)?, y, lam, kind).map_err(err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    /// `(F(beta), grad F(beta))`.
    fn objective(&self, beta: Vec<f64>) -> PyResult<(f64, Vec<f64>)> {
        let e = core_optim::objective_eval(&self.inner, &beta).map_err(err)?;
        Ok((e.value, e.gradient))
    }

    /// High-accuracy minimizer by damped Newton from `beta0` (default zero).
    #[pyo3(signature = (beta0 = None))]
    fn reference_solution(&self, beta0: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
        let beta0 = beta0.unwrap_or_else(|| vec![0.0; self.inner.d()]);
        Ok(core_optim::reference_solution(&self.inner, &beta0)
            .map_err(err)?
            .beta)
    }

    /// Runs `method` for `iters` iterations. With `reference` on, the
    /// trace carries H-norm errors relative to the reference solution.
    #[pyo3(signature = (method, iters, seed = 0, beta0 = None, timing = false, reference = true))]
    fn solve(
        &self,
        py: Python<'_>,
        method: &Method,
        iters: usize,
        seed: u64,
        beta0: Option<Vec<f64>>,
        timing: bool,
        reference: bool,
    ) -> PyResult<RunTrace> {
        let beta0 = beta0.unwrap_or_else(|| vec![0.0; self.inner.d()]);
        let opts = RunOptions {
            iters,
            seed,
            timing,
        };
        let p = &self.inner;
        let m = &method.inner;
        let trace = py
            .detach(|| {
                let r = if reference {
                    Some(core_optim::reference_solution(p, &vec![0.0; p.d()])?)
                } else {
                    None
                };
                core_optim::run_solver(p, m, &beta0, &opts, r.as_ref())
            })
            .map_err(err)?;
        Ok(trace.into())
    }
}

#[pymodule]
#[pyo3(name = "randskew")]
fn randskew_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("RandskewError", m.py().get_type::<RandskewError>())?;
    m.add_class::<SamplingPlan>()?;
    m.add_class::<SketchDraw>()?;
    m.add_class::<FixedPoint>()?;
    m.add_class::<BiasEstimate>()?;
    m.add_class::<Method>()?;
    m.add_class::<RunTrace>()?;
    m.add_class::<GlmProblem>()?;
    m.add_function(wrap_pyfunction!(leverage_scores, m)?)?;
    m.add_function(wrap_pyfunction!(effective_dimension, m)?)?;
    m.add_function(wrap_pyfunction!(approximate_leverage_scores, m)?)?;
    m.add_function(wrap_pyfunction!(psd_relative_error, m)?)?;
    m.add_function(wrap_pyfunction!(scalar_factor, m)?)?;
    m.add_function(wrap_pyfunction!(fwht, m)?)?;
    m.add_function(wrap_pyfunction!(srht_sketch, m)?)?;
    m.add_function(wrap_pyfunction!(counterexample_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(bias_sweep, m)?)?;
    Ok(())
}
