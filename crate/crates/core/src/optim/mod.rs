//! Regularized GLM objectives and the solvers compared against each other:
//! exact Newton, sub-sampled Newton with any sketch and correction, gradient
//! descent, SGD, and Newton with a sparse sign projection.

mod newton;
mod objective;
mod ssn;
mod trace;

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;

pub use newton::{
    armijo_step, newton_direction, newton_exact, reference_solution, ARMIJO_C1,
    ARMIJO_MAX_HALVINGS, REFERENCE_GRAD_TOL,
};
pub use objective::{
    minibatch_gradient, objective_eval, objective_value, GlmProblem, HessianSqrt, ObjectiveEval,
    ProblemKind,
};
pub use ssn::{
    sparse_rademacher_sketch, ssn_step, ssn_step_with_draw, theorem_step_size, SsnConfig,
    SsnDiagnostics, SsnSketch, SsnStep, StepRule,
};
pub use trace::{IterRecord, Reference, RunTrace};

use crate::debias::DebiasMode;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};
use crate::sampling::PlanParams;
use trace::TraceBuilder;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Gd {
        lr: f64,
    },
    /// Minibatches drawn without replacement from a fresh permutation each epoch.
    Sgd {
        lr: f64,
        batch: usize,
    },
    NewtonExact {
        line_search: bool,
    },
    Ssn(SsnConfig),
    /// Newton with the data Hessian sketched by a sparse sign projection.
    NewtonSparseProj {
        m: usize,
        nnz: usize,
        step: StepRule,
    },
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Gd { .. } => "gd",
            Method::Sgd { .. } => "sgd",
            Method::NewtonExact { .. } => "newton",
            Method::Ssn(_) => "ssn",
            Method::NewtonSparseProj { .. } => "newton_sparse_proj",
        }
    }

    pub fn describe(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            out.insert(k.to_string(), v);
        };
        put("method", self.label().to_string());
        match self {
            Method::Gd { lr } => put("lr", lr.to_string()),
            Method::Sgd { lr, batch } => {
                put("lr", lr.to_string());
                put("batch", batch.to_string());
            }
            Method::NewtonExact { line_search } => put("line_search", line_search.to_string()),
            Method::Ssn(cfg) => {
                put("sketch", cfg.sketch.label().to_string());
                put("m", cfg.m.to_string());
                put("debias", cfg.debias.as_str().to_string());
                put("step", cfg.step.label());
            }
            Method::NewtonSparseProj { m, nnz, step } => {
                put("m", m.to_string());
                put("nnz", nnz.to_string());
                put("step", step.label());
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub iters: usize,
    pub seed: u64,
    /// Record wall-clock time per iteration; off gives reproducible traces.
    pub timing: bool,
}

/// Runs `method` for `opts.iters` iterations from `beta0`. Iteration `t`
/// of a randomized method draws from `derive_seed(seed, t)`.
pub fn run_solver(
    p: &GlmProblem,
    method: &Method,
    beta0: &[f64],
    opts: &RunOptions,
    reference: Option<&Reference>,
) -> Result<RunTrace> {
    if let Method::NewtonExact { line_search } = *method {
        let mut tr = newton_exact(p, beta0, opts.iters, line_search, reference, opts.timing)?;
        tr.config = method.describe();
        return Ok(tr);
    }
    let ssn_cfg = match *method {
        Method::Ssn(cfg) => Some(cfg),
        Method::NewtonSparseProj { m, nnz, step } => Some(SsnConfig {
            sketch: SsnSketch::SparseRademacher { nnz },
            m,
            debias: DebiasMode::None,
            step,
            plan_params: PlanParams::default(),
        }),
        _ => None,
    };
    if let Method::Sgd { batch, .. } = *method {
        if batch == 0 || batch > p.n() {
            return Err(Error::InvalidArgument(format!(
                "minibatch size {batch} outside 1..={}",
                p.n()
            )));
        }
    }

    let mut beta = beta0.to_vec();
    let mut eval = objective_eval(p, &beta)?;
    let mut trace = TraceBuilder::new(reference, beta0, opts.timing);
    trace.push(0, &beta, eval.value, &eval.gradient, 0.0, 0);
    let mut order: Vec<usize> = (0..p.n()).collect();
    let mut cursor = p.n();
    let mut epoch_rng = stream(opts.seed, u64::MAX);

    for t in 1..=opts.iters {
        let start = Instant::now();
        let step_seed = derive_seed(opts.seed, t as u64);
        let mu = match *method {
            Method::Gd { lr } => {
                beta = newton::step_to(&beta, &eval.gradient, lr);
                lr
            }
            Method::Sgd { lr, batch } => {
                if cursor + batch > p.n() {
                    order.shuffle(&mut epoch_rng);
                    cursor = 0;
                }
                let g = minibatch_gradient(p, &beta, &order[cursor..cursor + batch])?;
                cursor += batch;
                beta = newton::step_to(&beta, &g, lr);
                lr
            }
            _ => {
                let cfg = ssn_cfg.as_ref().expect("second-order method");
                let step = ssn_step(p, &beta, cfg, step_seed)?;
                beta = step.beta;
                step.diagnostics.step_size
            }
        };
        eval = objective_eval(p, &beta)?;
        let wall = start.elapsed().as_nanos() as u64;
        trace.push(t, &beta, eval.value, &eval.gradient, mu, wall);
    }
    Ok(RunTrace {
        method: method.label().into(),
        config: method.describe(),
        records: trace.records,
        beta,
        reference: reference.cloned(),
    })
}
