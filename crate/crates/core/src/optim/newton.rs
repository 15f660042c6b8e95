//! Exact Newton iterations and Armijo backtracking.

use std::collections::BTreeMap;
use std::time::Instant;

use crate::error::Result;
use crate::linalg::{cholesky, dot, norm, SymmetricPsd};

use super::objective::{objective_eval, objective_value, GlmProblem};
use super::trace::{Reference, RunTrace, TraceBuilder};

pub const ARMIJO_C1: f64 = 1e-4;
pub const ARMIJO_MAX_HALVINGS: usize = 40;
pub const REFERENCE_GRAD_TOL: f64 = 1e-12;
const REFERENCE_MAX_ITERS: usize = 200;

/// Largest `mu = 2^-k` (`k <= 40`) with
/// `F(beta - mu dir) <= F(beta) - c1 mu g^T dir`, or 0 if none qualifies.
/// The comparison allows a few ulps of `F` so that steps whose decrease is
/// below floating-point resolution are not rejected.
pub fn armijo_step(
    p: &GlmProblem,
    beta: &[f64],
    value: f64,
    gradient: &[f64],
    dir: &[f64],
) -> Result<f64> {
    let slope = dot(gradient, dir);
    let slack = 4.0 * f64::EPSILON * value.abs();
    let mut mu = 1.0;
    for _ in 0..=ARMIJO_MAX_HALVINGS {
        let trial: Vec<f64> = beta.iter().zip(dir).map(|(b, d)| b - mu * d).collect();
        if objective_value(p, &trial)? <= value - ARMIJO_C1 * mu * slope + slack {
            return Ok(mu);
        }
        mu *= 0.5;
    }
    Ok(0.0)
}

/// `H^{-1} g` for `H = A(beta)^T A(beta) + lambda I`.
pub fn newton_direction(hessian: &SymmetricPsd, gradient: &[f64]) -> Result<Vec<f64>> {
    Ok(cholesky(hessian)?.solve_vec(gradient))
}

pub(crate) fn step_to(beta: &[f64], dir: &[f64], mu: f64) -> Vec<f64> {
    beta.iter().zip(dir).map(|(b, d)| b - mu * d).collect()
}

/// Exact Newton for `iters` iterations, with unit steps or Armijo backtracking.
pub fn newton_exact(
    p: &GlmProblem,
    beta0: &[f64],
    iters: usize,
    line_search: bool,
    reference: Option<&Reference>,
    timing: bool,
) -> Result<RunTrace> {
    let mut beta = beta0.to_vec();
    let mut eval = objective_eval(p, &beta)?;
    let mut trace = TraceBuilder::new(reference, beta0, timing);
    trace.push(0, &beta, eval.value, &eval.gradient, 0.0, 0);
    for t in 1..=iters {
        let start = Instant::now();
        let h = eval.hessian_sqrt.hessian(p.lambda());
        let dir = newton_direction(&h, &eval.gradient)?;
        let mu = if line_search {
            armijo_step(p, &beta, eval.value, &eval.gradient, &dir)?
        } else {
            1.0
        };
        beta = step_to(&beta, &dir, mu);
        eval = objective_eval(p, &beta)?;
        let wall = start.elapsed().as_nanos() as u64;
        trace.push(t, &beta, eval.value, &eval.gradient, mu, wall);
    }
    let mut config = BTreeMap::new();
    config.insert("line_search".to_string(), line_search.to_string());
    Ok(RunTrace {
        method: "newton".into(),
        config,
        records: trace.records,
        beta,
        reference: reference.cloned(),
    })
}

/// Runs damped Newton from `beta0` until the gradient norm drops below
/// `1e-12` or stops improving.
pub fn reference_solution(p: &GlmProblem, beta0: &[f64]) -> Result<Reference> {
    let mut beta = beta0.to_vec();
    let mut eval = objective_eval(p, &beta)?;
    let mut grad_norm = norm(&eval.gradient);
    for _ in 0..REFERENCE_MAX_ITERS {
        if grad_norm < REFERENCE_GRAD_TOL {
            break;
        }
        let h = eval.hessian_sqrt.hessian(p.lambda());
        let dir = newton_direction(&h, &eval.gradient)?;
        let mu = armijo_step(p, &beta, eval.value, &eval.gradient, &dir)?;
        if mu == 0.0 {
            break;
        }
        let next = step_to(&beta, &dir, mu);
        let next_eval = objective_eval(p, &next)?;
        let next_norm = norm(&next_eval.gradient);
        if next_norm >= grad_norm && grad_norm < 1e-8 {
            break;
        }
        beta = next;
        eval = next_eval;
        grad_norm = next_norm;
    }
    if grad_norm >= REFERENCE_GRAD_TOL {
        log::warn!("reference solve stopped at gradient norm {grad_norm:e}");
    }
    Ok(Reference {
        hessian: eval.hessian_sqrt.hessian(p.lambda()),
        beta,
        grad_norm,
    })
}
