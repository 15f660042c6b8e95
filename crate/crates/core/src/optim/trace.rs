use std::collections::BTreeMap;

use crate::linalg::SymmetricPsd;

/// High-accuracy minimizer used to measure solver error.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub beta: Vec<f64>,
    pub grad_norm: f64,
    /// Hessian at `beta`, the fixed metric for relative errors.
    pub hessian: SymmetricPsd,
}

impl Reference {
    /// `||x - beta*||_H^2`.
    pub fn sq_error(&self, x: &[f64]) -> f64 {
        let diff: Vec<f64> = x.iter().zip(&self.beta).map(|(a, b)| a - b).collect();
        self.hessian.quadratic_form(&diff)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub t: usize,
    /// `||beta_t - beta*||_H^2 / ||beta_0 - beta*||_H^2`, when a reference is known.
    pub rel_error_h: Option<f64>,
    pub objective: f64,
    pub grad_norm: f64,
    pub step_size: f64,
    pub wall_ns: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub method: String,
    /// Flat description of the solver settings.
    pub config: BTreeMap<String, String>,
    pub records: Vec<IterRecord>,
    pub beta: Vec<f64>,
    pub reference: Option<Reference>,
}

impl RunTrace {
    /// Geometric mean of per-iteration contractions of the squared H-norm
    /// error over the recorded iterations.
    pub fn mean_contraction(&self) -> Option<f64> {
        let last = self.records.last()?;
        if last.t == 0 {
            return None;
        }
        Some(last.rel_error_h?.powf(1.0 / last.t as f64))
    }
}

/// Appends trace records while tracking the initial error.
pub(crate) struct TraceBuilder<'a> {
    reference: Option<&'a Reference>,
    initial: f64,
    timing: bool,
    pub(crate) records: Vec<IterRecord>,
}

impl<'a> TraceBuilder<'a> {
    pub(crate) fn new(reference: Option<&'a Reference>, beta0: &[f64], timing: bool) -> Self {
        Self {
            reference,
            initial: reference.map_or(0.0, |r| r.sq_error(beta0)),
            timing,
            records: Vec::new(),
        }
    }

    pub(crate) fn push(
        &mut self,
        t: usize,
        beta: &[f64],
        objective: f64,
        grad: &[f64],
        step_size: f64,
        wall_ns: u64,
    ) {
        let rel_error_h = self.reference.map(|r| {
            if t == 0 {
                1.0
            } else if self.initial > 0.0 {
                r.sq_error(beta) / self.initial
            } else {
                0.0
            }
        });
        self.records.push(IterRecord {
            t,
            rel_error_h,
            objective,
            grad_norm: crate::linalg::norm(grad),
            step_size,
            wall_ns: if self.timing { wall_ns } else { 0 },
        });
    }
}
