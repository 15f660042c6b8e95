//! The four experiment commands. Each reads every key it needs, rejects
//! unused keys, then computes a table and sidecar metadata.

use rayon::prelude::*;
use serde_json::{json, Map, Value};

use randskew::bias_lab::{bias_sweep, SweepScheme};
use randskew::debias::DebiasMode;
use randskew::linalg::SymmetricPsd;
use randskew::optim::{
    objective_eval, reference_solution, run_solver, GlmProblem, Method, ProblemKind, Reference,
    RunOptions, RunTrace, SsnConfig, SsnSketch, StepRule,
};
use randskew::rng::derive_seed;
use randskew::sampling::{
    approximation_factors, build_plan, effective_dimension, exact_leverage_scores,
    sjlt_approx_leverage, PlanKind, PlanParams, SjltConfig, DEFAULT_SJLT_SPARSITY,
};

use crate::config::Config;
use crate::data::{load_data, Dataset};
use crate::error::{CliError, CliResult};
use crate::output::{number, Cell, Table};

const DATA_TAG: u64 = 1;
const PLAN_TAG: u64 = 2;
const APPROX_TAG: u64 = 3;
const BIAS_TAG: u64 = 4;
const RUN_TAG: u64 = 5;

pub fn data_seed(seed: u64) -> u64 {
    derive_seed(seed, DATA_TAG)
}

/// Seed of solver replica `r`; `solve` runs replica 0.
pub fn replica_seed(seed: u64, r: usize) -> u64 {
    derive_seed(derive_seed(seed, RUN_TAG), r as u64)
}

/// A computed table with metadata for the sidecar (and the JSON table).
#[derive(Debug, Clone)]
pub struct Output {
    pub table: Table,
    pub meta: Map<String, Value>,
    /// Human-readable summary lines for stderr.
    pub notes: Vec<String>,
}

fn ridge(cfg: &mut Config, d: usize) -> CliResult<SymmetricPsd> {
    let lambda: f64 = cfg.required("lambda")?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(CliError::Config(format!(
            "`lambda` must be finite and >= 0, got {lambda}"
        )));
    }
    Ok(SymmetricPsd::scaled_identity(d, lambda))
}

fn sjlt_config(cfg: &mut Config) -> CliResult<SjltConfig> {
    Ok(SjltConfig {
        m1: cfg.optional("m1")?,
        m2: cfg.optional("m2")?,
        sparsity: cfg.or("sparsity", DEFAULT_SJLT_SPARSITY)?,
    })
}

fn floats(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| number(x)).collect())
}

/// Exact leverage scores, optional SJLT estimates, and approximation
/// factors of each requested plan.
pub fn lev(cfg: &mut Config, seed: u64) -> CliResult<Output> {
    let Dataset { a, .. } = load_data(cfg, None, data_seed(seed))?;
    let c = ridge(cfg, a.cols())?;
    let approx = cfg.flag("approx", false)?;
    let sjlt = sjlt_config(cfg)?;
    let plans: Vec<PlanKind> = cfg.list("plans", "rlev,uniform")?;
    cfg.finish()?;

    let exact = exact_leverage_scores(&a, &c)?;
    let approx_scores = if approx {
        Some(sjlt_approx_leverage(
            &a,
            &c,
            sjlt.m1_for(a.cols()),
            None,
            sjlt.sparsity,
            derive_seed(seed, APPROX_TAG),
        )?)
    } else {
        None
    };
    let mut columns = vec!["index", "score_exact"];
    if approx {
        columns.push("score_approx");
    }
    let mut table = Table::new(columns);
    for (i, l) in exact.iter().enumerate() {
        let mut row = vec![Cell::Int(i as u64), Cell::Num(*l)];
        if let Some(s) = &approx_scores {
            row.push(Cell::Num(s[i]));
        }
        table.push(row);
    }

    let params = PlanParams {
        sjlt,
        seed: derive_seed(seed, PLAN_TAG),
        ..PlanParams::default()
    };
    let mut summary = Vec::new();
    let mut notes = vec![format!("d_eff = {}", effective_dimension(&exact))];
    for kind in plans {
        let plan = build_plan(kind, &a, &c, &params)?;
        let f = approximation_factors(&plan, &exact)?;
        notes.push(format!(
            "plan {}: d_eff = {}, rho_min = {}, rho_max = {}",
            kind.label(),
            plan.d_eff(),
            f.rho_min,
            f.rho_max
        ));
        summary.push(json!({
            "plan": kind.label(),
            "d_eff": number(plan.d_eff()),
            "rho_min": number(f.rho_min),
            "rho_max": number(f.rho_max),
        }));
    }
    let mut meta = Map::new();
    meta.insert("d_eff".into(), number(effective_dimension(&exact)));
    meta.insert("plans".into(), Value::Array(summary));
    Ok(Output { table, meta, notes })
}

fn sketch_grid(cfg: &mut Config, d_eff: f64) -> CliResult<Vec<usize>> {
    let grid: Vec<usize> = if cfg.contains("m") {
        cfg.list("m", "")?
    } else if cfg.contains("m_mult") {
        cfg.list::<f64>("m_mult", "")?
            .into_iter()
            .map(|k| (k * d_eff).ceil() as usize)
            .collect()
    } else {
        return Err(CliError::Config(
            "one of `m` or `m_mult` is required".into(),
        ));
    };
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Config(
            "sketch-size grid must be nonempty and ascending".into(),
        ));
    }
    Ok(grid)
}

/// Monte-Carlo inversion bias over schemes x debias modes x sketch sizes.
pub fn bias(cfg: &mut Config, seed: u64) -> CliResult<Output> {
    let Dataset { a, .. } = load_data(cfg, None, data_seed(seed))?;
    let c = ridge(cfg, a.cols())?;
    let schemes: Vec<SweepScheme> = cfg.list("schemes", "rlev")?;
    let modes: Vec<DebiasMode> = cfg.list("debias", "none,scalar")?;
    let trials: usize = cfg.or("trials", 500)?;
    let d_eff = effective_dimension(&exact_leverage_scores(&a, &c)?);
    let grid = sketch_grid(cfg, d_eff)?;
    cfg.finish()?;

    let rows = bias_sweep(
        &a,
        &c,
        &schemes,
        &modes,
        &grid,
        trials,
        derive_seed(seed, BIAS_TAG),
    )?;
    let mut table = Table::new(vec![
        "scheme",
        "debias",
        "m",
        "trials",
        "discarded",
        "bias",
        "stderr_proxy",
        "eps_relative",
    ]);
    for r in &rows {
        let e = &r.estimate;
        table.push(vec![
            Cell::Text(r.scheme.into()),
            Cell::Text(e.debias_mode.as_str().into()),
            Cell::Int(e.m as u64),
            Cell::Int(e.trials as u64),
            Cell::Int(e.discarded as u64),
            Cell::Num(e.bias),
            Cell::Num(e.stderr_proxy),
            Cell::Num(e.eps_relative),
        ]);
    }
    let mut meta = Map::new();
    meta.insert("d_eff".into(), number(d_eff));
    meta.insert("sketch_sizes".into(), json!(grid));
    Ok(Output {
        table,
        meta,
        notes: vec![format!("d_eff = {d_eff}")],
    })
}

fn parse_ssn_sketch(s: &str) -> CliResult<SsnSketch> {
    s.parse()
        .map_err(|e: randskew::Error| CliError::Config(e.to_string()))
}

/// Builds a solver from the config. `m` overrides the `m` key, and an
/// `ssn:<mode>` name overrides the `debias` key.
fn parse_method(cfg: &mut Config, name: &str, m: Option<usize>) -> CliResult<Method> {
    let (base, debias_override) = match name.split_once(':') {
        Some((b, mode)) => (b, Some(mode)),
        None => (name, None),
    };
    let sketch_size = |cfg: &mut Config| -> CliResult<usize> {
        match m {
            Some(m) => Ok(m),
            None => cfg.required("m"),
        }
    };
    let method = match base {
        "gd" => Method::Gd {
            lr: cfg.or("lr", 1.0)?,
        },
        "sgd" => Method::Sgd {
            lr: cfg.or("lr", 1.0)?,
            batch: cfg.or("batch", 32)?,
        },
        "newton" => Method::NewtonExact {
            line_search: cfg.flag("line_search", true)?,
        },
        "ssn" => {
            let sketch: String = cfg.or_parse("sketch", "arlev")?;
            let debias = match debias_override {
                Some(mode) => mode
                    .parse()
                    .map_err(|e: randskew::Error| CliError::Config(e.to_string()))?,
                None => cfg.or_parse("debias", "scalar")?,
            };
            let step: StepRule = cfg.or_parse("step", "armijo")?;
            Method::Ssn(SsnConfig {
                sketch: parse_ssn_sketch(&sketch)?,
                m: sketch_size(cfg)?,
                debias,
                step,
                plan_params: PlanParams {
                    sjlt: sjlt_config(cfg)?,
                    ..PlanParams::default()
                },
            })
        }
        "newton_sparse_proj" => Method::NewtonSparseProj {
            m: sketch_size(cfg)?,
            nnz: cfg.or("nnz", 4)?,
            step: cfg.or_parse("step", "armijo")?,
        },
        _ => return Err(CliError::Config(format!("unknown method `{name}`"))),
    };
    if debias_override.is_some() && base != "ssn" {
        return Err(CliError::Config(format!(
            "`{name}`: only ssn takes a debias suffix"
        )));
    }
    Ok(method)
}

fn problem(cfg: &mut Config, seed: u64) -> CliResult<GlmProblem> {
    let kind: ProblemKind = cfg.required("problem")?;
    let Dataset { a, y } = load_data(cfg, Some(kind), data_seed(seed))?;
    let lambda: f64 = cfg.required("lambda")?;
    Ok(GlmProblem::new(a, y, lambda, kind)?)
}

/// One solver run with its per-iteration trace.
pub fn solve(cfg: &mut Config, seed: u64) -> CliResult<Output> {
    let p = problem(cfg, seed)?;
    let name: String = cfg.or_parse("method", "ssn")?;
    let method = parse_method(cfg, &name, None)?;
    let iters: usize = cfg.or("iters", 10)?;
    let timing = cfg.flag("timing", true)?;
    let with_reference = cfg.flag("reference", true)?;
    cfg.finish()?;

    let zeros = vec![0.0; p.d()];
    let reference = if with_reference {
        Some(reference_solution(&p, &zeros)?)
    } else {
        None
    };
    let run_seed = replica_seed(seed, 0);
    let opts = RunOptions {
        iters,
        seed: run_seed,
        timing,
    };
    let trace = run_solver(&p, &method, &zeros, &opts, reference.as_ref())?;

    let mut table = Table::new(vec![
        "t",
        "rel_error_H",
        "grad_norm",
        "step_size",
        "wall_ns",
    ]);
    for r in &trace.records {
        table.push(vec![
            Cell::Int(r.t as u64),
            r.rel_error_h.map_or(Cell::Missing, Cell::Num),
            Cell::Num(r.grad_norm),
            Cell::Num(r.step_size),
            Cell::Int(r.wall_ns),
        ]);
    }
    let mut meta = Map::new();
    meta.insert("method".into(), json!(trace.config));
    meta.insert("beta_final".into(), floats(&trace.beta));
    meta.insert(
        "beta_star".into(),
        reference.as_ref().map_or(Value::Null, |r| floats(&r.beta)),
    );
    meta.insert(
        "reference_grad_norm".into(),
        reference
            .as_ref()
            .map_or(Value::Null, |r| number(r.grad_norm)),
    );
    meta.insert(
        "seeds".into(),
        json!({ "data": data_seed(seed), "run": run_seed }),
    );
    let notes = match trace.records.last() {
        Some(r) => vec![format!(
            "{} after {} iterations: rel_error_H = {:?}, grad_norm = {}",
            trace.method, r.t, r.rel_error_h, r.grad_norm
        )],
        None => Vec::new(),
    };
    Ok(Output { table, meta, notes })
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

fn d_eff_at(p: &GlmProblem, r: &Reference) -> CliResult<f64> {
    let e = objective_eval(p, &r.beta)?;
    Ok(effective_dimension(&exact_leverage_scores(
        &e.hessian_sqrt.rows,
        &p.regularizer(),
    )?))
}

/// Final error and wall time of each method across a sketch-size grid,
/// as medians over seed replicas.
pub fn sweep(cfg: &mut Config, seed: u64) -> CliResult<Output> {
    let p = problem(cfg, seed)?;
    let names: Vec<String> = cfg.list("methods", "ssn")?;
    let iters: usize = cfg.or("iters", 5)?;
    let replicas: usize = cfg.or("replicas", 5)?;
    let timing = cfg.flag("timing", true)?;
    if replicas == 0 {
        return Err(CliError::Config("`replicas` must be positive".into()));
    }
    let zeros = vec![0.0; p.d()];
    let reference = reference_solution(&p, &zeros)?;
    let d_eff = d_eff_at(&p, &reference)?;
    let grid = sketch_grid(cfg, d_eff)?;
    let mut cells = Vec::new();
    for name in &names {
        for &m in &grid {
            cells.push((name.clone(), m, parse_method(cfg, name, Some(m))?));
        }
    }
    cfg.finish()?;

    let mut table = Table::new(vec!["method", "m", "final_rel_error", "total_wall_ns"]);
    for (name, m, method) in cells {
        let traces: Vec<RunTrace> = (0..replicas)
            .into_par_iter()
            .map(|r| {
                let opts = RunOptions {
                    iters,
                    seed: replica_seed(seed, r),
                    timing,
                };
                run_solver(&p, &method, &zeros, &opts, Some(&reference))
            })
            .collect::<randskew::Result<_>>()?;
        let errors = traces
            .iter()
            .map(|t| {
                t.records
                    .last()
                    .and_then(|r| r.rel_error_h)
                    .unwrap_or(f64::NAN)
            })
            .collect();
        let walls = traces
            .iter()
            .map(|t| t.records.iter().map(|r| r.wall_ns).sum::<u64>() as f64)
            .collect();
        table.push(vec![
            Cell::Text(name),
            Cell::Int(m as u64),
            Cell::Num(median(errors)),
            Cell::Int(median(walls).round() as u64),
        ]);
    }
    let mut meta = Map::new();
    meta.insert("d_eff".into(), number(d_eff));
    meta.insert("beta_star".into(), floats(&reference.beta));
    meta.insert("sketch_sizes".into(), json!(grid));
    meta.insert(
        "seeds".into(),
        json!({
            "data": data_seed(seed),
            "replicas": (0..replicas).map(|r| replica_seed(seed, r)).collect::<Vec<_>>(),
        }),
    );
    Ok(Output {
        table,
        meta,
        notes: vec![format!("d_eff at the solution = {d_eff}")],
    })
}
