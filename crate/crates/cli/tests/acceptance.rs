//! Acceptance suite: one PASS/FAIL line per criterion, each with its own
//! runtime budget. Seeds are fixed in advance (criterion `k` uses seed `k`).
//!
//! Run with `cargo test -p randskew-cli --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde_json::Value;
use tempfile::TempDir;

use randskew::bias_lab::{estimate_bias, SketchScheme};
use randskew::datasets::{
    counterexample_matrix, gaussian, generate, labels, Distribution, LabelRule,
};
use randskew::debias::{apply_debias, solve_fixed_point_d, DebiasMode, DebiasSpec, FixedPointD};
use randskew::hadamard::{fwht_inplace, rotate, SrhtDraw};
use randskew::linalg::{gram, psd_relative_error, DenseMatrix, SymmetricPsd};
use randskew::optim::{
    objective_eval, reference_solution, run_solver, GlmProblem, Method, ProblemKind, RunOptions,
    SsnConfig, SsnSketch, StepRule,
};
use randskew::rng::derive_seed;
use randskew::sampling::{
    approximation_factors, build_plan, draw, embedding_distortion, embedding_sketch_size,
    exact_leverage_scores, PlanKind, PlanParams, SamplingPlan,
};
use randskew_cli::{run, Report};

type Check = Result<String, String>;

/// Number, name, runtime budget in seconds, check.
type Criterion = (u32, &'static str, u64, fn() -> Check);

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cli(args: &[&str]) -> Report {
    let mut full = vec!["randskew"];
    full.extend_from_slice(args);
    run(full, None).unwrap_or_else(|e| panic!("{args:?}: {e}"))
}

fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(text: &str, name: &str) -> Vec<String> {
    let (header, rows) = csv_rows(text);
    let j = header.iter().position(|h| h == name).unwrap();
    rows.into_iter().map(|mut r| r.swap_remove(j)).collect()
}

fn numbers(text: &str, name: &str) -> Vec<f64> {
    column(text, name)
        .iter()
        .map(|v| v.parse().unwrap())
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

fn exact_plan(a: &DenseMatrix, c: &SymmetricPsd) -> SamplingPlan {
    build_plan(PlanKind::ExactLeverage, a, c, &PlanParams::default()).unwrap()
}

fn coherent(n: usize, d: usize, seed: u64) -> DenseMatrix {
    generate(n, d, Distribution::Coherent { heavy_rows: 4 }, seed)
}

fn c1_counterexample_scores() -> Check {
    let r = cli(&[
        "lev",
        "--seed",
        "1",
        "data=counterexample",
        "d=4",
        "lambda=0",
    ]);
    let got = numbers(&r.table, "score_exact");
    let want = [0.25, 0.75, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5];
    let err = got
        .iter()
        .zip(want)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    ensure(
        got.len() == want.len() && err <= 1e-12,
        format!("max |l - l_true| = {err:.1e}"),
    )
}

fn c2_uniform_factors() -> Check {
    let r = cli(&[
        "lev",
        "--seed",
        "2",
        "--format",
        "json",
        "data=counterexample",
        "d=4",
        "lambda=0",
        "plans=uniform",
    ]);
    let v: Value = serde_json::from_str(&r.table).unwrap();
    let plan = &v["plans"][0];
    let lo = plan["rho_min"].as_f64().unwrap();
    let hi = plan["rho_max"].as_f64().unwrap();
    ensure(
        (lo - 0.5).abs() <= 1e-12 && (hi - 1.5).abs() <= 1e-12,
        format!("(rho_min, rho_max) = ({lo}, {hi})"),
    )
}

fn c3_inverse_wishart() -> Check {
    let (d, m) = (3, 30);
    let a = DenseMatrix::identity(d);
    let est = estimate_bias(
        &a,
        &SymmetricPsd::zeros(d),
        &SketchScheme::Gaussian,
        &DebiasSpec::None,
        m,
        100_000,
        3,
    )
    .unwrap();
    let target = m as f64 / (m - d - 1) as f64;
    let mut worst = 0.0_f64;
    for i in 0..d {
        for j in 0..d {
            let want = if i == j { target } else { 0.0 };
            worst = worst.max((est.mean_inverse.get(i, j) - want).abs() / target);
        }
    }
    ensure(
        worst < 0.01,
        format!("max entrywise error = {:.3}% of 30/26", 100.0 * worst),
    )
}

/// Block of each row of the counterexample: rows 0, 1 span e_0 and rows
/// 2j, 2j+1 span e_j.
fn block_of(row: usize) -> usize {
    row / 2
}

fn c4_zero_bias_counterexample() -> Check {
    let (d, m, trials) = (4, 16, 1_000_000_u64);
    let a = counterexample_matrix(d);
    let c = SymmetricPsd::zeros(d);
    let plan = exact_plan(&a, &c);
    // Stage 1: E[1/b_j | every block sampled] from independent draws.
    let stage1 = derive_seed(4, 1);
    let (sum, kept) = (0..trials)
        .into_par_iter()
        .map(|t| {
            let dr = draw(&plan, m, derive_seed(stage1, t)).unwrap();
            let mut b = vec![0u32; d];
            for &i in dr.indices() {
                b[block_of(i)] += 1;
            }
            if b.iter().all(|&x| x > 0) {
                (b.iter().map(|&x| 1.0 / x as f64).sum::<f64>(), 1u64)
            } else {
                (0.0, 0)
            }
        })
        .reduce(|| (0.0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
    let inv_b = sum / (kept * d as u64) as f64;
    let gamma = m as f64 / d as f64 * inv_b;
    // Stage 2: the gamma-scaled inverse over fresh draws; singular trials are
    // exactly those outside the conditioning event and are discarded.
    let est = estimate_bias(
        &a,
        &c,
        &SketchScheme::Sampling(plan),
        &DebiasSpec::Scalar { factor: gamma },
        m,
        trials as usize,
        derive_seed(4, 2),
    )
    .unwrap();
    let err = psd_relative_error(&est.mean_inverse, &SymmetricPsd::identity(d)).unwrap();
    ensure(
        err < 0.01,
        format!(
            "gamma = {gamma:.5}, discarded {} of {}, rel error = {err:.2e}",
            est.discarded, est.trials
        ),
    )
}

fn range_holds(sol: &FixedPointD) -> bool {
    sol.bounds_apply && sol.within_bounds(1e-12)
}

fn c5_fixed_point() -> Check {
    let mut notes = Vec::new();
    let mut ok = true;
    // (a) closed form on the identity.
    let d = 8;
    let a = DenseMatrix::identity(d);
    let c = SymmetricPsd::zeros(d);
    let uniform = build_plan(PlanKind::Uniform, &a, &c, &PlanParams::default()).unwrap();
    let mut worst = 0.0_f64;
    let mut ranges = true;
    for mult in [3, 5, 20] {
        let m = mult * d;
        let sol = solve_fixed_point_d(&a, &c, &uniform, m, 1e-14, 1000).unwrap();
        let want = (m - d) as f64 / m as f64;
        worst = sol
            .diag
            .iter()
            .map(|v| (v - want).abs())
            .fold(worst, f64::max);
        ranges &= range_holds(&sol);
    }
    ok &= worst <= 1e-10;
    notes.push(format!("(a) max |D - (m-d)/m| = {worst:.1e}"));
    // (b) implied inverse against the Monte-Carlo mean on the counterexample.
    let d = 4;
    let m = 20 * d;
    let a = counterexample_matrix(d);
    let c = SymmetricPsd::zeros(d);
    let plan = exact_plan(&a, &c);
    let sol = solve_fixed_point_d(&a, &c, &plan, m, 1e-13, 1000).unwrap();
    ranges &= range_holds(&sol);
    let implied = sol.implied_inverse(&a, &c).unwrap();
    let est = estimate_bias(
        &a,
        &c,
        &SketchScheme::Sampling(plan),
        &DebiasSpec::None,
        m,
        500_000,
        5,
    )
    .unwrap();
    let err = psd_relative_error(&est.mean_inverse, &implied).unwrap();
    ok &= err < 0.02;
    notes.push(format!("(b) rel error = {err:.2e}"));
    // (c) the range bound on every solve above.
    ok &= ranges;
    notes.push(format!("(c) range bound held on all solves: {ranges}"));
    ensure(ok, notes.join("; "))
}

fn c6_debias_efficacy() -> Check {
    let r = cli(&[
        "bias",
        "--seed",
        "6",
        "n=1024",
        "d=32",
        "distribution=coherent",
        "lambda=1e-2",
        "schemes=rlev",
        "debias=none,scalar",
        "m_mult=4,8,16,32",
        "trials=500",
    ]);
    let modes = column(&r.table, "debias");
    let ms = numbers(&r.table, "m");
    let bias = numbers(&r.table, "bias");
    let series = |mode: &str| -> Vec<(f64, f64)> {
        let mut s: Vec<(f64, f64)> = modes
            .iter()
            .zip(ms.iter().zip(&bias))
            .filter(|(md, _)| md.as_str() == mode)
            .map(|(_, (&m, &b))| (m, b))
            .collect();
        s.sort_by(|x, y| x.0.total_cmp(&y.0));
        s
    };
    let (none, scalar) = (series("none"), series("scalar"));
    let below = none.len() == 4
        && scalar.len() == 4
        && none
            .iter()
            .zip(&scalar)
            .all(|(n, s)| n.0 == s.0 && s.1 < n.1);
    let decreasing = |s: &[(f64, f64)]| s.windows(2).all(|w| w[1].1 < w[0].1);
    let fmt = |s: &[(f64, f64)]| {
        s.iter()
            .map(|(_, b)| format!("{b:.3e}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    ensure(
        below && decreasing(&none) && decreasing(&scalar),
        format!("none: {} | scalar: {}", fmt(&none), fmt(&scalar)),
    )
}

fn c7_scalar_fine_coincidence() -> Check {
    let cases = [
        (counterexample_matrix(4), SymmetricPsd::zeros(4)),
        (gaussian(512, 8, 7), SymmetricPsd::scaled_identity(8, 0.1)),
        (coherent(512, 8, 7), SymmetricPsd::scaled_identity(8, 1e-2)),
        (
            generate(512, 8, Distribution::Spiked { decay: 0.7 }, 7),
            SymmetricPsd::scaled_identity(8, 1e-3),
        ),
    ];
    let mut compared = 0;
    for (a, c) in &cases {
        let exact = exact_leverage_scores(a, c).unwrap();
        let plan = exact_plan(a, c);
        for mult in [3.0, 8.0, 32.0] {
            let m = (mult * plan.d_eff()).ceil() as usize;
            let scalar = DebiasSpec::scalar(m, plan.d_eff()).unwrap();
            let fine = DebiasSpec::fine_grained(&plan, &exact, m).unwrap();
            for t in 0..20 {
                let dr = draw(&plan, m, derive_seed(7, t)).unwrap();
                let x = apply_debias(&dr, &scalar).unwrap();
                let y = apply_debias(&dr, &fine).unwrap();
                for (u, v) in x.weights().iter().zip(y.weights()) {
                    if u.to_bits() != v.to_bits() {
                        return Err(format!("weights differ: {u:e} vs {v:e} at m = {m}"));
                    }
                    compared += 1;
                }
            }
        }
    }
    Ok(format!("{compared} weights compared, all bitwise equal"))
}

fn c8_subspace_embedding() -> Check {
    let cases = [
        (
            "gaussian",
            gaussian(256, 6, 8),
            SymmetricPsd::scaled_identity(6, 0.1),
        ),
        (
            "coherent",
            generate(256, 6, Distribution::Coherent { heavy_rows: 3 }, 8),
            SymmetricPsd::scaled_identity(6, 1e-2),
        ),
        (
            "counterexample",
            counterexample_matrix(4),
            SymmetricPsd::zeros(4),
        ),
    ];
    let mut worst = 0.0_f64;
    let mut notes = Vec::new();
    for (name, a, c) in &cases {
        let exact = exact_leverage_scores(a, c).unwrap();
        for kind in [
            PlanKind::ExactLeverage,
            PlanKind::Uniform,
            PlanKind::RowNorm,
        ] {
            let plan = build_plan(kind, a, c, &PlanParams::default()).unwrap();
            let rho = approximation_factors(&plan, &exact).unwrap().rho_max;
            let m = embedding_sketch_size(rho, plan.d_eff(), 0.5, 0.1);
            let failures = (0..200u64)
                .into_par_iter()
                .filter(|&t| {
                    let dr = draw(&plan, m, derive_seed(8, t)).unwrap();
                    embedding_distortion(&dr, a).unwrap() > 0.5
                })
                .count();
            let rate = failures as f64 / 200.0;
            worst = worst.max(rate);
            notes.push(format!("{name}/{}: {rate}", kind.label()));
        }
    }
    ensure(worst <= 0.1, format!("failure rates {}", notes.join(", ")))
}

fn c9_ssn_rate() -> Check {
    let (n, d, lambda) = (4096, 32, 1e-2);
    let a = gaussian(n, d, 9);
    let y = labels(&a, LabelRule::Linear { noise: 0.5 }, derive_seed(9, 1));
    let p = GlmProblem::new(a, y, lambda, ProblemKind::LeastSquares).unwrap();
    let beta0 = vec![0.0; d];
    let r = reference_solution(&p, &beta0).unwrap();
    let rows = objective_eval(&p, &beta0).unwrap().hessian_sqrt.rows;
    let d_eff: f64 = exact_leverage_scores(&rows, &p.regularizer())
        .unwrap()
        .iter()
        .sum();
    let m = (32.0 * d_eff).ceil() as usize;
    let contraction = |debias: DebiasMode| -> f64 {
        let method = Method::Ssn(SsnConfig {
            sketch: SsnSketch::Plan(PlanKind::ExactLeverage),
            m,
            debias,
            step: StepRule::Theorem,
            plan_params: PlanParams::default(),
        });
        let rates: Vec<f64> = (0..20u64)
            .into_par_iter()
            .map(|s| {
                let opts = RunOptions {
                    iters: 5,
                    seed: derive_seed(9, 100 + s),
                    timing: false,
                };
                run_solver(&p, &method, &beta0, &opts, Some(&r))
                    .unwrap()
                    .mean_contraction()
                    .unwrap()
            })
            .collect();
        median(rates)
    };
    let debiased = contraction(DebiasMode::Scalar);
    let raw = contraction(DebiasMode::None);
    let bound = 2.0 * d_eff / m as f64;
    ensure(
        debiased <= bound && debiased < raw,
        format!("d_eff = {d_eff:.3}, m = {m}, median contraction {debiased:.4e} (bound {bound:.4e}), undebiased {raw:.4e}"),
    )
}

fn c10_hadamard() -> Check {
    let mut notes = Vec::new();
    // Double transform of every unit vector.
    let mut exact = true;
    let mut n = 1;
    while n <= 1024 {
        for i in 0..n {
            let mut v = vec![0.0; n];
            v[i] = 1.0;
            fwht_inplace(&mut v).unwrap();
            fwht_inplace(&mut v).unwrap();
            exact &= v
                .iter()
                .enumerate()
                .all(|(k, &x)| x == if k == i { n as f64 } else { 0.0 });
        }
        n *= 2;
    }
    notes.push(format!("double FWHT exact for n <= 1024: {exact}"));
    // Gram invariance of the randomized rotation.
    let a = gaussian(1000, 12, 10);
    let signs = SrhtDraw::new(a.rows(), 1, 10).unwrap().signs().to_vec();
    let g = gram(&a);
    let gr = gram(&rotate(&signs, &a).unwrap());
    let scale = g.data().iter().fold(0.0_f64, |s, x| s.max(x.abs()));
    let drift = g
        .data()
        .iter()
        .zip(gr.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
        / scale;
    notes.push(format!("gram drift {drift:.1e}"));
    // SRHT correction on the coherent matrix.
    let a = coherent(1024, 32, 10);
    let c = SymmetricPsd::scaled_identity(32, 1e-2);
    let d_eff: f64 = exact_leverage_scores(&a, &c).unwrap().iter().sum();
    let m = (16.0 * d_eff).ceil() as usize;
    let raw = estimate_bias(
        &a,
        &c,
        &SketchScheme::Srht,
        &DebiasSpec::None,
        m,
        500,
        derive_seed(10, 1),
    )
    .unwrap();
    let spec = DebiasSpec::scalar(m, d_eff).unwrap();
    let fixed = estimate_bias(
        &a,
        &c,
        &SketchScheme::Srht,
        &spec,
        m,
        500,
        derive_seed(10, 1),
    )
    .unwrap();
    notes.push(format!(
        "SRHT bias scalar {:.3e} vs none {:.3e}",
        fixed.bias, raw.bias
    ));
    ensure(
        exact && drift < 1e-10 && fixed.bias < raw.bias,
        notes.join("; "),
    )
}

fn outputs(path: &Path) -> (Vec<u8>, Vec<u8>) {
    let mut meta = path.as_os_str().to_owned();
    meta.push(".meta.json");
    (std::fs::read(path).unwrap(), std::fs::read(meta).unwrap())
}

fn c11_determinism() -> Check {
    let dir = TempDir::new().unwrap();
    let commands: [&[&str]; 5] = [
        &[
            "lev",
            "n=300",
            "d=6",
            "distribution=coherent",
            "lambda=1e-2",
            "approx=on",
            "plans=rlev,uniform,arlev,darlev",
        ],
        &[
            "bias",
            "n=256",
            "d=6",
            "distribution=coherent",
            "lambda=1e-2",
            "schemes=rlev,uniform,arlev,srht",
            "debias=none,scalar",
            "m_mult=4,8",
            "trials=200",
        ],
        &[
            "solve",
            "problem=logistic",
            "n=512",
            "d=8",
            "lambda=1e-2",
            "method=ssn",
            "m=64",
            "iters=5",
            "timing=off",
        ],
        &[
            "solve",
            "problem=least_squares",
            "n=512",
            "d=8",
            "lambda=1e-2",
            "method=sgd",
            "lr=0.1",
            "iters=20",
            "timing=off",
        ],
        &[
            "sweep",
            "problem=logistic",
            "n=512",
            "d=8",
            "lambda=1e-2",
            "methods=ssn,newton_sparse_proj",
            "m_mult=4,8",
            "replicas=4",
            "iters=3",
            "timing=off",
        ],
    ];
    let serial = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    for (k, args) in commands.iter().enumerate() {
        let path = dir.path().join(format!("run{k}.csv"));
        let out = path.display().to_string();
        let mut full = vec![args[0], "--seed", "11", "--out", out.as_str()];
        full.extend_from_slice(&args[1..]);
        cli(&full);
        let first = outputs(&path);
        cli(&full);
        let second = outputs(&path);
        serial.install(|| cli(&full));
        let third = outputs(&path);
        if first != second || first != third {
            return Err(format!("`{}` output differs across reruns", args.join(" ")));
        }
    }
    Ok(format!(
        "{} runs, each reproduced twice (parallel and one-thread pools)",
        commands.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        (
            1,
            "counterexample leverage scores",
            1,
            c1_counterexample_scores,
        ),
        (2, "uniform approximation factors", 1, c2_uniform_factors),
        (3, "inverse-Wishart oracle", 30, c3_inverse_wishart),
        (
            4,
            "zero-bias counterexample",
            300,
            c4_zero_bias_counterexample,
        ),
        (5, "self-consistent D", 600, c5_fixed_point),
        (6, "scalar correction efficacy", 300, c6_debias_efficacy),
        (
            7,
            "scalar/fine-grained coincidence",
            1,
            c7_scalar_fine_coincidence,
        ),
        (8, "subspace embedding", 120, c8_subspace_embedding),
        (9, "corrected SSN rate", 120, c9_ssn_rate),
        (10, "FWHT and SRHT", 120, c10_hadamard),
        (11, "determinism", 60, c11_determinism),
    ];
    let mut failed = 0;
    for (id, name, budget, check) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let in_budget = elapsed <= Duration::from_secs(budget);
        let (pass, detail) = match result {
            Ok(d) => (in_budget, d),
            Err(d) => (false, d),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {}: {name} ({:.2}s of {budget}s) {detail}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
        );
    }
    println!("{} of 11 criteria passed", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
