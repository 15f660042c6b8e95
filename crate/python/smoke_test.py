"""Smoke test for the Python bindings.

Build and install first:  pip install --no-build-isolation ./crates/python
Then run:                  python python/smoke_test.py   (or pytest python/)
"""

import math

import numpy as np

import randskew as rs


def test_counterexample_scores_and_factors():
    a = rs.counterexample_matrix(4)
    scores = rs.leverage_scores(a)
    expected = [0.25, 0.75] + [0.5] * 6
    assert all(abs(x - y) < 1e-12 for x, y in zip(scores, expected))
    assert abs(rs.effective_dimension(a) - 4.0) < 1e-12
    rho_min, rho_max = rs.SamplingPlan("uniform", a).approximation_factors(a)
    assert abs(rho_min - 0.5) < 1e-12 and abs(rho_max - 1.5) < 1e-12


def test_exact_leverage_corrections_coincide():
    a = rs.synthetic_matrix(256, 6, "coherent", seed=1)
    plan = rs.SamplingPlan("rlev", a, lam=1e-2)
    m = 60
    draw = plan.draw(m, seed=3)
    scalar = draw.corrected("scalar", plan, a, lam=1e-2).weights
    fine = draw.corrected("fine", plan, a, lam=1e-2).weights
    assert scalar == fine
    factor = rs.scalar_factor(m, plan.d_eff)
    assert all(abs(w * w / (v * v) - factor) < 1e-12 for w, v in zip(scalar, draw.weights))


def test_fixed_point_closed_form():
    d, m = 5, 30
    eye = np.eye(d)
    sol = rs.SamplingPlan("uniform", eye).fixed_point(eye, m, tol=1e-13)
    assert max(abs(x - (m - d) / m) for x in sol.diag) < 1e-10
    assert sol.bounds_apply and sol.within_bounds(1e-12)


def test_bias_sweep_correction_helps():
    a = rs.synthetic_matrix(256, 6, "coherent", seed=2)
    rows = rs.bias_sweep(a, ["rlev"], ["none", "scalar"], [48], lam=1e-2, trials=200, seed=5)
    by_mode = {r.debias: r for r in rows}
    assert by_mode["scalar"].bias < by_mode["none"].bias
    assert len(by_mode["none"].mean_inverse) == 6


def test_hadamard():
    v = [1.0, 2.0, 3.0, 4.0]
    assert rs.fwht(rs.fwht(v)) == [4.0 * x for x in v]
    sk = rs.srht_sketch(rs.synthetic_matrix(100, 3, seed=4), 32, seed=1)
    assert len(sk) == 32 and len(sk[0]) == 3


def test_ssn_solves_logistic_regression():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((512, 8))
    y = np.where(a @ rng.standard_normal(8) + 0.3 * rng.standard_normal(512) > 0, 1.0, -1.0)
    p = rs.GlmProblem(a, y.tolist(), 1e-2, "logistic")
    trace = p.solve(rs.Method.ssn(m=80, sketch="rlev"), iters=12, seed=7)
    assert trace.rel_error_h[0] == 1.0
    assert trace.rel_error_h[-1] < 1e-8
    again = p.solve(rs.Method.ssn(m=80, sketch="rlev"), iters=12, seed=7)
    assert again.beta == trace.beta
    value, grad = p.objective(trace.beta)
    assert math.isfinite(value) and max(abs(g) for g in grad) < 1e-4


def test_errors_are_raised():
    try:
        rs.SamplingPlan("nope", np.eye(3))
    except rs.RandskewError as e:
        assert "nope" in str(e)
    else:
        raise AssertionError("unknown plan accepted")
    try:
        rs.scalar_factor(3, 4.0)
    except ValueError as e:
        assert "SketchTooSmall" in str(e)
    else:
        raise AssertionError("undersized sketch accepted")


if __name__ == "__main__":
    tests = [(k, f) for k, f in sorted(globals().items()) if k.startswith("test_")]
    for name, fn in tests:
        fn()
        print(f"ok  {name}")
    print(f"{len(tests)} smoke tests passed")
