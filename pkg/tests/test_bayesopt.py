import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tabadv.bayesopt import (
    BayesOptError,
    acquisition,
    bayesopt_run,
    beta_schedule,
    gp_fit,
    gp_posterior,
    propose,
    simplex_check,
    write_trace_csv,
)


def test_gp_interpolates_single_observation():
    gp = gp_fit([[0.3, 0.7]], [2.5], noise=1e-10)
    mu, var = gp_posterior(gp, [[0.3, 0.7]])
    assert abs(mu[0] - 2.5) < 1e-6
    assert var[0] <= 1e-10 + 1e-8


def test_gp_variance_small_at_observations():
    rng = np.random.default_rng(0)
    X = rng.dirichlet(np.ones(3), size=12)
    g = rng.normal(size=12)
    gp = gp_fit(X, g)
    _, var = gp_posterior(gp, X)
    assert np.all(var <= gp.noise + 1e-6)


def test_gp_far_field_reverts_to_prior():
    gp = gp_fit([[1.0, 0.0], [0.0, 1.0]], [-1.0, 1.0])  # zero-mean unit-std data
    mu, var = gp_posterior(gp, [[50.0, -49.0]])
    assert abs(mu[0]) < 1e-9
    assert abs(var[0] - 1.0) < 1e-9


def test_gp_symmetric_observations_average():
    # equidistant observations with zero-mean values: kernel symmetry makes
    # the midpoint posterior exactly their average (shrinkage preserves 0)
    gp = gp_fit([[0.2, 0.8], [0.8, 0.2]], [-1.0, 1.0], noise=1e-8)
    mu, _ = gp_posterior(gp, [[0.5, 0.5]])
    assert abs(mu[0] - 0.0) < 1e-9
    # and for observations hugging the query point the average is recovered
    gp2 = gp_fit([[0.499, 0.501], [0.501, 0.499]], [1.0, 3.0], noise=1e-10)
    mu2, _ = gp_posterior(gp2, [[0.5, 0.5]])
    assert abs(mu2[0] - 2.0) < 1e-3


def test_gp_variance_never_negative():
    rng = np.random.default_rng(3)
    for n in (1, 5, 25, 50):
        X = rng.dirichlet(np.ones(4), size=n)
        g = rng.normal(size=n)
        gp = gp_fit(X, g)
        _, var = gp_posterior(gp, rng.dirichlet(np.ones(4), size=64))
        assert np.all(var >= 0.0)


def test_gp_duplicate_rows_need_jitter():
    X = [[0.5, 0.5], [0.5, 0.5]]
    gp = gp_fit(X, [1.0, 1.0], noise=0.0)  # zero jitter escalates internally
    assert gp.noise >= 1e-8
    mu, _ = gp_posterior(gp, [[0.5, 0.5]])
    assert abs(mu[0] - 1.0) < 1e-3


def test_gp_rejects_non_finite():
    with pytest.raises(BayesOptError):
        gp_fit([[0.5, 0.5]], [np.nan])


def test_beta_schedule_zero_case():
    assert beta_schedule(1, 1, math.pi**2 / 6) == pytest.approx(0.0, abs=1e-12)


def test_beta_schedule_validation():
    with pytest.raises(BayesOptError):
        beta_schedule(0, 1, 0.1)
    with pytest.raises(BayesOptError):
        beta_schedule(1, 0, 0.1)
    with pytest.raises(BayesOptError):
        beta_schedule(1, 1, 0.0)


def test_acquisition_analytic_cases():
    # kappa=0 collapses the bound to pure exploitation
    assert acquisition(np.array([1.2]), np.array([0.4]), "ucb", kappa=0.0)[0] == 1.2
    # improvement probability at mu == best with positive sigma is exactly half
    assert acquisition(np.array([1.0]), np.array([0.3]), "pi", best=1.0)[0] == 0.5
    # beta = 0 reduces the scheduled bound to the mean
    assert acquisition(np.array([0.7]), np.array([9.0]), "gpucb", beta=0.0)[0] == 0.7


def test_acquisition_zero_sigma_degenerates():
    out = acquisition(np.array([2.0, 0.5]), np.array([0.0, 0.0]), "pi", best=1.0)
    assert out[0] == 1.0 and out[1] == 0.0
    out = acquisition(np.array([2.0]), np.array([0.0]), "ucb", kappa=3.0)
    assert out[0] == 2.0


def test_propose_single_vertex_simplex():
    gp = gp_fit([[1.0]], [0.3])
    w = propose(gp, "gpucb", 1, np.random.default_rng(0))
    assert np.array_equal(w, [1.0])


def test_propose_candidates_contain_vertices_and_best():
    from tabadv.bayesopt import _candidate_set

    rng = np.random.default_rng(1)
    best = np.array([0.25, 0.25, 0.5])
    cands = _candidate_set(3, rng, 64, best_point=best)
    for v in np.eye(3):
        assert any(np.array_equal(c, v) for c in cands)
    assert any(np.array_equal(c, best) for c in cands)
    assert len(cands) == 64


def test_propose_deterministic_under_seed():
    gp = gp_fit([[0.2, 0.8], [0.6, 0.4]], [0.1, 0.9])
    a = propose(gp, "gpucb", 2, np.random.default_rng(5))
    b = propose(gp, "gpucb", 2, np.random.default_rng(5))
    assert np.array_equal(a, b)


def test_bayesopt_constant_objective_flat_curve():
    res = bayesopt_run(lambda w: 1.0, 3, budget=12, seed=0)
    assert res.g_best == 1.0
    assert all(p.best_so_far == 1.0 for p in res.trace)
    assert simplex_check(res.w_best)


def test_bayesopt_benchmark_quadratic():
    # dense grid oracle at resolution 0.01 pins the optimum at (0.3, 0.7)
    target = np.array([0.3, 0.7])
    grid = np.array([[a, 1.0 - a] for a in np.arange(0.0, 1.0 + 1e-12, 0.01)])
    oracle = grid[np.argmax([-np.sum((w - target) ** 2) for w in grid])]
    assert np.allclose(oracle, target, atol=1e-9)
    hits = 0
    for seed in range(20):
        res = bayesopt_run(lambda w: -float(np.sum((w - target) ** 2)), 2,
                           budget=30, seed=seed)
        hits += np.max(np.abs(res.w_best - oracle)) <= 0.05
    assert hits >= 19  # 95% of 20 seeds


def test_bayesopt_best_curve_nondecreasing():
    rng = np.random.default_rng(9)
    noisy = lambda w: float(np.sin(10 * w[0]) + w[1])
    res = bayesopt_run(noisy, 3, budget=25, seed=4)
    curve = [p.best_so_far for p in res.trace]
    assert all(b >= a for a, b in zip(curve, curve[1:]))
    assert res.evaluations == 25


def test_bayesopt_budget_respected():
    calls = []

    def obj(w):
        calls.append(1)
        return float(w[0])

    bayesopt_run(obj, 2, budget=9, seed=0)
    assert len(calls) == 9


def test_bayesopt_proposals_on_simplex():
    res = bayesopt_run(lambda w: float(w[0] - w[2]), 4, budget=20, seed=2)
    for p in res.trace:
        assert simplex_check(p.weights)


def test_bayesopt_rejects_non_finite_objective():
    with pytest.raises(BayesOptError, match="non-finite"):
        bayesopt_run(lambda w: float("nan"), 2, budget=5, seed=0)


def test_trace_csv_export(tmp_path):
    res = bayesopt_run(lambda w: float(w[0]), 2, budget=8, seed=1)
    path = tmp_path / "trace.csv"
    write_trace_csv(path, res, 2)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "iteration,w0,w1,objective,best_so_far,phase,acquisition"
    assert len(lines) == 9


@given(n=st.integers(2, 5), seed=st.integers(0, 1000))
@settings(max_examples=20, deadline=None)
def test_gp_properties_random_datasets(n, seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 50))
    X = rng.dirichlet(np.ones(n), size=k)
    g = np.sin(3.0 * X[:, 0]) - X[:, -1]  # smooth target over the simplex
    gp = gp_fit(X, g)
    mu, var = gp_posterior(gp, X)
    assert np.all(var >= 0)
    # a smooth target is near-interpolated at the observed points
    assert np.max(np.abs(mu - g)) < 0.05
