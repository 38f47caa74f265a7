"""Gaussian-process Bayesian optimization over weight simplices.

This is the shared search engine behind both adaptive attack weighting and
robust defense weighting: fit a GP surrogate to the observed (weights, score)
pairs, score a candidate set with an acquisition function, evaluate the
argmax, and repeat until the evaluation budget runs out.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

JITTER_START = 1e-8
JITTER_MAX = 1e-4


class BayesOptError(ValueError):
    pass


def simplex_check(w: np.ndarray, tol: float = 1e-9) -> bool:
    w = np.asarray(w, dtype=float)
    return bool(np.all(w >= -tol) and abs(w.sum() - 1.0) <= tol)


def _rbf(A: np.ndarray, B: np.ndarray, lengthscale: float, variance: float) -> np.ndarray:
    d2 = ((A[:, None, :] - B[None, :, :]) ** 2).sum(axis=2)
    return variance * np.exp(-0.5 * d2 / (lengthscale**2))


@dataclass
class GPState:
    X: np.ndarray
    g: np.ndarray
    lengthscale: float
    variance: float
    noise: float
    chol: np.ndarray
    alpha: np.ndarray  # (K + noise I)^-1 g


def gp_fit(X, g, lengthscale: float = 0.2, variance: float = 1.0,
           noise: float = JITTER_START) -> GPState:
    """Exact GP regression via Cholesky of K + noise*I.

    The jitter escalates by x10 (up to 1e-4) if factorization fails; beyond
    that the kernel matrix is reported as irreparably singular.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    g = np.asarray(g, dtype=float).ravel()
    if X.shape[0] != g.shape[0] or X.shape[0] < 1:
        raise BayesOptError(f"need matching observations, got {X.shape} vs {g.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(g))):
        raise BayesOptError("non-finite values in GP observations")
    K = _rbf(X, X, lengthscale, variance)
    lam = max(noise, 0.0)
    if lam == 0.0:
        lam = JITTER_START
    while True:
        try:
            L = np.linalg.cholesky(K + lam * np.eye(len(g)))
            break
        except np.linalg.LinAlgError:
            if lam >= JITTER_MAX:
                raise BayesOptError(
                    f"kernel matrix irreparably singular (jitter reached {lam:g})"
                ) from None
            lam = min(lam * 10.0, JITTER_MAX)
    alpha = np.linalg.solve(L.T, np.linalg.solve(L, g))
    return GPState(X=X, g=g, lengthscale=lengthscale, variance=variance,
                   noise=lam, chol=L, alpha=alpha)


def gp_posterior(gp: GPState, W) -> tuple[np.ndarray, np.ndarray]:
    """Predictive mean and variance (variance clamped at 0) at query points."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    Ks = _rbf(gp.X, W, gp.lengthscale, gp.variance)
    mu = Ks.T @ gp.alpha
    V = np.linalg.solve(gp.chol, Ks)
    var = gp.variance - (V * V).sum(axis=0)
    return mu, np.maximum(var, 0.0)


def beta_schedule(n_candidates: int, t: int, delta: float) -> float:
    """Confidence-scaling schedule 2 log(|D| t^2 pi^2 / (6 delta)).

    Confidence levels normally live in (0,1); any positive delta is accepted
    so the beta=0 analytic case (delta = pi^2/6 with one candidate) works.
    """
    if t < 1 or n_candidates < 1 or delta <= 0.0:
        raise BayesOptError(
            f"beta schedule needs t >= 1, |D| >= 1, delta > 0; "
            f"got t={t}, |D|={n_candidates}, delta={delta}"
        )
    return 2.0 * math.log(n_candidates * t * t * math.pi**2 / (6.0 * delta))


def _phi(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def acquisition(mu, sigma, mode: str, *, best: float = 0.0, kappa: float = 2.0,
                beta: float = 0.0):
    """Score posterior (mu, sigma) points for the next proposal.

    Modes: 'pi' (probability of improvement over `best`), 'ucb' (mu + kappa
    sigma), 'gpucb' (mu + sqrt(beta) sigma). Zero-sigma points degrade to
    exploitation: PI becomes an indicator(mu > best), the bounds become mu.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise BayesOptError("sigma must be nonnegative")
    if mode == "pi":
        out = np.where(mu > best, 1.0, 0.0)
        nz = sigma > 0
        z = np.divide(mu - best, sigma, out=np.zeros_like(mu), where=nz)
        out = np.where(nz, [_phi(v) for v in np.atleast_1d(z)], out)
        return out if out.shape else float(out)
    if mode == "ucb":
        return mu + kappa * sigma
    if mode == "gpucb":
        if beta < 0:
            raise BayesOptError("beta must be nonnegative")
        return mu + math.sqrt(beta) * sigma
    raise BayesOptError(f"unknown acquisition mode {mode!r} (pi, ucb, gpucb)")


def _candidate_set(n_dims: int, rng, n_candidates: int, best_point=None,
                   extra_points=()):
    """Dirichlet samples plus the simplex vertices, centroid, and best point."""
    fixed = [np.eye(n_dims)[i] for i in range(n_dims)]
    fixed.append(np.full(n_dims, 1.0 / n_dims))
    if best_point is not None:
        fixed.append(np.asarray(best_point, dtype=float))
    for p in extra_points:
        fixed.append(np.asarray(p, dtype=float))
    random_part = rng.dirichlet(np.ones(n_dims), size=max(n_candidates - len(fixed), 0))
    return np.vstack([np.array(fixed), random_part])


def propose(gp: GPState, mode: str, n_dims: int, rng, *, n_candidates: int = 1024,
            best_point=None, best_value: float = 0.0, t: int = 1,
            delta: float = 0.1, kappa: float = 2.0) -> np.ndarray:
    """Maximize the acquisition over sampled simplex candidates.

    The candidate set always contains every simplex vertex, the centroid, and
    the incumbent best point. Ties resolve to the lowest candidate index.
    """
    if n_dims == 1:
        return np.array([1.0])
    cands = _candidate_set(n_dims, rng, n_candidates, best_point=best_point)
    mu, var = gp_posterior(gp, cands)
    beta = beta_schedule(len(cands), t, delta) if mode == "gpucb" else 0.0
    scores = np.asarray(
        acquisition(mu, np.sqrt(var), mode, best=best_value, kappa=kappa, beta=beta)
    )
    return cands[int(np.argmax(scores))]


@dataclass
class TracePoint:
    iteration: int
    weights: np.ndarray
    value: float
    best_so_far: float
    phase: str  # "init" or "search"


@dataclass
class BayesOptResult:
    w_best: np.ndarray
    g_best: float
    trace: list[TracePoint] = field(default_factory=list)

    @property
    def evaluations(self) -> int:
        return len(self.trace)


def bayesopt_run(objective, n_dims: int, budget: int, mode: str = "gpucb",
                 seed: int = 0, n_init: int = 5, init_points=None,
                 lengthscale: float = 0.2, variance: float = 1.0,
                 delta: float = 0.1, kappa: float = 2.0,
                 n_candidates: int = 1024) -> BayesOptResult:
    """Search the weight simplex for the objective maximizer.

    Starts from `init_points` (if given) padded with random Dirichlet draws
    up to `n_init`, then loops fit-on-all-history -> propose -> evaluate ->
    augment until `budget` evaluations are spent. Observed values are
    z-scored before each fit; the returned best is the argmax over every
    evaluated point, so the best-so-far curve is nondecreasing.
    """
    if budget < 1:
        raise BayesOptError(f"budget must be at least 1, got {budget}")
    rng = np.random.default_rng(seed)
    seeds: list[np.ndarray] = []
    if init_points is not None:
        seeds = [np.asarray(p, dtype=float) for p in init_points]
    while len(seeds) < min(n_init, budget):
        seeds.append(rng.dirichlet(np.ones(n_dims)) if n_dims > 1 else np.array([1.0]))
    seeds = seeds[: min(max(len(seeds), n_init), budget)]

    X: list[np.ndarray] = []
    g: list[float] = []
    trace: list[TracePoint] = []

    def evaluate(w, phase):
        if not simplex_check(w):
            raise BayesOptError(f"proposed point off the simplex: {w}")
        value = float(objective(w))
        if not math.isfinite(value):
            raise BayesOptError(f"objective returned non-finite value at w={w}")
        X.append(np.asarray(w, dtype=float))
        g.append(value)
        best = max(g)
        trace.append(TracePoint(len(trace), np.asarray(w, float), value, best, phase))

    for w in seeds:
        evaluate(w, "init")
    t = 0
    while len(g) < budget:
        t += 1
        arr = np.array(g)
        std = float(arr.std())
        z = (arr - arr.mean()) / (std if std > 1e-12 else 1.0)
        gp = gp_fit(np.array(X), z, lengthscale=lengthscale, variance=variance)
        i_best = int(np.argmax(arr))
        w = propose(
            gp, mode, n_dims, rng, n_candidates=n_candidates,
            best_point=X[i_best], best_value=float(z[i_best]),
            t=t, delta=delta, kappa=kappa,
        )
        evaluate(w, "search")
    i_best = int(np.argmax(g))
    return BayesOptResult(w_best=X[i_best], g_best=g[i_best], trace=trace)


def trace_to_rows(result: BayesOptResult, mode: str = "gpucb"):
    """Flatten a run trace for CSV export."""
    rows = []
    for p in result.trace:
        rows.append(
            [p.iteration]
            + [f"{w:.10g}" for w in p.weights]
            + [f"{p.value:.10g}", f"{p.best_so_far:.10g}", p.phase, mode]
        )
    return rows


def write_trace_csv(path, result: BayesOptResult, n_dims: int, mode: str = "gpucb"):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["iteration"] + [f"w{i}" for i in range(n_dims)]
            + ["objective", "best_so_far", "phase", "acquisition"]
        )
        writer.writerows(trace_to_rows(result, mode))
