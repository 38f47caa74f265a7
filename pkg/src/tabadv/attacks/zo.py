"""Query-only attacks: coordinate, evolutionary, and decision-based search.

These attacks touch the model exclusively through probability queries, so
they apply to every model kind. Gradient estimators are exposed as plain
functions so their statistical calibration can be checked directly against
analytic expectations.
"""

from __future__ import annotations

import numpy as np

from ..constraints import ConstraintSchema
from ..models.base import QueryCounter
from .base import (
    AttackParams,
    AttackResult,
    finish,
    hinge_objective,
    legalize,
    perturbation_norms,
)


# ---------------------------------------------------------------------------
# gradient estimators (statistically calibrated building blocks)
# ---------------------------------------------------------------------------

def coordinate_gradient(fn, x, indices, h):
    """Symmetric difference quotient per coordinate: exact on quadratics."""
    g = np.zeros(len(indices))
    for k, i in enumerate(indices):
        e = np.zeros_like(x)
        e[i] = h
        g[k] = (fn(x + e) - fn(x - e)) / (2.0 * h)
    return g


def antithetic_population(n_pairs, dim, rng, active=None):
    """Gaussian population where entry j mirrors entry n-1-j exactly."""
    half = rng.standard_normal((n_pairs, dim))
    if active is not None:
        keep = np.zeros(dim)
        keep[active] = 1.0
        half = half * keep
    return np.vstack([half, -half[::-1]])


def antithetic_gaussian_estimate(fn, x, sigma, population, rng, active=None):
    """Evolutionary gradient estimate with antithetic pairing.

    Averages direction * value / (sigma * population) over a mirrored
    Gaussian population. Accumulation is grouped per antithetic pair, so an
    even objective cancels exactly; for a linear objective the per-pair
    contribution is (a . d) d.
    """
    n = population if population % 2 == 0 else population + 1
    pop = antithetic_population(n // 2, len(x), rng, active=active)
    values = np.array([fn(x + sigma * d) for d in pop])
    g = np.zeros_like(x)
    for i in range(n // 2):
        g += pop[i] * (values[i] - values[n - 1 - i])
    return g / (sigma * n)


def sphere_forward_estimate(fn, x, sigma, samples, rng, f0=None, active=None):
    """Forward-difference estimate over uniform unit-sphere directions.

    Averages u * (fn(x + sigma u) - fn(x)) / (sigma * samples); for a linear
    objective with slope a the expectation is a/d.
    """
    if f0 is None:
        f0 = fn(x)
    g = np.zeros_like(x)
    for _ in range(samples):
        u = rng.standard_normal(len(x))
        if active is not None:
            keep = np.zeros(len(x))
            keep[active] = 1.0
            u = u * keep
        norm = np.linalg.norm(u)
        if norm < 1e-12:
            continue
        u = u / norm
        g += u * (fn(x + sigma * u) - f0)
    return g / (sigma * samples)


# ---------------------------------------------------------------------------
# attacks
# ---------------------------------------------------------------------------

def _already_done(counted, x, y):
    return counted.predict(x) != int(y)


def zoo(model, x, y, params: AttackParams, schema: ConstraintSchema, seed: int = 0):
    """Coordinate-descent on the hinge objective via symmetric differences.

    Random mini-batches of perturbable coordinates are probed per iteration;
    frozen coordinates are never queried. Stops when the hinge value reaches
    its floor (confidently evasive) or the query budget runs out.
    """
    counted = QueryCounter(model)
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=float)
    if _already_done(counted, x, y):
        return finish(counted, schema, x, x, y, params, iterations=0)
    perturbable = schema.perturbable_indices()
    kappa = params.confidence
    h = params.coord_step
    alpha = params.alpha
    x_t = x.copy()
    iterations = 0
    flags: tuple[str, ...] = ()
    if perturbable.size == 0:
        return finish(counted, schema, x, x_t, y, params, iterations=0,
                      flags=("no-perturbable-coordinates",))
    obj = lambda z: hinge_objective(counted, z, y, kappa)
    limit = params.query_budget - 1  # reserve the final success check
    for _ in range(params.max_iter):
        if counted.count + 1 > limit:
            flags = ("budget-exhausted",)
            break
        if obj(x_t) <= -kappa:
            break
        batch = rng.choice(
            perturbable, size=min(params.coord_batch, perturbable.size), replace=False
        )
        if counted.count + 2 * len(batch) > limit:
            flags = ("budget-exhausted",)
            break
        g = coordinate_gradient(obj, x_t, batch, h)
        step = np.zeros_like(x_t)
        step[batch] = alpha * g
        iterations += 1
        x_t = legalize(schema, x, x_t - step, params)
    return finish(counted, schema, x, x_t, y, params, iterations=iterations, flags=flags)


def nes(model, x, y, params: AttackParams, schema: ConstraintSchema, seed: int = 0):
    """Evolutionary-estimator descent with antithetic sampling."""
    counted = QueryCounter(model)
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=float)
    if _already_done(counted, x, y):
        return finish(counted, schema, x, x, y, params, iterations=0)
    perturbable = schema.perturbable_indices()
    obj = lambda z: hinge_objective(counted, z, y, params.confidence)
    x_t = x.copy()
    iterations = 0
    flags: tuple[str, ...] = ()
    pop = params.population + (params.population % 2)
    limit = params.query_budget - 1  # reserve the final success check
    for _ in range(params.max_iter):
        if counted.count + pop + 1 > limit:
            flags = ("budget-exhausted",)
            break
        g = antithetic_gaussian_estimate(obj, x_t, params.sigma, pop, rng, active=perturbable)
        direction = np.sign(g) if params.use_sign else g
        iterations += 1
        x_t = legalize(schema, x, x_t - params.alpha * direction, params)
        if counted.predict(x_t) != int(y):
            break
    return finish(counted, schema, x, x_t, y, params, iterations=iterations, flags=flags)


def zosgd(model, x, y, params: AttackParams, schema: ConstraintSchema, seed: int = 0):
    """Stochastic descent on the forward-difference sphere estimator."""
    counted = QueryCounter(model)
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=float)
    if _already_done(counted, x, y):
        return finish(counted, schema, x, x, y, params, iterations=0)
    perturbable = schema.perturbable_indices()
    obj = lambda z: hinge_objective(counted, z, y, params.confidence)
    x_t = x.copy()
    iterations = 0
    flags: tuple[str, ...] = ()
    limit = params.query_budget - 1  # reserve the final success check
    for _ in range(params.max_iter):
        if counted.count + params.samples + 2 > limit:
            flags = ("budget-exhausted",)
            break
        g = sphere_forward_estimate(
            obj, x_t, params.sigma, params.samples, rng, active=perturbable
        )
        iterations += 1
        x_t = legalize(schema, x, x_t - params.alpha * g, params)
        if counted.predict(x_t) != int(y):
            break
    return finish(counted, schema, x, x_t, y, params, iterations=iterations, flags=flags)


def zoadamm(model, x, y, params: AttackParams, schema: ConstraintSchema, seed: int = 0):
    """Adaptive-momentum descent fed by the sphere forward-difference estimator.

    First and second moment accumulators follow the usual exponential decay;
    the second-moment normalizer is the running elementwise maximum, so per
    coordinate it never decreases.
    """
    counted = QueryCounter(model)
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=float)
    if _already_done(counted, x, y):
        return finish(counted, schema, x, x, y, params, iterations=0)
    perturbable = schema.perturbable_indices()
    obj = lambda z: hinge_objective(counted, z, y, params.confidence)
    x_t = x.copy()
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    v_hat = np.zeros_like(x)
    iterations = 0
    flags: tuple[str, ...] = ()
    limit = params.query_budget - 1  # reserve the final success check
    for _ in range(params.max_iter):
        if counted.count + params.samples + 2 > limit:
            flags = ("budget-exhausted",)
            break
        g = sphere_forward_estimate(
            obj, x_t, params.sigma, params.samples, rng, active=perturbable
        )
        m = params.beta1 * m + (1.0 - params.beta1) * g
        v = params.beta2 * v + (1.0 - params.beta2) * g * g
        v_hat = np.maximum(v_hat, v)
        step = params.alpha * m / np.sqrt(v_hat + params.adam_eps)
        iterations += 1
        x_t = legalize(schema, x, x_t - step, params)
        if counted.predict(x_t) != int(y):
            break
    return finish(counted, schema, x, x_t, y, params, iterations=iterations, flags=flags)


def _find_adversarial_start(counted, schema, x, y, rng, trials, limit):
    """Uniform box draws until one is misclassified after remap."""
    for _ in range(trials):
        if counted.count + 1 > limit:
            return None
        cand = rng.uniform(schema.lo, schema.hi)
        cand = schema.remap(x, cand)
        if counted.predict(cand) != int(y):
            return cand
    return None


def boundary_attack(model, x, y, params: AttackParams, schema: ConstraintSchema,
                    seed: int = 0, init_point=None):
    """Decision-boundary random walk that shrinks the distance to the source.

    Each trial proposes an orthogonal on-sphere perturbation followed by a
    contraction toward the source; the candidate is accepted only if it stays
    adversarial after remapping and does not increase the distance. Step
    scales adapt by x1.5 toward 50% orthogonal / 25% source acceptance.
    """
    counted = QueryCounter(model)
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=float)
    if _already_done(counted, x, y):
        return finish(counted, schema, x, x, y, params, iterations=0)
    perturbable = schema.perturbable_indices()
    limit = params.query_budget - 1  # reserve the final success check
    if init_point is not None:
        start = schema.remap(x, np.asarray(init_point, dtype=float))
        if counted.predict(start) == int(y):
            start = None
    else:
        start = None
    if start is None:
        start = _find_adversarial_start(counted, schema, x, y, rng, params.init_trials, limit)
    if start is None:
        return finish(counted, schema, x, x, y, params, iterations=0,
                      flags=("no-adversarial-init",))
    x_adv = start
    gamma_orth = 0.3
    gamma_src = 0.1
    orth_hits: list[bool] = []
    src_hits: list[bool] = []
    iterations = 0
    keep = np.zeros(len(x))
    keep[perturbable] = 1.0
    while iterations < params.max_iter and counted.count + 2 <= limit:
        iterations += 1
        to_src = x - x_adv
        dist = float(np.linalg.norm(to_src))
        if dist < 1e-9:
            break
        u = rng.standard_normal(len(x)) * keep
        v_hat = to_src / dist
        u -= np.dot(u, v_hat) * v_hat
        un = float(np.linalg.norm(u))
        if un < 1e-12:
            continue
        sphere = x_adv + gamma_orth * dist * u / un
        off = sphere - x
        off_norm = float(np.linalg.norm(off))
        if off_norm > 1e-12:
            sphere = x + off * (dist / off_norm)
        orth_ok = counted.predict(schema.remap(x, sphere)) != int(y)
        orth_hits.append(orth_ok)
        if orth_ok:
            cand = schema.remap(x, sphere + gamma_src * (x - sphere))
            src_ok = (
                counted.predict(cand) != int(y)
                and float(np.linalg.norm(cand - x)) <= dist + 1e-12
            )
            src_hits.append(src_ok)
            if src_ok:
                x_adv = cand
        if len(orth_hits) >= 20:
            rate = np.mean(orth_hits)
            gamma_orth = min(gamma_orth * 1.5, 2.0) if rate > 0.5 else gamma_orth / 1.5
            orth_hits.clear()
        if len(src_hits) >= 20:
            rate = np.mean(src_hits)
            gamma_src = min(gamma_src * 1.5, 0.9) if rate > 0.25 else gamma_src / 1.5
            src_hits.clear()
    return finish(counted, schema, x, x_adv, y, params, iterations=iterations)


def binary_search_boundary(is_adversarial, x_src, x_adv, tol: float = 1e-6):
    """Bisect the segment [x_src, x_adv] to the decision boundary.

    Returns the adversarial-side endpoint once the bracket (as a fraction of
    the segment) is below `tol`. `is_adversarial` is any boolean predicate.
    """
    lo, hi = 0.0, 1.0  # fraction toward x_adv; x_adv itself must be adversarial
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        cand = x_src + mid * (x_adv - x_src)
        if is_adversarial(cand):
            hi = mid
        else:
            lo = mid
    return x_src + hi * (x_adv - x_src)


def hsja(model, x, y, params: AttackParams, schema: ConstraintSchema,
         seed: int = 0, init_point=None):
    """Boundary attack with Monte-Carlo gradient-direction estimation.

    Per round: (1) binary-search the segment to the boundary, (2) estimate
    the adversarial direction from misclassification signs over random probes
    at a shrinking radius, (3) geometric step-size search, halving until the
    step lands adversarial. All candidates are remapped before evaluation.
    """
    counted = QueryCounter(model)
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=float)
    if _already_done(counted, x, y):
        return finish(counted, schema, x, x, y, params, iterations=0)
    perturbable = schema.perturbable_indices()
    keep = np.zeros(len(x))
    keep[perturbable] = 1.0
    d = max(len(perturbable), 1)

    def adversarial(z):
        return counted.predict(schema.remap(x, z)) != int(y)

    limit = params.query_budget - 1  # reserve the final success check
    if init_point is not None:
        start = schema.remap(x, np.asarray(init_point, dtype=float))
        if counted.predict(start) == int(y):
            start = None
    else:
        start = None
    if start is None:
        start = _find_adversarial_start(counted, schema, x, y, rng, params.init_trials, limit)
    if start is None:
        return finish(counted, schema, x, x, y, params, iterations=0,
                      flags=("no-adversarial-init",))
    x_t = start
    iterations = 0
    for t in range(1, params.max_iter + 1):
        # one round needs the bisection (~20 queries) plus at least a few probes
        if counted.count + 30 > limit:
            break
        iterations += 1
        x_t = schema.remap(x, binary_search_boundary(adversarial, x, x_t))
        dist = float(np.linalg.norm(x_t - x))
        if dist < 1e-9:
            break
        probes = int(min(100 * np.sqrt(t), limit - counted.count - 10))
        if probes < 1:
            break
        xi = dist / d
        v = np.zeros_like(x)
        signs = []
        dirs = []
        for _ in range(probes):
            u = rng.standard_normal(len(x)) * keep
            un = float(np.linalg.norm(u))
            if un < 1e-12:
                continue
            u = u / un
            phi = 1.0 if adversarial(x_t + xi * u) else -1.0
            signs.append(phi)
            dirs.append(u)
        if not dirs:
            break
        signs_arr = np.array(signs)
        baseline = signs_arr.mean()
        for phi, u in zip(signs_arr, dirs):
            v += (phi - baseline) * u
        vn = float(np.linalg.norm(v))
        if vn < 1e-12:
            v = np.sum([phi * u for phi, u in zip(signs_arr, dirs)], axis=0)
            vn = float(np.linalg.norm(v))
            if vn < 1e-12:
                continue
        v = v / vn
        step = dist / np.sqrt(t)
        while step > 1e-9 and counted.count + 1 <= limit:
            cand = x_t + step * v
            if adversarial(cand):
                x_t = schema.remap(x, cand)
                break
            step /= 2.0
    return finish(counted, schema, x, x_t, y, params, iterations=iterations)
