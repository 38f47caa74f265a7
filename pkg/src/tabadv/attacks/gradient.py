"""White-box attacks driven by exact input gradients.

All six attacks share the signature
``attack(model, x, y, params, schema, seed=0) -> AttackResult`` and require a
differentiable model. Candidates are kept inside the configured norm ball and
remapped to the legal feature space at every step.
"""

from __future__ import annotations

import numpy as np

from ..constraints import ConstraintSchema
from ..models.base import CapabilityError, QueryCounter, _clip_prob
from .base import AttackParams, AttackResult, finish, legalize, perturbation_norms


def _counted(model):
    if not model.differentiable:
        raise CapabilityError(f"{model.kind} is query-only; gradient attack not applicable")
    return QueryCounter(model)


def _log_odds(counted, x_adv):
    """log p1 - log p0 at the candidate (one model query)."""
    p = np.clip(counted.predict_proba(x_adv), 1e-12, 1.0)
    return float(np.log(p[1]) - np.log(p[0]))


def _log_odds_gradient(counted, x_adv):
    """d(log p1 - log p0)/dx = dp1/dx / (p1 p0) (one model query)."""
    p = counted.predict_proba(x_adv)
    p1 = float(_clip_prob(p[1]))
    return counted.proba_gradient(x_adv) / (p1 * (1.0 - p1))


def fgsm(model, x, y, params: AttackParams, schema: ConstraintSchema, seed: int = 0):
    """Single signed-gradient step of size eps."""
    counted = _counted(model)
    x = np.asarray(x, dtype=float)
    g = counted.input_gradient(x, y)
    candidate = x + params.eps * np.sign(g)
    return finish(counted, schema, x, candidate, y, params, iterations=1)


def pgd(model, x, y, params: AttackParams, schema: ConstraintSchema, seed: int = 0):
    """Iterated normalized-gradient ascent with per-step ball projection."""
    counted = _counted(model)
    x = np.asarray(x, dtype=float)
    x_t = x.copy()
    flags: tuple[str, ...] = ()
    iterations = 0
    if counted.predict(x_t) != int(y):
        return finish(counted, schema, x, x_t, y, params, iterations=0)
    for _ in range(params.max_iter):
        g = counted.input_gradient(x_t, y)
        gn = float(np.linalg.norm(g))
        if gn < 1e-12:
            flags = ("zero-gradient",)
            break
        iterations += 1
        x_t = legalize(schema, x, x_t + params.alpha * g / gn, params)
        if counted.predict(x_t) != int(y):
            break
    return finish(counted, schema, x, x_t, y, params, iterations=iterations, flags=flags)


def bim(model, x, y, params: AttackParams, schema: ConstraintSchema, seed: int = 0,
        variant: str = "A"):
    """Iterative signed-gradient steps; variant A stops at first success,
    variant B always runs the full iteration budget."""
    if variant not in ("A", "B"):
        raise ValueError(f"bim variant must be 'A' or 'B', got {variant!r}")
    counted = _counted(model)
    x = np.asarray(x, dtype=float)
    x_t = x.copy()
    iterations = 0
    if variant == "A" and counted.predict(x_t) != int(y):
        return finish(counted, schema, x, x_t, y, params, iterations=0)
    for _ in range(params.max_iter):
        g = counted.input_gradient(x_t, y)
        iterations += 1
        x_t = legalize(schema, x, x_t + params.alpha * np.sign(g), params)
        if variant == "A" and counted.predict(x_t) != int(y):
            break
    return finish(counted, schema, x, x_t, y, params, iterations=iterations)


def bim_a(model, x, y, params, schema, seed=0):
    return bim(model, x, y, params, schema, seed, variant="A")


def bim_b(model, x, y, params, schema, seed=0):
    return bim(model, x, y, params, schema, seed, variant="B")


def cw(model, x, y, params: AttackParams, schema: ConstraintSchema, seed: int = 0):
    """Penalty-form distance-minimizing attack.

    Minimizes ||delta||_2^2 + c * max(margin, -kappa) by gradient descent with
    box clipping each step, where margin is the log-odds of the true label.
    Returns the best-distance successful candidate, otherwise the best-loss
    iterate with success False.
    """
    counted = _counted(model)
    x = np.asarray(x, dtype=float)
    lo, hi = schema.lo, schema.hi
    delta = np.zeros_like(x)
    kappa = params.confidence
    c = params.penalty
    lr = params.step_size if params.step_size is not None else 0.01
    y = int(y)
    sign_y = 1.0 if y == 1 else -1.0

    best_dist = np.inf
    best_x = None
    best_obj = np.inf
    best_obj_x = x.copy()
    iterations = 0
    for _ in range(max(params.max_iter, 1)):
        iterations += 1
        cand = np.clip(x + delta, lo, hi)
        margin = sign_y * _log_odds(counted, cand)  # >0 while still detected
        dist2 = float(np.dot(cand - x, cand - x))
        obj = dist2 + c * max(margin, -kappa)
        if margin <= 0.0 and dist2 < best_dist:
            best_dist = dist2
            best_x = cand.copy()
        if obj < best_obj:
            best_obj = obj
            best_obj_x = cand.copy()
        grad = 2.0 * (cand - x)
        if margin > -kappa:
            grad = grad + c * sign_y * _log_odds_gradient(counted, cand)
        delta = np.clip(x + delta - lr * grad, lo, hi) - x
    candidate = best_x if best_x is not None else best_obj_x
    return finish(counted, schema, x, candidate, y, params, iterations=iterations)


def deepfool(model, x, y, params: AttackParams, schema: ConstraintSchema, seed: int = 0):
    """Linearized minimal-perturbation steps on the log-odds boundary."""
    counted = _counted(model)
    x = np.asarray(x, dtype=float)
    x_t = x.copy()
    flags: tuple[str, ...] = ()
    iterations = 0
    for _ in range(max(params.max_iter, 1)):
        if counted.predict(x_t) != int(y):
            break
        f = _log_odds(counted, x_t)
        g = _log_odds_gradient(counted, x_t)
        gn2 = float(np.dot(g, g))
        if gn2 < 1e-24:
            flags = ("zero-gradient",)
            break
        iterations += 1
        r = -f * g / gn2
        x_t = legalize(schema, x, x_t + (1.0 + params.overshoot) * r, params)
    return finish(counted, schema, x, x_t, y, params, iterations=iterations, flags=flags)


def saliency_map(d_target: np.ndarray, d_other: np.ndarray) -> np.ndarray:
    """Per-feature saliency for a positive step toward the target class.

    Zero where the target-class output decreases along the feature or the
    summed other-class outputs increase; otherwise the product of the target
    derivative and the magnitude of the other-class derivative sum.
    """
    return np.where((d_target < 0) | (d_other > 0), 0.0, d_target * np.abs(d_other))


def jsma(model, x, y, params: AttackParams, schema: ConstraintSchema, seed: int = 0):
    """Saliency-guided single-feature steps toward the benign class.

    The highest-saliency perturbable feature moves by theta per iteration,
    subject to box bounds and the l1 budget. A negative theta flips the step
    direction (and mirrors the saliency branch accordingly).
    """
    counted = _counted(model)
    x = np.asarray(x, dtype=float)
    y = int(y)
    x_t = x.copy()
    perturbable = schema.perturbable_indices()
    budget = params.eps
    upward = params.theta >= 0
    flags: tuple[str, ...] = ()
    iterations = 0
    for _ in range(max(params.max_iter, 1)):
        if counted.predict(x_t) != y:
            break
        gp1 = counted.proba_gradient(x_t)
        # target class is the complement of the true label
        d_target = -gp1 if y == 1 else gp1
        if upward:
            saliency = saliency_map(d_target, -d_target)
        else:
            saliency = saliency_map(-d_target, d_target)
        spent = float(np.abs(x_t - x).sum())
        scores = np.full_like(x, -np.inf)
        for i in perturbable:
            room = (schema.hi[i] - x_t[i]) if upward else (x_t[i] - schema.lo[i])
            if saliency[i] > 0 and room > 1e-15 and budget - spent > 1e-15:
                scores[i] = saliency[i]
        if not np.any(np.isfinite(scores) & (scores > 0)):
            flags = ("saliency-exhausted",)
            break
        i = int(np.argmax(scores))  # argmax takes the lowest index on ties
        room = (schema.hi[i] - x_t[i]) if upward else (x_t[i] - schema.lo[i])
        step = min(abs(params.theta), room, budget - spent)
        iterations += 1
        x_t[i] += step if upward else -step
        x_t = schema.remap(x, x_t)
    if params.norm != "l1":
        params = params.with_updates(norm="l1", eps=budget)
    return finish(counted, schema, x, x_t, y, params, iterations=iterations, flags=flags)
