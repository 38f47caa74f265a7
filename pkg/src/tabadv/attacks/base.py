"""Shared attack plumbing: parameters, results, legality, query accounting.

Every attack follows the same recipe: iterate on a candidate vector, keep the
perturbation inside the configured norm ball, remap each candidate back to
the legal feature space, and report exact query counts from an instrumented
model wrapper. Success means the final legal vector is classified differently
from its true label (for a malicious input: classified benign).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..constraints import ConstraintSchema, project_lp
from ..models.base import QueryCounter


@dataclass
class AttackParams:
    """Knobs shared across the attack library.

    `eps` bounds the perturbation in `norm`; `step_size` defaults to eps/4
    where a step is needed. Remaining fields are attack-specific extras and
    are ignored by attacks that do not use them.
    """

    eps: float = 0.05
    norm: str = "linf"
    step_size: float | None = None
    max_iter: int = 40
    # gradient-attack extras
    confidence: float = 0.0      # hinge margin (kappa)
    penalty: float = 1.0         # distance/misclassification tradeoff
    theta: float = 0.05          # saliency-attack per-step feature delta
    overshoot: float = 0.02      # boundary-crossing overshoot factor
    # gradient-free extras
    sigma: float = 0.01          # smoothing radius
    population: int = 20         # antithetic population size (even)
    samples: int = 10            # sphere-sample count per estimate
    coord_step: float = 1e-3     # symmetric-difference step
    coord_batch: int = 8         # coordinates probed per iteration
    beta1: float = 0.9
    beta2: float = 0.99
    adam_eps: float = 1e-8
    query_budget: int = 4000
    init_trials: int = 200       # random draws allowed to find an adversarial start
    use_sign: bool = True        # sign step for evolutionary-estimator descent

    def with_updates(self, **kw) -> "AttackParams":
        return replace(self, **kw)

    @property
    def alpha(self) -> float:
        if self.step_size is not None:
            return self.step_size
        return self.eps / 4.0 if math.isfinite(self.eps) else 0.01


@dataclass
class AttackResult:
    x_adv: np.ndarray
    success: bool
    queries: int
    norms: tuple[float, float, float]  # (l1, l2, linf) of x_adv - x
    iterations: int
    flags: tuple[str, ...] = ()


def perturbation_norms(x: np.ndarray, x_adv: np.ndarray):
    d = x_adv - x
    return (
        float(np.abs(d).sum()),
        float(np.linalg.norm(d)),
        float(np.abs(d).max(initial=0.0)),
    )


def legalize(
    schema: ConstraintSchema, x: np.ndarray, candidate: np.ndarray, params: AttackParams
) -> np.ndarray:
    """Budget-project the perturbation, then remap to the legal space."""
    delta = project_lp(candidate - x, params.norm, params.eps)
    return schema.remap(x, x + delta)


def finish(
    counted: QueryCounter,
    schema: ConstraintSchema,
    x: np.ndarray,
    candidate: np.ndarray,
    y: int,
    params: AttackParams,
    iterations: int,
    flags: tuple[str, ...] = (),
) -> AttackResult:
    """Legalize the final candidate and re-evaluate success on the target."""
    x_adv = legalize(schema, x, candidate, params)
    success = counted.predict(x_adv) != int(y)
    return AttackResult(
        x_adv=x_adv,
        success=bool(success),
        queries=counted.count,
        norms=perturbation_norms(x, x_adv),
        iterations=iterations,
        flags=flags,
    )


def hinge_objective(counted: QueryCounter, x_adv: np.ndarray, y: int, kappa: float) -> float:
    """max(log p[y] - log p[other], -kappa); nonpositive iff already evasive."""
    p = np.clip(counted.predict_proba(x_adv), 1e-12, 1.0)
    other = 1 - int(y)
    return max(float(np.log(p[int(y)]) - np.log(p[other])), -kappa)


def run_attack_batch(attack_fn, model, dataset, params, schema, seed, jobs: int = 1):
    """Run one attack over every dataset row; per-row RNG streams from (seed, i).

    Results come back in row order regardless of `jobs`, so outputs are
    deterministic under a fixed seed.
    """
    def one(i):
        return attack_fn(
            model, dataset.X[i], int(dataset.y[i]), params, schema, seed=_row_seed(seed, i)
        )

    n = dataset.n_samples
    if jobs <= 1:
        return [one(i) for i in range(n)]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, range(n)))


def _row_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])
