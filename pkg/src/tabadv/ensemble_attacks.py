"""Ensembles of attack methods and transfer ensembles over substitute models.

Three combination strategies exist for a set of base attacks: averaging the
per-attack perturbations (with literal 1/n scaling), picking the loss-argmax
candidate, and adapting the weight vector with Bayesian optimization against
the target model. The same adaptation applies to transfer attacks, where the
weights parameterize a soft-vote substitute ensemble instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attacks import get_attack, requires_gradients
from .attacks.base import (
    AttackParams,
    AttackResult,
    _row_seed,
    perturbation_norms,
    project_lp,
)
from .bayesopt import BayesOptResult, bayesopt_run
from .constraints import ConstraintSchema
from .data import Dataset
from .models import Model, QueryCounter, make_ensemble
from .models.ensemble import DEEP_ENS, HETERO_ENS, TREE_ENS, TREE_KINDS


@dataclass(frozen=True)
class AttackSpec:
    """A named attack plus its parameters; the unit the ensembles combine."""

    name: str
    params: AttackParams = field(default_factory=AttackParams)

    def run(self, model, x, y, schema, seed) -> AttackResult:
        return get_attack(self.name)(model, x, y, self.params, schema, seed=seed)


def _simplex_init_points(n: int):
    """Vertices plus centroid: guarantees every pure strategy gets evaluated."""
    pts = [np.eye(n)[i] for i in range(n)]
    pts.append(np.full(n, 1.0 / n))
    return pts


def _base_deltas(attacks, model, x, y, schema, seed):
    """Run every base attack once; failures contribute a zero perturbation."""
    deltas, queries, flags = [], 0, []
    for k, spec in enumerate(attacks):
        try:
            res = spec.run(model, x, y, schema, seed=_row_seed(seed, k))
            deltas.append(res.x_adv - x)
            queries += res.queries
        except Exception:
            deltas.append(np.zeros_like(x))
            flags.append(f"base-attack-error:{spec.name}")
    return deltas, queries, tuple(flags)


def combine_deltas(deltas, weights, mode: str = "literal"):
    """Combine per-attack perturbations.

    'literal' keeps the 1/n prefactor (with the conventional all-ones default
    weights this is the plain average); 'normalized' drops it, so simplex
    weights form a convex combination and a vertex reproduces one base attack
    exactly.
    """
    n = len(deltas)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    stack = np.array(deltas)
    if mode == "literal":
        return (w[:, None] * stack).sum(axis=0) / n
    if mode == "normalized":
        return (w[:, None] * stack).sum(axis=0)
    raise ValueError(f"unknown combination mode {mode!r}")


def avg_ea(attacks, weights, model, x, y, schema: ConstraintSchema, seed: int = 0,
           mode: str = "literal", combine_params: AttackParams | None = None,
           cached_deltas=None) -> AttackResult:
    """Weighted-average ensemble attack; success re-evaluated on the target."""
    x = np.asarray(x, dtype=float)
    if cached_deltas is None:
        deltas, queries, flags = _base_deltas(attacks, model, x, y, schema, seed)
    else:
        deltas, queries, flags = cached_deltas, 0, ()
    combined = combine_deltas(deltas, weights, mode)
    if combine_params is not None:
        combined = project_lp(combined, combine_params.norm, combine_params.eps)
    x_adv = schema.remap(x, x + combined)
    counted = QueryCounter(model)
    success = counted.predict(x_adv) != int(y)
    return AttackResult(
        x_adv=x_adv,
        success=bool(success),
        queries=queries + counted.count,
        norms=perturbation_norms(x, x_adv),
        iterations=len(deltas),
        flags=flags,
    )


def max_ea(attacks, model, x, y, schema: ConstraintSchema, seed: int = 0) -> AttackResult:
    """Strongest-candidate ensemble attack: argmax loss, ties to lowest index."""
    x = np.asarray(x, dtype=float)
    counted = QueryCounter(model)
    best = None
    best_loss = -np.inf
    queries = 0
    flags: list[str] = []
    for k, spec in enumerate(attacks):
        try:
            res = spec.run(model, x, y, schema, seed=_row_seed(seed, k))
            queries += res.queries
        except Exception:
            flags.append(f"base-attack-error:{spec.name}")
            continue
        cand_loss = counted.loss(res.x_adv, y)
        if cand_loss > best_loss:
            best_loss = cand_loss
            best = res
    if best is None:
        raise ValueError("every base attack failed; nothing to select")
    success = counted.predict(best.x_adv) != int(y)
    return AttackResult(
        x_adv=best.x_adv,
        success=bool(success),
        queries=queries + counted.count,
        norms=perturbation_norms(x, best.x_adv),
        iterations=len(attacks),
        flags=tuple(flags),
    )


@dataclass
class AdaptiveAttackOutcome:
    weights: np.ndarray
    results: list[AttackResult]
    asr: float
    trace: BayesOptResult
    target_queries: int = 0


def adp_ea(attacks, model, eval_set: Dataset, budget: int, seed: int = 0,
           schema: ConstraintSchema | None = None,
           combine_params: AttackParams | None = None) -> AdaptiveAttackOutcome:
    """Adapt ensemble-attack weights to the target model.

    Base perturbations are generated once per sample and cached; the weight
    search only recombines them, so the objective (batch ASR of the combined
    perturbation) is cheap and deterministic. The search seeds include every
    vertex and the centroid, so single attacks and the uniform average are
    always part of the comparison.
    """
    if eval_set.n_samples == 0:
        raise ValueError("eval_set is empty")
    schema = schema or ConstraintSchema.unconstrained(eval_set.n_features)
    n = len(attacks)
    cache = []
    for i in range(eval_set.n_samples):
        deltas, _, _ = _base_deltas(
            attacks, model, eval_set.X[i], int(eval_set.y[i]), schema, _row_seed(seed, i)
        )
        cache.append(deltas)

    def batch_results(w):
        out = []
        for i in range(eval_set.n_samples):
            out.append(
                avg_ea(
                    attacks, w, model, eval_set.X[i], int(eval_set.y[i]), schema,
                    mode="normalized", combine_params=combine_params,
                    cached_deltas=cache[i],
                )
            )
        return out

    def objective(w):
        res = batch_results(w)
        return 100.0 * float(np.mean([r.success for r in res]))

    run = bayesopt_run(
        objective, n, budget, seed=seed, init_points=_simplex_init_points(n)[:budget]
    )
    final = batch_results(run.w_best)
    return AdaptiveAttackOutcome(
        weights=run.w_best,
        results=final,
        asr=run.g_best,
        trace=run,
    )


def _substitute_kind(members) -> str:
    if all(m.differentiable for m in members):
        return DEEP_ENS
    if all(m.kind in TREE_KINDS for m in members):
        return TREE_ENS
    return HETERO_ENS


def tea_craft(members, weights, base_attack: AttackSpec, data: Dataset,
              schema: ConstraintSchema, seed: int = 0) -> list[AttackResult]:
    """Craft a transfer batch against a soft-vote substitute ensemble.

    The emitted examples carry no information about any victim model; their
    success flags refer to the substitute. Gradient attacks require a fully
    differentiable substitute.
    """
    substitute = make_ensemble(list(members), weights, _substitute_kind(list(members)))
    if requires_gradients(base_attack.name) and not substitute.differentiable:
        raise ValueError(
            f"{base_attack.name} needs gradients but the substitute ensemble "
            f"is query-only; pick a gradient-free base attack"
        )
    return [
        base_attack.run(
            substitute, data.X[i], int(data.y[i]), schema, seed=_row_seed(seed, i)
        )
        for i in range(data.n_samples)
    ]


def transfer_asr(target, results, data: Dataset) -> tuple[float, int]:
    """Victim-side success rate of a crafted batch, plus queries spent."""
    counted = target if isinstance(target, QueryCounter) else QueryCounter(target)
    before = counted.count
    hits = [
        counted.predict(res.x_adv) != int(data.y[i]) for i, res in enumerate(results)
    ]
    return 100.0 * float(np.mean(hits)), counted.count - before


def adp_tea(members, target: Model, data: Dataset, base_attack: AttackSpec,
            budget: int, seed: int = 0,
            schema: ConstraintSchema | None = None) -> AdaptiveAttackOutcome:
    """Adapt substitute-ensemble weights by querying the victim.

    Each objective evaluation crafts a fresh batch against the re-weighted
    substitute and then queries the target once per sample; the returned
    query count is exactly |data| * evaluations.
    """
    if budget < 1:
        raise ValueError(f"query budget must allow at least one evaluation, got {budget}")
    schema = schema or ConstraintSchema.unconstrained(data.n_features)
    n = len(members)
    target_counter = QueryCounter(target)
    batches: dict[bytes, list[AttackResult]] = {}

    def objective(w):
        results = tea_craft(members, w, base_attack, data, schema, seed=seed)
        batches[np.asarray(w).tobytes()] = results
        asr, _ = transfer_asr(target_counter, results, data)
        return asr

    run = bayesopt_run(
        objective, n, budget, seed=seed,
        init_points=_simplex_init_points(n)[:budget],
    )
    final = batches[run.w_best.tobytes()]
    return AdaptiveAttackOutcome(
        weights=run.w_best,
        results=final,
        asr=run.g_best,
        trace=run,
        target_queries=target_counter.count,
    )
