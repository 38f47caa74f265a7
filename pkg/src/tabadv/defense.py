"""Adversarial-training defenses, from single-attack to robust weighted.

All variants share one loop: per round, craft adversarial examples for the
malicious training rows against the *current* model, then update the model
on a clean/adversarial mixture (default 50/50). Differentiable kinds train
incrementally with exact per-row weights; tree kinds are refit from scratch
on a replicated augmentation (trees are not incrementally trainable).

The robust variant searches the attack-weight simplex with Bayesian
optimization, scoring each candidate by the fraction of validation samples
that resist every attack simultaneously.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attacks import requires_gradients
from .attacks.base import _row_seed
from .bayesopt import BayesOptResult, bayesopt_run
from .constraints import ConstraintSchema
from .data import Dataset
from .ensemble_attacks import AttackSpec, _simplex_init_points, tea_craft
from .models import Model, train
from .models.base import CapabilityError, ModelError


def fraction_resisting_all(resisted: np.ndarray) -> float:
    """Fraction of samples whose row is True for every attack.

    `resisted` has shape (n_attacks, n_samples); entry (i, j) says whether
    sample j kept its label under attack i. The score is the mean of the
    per-sample logical AND across attacks.
    """
    resisted = np.asarray(resisted, dtype=bool)
    if resisted.ndim != 2 or resisted.shape[0] == 0:
        raise ValueError(f"need a (n_attacks, n_samples) bool matrix, got {resisted.shape}")
    if resisted.shape[1] == 0:
        raise ValueError("no samples to score")
    return float(np.mean(np.all(resisted, axis=0)))


def resistance_matrix(model, dataset: Dataset, attacks, schema: ConstraintSchema,
                      seed: int = 0) -> np.ndarray:
    """(n_attacks, n_samples) bools: True where the AE keeps its true label."""
    if not attacks:
        raise ValueError("attack list is empty")
    out = np.zeros((len(attacks), dataset.n_samples), dtype=bool)
    for a, spec in enumerate(attacks):
        for j in range(dataset.n_samples):
            res = spec.run(
                model, dataset.X[j], int(dataset.y[j]), schema,
                seed=_row_seed(seed, a * dataset.n_samples + j),
            )
            out[a, j] = model.predict(res.x_adv) == int(dataset.y[j])
    return out


def dsr_all(model, dataset: Dataset, attacks, schema: ConstraintSchema,
            seed: int = 0) -> float:
    """Fraction of samples resisting every attack in the set (in [0, 1])."""
    if dataset.n_samples == 0:
        raise ValueError("dataset is empty")
    return fraction_resisting_all(resistance_matrix(model, dataset, attacks, schema, seed))


def _craft_batch(model, rows: Dataset, spec: AttackSpec, schema, seed):
    return np.array([
        spec.run(model, rows.X[j], int(rows.y[j]), schema, seed=_row_seed(seed, j)).x_adv
        for j in range(rows.n_samples)
    ])


def _check_applicable(kind: str, model, attacks):
    for spec in attacks:
        if requires_gradients(spec.name) and not model.differentiable:
            raise CapabilityError(
                f"attack {spec.name!r} needs gradients but {kind!r} is query-only; "
                f"use a gradient-free attack for tree-family training"
            )


def _mixture(train_ds: Dataset, adv_blocks, block_weights, mix_ratio: float):
    """Clean plus adversarial rows with exact per-row weights.

    Clean rows carry total weight (1 - mix_ratio); adversarial blocks share
    `mix_ratio` in proportion to their block weights.
    """
    X = [train_ds.X]
    y = [train_ds.y]
    w = [np.full(train_ds.n_samples, (1.0 - mix_ratio) / train_ds.n_samples)]
    total = sum(block_weights)
    for block, bw in zip(adv_blocks, block_weights):
        if len(block) == 0 or bw <= 0 or total <= 0:
            continue
        X.append(block)
        y.append(np.ones(len(block), dtype=int))
        w.append(np.full(len(block), mix_ratio * (bw / total) / len(block)))
    return np.vstack(X), np.concatenate(y), np.concatenate(w)


def _replicated(train_ds: Dataset, adv_blocks, block_weights, mix_ratio: float):
    """Integer-replication approximation of the weighted mixture (tree kinds)."""
    n = train_ds.n_samples
    target_adv = int(round(n * mix_ratio / max(1.0 - mix_ratio, 1e-9)))
    X = [train_ds.X]
    y = [train_ds.y]
    total = sum(block_weights)
    for block, bw in zip(adv_blocks, block_weights):
        if len(block) == 0 or bw <= 0 or total <= 0:
            continue
        count = int(round(target_adv * bw / total))
        if count == 0:
            continue
        reps = [block[i % len(block)] for i in range(count)]
        X.append(np.array(reps))
        y.append(np.ones(count, dtype=int))
    return np.vstack(X), np.concatenate(y)


def _update_model(model, kind, X, y, w, rng, inner_epochs):
    if hasattr(model, "train_steps"):
        model.train_steps(X, y, rng, epochs=inner_epochs, sample_weight=w)
    else:
        model.refit(X, y, rng)
    return model


@dataclass
class DefenseOutcome:
    model: Model
    weights: np.ndarray | None = None
    trace: BayesOptResult | None = None
    selections: list | None = None  # per-round argmax picks (worst-case variant)


def _adversarial_training(kind, hyperparams, train_ds, attacks, w_t, rounds, seed,
                          schema, mix_ratio, inner_epochs, selection, ae_cap):
    model = train(kind, hyperparams, train_ds, seed)
    _check_applicable(kind, model, attacks)
    rng = np.random.default_rng(_row_seed(seed, 7919))
    mal = train_ds.malicious()
    if ae_cap is not None and mal.n_samples > ae_cap:
        keep = np.sort(
            np.random.default_rng(_row_seed(seed, 104729)).choice(
                mal.n_samples, size=ae_cap, replace=False
            )
        )
        mal = mal.subset(keep)
    selections: list[np.ndarray] = []
    for r in range(rounds):
        blocks = [
            _craft_batch(model, mal, spec, schema, _row_seed(seed, 1000 * (r + 1) + a))
            for a, spec in enumerate(attacks)
        ]
        if selection == "worst":
            losses = np.array([
                [model.loss(block[j], 1) for block in blocks]
                for j in range(mal.n_samples)
            ])
            # argmax returns the first maximal column: ties pick the lowest index
            picks = np.argmax(losses, axis=1)
            selections.append(picks)
            chosen = np.array([blocks[p][j] for j, p in enumerate(picks)])
            blocks, weights = [chosen], [1.0]
        else:
            weights = list(w_t)
        if hasattr(model, "train_steps"):
            X, y, w = _mixture(train_ds, blocks, weights, mix_ratio)
            _update_model(model, kind, X, y, w, rng, inner_epochs)
        else:
            X, y = _replicated(train_ds, blocks, weights, mix_ratio)
            _update_model(model, kind, X, y, None, rng, inner_epochs)
    return model, selections


def nat(kind, hyperparams, train_ds: Dataset, attack: AttackSpec, rounds: int,
        seed: int, schema: ConstraintSchema, mix_ratio: float = 0.5,
        inner_epochs: int = 2, ae_cap: int | None = None) -> Model:
    """Single-attack adversarial training; rounds=0 returns the plain model."""
    if rounds == 0:
        return train(kind, hyperparams, train_ds, seed)
    model, _ = _adversarial_training(
        kind, hyperparams, train_ds, [attack], [1.0], rounds, seed, schema,
        mix_ratio, inner_epochs, selection="avg", ae_cap=ae_cap,
    )
    model.provenance = {
        "defense": "nat", "attack": attack.name, "rounds": rounds, "seed": seed,
    }
    return model


def avg_at(kind, hyperparams, train_ds: Dataset, attacks, w_t, rounds: int,
           seed: int, schema: ConstraintSchema, mix_ratio: float = 0.5,
           inner_epochs: int = 2, ae_cap: int | None = None) -> Model:
    """Train against every attack at once, adversarial losses weighted by w_t."""
    if rounds == 0:
        return train(kind, hyperparams, train_ds, seed)
    w_t = np.asarray(w_t, dtype=float)
    if w_t.shape != (len(attacks),):
        raise ValueError(f"{len(attacks)} attacks but weight shape {w_t.shape}")
    model, _ = _adversarial_training(
        kind, hyperparams, train_ds, attacks, w_t, rounds, seed, schema,
        mix_ratio, inner_epochs, selection="avg", ae_cap=ae_cap,
    )
    model.provenance = {
        "defense": "avg_at", "attacks": [a.name for a in attacks],
        "weights": w_t.tolist(), "rounds": rounds, "seed": seed,
    }
    return model


def max_at(kind, hyperparams, train_ds: Dataset, attacks, rounds: int, seed: int,
           schema: ConstraintSchema, mix_ratio: float = 0.5,
           inner_epochs: int = 2, ae_cap: int | None = None) -> DefenseOutcome:
    """Train each sample on its loss-argmax adversarial example per round."""
    if rounds == 0:
        return DefenseOutcome(model=train(kind, hyperparams, train_ds, seed))
    model, selections = _adversarial_training(
        kind, hyperparams, train_ds, attacks, None, rounds, seed, schema,
        mix_ratio, inner_epochs, selection="worst", ae_cap=ae_cap,
    )
    model.provenance = {
        "defense": "max_at", "attacks": [a.name for a in attacks],
        "rounds": rounds, "seed": seed,
    }
    return DefenseOutcome(model=model, selections=selections)


def r_at(kind, hyperparams, train_ds: Dataset, val_ds: Dataset, attacks,
         budget: int, seed: int, schema: ConstraintSchema, rounds: int = 4,
         mix_ratio: float = 0.5, inner_epochs: int = 2,
         ae_cap: int | None = None, val_cap: int | None = None) -> DefenseOutcome:
    """Robust weighted adversarial training.

    Searches the attack-weight simplex with Bayesian optimization; each
    candidate w is scored by training at reduced rounds and measuring the
    validation fraction resisting all attacks simultaneously. The final model
    retrains at the best weights with the full round count.
    """
    if len(attacks) == 1:
        model = avg_at(kind, hyperparams, train_ds, attacks, [1.0], rounds, seed,
                       schema, mix_ratio, inner_epochs, ae_cap)
        return DefenseOutcome(model=model, weights=np.array([1.0]))
    search_rounds = max(1, rounds // 4)
    val_mal = val_ds.malicious()
    if val_cap is not None and val_mal.n_samples > val_cap:
        keep = np.sort(np.random.default_rng(_row_seed(seed, 65537)).choice(
            val_mal.n_samples, size=val_cap, replace=False))
        val_mal = val_mal.subset(keep)

    def objective(w):
        candidate = avg_at(kind, hyperparams, train_ds, attacks, w, search_rounds,
                           seed, schema, mix_ratio, inner_epochs, ae_cap)
        return dsr_all(candidate, val_mal, attacks, schema, seed=_row_seed(seed, 31))

    run = bayesopt_run(
        objective, len(attacks), budget, seed=seed,
        init_points=_simplex_init_points(len(attacks))[:budget],
    )
    model = avg_at(kind, hyperparams, train_ds, attacks, run.w_best, rounds, seed,
                   schema, mix_ratio, inner_epochs, ae_cap)
    model.provenance = {
        "defense": "r_at", "attacks": [a.name for a in attacks],
        "weights": run.w_best.tolist(), "rounds": rounds,
        "search_budget": budget, "seed": seed,
    }
    return DefenseOutcome(model=model, weights=run.w_best, trace=run)


def te_at(kind, hyperparams, train_ds: Dataset, members, member_weights,
          base_attack: AttackSpec, rounds: int, seed: int,
          schema: ConstraintSchema, mix_ratio: float = 0.5,
          inner_epochs: int = 2, ae_cap: int | None = None) -> Model:
    """Adversarial training on examples transferred from a fixed substitute.

    The adversarial set is crafted once against the substitute ensemble and
    never regenerated against the model being trained.
    """
    mal = train_ds.malicious()
    if ae_cap is not None and mal.n_samples > ae_cap:
        keep = np.sort(np.random.default_rng(_row_seed(seed, 104729)).choice(
            mal.n_samples, size=ae_cap, replace=False))
        mal = mal.subset(keep)
    transferred = tea_craft(members, member_weights, base_attack, mal, schema, seed=seed)
    adv_block = np.array([r.x_adv for r in transferred])
    model = train(kind, hyperparams, train_ds, seed)
    rng = np.random.default_rng(_row_seed(seed, 7919))
    for _ in range(rounds):
        if hasattr(model, "train_steps"):
            X, y, w = _mixture(train_ds, [adv_block], [1.0], mix_ratio)
            _update_model(model, kind, X, y, w, rng, inner_epochs)
        else:
            X, y = _replicated(train_ds, [adv_block], [1.0], mix_ratio)
            _update_model(model, kind, X, y, None, rng, inner_epochs)
    model.provenance = {
        "defense": "te_at", "substitute": [m.kind for m in members],
        "attack": base_attack.name, "rounds": rounds, "seed": seed,
    }
    return model
