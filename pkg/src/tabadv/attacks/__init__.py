"""Attack library: six gradient-based and six gradient-free attacks."""

from __future__ import annotations

from .base import (
    AttackParams,
    AttackResult,
    finish,
    legalize,
    perturbation_norms,
    run_attack_batch,
)
from .gradient import bim, bim_a, bim_b, cw, deepfool, fgsm, jsma, pgd
from .zo import boundary_attack, hsja, nes, zoadamm, zoo, zosgd

GRADIENT_ATTACKS = {
    "fgsm": fgsm,
    "pgd": pgd,
    "bim_a": bim_a,
    "bim_b": bim_b,
    "cw": cw,
    "deepfool": deepfool,
    "jsma": jsma,
}

ZO_ATTACKS = {
    "zoo": zoo,
    "nes": nes,
    "zosgd": zosgd,
    "zoadamm": zoadamm,
    "boundary": boundary_attack,
    "hsja": hsja,
}

ATTACKS = {**GRADIENT_ATTACKS, **ZO_ATTACKS}


def get_attack(name: str):
    if name not in ATTACKS:
        raise KeyError(
            f"unknown attack {name!r}; valid names: {', '.join(sorted(ATTACKS))}"
        )
    return ATTACKS[name]


def requires_gradients(name: str) -> bool:
    return name in GRADIENT_ATTACKS
