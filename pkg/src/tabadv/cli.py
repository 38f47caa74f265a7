"""Config-driven experiment pipelines.

Subcommands: train | attack | defend | matrix | armsrace. Each run reads one
JSON config, derives every random stream from a single seed, and writes a
manifest (resolved config + hash + package version) next to its outputs, so
rerunning from a manifest reproduces all result files byte for byte.

Output layout under --out:
    manifest.json   models/   results/   traces/   reports/
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .attacks import ATTACKS, AttackParams, requires_gradients, run_attack_batch
from .attacks import get_attack
from .constraints import ConstraintSchema
from .data import Dataset, MinMaxScaler, load_csv, split, synth
from .defense import avg_at, dsr_all, max_at, nat, r_at, te_at
from .ensemble_attacks import AttackSpec, adp_ea
from .metrics import (
    asr,
    dsr,
    fmt,
    odr,
    precision_recall_f1,
    write_rows_csv,
    write_summary_json,
)
from .models import accuracy, load_model, save_model, train
from .bayesopt import write_trace_csv


class ConfigError(ValueError):
    pass


def _get(cfg: dict, path: str, expected=None, default=..., choices=None):
    """Fetch config[path] with a path-precise error message."""
    node = cfg
    trail = "config"
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            if default is not ...:
                return default
            raise ConfigError(f"{trail}.{part}: missing required field")
        node = node[part]
        trail += f".{part}"
    if expected is not None and not isinstance(node, expected):
        raise ConfigError(
            f"{trail}: expected {getattr(expected, '__name__', expected)}, "
            f"got {type(node).__name__}"
        )
    if choices is not None and node not in choices:
        raise ConfigError(f"{trail}: {node!r} not one of {sorted(choices)}")
    return node


def _attack_specs(cfg: dict) -> list[AttackSpec]:
    entries = _get(cfg, "attacks", list)
    if not entries:
        raise ConfigError("config.attacks: need at least one attack")
    specs = []
    for i, entry in enumerate(entries):
        name = entry.get("name")
        if name not in ATTACKS:
            raise ConfigError(
                f"config.attacks[{i}].name: unknown attack {name!r}; "
                f"valid names: {', '.join(sorted(ATTACKS))}"
            )
        params = entry.get("params", {})
        try:
            specs.append(AttackSpec(name, AttackParams(**params)))
        except TypeError as exc:
            raise ConfigError(f"config.attacks[{i}].params: {exc}") from None
    return specs


def _load_data(cfg: dict, seed: int):
    data = _get(cfg, "data", dict)
    if "synth" in data:
        s = data["synth"]
        ds = synth(
            n_per_class=_get(s, "n_per_class", int, default=150),
            dim=_get(s, "dim", int, default=2),
            separation=_get(s, "separation", (int, float), default=4.0),
            noise=_get(s, "noise", (int, float), default=0.05),
            seed=seed,
        )
        if s.get("malicious_low"):
            ds = Dataset(ds.X, 1 - ds.y, name=ds.name)
    elif "csv" in data:
        ds = load_csv(data["csv"])
    else:
        raise ConfigError("config.data: need either 'synth' or 'csv'")
    tr, va, te = split(ds, seed=seed)
    if data.get("scale", "csv" in data):
        scaler = MinMaxScaler.fit(tr)
        tr, va, te = scaler.transform(tr), scaler.transform(va), scaler.transform(te)
    return tr, va, te


def _load_schema(cfg: dict, dim: int) -> ConstraintSchema:
    path = _get(cfg, "schema", str, default=None)
    if path is None:
        return ConstraintSchema.unconstrained(dim)
    schema = ConstraintSchema.load(path)
    if schema.dim != dim:
        raise ConfigError(
            f"config.schema: schema has {schema.dim} features but data has {dim}"
        )
    return schema


def _ensure_dirs(out: Path):
    for sub in ("models", "results", "traces", "reports"):
        (out / sub).mkdir(parents=True, exist_ok=True)


def _write_manifest(out: Path, command: str, cfg: dict, seed: int):
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    manifest = {
        "command": command,
        "config": cfg,
        "config_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
        "seed": seed,
        "version": __version__,
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_train(cfg: dict, out: Path, seed: int, jobs: int):
    tr, va, te = _load_data(cfg, seed)
    rows = []
    for i, spec in enumerate(_get(cfg, "models", list)):
        kind = _get({"m": spec}, "m.kind", str)
        model = train(kind, spec.get("hyperparams"), tr, seed)
        save_model(model, out / "models" / f"{kind}.json")
        p, r, f1 = precision_recall_f1(model, te)
        rows.append([kind, fmt(100 * accuracy(model, te)), fmt(p), fmt(r), fmt(f1)])
    write_rows_csv(out / "results" / "train.csv",
                   ["model", "accuracy", "precision", "recall", "f1"], rows)
    return rows


def cmd_attack(cfg: dict, out: Path, seed: int, jobs: int):
    tr, va, te = _load_data(cfg, seed)
    schema = _load_schema(cfg, tr.n_features)
    specs = _attack_specs(cfg)
    mal = te.malicious()
    rows = []
    for m_entry in _get(cfg, "models", list):
        kind = _get({"m": m_entry}, "m.kind", str)
        if "path" in m_entry:
            model = load_model(m_entry["path"])
        else:
            model = train(kind, m_entry.get("hyperparams"), tr, seed)
        for spec in specs:
            if requires_gradients(spec.name) and not model.differentiable:
                rows.append([spec.name, kind, "NA", "NA", "NA", "NA"])
                continue
            results = run_attack_batch(
                get_attack(spec.name), model, mal, spec.params, schema, seed, jobs=jobs
            )
            rows.append([
                spec.name, kind, fmt(asr(results)), fmt(dsr(results)),
                f"{np.mean([r.queries for r in results]):.1f}",
                f"{np.mean([r.norms[2] for r in results]):.6f}",
            ])
    write_rows_csv(out / "results" / "attack.csv",
                   ["attack", "model", "asr", "dsr", "mean_queries", "mean_linf"], rows)
    return rows


def _run_defense(cfg: dict, tr, va, schema, seed: int, out: Path):
    dcfg = _get(cfg, "defense", dict)
    method = _get(dcfg, "method", str,
                  choices={"nat", "avg_at", "max_at", "r_at", "te_at"})
    kind = _get(dcfg, "kind", str)
    hp = dcfg.get("hyperparams")
    rounds = _get(dcfg, "rounds", int, default=4)
    specs = _attack_specs(cfg)
    common = dict(schema=schema, mix_ratio=dcfg.get("mix_ratio", 0.5),
                  inner_epochs=dcfg.get("inner_epochs", 2),
                  ae_cap=dcfg.get("ae_cap"))
    if method == "nat":
        return nat(kind, hp, tr, specs[0], rounds, seed, **common), specs
    if method == "avg_at":
        w = dcfg.get("weights", [1.0 / len(specs)] * len(specs))
        return avg_at(kind, hp, tr, specs, w, rounds, seed, **common), specs
    if method == "max_at":
        return max_at(kind, hp, tr, specs, rounds, seed, **common).model, specs
    if method == "r_at":
        outc = r_at(kind, hp, tr, va, specs, _get(dcfg, "budget", int, default=12),
                    seed, rounds=rounds, val_cap=dcfg.get("val_cap"), **common)
        if outc.trace is not None:
            write_trace_csv(out / "traces" / "r_at.csv", outc.trace, len(specs))
        return outc.model, specs
    # te_at: substitute members trained on the same training split
    member_kinds = dcfg.get("substitute", ["lr", "mlp", "random_forest"])
    members = [train(mk, None, tr, seed + 13 * (i + 1)) for i, mk in enumerate(member_kinds)]
    weights = np.full(len(members), 1.0 / len(members))
    base = specs[0]
    if requires_gradients(base.name) and not all(m.differentiable for m in members):
        base = AttackSpec("zosgd", base.params)
    return (
        te_at(kind, hp, tr, members, weights, base, rounds, seed, **common),
        specs,
    )


def cmd_defend(cfg: dict, out: Path, seed: int, jobs: int):
    tr, va, te = _load_data(cfg, seed)
    schema = _load_schema(cfg, tr.n_features)
    model, specs = _run_defense(cfg, tr, va, schema, seed, out)
    method = cfg["defense"]["method"]
    save_model(model, out / "models" / f"defended_{method}.json")
    mal = te.malicious()
    rows = []
    for spec in specs:
        results = run_attack_batch(
            get_attack(spec.name), model, mal, spec.params, schema, seed, jobs=jobs
        )
        rows.append([method, spec.name, fmt(dsr(results))])
    rows.append([method, "odr", fmt(odr(model, te))])
    rows.append([method, "dsr_all",
                 fmt(100 * dsr_all(model, mal, specs, schema, seed=seed))])
    write_rows_csv(out / "results" / "defend.csv", ["defense", "metric", "value"], rows)
    return rows


def cmd_matrix(cfg: dict, out: Path, seed: int, jobs: int):
    tr, va, te = _load_data(cfg, seed)
    schema = _load_schema(cfg, tr.n_features)
    specs = _attack_specs(cfg)
    mal = te.malicious()
    defenses = _get(cfg, "matrix.defenses", list)
    if not defenses or not specs:
        raise ConfigError("config.matrix: need at least one attack and one defense")
    columns = []
    models = []
    for i, dcfg in enumerate(defenses):
        sub = dict(cfg)
        sub["defense"] = dcfg
        model, _ = _run_defense(sub, tr, va, schema, seed, out)
        columns.append(dcfg["method"])
        models.append(model)
    rows = []
    for spec in specs:
        row = [spec.name]
        for model in models:
            results = run_attack_batch(
                get_attack(spec.name), model, mal, spec.params, schema, seed, jobs=jobs
            )
            row.append(fmt(dsr(results)))
        rows.append(row)
    write_rows_csv(out / "results" / "matrix.csv", ["attack"] + columns, rows)
    return rows


def cmd_armsrace(cfg: dict, out: Path, seed: int, jobs: int):
    """Adaptive ensemble attacker versus the weighted-training defenses."""
    tr, va, te = _load_data(cfg, seed)
    schema = _load_schema(cfg, tr.n_features)
    specs = _attack_specs(cfg)
    dcfg = _get(cfg, "defense", dict)
    kind = _get(dcfg, "kind", str)
    hp = dcfg.get("hyperparams")
    rounds = _get(dcfg, "rounds", int, default=4)
    budget = _get(dcfg, "budget", int, default=12)
    attack_budget = _get(cfg, "armsrace.attack_budget", int, default=12)
    common = dict(schema=schema, ae_cap=dcfg.get("ae_cap"))
    mal = te.malicious()
    eval_cap = _get(cfg, "armsrace.eval_cap", int, default=40)
    if mal.n_samples > eval_cap:
        mal = mal.subset(range(eval_cap))
    uniform = [1.0 / len(specs)] * len(specs)
    defended = {
        "avg_at": avg_at(kind, hp, tr, specs, uniform, rounds, seed, **common),
        "max_at": max_at(kind, hp, tr, specs, rounds, seed, **common).model,
        "r_at": r_at(kind, hp, tr, va, specs, budget, seed, rounds=rounds,
                     val_cap=dcfg.get("val_cap"), **common).model,
    }
    rows = []
    for name, model in defended.items():
        outcome = adp_ea(specs, model, mal, attack_budget, seed=seed, schema=schema)
        write_trace_csv(out / "traces" / f"armsrace_{name}.csv", outcome.trace, len(specs))
        rows.append([
            name, fmt(100.0 - outcome.asr),
            " ".join(f"{w:.4f}" for w in outcome.weights),
            fmt(odr(model, te)),
        ])
    write_rows_csv(out / "results" / "armsrace.csv",
                   ["defense", "dsr_vs_adaptive", "attacker_weights", "odr"], rows)
    return rows


COMMANDS = {
    "train": cmd_train,
    "attack": cmd_attack,
    "defend": cmd_defend,
    "matrix": cmd_matrix,
    "armsrace": cmd_armsrace,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tabadv",
        description="Adversarial attack/defense evaluation for tabular detectors",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config (or a manifest)")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="parallel attack workers")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config {args.config}: {exc}", file=sys.stderr)
        return 2
    if "config" in cfg and "config_sha256" in cfg:  # manifest replay
        cfg = cfg["config"]
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    out = Path(args.out or os.environ.get("TABADV_OUT", "runs")) / args.command
    _ensure_dirs(out)
    try:
        COMMANDS[args.command](cfg, out, seed, args.jobs)
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _write_manifest(out, args.command, cfg, seed)
    print(f"{args.command}: outputs written to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
