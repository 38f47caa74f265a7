"""Attack/defense utility metrics and report writers.

Rates are carried at full float precision internally and rendered to two
decimals only at the reporting edge.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .data import Dataset


class MetricError(ValueError):
    pass


def asr(results) -> float:
    """Attack success rate: percent of crafted examples that evade."""
    results = list(results)
    if not results:
        raise MetricError("no attack results to score")
    return 100.0 * float(np.mean([bool(r.success) for r in results]))


def dsr(results) -> float:
    """Defense success rate: complement of the attack success rate."""
    return 100.0 - asr(results)


def odr(model, clean_test: Dataset) -> float:
    """Original detection rate: recall on the malicious class, clean data."""
    mal = clean_test.malicious()
    if mal.n_samples == 0:
        raise MetricError("no malicious samples in the clean test set")
    return 100.0 * float(np.mean(model.predict(mal.X) == 1))


def precision_recall_f1(model, test: Dataset) -> tuple[float, float, float]:
    pred = np.asarray(model.predict(test.X))
    tp = int(np.sum((pred == 1) & (test.y == 1)))
    fp = int(np.sum((pred == 1) & (test.y == 0)))
    fn = int(np.sum((pred == 0) & (test.y == 1)))
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return 100.0 * p, 100.0 * r, 100.0 * f1


def avg_over_models(per_model: dict) -> float:
    """Unweighted arithmetic mean of a per-model metric map."""
    if not per_model:
        raise MetricError("empty per-model map")
    return float(np.mean(list(per_model.values())))


def transfer_matrix(attack_results: dict, defense_names) -> np.ndarray:
    """DSR matrix with one row per attack and one column per defense.

    `attack_results[(attack, defense)]` holds the result list for that cell.
    """
    attack_names = sorted({a for a, _ in attack_results})
    defense_names = list(defense_names)
    if not attack_names or not defense_names:
        raise MetricError("transfer matrix needs at least one attack and one defense")
    M = np.zeros((len(attack_names), len(defense_names)))
    for i, a in enumerate(attack_names):
        for j, d in enumerate(defense_names):
            if (a, d) not in attack_results:
                raise MetricError(f"missing transfer cell ({a}, {d})")
            M[i, j] = dsr(attack_results[(a, d)])
    return M


def fmt(v) -> str:
    """Render a rate to two decimals (reporting only; math stays full precision)."""
    return f"{float(v):.2f}"


def write_rows_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_summary_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_series(path, xs, ys, x_name: str = "x", y_name: str = "y") -> None:
    """Plot-data file: two columns, ready for any external plotting tool."""
    write_rows_csv(
        path, [x_name, y_name],
        [[f"{float(a):.10g}", f"{float(b):.10g}"] for a, b in zip(xs, ys)],
    )
