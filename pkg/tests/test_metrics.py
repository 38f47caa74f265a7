import numpy as np
import pytest

from tabadv.attacks.base import AttackResult
from tabadv.data import Dataset
from tabadv.metrics import (
    MetricError,
    asr,
    avg_over_models,
    dsr,
    fmt,
    odr,
    precision_recall_f1,
    transfer_matrix,
)
from tabadv.models.linear import LogisticRegression


def results(flags):
    return [
        AttackResult(np.zeros(2), s, 0, (0.0, 0.0, 0.0), 0) for s in flags
    ]


def test_asr_basic_fraction():
    assert asr(results([True] * 4 + [False] * 6)) == 40.0


def test_asr_empty_rejected():
    with pytest.raises(MetricError):
        asr([])


def test_asr_all_success():
    assert asr(results([True] * 3)) == 100.0


def test_dsr_complement_identity():
    rng = np.random.default_rng(0)
    for _ in range(20):
        flags = list(rng.random(17) < 0.4)
        assert asr(results(flags)) + dsr(results(flags)) == 100.0


def test_dsr_all_fail():
    assert dsr(results([False] * 5)) == 100.0


def constant_model(label):
    m = LogisticRegression(2)
    m.b = 10.0 if label == 1 else -10.0
    return m


def test_odr_perfect_and_constant_benign():
    ds = Dataset([[0.1, 0.1], [0.9, 0.9], [0.5, 0.5]], [0, 1, 1])
    assert odr(constant_model(1), ds) == 100.0
    assert odr(constant_model(0), ds) == 0.0


def test_odr_hand_count():
    X = np.array([[i / 10, 0.5] for i in range(10)])
    y = np.array([0] * 4 + [1] * 6)
    ds = Dataset(X, y)
    m = LogisticRegression(2)
    m.w = np.array([100.0, 0.0])
    m.b = -65.0  # malicious iff x0 > 0.65: detects 3 of 6 malicious rows
    assert odr(m, ds) == pytest.approx(100.0 * 3 / 6)


def test_avg_over_models():
    assert avg_over_models({"a": 50.0, "b": 70.0}) == 60.0
    assert avg_over_models({"only": 42.0}) == 42.0
    assert avg_over_models({"a": 1.0, "b": 2.0}) == avg_over_models({"b": 2.0, "a": 1.0})


def test_avg_within_min_max():
    vals = {"a": 10.0, "b": 30.0, "c": 25.0}
    out = avg_over_models(vals)
    assert min(vals.values()) <= out <= max(vals.values())


def test_transfer_matrix_single_cell_is_plain_dsr():
    cells = {("fgsm", "nat"): results([True, False])}
    M = transfer_matrix(cells, ["nat"])
    assert M.shape == (1, 1)
    assert M[0, 0] == 50.0


def test_transfer_matrix_shape_and_missing_cell():
    cells = {
        ("a", "d1"): results([True]),
        ("a", "d2"): results([False]),
        ("b", "d1"): results([False]),
        ("b", "d2"): results([True]),
    }
    M = transfer_matrix(cells, ["d1", "d2"])
    assert M.shape == (2, 2)
    with pytest.raises(MetricError, match="missing"):
        transfer_matrix({("a", "d1"): results([True])}, ["d1", "d2"])


def test_transfer_matrix_empty_axis():
    with pytest.raises(MetricError):
        transfer_matrix({}, [])


def test_metric_ranges():
    rng = np.random.default_rng(1)
    for _ in range(10):
        flags = list(rng.random(9) < rng.random())
        assert 0.0 <= asr(results(flags)) <= 100.0
        assert 0.0 <= dsr(results(flags)) <= 100.0


def test_precision_recall_f1_hand_example():
    ds = Dataset([[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]], [0, 1, 1, 0])
    m = constant_model(1)  # predicts malicious always: P=0.5, R=1.0
    p, r, f1 = precision_recall_f1(m, ds)
    assert (p, r) == (50.0, 100.0)
    assert f1 == pytest.approx(100 * 2 * 0.5 / 1.5)


def test_fmt_two_decimals():
    assert fmt(98.18999) == "98.19"
    assert fmt(5) == "5.00"
