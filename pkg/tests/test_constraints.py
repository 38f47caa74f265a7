import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tabadv.constraints import (
    DEPENDENT,
    INDEPENDENT,
    PACKET_DERIVED,
    UNCONTROLLABLE,
    ConstraintSchema,
    Formula,
    SchemaError,
    project_lp,
)


def flow_schema(mask=None):
    """total/count independent-ish flow schema with a dependent mean."""
    text = """
    feature total independent 0 100
    feature count uncontrollable 0 50
    feature mean dependent 0 100 = / f:total f:count
    feature pkt packet_derived 0 1
    feature pad independent 0 1
    """
    schema = ConstraintSchema.parse(text)
    if mask is not None:
        return ConstraintSchema(
            schema.names, schema.groups, schema.lo, schema.hi, schema.formulas, mask
        )
    return schema


def test_remap_identity_when_all_independent_in_box():
    s = ConstraintSchema.unconstrained(3)
    x = np.array([0.2, 0.4, 0.6])
    adv = np.array([0.3, 0.1, 0.9])
    assert np.array_equal(s.remap(x, adv), adv)


def test_remap_recomputes_dependent_mean():
    s = flow_schema()
    x = np.array([8.0, 4.0, 2.0, 0.5, 0.1])
    adv = np.array([10.0, 44.0, 77.0, 0.9, 0.2])
    out = s.remap(x, adv)
    assert out[1] == 4.0  # uncontrollable restored
    assert out[3] == 0.5  # packet-derived restored
    assert out[2] == pytest.approx(10.0 / 4.0)  # mean recomputed, not 77
    assert out[0] == 10.0 and out[4] == 0.2


def test_remap_mask_rule():
    s = ConstraintSchema.unconstrained(5)
    s = ConstraintSchema(s.names, s.groups, s.lo, s.hi, mask={3, 4})
    x = np.array([0.1, 0.2, 0.3, 0.4, 0.5])
    adv = np.array([0.9, 0.8, 0.7, 0.6, 0.55])
    out = s.remap(x, adv)
    assert np.array_equal(out[:3], x[:3])  # outside-mask coordinates exact
    assert out[3] == 0.6 and out[4] == 0.55


def test_remap_division_guard():
    text = """
    feature a independent 0 10
    feature b uncontrollable 0 10
    feature r dependent 0 10 = / f:a f:b
    """
    s = ConstraintSchema.parse(text)
    x = np.array([5.0, 0.0, 0.0])
    out = s.remap(x, np.array([7.0, 3.0, 9.0]))
    assert out[2] == 0.0  # |denominator| < guard -> 0


def test_remap_dimension_mismatch():
    s = ConstraintSchema.unconstrained(3)
    with pytest.raises(SchemaError):
        s.remap(np.zeros(3), np.zeros(4))


def test_schema_rejects_dependent_on_dependent():
    text = """
    feature a independent 0 1
    feature b dependent 0 1 = + f:a 1
    feature c dependent 0 1 = + f:b 1
    """
    with pytest.raises(SchemaError, match="dependent"):
        ConstraintSchema.parse(text)


def test_schema_rejects_self_reference_and_bad_bounds():
    with pytest.raises(SchemaError):
        ConstraintSchema.parse("feature a dependent 0 1 = + f:a 1\n")
    with pytest.raises(SchemaError, match="lo"):
        ConstraintSchema.parse("feature a independent 2 1\n")


def test_schema_file_round_trip(tmp_path):
    s = flow_schema(mask={0, 2, 4})
    p = tmp_path / "s.schema"
    s.save(p)
    back = ConstraintSchema.load(p)
    assert back.names == s.names and back.groups == s.groups
    assert back.mask == s.mask
    x = np.array([8.0, 4.0, 2.0, 0.5, 0.1])
    adv = np.array([10.0, 44.0, 77.0, 0.9, 0.2])
    assert np.array_equal(back.remap(x, adv), s.remap(x, adv))


@given(data=st.data())
@settings(max_examples=60, deadline=None)
def test_remap_idempotent(data):
    s = flow_schema()
    x = np.array([8.0, 4.0, 2.0, 0.5, 0.1])
    adv = np.array(
        [data.draw(st.floats(-50, 150), label=f"c{i}") for i in range(5)]
    )
    once = s.remap(x, adv)
    twice = s.remap(x, once)
    assert np.array_equal(once, twice)


@given(data=st.data())
@settings(max_examples=60, deadline=None)
def test_remap_never_touches_frozen(data):
    s = flow_schema()
    x = np.array([8.0, 4.0, 2.0, 0.5, 0.1])
    adv = np.array([data.draw(st.floats(-50, 150)) for _ in range(5)])
    out = s.remap(x, adv)
    assert out[1] == x[1] and out[3] == x[3]  # bit-identical


def test_project_inside_ball_is_fixed_point():
    d = np.array([0.05, -0.02])
    for norm in ("linf", "l2", "l1"):
        assert np.array_equal(project_lp(d, norm, 0.5), d)


def test_project_linf_clamp():
    out = project_lp(np.array([0.2, -0.3]), "linf", 0.1)
    assert np.allclose(out, [0.1, -0.1])


def test_project_l2_rescale():
    out = project_lp(np.array([3.0, 4.0]), "l2", 1.0)
    assert np.allclose(out, [0.6, 0.8])


def test_project_l1_simplex():
    out = project_lp(np.array([0.5, -0.5, 0.0]), "l1", 0.5)
    assert np.isclose(np.abs(out).sum(), 0.5)
    assert out[0] > 0 and out[1] < 0 and out[2] == 0


def test_project_negative_eps():
    with pytest.raises(ValueError):
        project_lp(np.array([1.0]), "l2", -0.1)


@given(
    vec=st.lists(st.floats(-5, 5), min_size=1, max_size=8),
    eps=st.floats(0.0, 3.0),
    norm=st.sampled_from(["linf", "l2", "l1"]),
)
@settings(max_examples=150, deadline=None)
def test_project_norm_bound_property(vec, eps, norm):
    out = project_lp(np.array(vec), norm, eps)
    measure = {
        "linf": lambda v: np.abs(v).max(initial=0.0),
        "l2": np.linalg.norm,
        "l1": lambda v: np.abs(v).sum(),
    }[norm]
    assert measure(out) <= eps + 1e-12


def test_formula_prefix_parse_and_tokens():
    idx = {"a": 0, "b": 1}
    f = Formula.parse(["*", "2", "+", "f:a", "f:b"], idx)
    assert f.evaluate(np.array([3.0, 4.0])) == 14.0
    assert f.references() == {0, 1}


def test_perturbable_indices_respects_mask_and_groups():
    s = flow_schema(mask={0, 1, 2, 4})
    # independent features are 0 and 4; mask excludes nothing relevant here
    assert list(s.perturbable_indices()) == [0, 4]
    s2 = flow_schema(mask={4})
    assert list(s2.perturbable_indices()) == [4]
