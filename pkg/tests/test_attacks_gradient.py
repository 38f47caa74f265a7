import numpy as np
import pytest

from tabadv.attacks import AttackParams, get_attack
from tabadv.attacks.gradient import bim, cw, deepfool, fgsm, jsma, pgd, saliency_map
from tabadv.constraints import ConstraintSchema
from tabadv.data import synth, split
from tabadv.models import train
from tabadv.models.base import CapabilityError, QueryCounter
from tabadv.models.linear import LogisticRegression


def lr_model(w, b=0.0):
    m = LogisticRegression(len(w))
    m.w = np.asarray(w, dtype=float)
    m.b = b
    return m


def box(d):
    return ConstraintSchema.unconstrained(d)


@pytest.fixture(scope="module")
def trained():
    ds = synth(150, 2, 3.5, seed=1)
    tr, va, te = split(ds, seed=2)
    return train("mlp", None, tr, seed=3), te.malicious()


# ---- fgsm -----------------------------------------------------------------

def test_fgsm_zero_budget_returns_input():
    m = lr_model([2.0, -1.0], b=2.0)
    x = np.array([0.6, 0.4])
    res = fgsm(m, x, 1, AttackParams(eps=0.0), box(2))
    assert np.array_equal(res.x_adv, x)
    assert res.success == (m.predict(x) != 1)


def test_fgsm_direction_matches_lr_closed_form():
    # closed form: for y=1 the loss gradient is (p1-1) w, so the signed step
    # is -sign(w) when p1 < 1, i.e. (-eps, +eps) for w=(1,-2)
    m = lr_model([1.0, -2.0], b=1.0)
    x = np.array([0.5, 0.5])
    eps = 0.05
    res = fgsm(m, x, 1, AttackParams(eps=eps), box(2))
    assert np.allclose(res.x_adv - x, [-eps, +eps])


def test_fgsm_uncontrollable_untouched():
    schema = ConstraintSchema(
        ["a", "b"], ["independent", "uncontrollable"], [0, 0], [1, 1]
    )
    m = lr_model([1.0, 1.0], b=-0.5)
    x = np.array([0.5, 0.5])
    res = fgsm(m, x, 1, AttackParams(eps=0.2), schema)
    assert res.x_adv[1] == x[1]


def test_fgsm_requires_gradients():
    ds = synth(30, 2, 2.0, seed=0)
    tree = train("decision_tree", None, ds, seed=0)
    with pytest.raises(CapabilityError):
        fgsm(tree, ds.X[0], 1, AttackParams(), box(2))


def test_fgsm_exactly_one_gradient_evaluation():
    m = lr_model([1.0, -2.0], b=1.0)
    x = np.array([0.5, 0.5])
    res = fgsm(m, x, 1, AttackParams(eps=0.05), box(2))
    assert res.queries == 2  # one gradient + the final success check


# ---- pgd ------------------------------------------------------------------

class Recorder:
    """Delegating model wrapper that logs every gradient-evaluation point."""

    def __init__(self, model):
        self._model = model
        self.grad_points = []

    def input_gradient(self, x, y):
        self.grad_points.append(np.array(x))
        return self._model.input_gradient(x, y)

    def __getattr__(self, name):
        return getattr(self._model, name)


def test_pgd_iterates_stay_in_ball(trained):
    model, mal = trained
    eps = 0.08
    detected = [i for i in range(mal.n_samples) if model.predict(mal.X[i]) == 1]
    x = mal.X[detected[0]]
    spy = Recorder(model)
    pgd(spy, x, 1, AttackParams(eps=eps, max_iter=15), box(2))
    assert spy.grad_points  # at least one iterate inspected
    for z in spy.grad_points:
        assert np.abs(z - x).max() <= eps + 1e-12


def test_pgd_single_big_step_saturates_linf_clamp():
    # oracle: one l2-normalized step of length alpha >> eps gets clamped to
    # the linf box corner selected by the gradient direction
    m = lr_model([3.0, -4.0], b=5.0)  # strongly malicious at x
    x = np.array([0.5, 0.5])
    eps = 0.1
    g = m.input_gradient(x, 1)
    expected = np.clip(10.0 * g / np.linalg.norm(g), -eps, eps)
    res = pgd(m, x, 1, AttackParams(eps=eps, step_size=10.0, max_iter=1), box(2))
    assert np.allclose(res.x_adv - x, expected, atol=1e-12)


def test_pgd_zero_eps_returns_input(trained):
    model, mal = trained
    res = pgd(model, mal.X[0], 1, AttackParams(eps=0.0, max_iter=5), box(2))
    assert np.array_equal(res.x_adv, mal.X[0])


def test_pgd_zero_gradient_flagged():
    m = lr_model([0.0, 0.0], b=3.0)  # constant model, p1 fixed
    res = pgd(m, np.array([0.4, 0.4]), 1, AttackParams(eps=0.1, max_iter=5), box(2))
    assert "zero-gradient" in res.flags
    assert not res.success


# ---- bim ------------------------------------------------------------------

def test_bim_a_stops_immediately_when_already_misclassified():
    m = lr_model([1.0, 1.0], b=-5.0)  # predicts benign everywhere near 0
    x = np.array([0.2, 0.2])
    res = bim(m, x, 1, AttackParams(eps=0.1, max_iter=10), box(2), variant="A")
    assert res.iterations == 0
    assert np.array_equal(res.x_adv, x)
    assert res.success


def test_bim_b_always_runs_full_budget(trained):
    model, mal = trained
    res = bim(model, mal.X[0], 1, AttackParams(eps=0.05, max_iter=7), box(2), variant="B")
    assert res.iterations == 7


def test_bim_single_full_step_equals_fgsm():
    rng = np.random.default_rng(0)
    for _ in range(10):
        m = lr_model(rng.normal(size=3), b=float(rng.normal()))
        x = rng.random(3)
        eps = 0.07
        a = fgsm(m, x, 1, AttackParams(eps=eps), box(3))
        b = bim(m, x, 1, AttackParams(eps=eps, step_size=eps, max_iter=1), box(3),
                variant="B")
        assert np.allclose(a.x_adv, b.x_adv, atol=1e-12)


# ---- cw -------------------------------------------------------------------

def test_cw_already_benign_returns_zero_distance():
    m = lr_model([1.0, 1.0], b=-5.0)
    x = np.array([0.1, 0.1])
    res = cw(m, x, 1, AttackParams(eps=np.inf, norm="l2", max_iter=20), box(2))
    assert res.success and res.norms[1] == 0.0


def test_cw_penalty_monotonicity():
    # sweep oracle: success count can only grow with the penalty weight
    ds = synth(60, 2, 5.0, seed=5)
    tr, va, te = split(ds, seed=6)
    model = train("lr", None, tr, seed=7)
    mal = te.malicious()
    counts = []
    for c in (0.1, 1.0, 10.0):
        p = AttackParams(eps=np.inf, norm="l2", max_iter=60, penalty=c, step_size=0.05)
        n = sum(
            cw(model, mal.X[i], 1, p, box(2), seed=i).success
            for i in range(mal.n_samples)
        )
        counts.append(n)
    assert counts[0] <= counts[1] <= counts[2]


def test_cw_output_within_feature_box(trained):
    model, mal = trained
    res = cw(model, mal.X[0], 1, AttackParams(eps=np.inf, norm="l2", max_iter=40), box(2))
    assert np.all(res.x_adv >= 0.0) and np.all(res.x_adv <= 1.0)


# ---- deepfool ---------------------------------------------------------------

def test_deepfool_affine_single_step_hits_boundary():
    # closed form: for log-odds w.x + b the minimal step is -f(x) w / |w|^2
    rng = np.random.default_rng(2)
    for _ in range(10):
        w = rng.normal(size=3)
        b = float(rng.normal())
        m = lr_model(w, b)
        x = rng.random(3)
        f = float(w @ x + b)
        if abs(f) < 1e-3:
            continue
        r = -f * w / np.dot(w, w)
        assert abs(w @ (x + r) + b) < 1e-10  # dead on the boundary
        assert np.linalg.norm(r) == pytest.approx(abs(f) / np.linalg.norm(w))
        y = 1 if f > 0 else 0
        wide = ConstraintSchema.unconstrained(3, lo=-10.0, hi=10.0)
        res = deepfool(m, x, y, AttackParams(eps=np.inf, norm="l2", max_iter=10), wide)
        assert res.success
        # one overshoot step should land close to the analytic distance
        assert res.norms[1] <= (1 + 0.02) * abs(f) / np.linalg.norm(w) + 1e-9


def test_deepfool_boundary_point_degenerate():
    m = lr_model([1.0, -1.0], b=0.0)
    x = np.array([0.5, 0.5])  # exactly on the boundary: p=(0.5,0.5) -> benign tie
    res = deepfool(m, x, 1, AttackParams(eps=np.inf, norm="l2", max_iter=5), box(2))
    assert res.success and res.norms[1] == 0.0


# ---- jsma -------------------------------------------------------------------

def test_saliency_zero_branch():
    d_target = np.array([-0.5, 0.2, 0.1])
    d_other = -d_target
    S = saliency_map(d_target, d_other)
    assert S[0] == 0.0
    assert S[1] > 0 and S[2] > 0


def test_jsma_picks_larger_product_feature():
    # hand-built two-feature log-odds slope: feature 1 has the larger |w|,
    # so its saliency product dominates and it must move first
    m = lr_model([-1.0, -3.0], b=2.2)
    x = np.array([0.2, 0.2])
    res = jsma(m, x, 1, AttackParams(eps=1.0, norm="l1", theta=0.1, max_iter=1), box(2))
    moved = np.flatnonzero(res.x_adv != x)
    assert list(moved) == [1]


def test_jsma_l1_budget_respected(trained):
    model, mal = trained
    budget = 0.3
    for i in range(min(10, mal.n_samples)):
        res = jsma(model, mal.X[i], 1,
                   AttackParams(eps=budget, norm="l1", theta=-0.25, max_iter=50), box(2))
        assert res.norms[0] <= budget + 1e-12


def test_jsma_saliency_exhausted_flag():
    # positive slopes: increasing any feature only raises the malicious
    # probability, so the upward saliency map is all zero
    m = lr_model([1.0, 1.0], b=0.0)
    x = np.array([0.5, 0.5])
    res = jsma(m, x, 1, AttackParams(eps=1.0, norm="l1", theta=0.2, max_iter=10), box(2))
    assert not res.success
    assert "saliency-exhausted" in res.flags
