import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from frmomentum.adversarial import (
    FGSM_EPS,
    AttackConfig,
    adversarial_training_epoch,
    clip_to_ball,
    eval_ifgsm,
    fgsm_attack,
    fgsm_preset,
    ifgsm_attack,
    natural_training_epoch,
    robust_accuracy,
    robustness_report,
    train_ifgsm10,
    write_robustness_csv,
)
from frmomentum.objectives import MlpModel, make_rng, two_moons
from frmomentum.optimizers import StepDecaySchedule, make_optimizer


class LinearScore:
    """Loss c^T x per sample; its input gradient is c everywhere."""

    def __init__(self, c):
        self.c = np.asarray(c, dtype=float)

    def input_gradient(self, w, X, y):
        return np.broadcast_to(self.c, np.shape(X)).copy()

    def predict(self, w, X):
        return (np.atleast_2d(X) @ self.c > 0).astype(int)


# configs -----------------------------------------------------------------


def test_presets():
    assert fgsm_preset() == AttackConfig(8 / 255, 8 / 255, 1, 0.0, 1.0)
    t = train_ifgsm10()
    assert (t.epsilon, t.step_size, t.iterations) == (8 / 255, 2 / 255, 10)
    for m in (10, 20, 40, 100):
        e = eval_ifgsm(m)
        assert (e.epsilon, e.step_size, e.iterations) == (FGSM_EPS, 1 / 255, m)


@pytest.mark.parametrize("kw", [dict(epsilon=0.1, step_size=0.2), dict(epsilon=0.1, step_size=0.05, clip_low=1.0, clip_high=1.0),
                                dict(epsilon=0.1, step_size=0.05, iterations=0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        AttackConfig(**kw)


# FGSM --------------------------------------------------------------------


def test_fgsm_zero_radius_is_identity():
    x = np.array([0.2, 0.5, 0.9])
    ex = fgsm_attack(LinearScore([1.0, -2.0, 0.5]), None, x, 1, AttackConfig(0.0, 0.0))
    np.testing.assert_array_equal(ex.perturbed, x)


def test_fgsm_linear_model_hand_sign():
    x = np.array([0.5, 0.5, 0.5])
    ex = fgsm_attack(LinearScore([1.0, -2.0, 0.0]), None, x, 1, AttackConfig(0.1, 0.1))
    np.testing.assert_allclose(ex.perturbed - x, [0.1, -0.1, 0.0], atol=1e-15)


def test_fgsm_respects_range():
    x = np.array([0.98, 0.01])
    ex = fgsm_attack(LinearScore([1.0, -1.0]), None, x, 1, AttackConfig(0.1, 0.1))
    np.testing.assert_array_equal(ex.perturbed, [1.0, 0.0])


def test_ifgsm_single_full_step_equals_fgsm():
    m = MlpModel((2, 6, 2))
    rng = make_rng(0)
    w = m.init_params(rng)
    X = rng.uniform(0, 1, (20, 2))
    y = rng.integers(0, 2, 20)
    cfg = AttackConfig(0.07, 0.07, 1)
    np.testing.assert_array_equal(ifgsm_attack(m, w, X, y, cfg).perturbed, fgsm_attack(m, w, X, y, cfg).perturbed)


class MarginLoss(LinearScore):
    """Predicts sign of c^T x; loss -c^T x, so the attack pushes the score down."""

    def input_gradient(self, w, X, y):
        return -super().input_gradient(w, X, y)


def test_attack_reports_labels_before_and_after():
    ex = fgsm_attack(MarginLoss([1.0, 1.0]), None, np.array([0.05, 0.05]), 1, AttackConfig(0.1, 0.1, 1, -1, 1))
    assert ex.label_before == 1 and ex.label_after == 0


# invariants --------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 0.5), st.floats(0, 1), st.integers(1, 15))
def test_ifgsm_stays_in_ball_and_range(seed, eps, frac, iters):
    rng = make_rng(seed)
    m = MlpModel((2, 5, 2))
    w = m.init_params(rng) * 3
    lo = rng.uniform(-1, 0)
    hi = lo + rng.uniform(0.2, 2)
    X = rng.uniform(lo, hi, (8, 2))
    cfg = AttackConfig(eps, eps * frac, iters, lo, hi)
    P = ifgsm_attack(m, w, X, rng.integers(0, 2, 8), cfg).perturbed
    assert np.max(np.abs(P - X)) <= eps + 1e-12
    assert P.min() >= lo and P.max() <= hi


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1))
def test_projections_commute(seed, eps):
    rng = make_rng(seed)
    x = rng.uniform(0, 1, 5)
    z = x + rng.uniform(-2, 2, 5)
    cfg = AttackConfig(eps, 0.0)
    ball_then_range = clip_to_ball(z, x, cfg)
    range_then_ball = np.clip(np.clip(z, 0, 1), x - eps, x + eps)
    np.testing.assert_array_equal(ball_then_range, range_then_ball)


# training ----------------------------------------------------------------


def _setup(seed=0):
    model = MlpModel((2, 8, 2))
    data = two_moons(60, 0.1, 3, False)
    rng = make_rng(seed)
    w = model.init_params(rng)
    opt = make_optimizer("momentum", beta=0.9)
    return model, data, rng, w, opt


def test_zero_radius_training_is_natural_training():
    model, data, _, w0, opt = _setup()
    sched = StepDecaySchedule(0.1)
    rng_a, rng_b = make_rng(4), make_rng(4)
    wa, sa = w0, opt.init(model.n_params)
    wb, sb = w0, opt.init(model.n_params)
    for epoch in range(3):
        wa, sa, _ = natural_training_epoch(model, wa, data, opt, sa, sched, epoch, rng_a, 16)
        wb, sb, _ = adversarial_training_epoch(model, wb, data, AttackConfig(0.0, 0.0, 10, -3, 3), opt, sb,
                                               sched, epoch, rng_b, 16)
    assert wa.tobytes() == wb.tobytes()


def test_training_epoch_reports_stats_and_reduces_loss():
    model, data, rng, w, opt = _setup(1)
    state = opt.init(model.n_params)
    sched = StepDecaySchedule(0.1, (5,))
    before = model.loss(w, data.inputs, data.labels)
    for epoch in range(10):
        w, state, stats = natural_training_epoch(model, w, data, opt, state, sched, epoch, rng, 10)
    assert stats["lr"] == pytest.approx(0.01) and stats["beta"] == 0.9
    assert model.loss(w, data.inputs, data.labels) < before


def _trained(seed=2):
    model, data, rng, w, opt = _setup(seed)
    state = opt.init(model.n_params)
    sched = StepDecaySchedule(0.1)
    for epoch in range(30):
        w, state, _ = natural_training_epoch(model, w, data, opt, state, sched, epoch, rng, 10)
    return model, data, w


def test_robust_accuracy_identities():
    model, data, w = _trained()
    clean = float(np.mean(model.predict(w, data.inputs) == data.labels))
    assert robust_accuracy(model, w, data) == clean
    assert robust_accuracy(model, w, data, "ifgsm", AttackConfig(0.0, 0.0, 5, -3, 3)) == clean
    with pytest.raises(ValueError):
        robust_accuracy(model, w, data, "pgd")


def test_more_iterations_do_not_help_the_defender_much():
    model, data, w = _trained()
    a10 = robust_accuracy(model, w, data, "ifgsm", AttackConfig(0.3, 0.03, 10, -3, 3))
    a40 = robust_accuracy(model, w, data, "ifgsm", AttackConfig(0.3, 0.03, 40, -3, 3))
    assert a40 <= a10 + 0.02


def test_robustness_csv(tmp_path):
    model, data, w = _trained()
    rows = robustness_report(model, w, data, [("natural", "none", None),
                                              ("ifgsm10", "ifgsm", AttackConfig(0.2, 0.05, 10, -3, 3))])
    write_robustness_csv(rows, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "attack_name,epsilon,step,iters,accuracy"
    assert lines[1].startswith("natural,0,0,0,")
    assert rows[1].accuracy <= rows[0].accuracy
