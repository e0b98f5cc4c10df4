import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from frmomentum.objectives import QuadraticProblem, QuadraticSum, make_rng, random_spd_problem
from frmomentum.optimizers import (
    BETA_GUARD,
    FRSGD_240_EPOCH_SCHEDULE,
    SGD_200_EPOCH_SCHEDULE,
    AdamState,
    FrState,
    MomentumState,
    StepDecaySchedule,
    adam_step,
    armijo_line_search,
    epoch_batches,
    exact_quadratic_line_search,
    fr_beta,
    frgd_step,
    frsgd_step,
    gd_step,
    heavyball_optimal_preset,
    lookahead_point,
    make_optimizer,
    momentum_step,
    nag_beta,
    ncg_fr_step,
    nesterov_step,
)
from frmomentum.theory import cg_reference_solve

vec = st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=6).map(np.array)


# Fletcher-Reeves ratio ---------------------------------------------------


def test_fr_beta_examples():
    assert fr_beta(4.0, 4.0) == 1.0
    assert fr_beta(4.0, 1.0) == 4.0
    assert fr_beta(1.0, 0.0) == 0.0


def test_frgd_guard_declares_convergence():
    state = FrState(np.ones(2), prev_grad_sq=0.5 * BETA_GUARD, step_count=3)
    w = np.array([1.0, 2.0])
    w2, st2, beta = frgd_step(w, np.array([1e-13, 0.0]), state, 0.1)
    assert st2.converged and beta == 0.0
    np.testing.assert_array_equal(w2, w)


# GD ----------------------------------------------------------------------


def test_gd_examples():
    np.testing.assert_array_equal(gd_step(np.array([1.0]), np.array([1.0]), 0.5), [0.5])
    np.testing.assert_array_equal(gd_step(np.array([3.0, 4.0]), np.zeros(2), 0.5), [3.0, 4.0])


def test_gd_geometric_contraction():
    q = QuadraticProblem(np.eye(1), np.zeros(1))
    w = np.array([1.0])
    for _ in range(10):
        w = gd_step(w, q.gradient(w), 0.1)
    assert w[0] == pytest.approx(0.9**10, rel=1e-14)


# heavy ball / Nesterov ---------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(vec, st.floats(0.01, 2.0), st.floats(0.0, 0.99))
def test_momentum_first_step_is_gd(g, alpha, beta):
    w = np.zeros_like(g)
    w1, _ = momentum_step(w, g, MomentumState.zeros(g.size), alpha, beta)
    np.testing.assert_array_equal(w1, gd_step(w, g, alpha))


def test_momentum_zero_beta_is_gd():
    rng = make_rng(0)
    w, state = rng.standard_normal(3), MomentumState.zeros(3)
    for _ in range(5):
        g = rng.standard_normal(3)
        w_ref = gd_step(w, g, 0.2)
        w, state = momentum_step(w, g, state, 0.2, 0.0)
        np.testing.assert_array_equal(w, w_ref)


def test_momentum_two_step_hand_trace():
    state = MomentumState.zeros(1)
    w, state = momentum_step(np.zeros(1), np.ones(1), state, 1.0, 0.9)
    w, state = momentum_step(w, np.ones(1), state, 1.0, 0.9)
    assert w[0] == pytest.approx(-2.9, abs=1e-15)


def test_lookahead_at_zero_momentum_is_w():
    w = np.array([1.0, -2.0])
    np.testing.assert_array_equal(lookahead_point(w, MomentumState.zeros(2), 0.3), w)


def test_nesterov_matches_hand_rolled_reference():
    lam = np.array([1.0, 100.0])
    q = QuadraticProblem(np.diag(lam), np.zeros(2))
    alpha, beta = 0.01, 0.9
    w, state = np.ones(2), MomentumState.zeros(2)
    # reference: scalar per-coordinate recurrence on the diagonal quadratic
    x, v = [1.0, 1.0], [0.0, 0.0]
    for _ in range(200):
        w, state = nesterov_step(w, q.gradient(lookahead_point(w, state, alpha)), state, alpha, beta)
        for i in range(2):
            g = lam[i] * (x[i] - alpha * v[i])
            v[i] = beta * v[i] + g
            x[i] = x[i] - alpha * v[i]
        np.testing.assert_allclose(w, x, rtol=0, atol=1e-12)


def test_nag_beta_schedule():
    assert [nag_beta(n) for n in range(4)] == [0.0, 0.25, 0.4, 0.5]


def test_heavyball_presets():
    assert heavyball_optimal_preset(1, 1) == (1.0, 0.0)
    assert heavyball_optimal_preset(1, 9) == pytest.approx((0.25, 0.25))
    assert heavyball_optimal_preset(1, 100)[1] == pytest.approx((9 / 11) ** 2)


# FRGD / FRSGD ------------------------------------------------------------


def test_frgd_first_step_is_gd():
    g = np.array([0.3, -1.0])
    w1, st1, beta = frgd_step(np.zeros(2), g, FrState.zeros(2), 0.7)
    assert beta == 0.0
    np.testing.assert_array_equal(w1, gd_step(np.zeros(2), g, 0.7))
    np.testing.assert_array_equal(st1.p_prev, g)


def test_frgd_one_dimensional_hand_trace():
    q = QuadraticProblem(np.eye(1), np.zeros(1))
    w, state = np.array([1.0]), FrState.zeros(1)
    w, state, _ = frgd_step(w, q.gradient(w), state, 0.5)
    assert w[0] == 0.5
    w, state, beta = frgd_step(w, q.gradient(w), state, 0.5)
    assert beta == 0.25
    assert state.p_prev[0] == 0.75
    assert w[0] == 0.125


def test_frgd_restart_zeroes_beta():
    q = random_spd_problem(4, 10.0, make_rng(1))
    w, state = np.ones(4), FrState.zeros(4)
    betas = []
    for _ in range(7):
        w, state, beta = frgd_step(w, q.gradient(w), state, 0.01, restart_every=3)
        betas.append(beta)
    assert [b == 0.0 for b in betas] == [True, False, False, True, False, False, True]


def _two_sum():
    rng = make_rng(2)
    return QuadraticSum([random_spd_problem(3, 4.0, rng), random_spd_problem(3, 6.0, rng)])


def test_frsgd_full_batch_equals_frgd():
    obj = _two_sum()
    w1 = w2 = np.ones(3)
    s1 = s2 = FrState.zeros(3)
    for _ in range(10):
        w1, s1, _ = frsgd_step(w1, obj, [0, 1], s1, 0.05)
        w2, s2, _ = frgd_step(w2, obj.gradient(w2), s2, 0.05)
        np.testing.assert_allclose(w1, w2, atol=1e-15)


def test_frsgd_matches_hand_rolled_oracle():
    obj = _two_sum()
    schedule = [[0], [1], [0, 1], [1], [0]] * 2
    w, state = np.ones(3), FrState.zeros(3)
    x, p, prev = np.ones(3), np.zeros(3), None
    comps = obj.components
    for batch in schedule:
        w, state, _ = frsgd_step(w, obj, batch, state, 0.02)
        g = sum(comps[i].A @ x - comps[i].b for i in batch) / len(batch)
        rr = g @ g
        p = g + (0.0 if prev is None else rr / prev) * p
        x = x - 0.02 * p
        prev = rr
        np.testing.assert_allclose(w, x, rtol=0, atol=1e-12)


def test_frsgd_seeded_runs_are_identical():
    obj = _two_sum()

    def run(seed):
        rng = make_rng(seed)
        w, state = np.ones(3), FrState.zeros(3)
        for _ in range(10):
            for batch in epoch_batches(rng, 2, 1):
                w, state, _ = frsgd_step(w, obj, batch, state, 0.02)
        return w.tobytes()

    assert run(5) == run(5)


# FR nonlinear CG ---------------------------------------------------------


def test_ncg_exact_line_search_equals_cg_and_terminates():
    q = random_spd_problem(20, 500.0, make_rng(3))
    cg = cg_reference_solve(q)
    w, state = np.zeros(20), FrState.zeros(20)
    r0 = np.linalg.norm(q.b)
    for k in range(1, 23):
        w, state, _ = ncg_fr_step(w, q, state, "exact")
        if k < len(cg.iterates):
            assert np.linalg.norm(w - cg.iterates[k]) <= 1e-8 * np.linalg.norm(cg.iterates[k])
        if np.linalg.norm(q.gradient(w)) <= 1e-10 * r0:
            break
    assert np.linalg.norm(q.gradient(w)) <= 1e-10 * r0


def test_ncg_first_step_is_optimal_steepest_descent():
    q = random_spd_problem(5, 20.0, make_rng(4))
    w0 = make_rng(5).standard_normal(5)
    r = q.gradient(w0)
    w1, _, ls = ncg_fr_step(w0, q, FrState.zeros(5))
    assert ls.alpha == pytest.approx((r @ r) / (r @ q.A @ r), rel=1e-13)
    np.testing.assert_allclose(w1, w0 - ls.alpha * r, atol=1e-14)


def test_ncg_zero_gradient_start():
    q = QuadraticProblem(np.eye(2), np.zeros(2))
    w, state, ls = ncg_fr_step(np.zeros(2), q, FrState.zeros(2))
    assert ls.alpha == 0.0 and state.converged


def test_ncg_armijo_decreases_nonquadratic_objective():
    class Rosen:
        def value(self, w):
            return (1 - w[0]) ** 2 + 10 * (w[1] - w[0] ** 2) ** 2

        def gradient(self, w):
            return np.array([-2 * (1 - w[0]) - 40 * w[0] * (w[1] - w[0] ** 2), 20 * (w[1] - w[0] ** 2)])

    f = Rosen()
    w, state = np.array([-1.0, 1.0]), FrState.zeros(2)
    start = f.value(w)
    for _ in range(30):
        w, state, _ = ncg_fr_step(w, f, state, "armijo")
    assert f.value(w) < start


def test_armijo_sufficient_decrease():
    q = random_spd_problem(4, 10.0, make_rng(6))
    w = np.ones(4)
    r = q.gradient(w)
    ls = armijo_line_search(q.value, w, r, r)
    assert q.value(w - ls.alpha * r) <= q.value(w) - 1e-4 * ls.alpha * (r @ r)


def test_exact_line_search_formula():
    q = random_spd_problem(4, 10.0, make_rng(7))
    w, p = np.ones(4), make_rng(8).standard_normal(4)
    r = q.gradient(w)
    assert exact_quadratic_line_search(q, w, p, r).alpha == pytest.approx((p @ r) / (p @ q.A @ p))


# Adam --------------------------------------------------------------------


def test_adam_first_step_scalar():
    w, _ = adam_step(np.array([1.0]), np.array([1.0]), AdamState.zeros(1), 0.003)
    assert 1.0 - w[0] == pytest.approx(0.003, rel=1e-7)


def test_adam_zero_gradient_keeps_w():
    w, state = np.array([0.4, -0.2]), AdamState.zeros(2)
    for _ in range(5):
        w, state = adam_step(w, np.zeros(2), state, 0.01)
    np.testing.assert_array_equal(w, [0.4, -0.2])


def test_adam_runs_are_identical():
    def run():
        rng = make_rng(9)
        w, state = np.zeros(3), AdamState.zeros(3)
        for _ in range(20):
            w, state = adam_step(w, rng.standard_normal(3), state, 0.01)
        return w.tobytes()

    assert run() == run()


# schedules ---------------------------------------------------------------


def test_frsgd_schedule_preset():
    rates = [FRSGD_240_EPOCH_SCHEDULE.rate(e) for e in (0, 180, 220, 230)]
    np.testing.assert_allclose(rates, [0.5, 0.05, 0.005, 0.0005], rtol=1e-14)


def test_sgd_schedule_preset():
    rates = [SGD_200_EPOCH_SCHEDULE.rate(e) for e in (0, 80, 120, 160)]
    np.testing.assert_allclose(rates, [0.1, 0.01, 0.001, 0.0001], rtol=1e-14)


def test_constant_schedule():
    s = StepDecaySchedule(0.3)
    assert {s.rate(e) for e in range(0, 500, 7)} == {0.3}


def test_rescaled_milestones():
    assert FRSGD_240_EPOCH_SCHEDULE.rescaled(240, 100).milestones == (75, 92, 96)
    assert SGD_200_EPOCH_SCHEDULE.rescaled(200, 100).milestones == (40, 60, 80)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-4, 10), st.lists(st.integers(0, 300), max_size=5).map(sorted), st.floats(0.01, 1.0))
def test_schedule_is_nonincreasing(rate, milestones, factor):
    s = StepDecaySchedule(rate, tuple(milestones), factor)
    r = [s.rate(e) for e in range(320)]
    assert all(a >= b for a, b in zip(r, r[1:]))
    assert r[0] == rate or (milestones and milestones[0] == 0)


def test_schedule_validation():
    with pytest.raises(ValueError):
        StepDecaySchedule(0.1, (50, 10))
    with pytest.raises(ValueError):
        StepDecaySchedule(0.0)


# driver ------------------------------------------------------------------


def test_epoch_batches_partition():
    batches = epoch_batches(make_rng(10), 23, 5)
    assert [len(b) for b in batches] == [5, 5, 5, 5, 3]
    assert sorted(np.concatenate(batches).tolist()) == list(range(23))


def test_make_optimizer_validation():
    with pytest.raises(ValueError):
        make_optimizer("sgdw")
    with pytest.raises(ValueError):
        make_optimizer("frgd", beta=0.5)
    assert make_optimizer("momentum").beta == 0.9


@pytest.mark.parametrize("name", ["gd", "momentum", "nesterov", "nag", "frgd", "adam"])
def test_driver_decreases_a_quadratic(name):
    q = random_spd_problem(6, 10.0, make_rng(11))
    lmax = np.linalg.eigvalsh(q.A)[-1]
    opt = make_optimizer(name)
    w, state = np.zeros(6), opt.init(6)
    lr = 0.05 if name == "adam" else 0.1 / lmax
    for _ in range(300):
        w, state, _ = opt.step(w, q.gradient, state, lr)
    assert q.value(w) < q.value(np.zeros(6))


def test_driver_nesterov_evaluates_at_lookahead():
    seen = []
    opt = make_optimizer("nesterov", beta=0.5)
    state = MomentumState(np.array([2.0]), 1)
    opt.step(np.array([1.0]), lambda v: seen.append(v.copy()) or v, state, 0.25)
    np.testing.assert_array_equal(seen[0], [0.5])
