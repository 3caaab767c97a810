import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from myopic_mtrl.exploration import ExplorationSchedule, gaussian_expl
from myopic_mtrl.linear import min_eigenvalue
from myopic_mtrl.lqr import (
    IllPosedError,
    LQRSystem,
    explored_rollout,
    gen_diverse_lqr,
    lqr_regularity,
    lqr_value,
    max_projection,
    random_lqr,
    riccati,
    riccati_optimality_check,
    rollout,
    state_covariance,
)


def scalar(H=2, ra=-2.0):
    one = np.ones((1, 1))
    return LQRSystem(np.repeat(one[None], H, axis=0), one, one, ra * one, np.ones(1))


# -------------------------------------------------------------------- riccati


def test_terminal_case():
    sys = random_lqr(np.random.default_rng(0), 3, 2, 1)
    sol = riccati(sys)
    np.testing.assert_array_equal(sol.P[0], sys.Rs[0])
    np.testing.assert_array_equal(sol.F[0], 0.0)


def test_zero_state_reward_gives_zero_solution():
    rng = np.random.default_rng(1)
    sys = random_lqr(rng, 2, 2, 3)
    sys = LQRSystem(sys.A, sys.B, np.zeros_like(sys.Rs), sys.Ra, sys.s1)
    sol = riccati(sys)
    assert np.all(sol.P == 0) and np.all(sol.F == 0)
    assert riccati_optimality_check(sys, sol, 10, rng) == (0.0, 0.0)


def test_scalar_hand_recursion():
    # P2 = 0; K1 = -2 -> F1 = 0, P1 = 1; K0 = -2 + 1 = -1 -> F0 = 1, P0 = 1 + 1 + 1 = 3
    sol = riccati(scalar())
    np.testing.assert_allclose(sol.P[:, 0, 0], [3.0, 1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(sol.F[:, 0, 0], [1.0, 0.0], atol=1e-15)
    analytic, grid = riccati_optimality_check(scalar(), sol, 50, np.random.default_rng(2))
    assert analytic <= 1e-10 and grid <= 1e-10


def test_unit_action_cost_scalar_is_ill_posed():
    with pytest.raises(IllPosedError, match="step 1"):
        riccati(scalar(ra=-1.0))


def test_positive_action_reward_rejected():
    one = np.ones((1, 1))
    with pytest.raises(ValueError):
        LQRSystem(one[None], one, one, one, np.ones(1))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_riccati_beats_random_gains(seed):
    rng = np.random.default_rng(seed)
    sys = random_lqr(rng, int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(1, 5)))
    sol = riccati(sys)
    v = sol.value(sys.s1)
    assert lqr_value(sys, sol.F) == pytest.approx(v, abs=1e-9 * max(1, abs(v)))
    for _ in range(20):
        assert lqr_value(sys, rng.standard_normal(sol.F.shape)) <= v + 1e-8


def test_riccati_value_matches_grid_over_action_sequences():
    # brute force over a fine grid of open-loop scalar actions for H = 2
    sys = scalar()
    s1 = sys.s1
    axis = np.linspace(-3, 3, 101)
    best = -np.inf
    for a0, a1 in itertools.product(axis, axis):
        s = s1[0]
        total = s * s - 2 * a0 * a0
        s = s + a0
        total += s * s - 2 * a1 * a1
        best = max(best, total)
    assert best <= riccati(sys).value(s1) + 1e-12
    assert best == pytest.approx(3.0, abs=1e-3)


# ---------------------------------------------------------------------- value


def test_zero_gains_zero_reward():
    sys = random_lqr(np.random.default_rng(3), 2, 2, 3)
    sys = LQRSystem(sys.A, sys.B, np.zeros_like(sys.Rs), sys.Ra, sys.s1)
    assert lqr_value(sys, np.zeros((3, 2, 2))) == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_value_matches_forward_simulation(seed):
    rng = np.random.default_rng(seed)
    sys = random_lqr(rng, 3, 2, 4)
    G = rng.standard_normal((4, 2, 3))
    assert lqr_value(sys, G) == pytest.approx(rollout(sys, G)[2], abs=1e-10)


def test_json_round_trip():
    sys = random_lqr(np.random.default_rng(4), 2, 1, 3)
    sys2 = LQRSystem.from_json(sys.to_json())
    for name in ("A", "B", "Rs", "Ra", "s1"):
        np.testing.assert_array_equal(getattr(sys2, name), getattr(sys, name))


# ---------------------------------------------------------------------- tasks


def test_diverse_lqr_count_and_structure():
    rng = np.random.default_rng(5)
    A = 0.5 * rng.standard_normal((2, 2))
    B = 0.5 * rng.standard_normal((2, 1))
    tasks = gen_diverse_lqr(A, B, 2, 2)
    assert [tid for tid, _ in tasks] == ["e0-h1", "e1-h1", "e0-h2", "e1-h2"]
    for tid, sys in tasks:
        riccati(sys)
        assert np.count_nonzero(sys.Rs) == 1
    # the last-step task for coordinate 1 rewards [s_H]_1^2 only
    Rs = dict(tasks)["e1-h2"].Rs
    assert Rs[1, 1, 1] == 1.0 and Rs.sum() == 1.0


def test_diverse_lqr_flags_large_inputs():
    A = 3.0 * np.eye(2)
    B = 3.0 * np.ones((2, 1))
    with pytest.raises(IllPosedError):
        for _, sys in gen_diverse_lqr(A, B, 3, 2):
            riccati(sys)


# ----------------------------------------------------------------- covariance


def _sched(H, eps, sigma=1.0):
    return ExplorationSchedule("gaussian", (eps,) * H, (sigma,) * H)


def test_deterministic_gain_covariance_follows_trajectory():
    rng = np.random.default_rng(6)
    sys = random_lqr(rng, 3, 2, 3)
    sys = LQRSystem(sys.A, sys.B, sys.Rs, sys.Ra, np.array([1.0, 0.0, 0.0]))
    G = rng.standard_normal((3, 2, 3))
    states, _, _ = rollout(sys, G)
    pol = gaussian_expl(G, _sched(3, 0.0))
    for h in range(4):
        np.testing.assert_allclose(state_covariance(sys, pol, h), np.outer(states[h], states[h]), atol=1e-12)


def test_pure_noise_push_forward():
    rng = np.random.default_rng(7)
    sys = random_lqr(rng, 3, 2, 2)
    sys = LQRSystem(np.zeros_like(sys.A), sys.B, sys.Rs, sys.Ra, sys.s1)
    sigma = 0.7
    pol = gaussian_expl(np.zeros((2, 2, 3)), _sched(2, 1.0, sigma))
    np.testing.assert_allclose(state_covariance(sys, pol, 1), sigma**2 * sys.B[0] @ sys.B[0].T, atol=1e-14)


@pytest.mark.parametrize("mode", ["mixture", "additive"])
def test_covariance_matches_monte_carlo(mode):
    rng = np.random.default_rng(8)
    sys = random_lqr(rng, 2, 2, 3)
    pol = gaussian_expl(0.3 * rng.standard_normal((3, 2, 2)), _sched(3, 0.4, 0.5), mode)
    exact = state_covariance(sys, pol, 3)
    n = 20_000
    draws = np.array([explored_rollout(sys, pol, rng)[0][3] for _ in range(n)])
    emp = draws.T @ draws / n
    np.testing.assert_allclose(emp, exact, atol=0.05 * np.abs(exact).max())


def test_mixture_of_task_policies_has_full_rank_covariance():
    rng = np.random.default_rng(9)
    ds, H = 3, 3
    A = 0.6 * rng.standard_normal((ds, ds)) / np.sqrt(ds)
    B = 0.6 * rng.standard_normal((ds, 2)) / np.sqrt(ds)
    tasks = gen_diverse_lqr(A, B, H, ds)
    sched = _sched(H, 1 / 2, 1.0)
    h = 1
    members = [gaussian_expl(riccati(sys).F, sched) for tid, sys in tasks if tid.endswith(f"h{h + 1}")]
    assert len(members) == ds
    assert min_eigenvalue(state_covariance(tasks[0][1], members, h + 1)) > 0


# ----------------------------------------------------------------- regularity


def test_scalar_stable_system_has_finite_norms():
    one = np.ones((1, 1))
    sys = LQRSystem(np.repeat(0.5 * one[None], 3, axis=0), one, one, -2 * one, np.ones(1))
    reg = lqr_regularity(sys, [riccati(sys).F])
    assert np.isfinite(reg.b4) and np.isfinite(reg.b5)


def test_zero_input_matrix_limits_coverage_to_autonomous_reach():
    rng = np.random.default_rng(10)
    sys = random_lqr(rng, 2, 1, 2)
    sys = LQRSystem(sys.A, np.zeros_like(sys.B), sys.Rs, sys.Ra, sys.s1)
    reg = lqr_regularity(sys, [])
    auto = [sys.s1, sys.A[0] @ sys.s1, sys.A[1] @ sys.A[0] @ sys.s1]
    expected = min(float(nu @ auto[h]) for h in (1, 2) for nu in reg.directions)
    assert reg.b3 == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("seed", range(3))
def test_max_projection_matches_action_grid(seed):
    rng = np.random.default_rng(seed)
    sys = random_lqr(rng, 2, 1, 2)
    axis = np.linspace(-1, 1, 401)
    for nu in (np.array([1.0, 0.0]), np.array([0.6, -0.8])):
        best = -np.inf
        for a0 in axis:
            s1 = sys.A[0] @ sys.s1 + sys.B[0][:, 0] * a0
            s2 = (sys.A[1] @ s1)[:, None] + np.outer(sys.B[1][:, 0], axis)
            best = max(best, float((nu @ s2).max()))
        exact = max_projection(sys, 2, nu)
        assert best <= exact + 1e-12
        assert best == pytest.approx(exact, rel=0.02, abs=1e-3)
