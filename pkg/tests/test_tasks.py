import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from myopic_mtrl.exploration import default_schedule, eps_greedy
from myopic_mtrl.mdp import TabularMDP, deterministic_policy, occupancy, optimal_values, random_mdp, validate_mdp
from myopic_mtrl.tasks import (
    BACKWARD,
    FORWARD,
    TaskSet,
    coverage_constant,
    extend_policy,
    gen_hallway,
    gen_sparse_set,
    hallway_single,
    max_reach,
    mirror_transform,
)

from oracles import brute_max_visit


def branch_chain(p=0.3):
    """Start state 0 moves to state 1 w.p. ``p`` and to state 2 otherwise; 1 and 2 absorb."""
    P = np.zeros((2, 3, 1, 3))
    P[0, 0, 0] = (0, p, 1 - p)
    P[:, 1, 0, 1] = P[:, 2, 0, 2] = 1.0
    P[1, 0, 0, 0] = 1.0
    return TabularMDP(P, np.zeros((2, 3, 1)))


# --------------------------------------------------------------------- hallway


def test_hallway_of_length_one():
    base, tasks = gen_hallway(1)
    assert base.S == 2 and len(tasks) == 1
    assert optimal_values(tasks[0]).value == 1.0


def test_hallway_tasks_solved_by_forward_moves():
    _, tasks = gen_hallway(4)
    for i, M in enumerate(tasks, start=1):
        sol = optimal_values(M)
        assert sol.value == 1.0
        # the optimal path walks forward i times from the start
        assert [sol.actions[h, h] for h in range(i)] == [FORWARD] * i
        assert not validate_mdp(M).errors


def test_hallway_actions_are_clamped():
    base, _ = gen_hallway(3)
    assert base.P[0, 0, BACKWARD, 0] == 1.0
    assert base.P[0, 3, FORWARD, 3] == 1.0
    assert base.P[0, 2, BACKWARD, 1] == 1.0


def test_backward_greedy_goal_occupancy_is_tiny():
    N = 8
    M = hallway_single(N)[0]
    pi = eps_greedy(deterministic_policy(np.full((N, N + 1), BACKWARD), 2), default_schedule(N, "thm2"))
    assert occupancy(M, pi)[N - 1, N - 1].sum() <= 2.0**-8


def test_taskset_rejects_mismatched_shapes():
    with pytest.raises(ValueError):
        TaskSet((gen_hallway(2)[1][0], gen_hallway(3)[1][0]))


# ------------------------------------------------------------------ sparse set


def test_sparse_set_count_and_ids():
    base = random_mdp(np.random.default_rng(0), 2, 2, 2)
    tasks = gen_sparse_set(base)
    assert len(tasks) == 4
    assert tasks.ids == ("s0-h1", "s1-h1", "s0-h2", "s1-h2")


@pytest.mark.parametrize("seed", range(3))
def test_sparse_task_optimum_is_max_visit_probability(seed):
    base = random_mdp(np.random.default_rng(seed), 2, 2, 3, sparsity=0.4)
    for (s, h), M in zip([(s, h) for h in range(3) for s in range(2)], gen_sparse_set(base)):
        assert optimal_values(M).value == pytest.approx(brute_max_visit(base.P, base.s1, h, s), abs=1e-12)


def test_sparse_diagonal_matches_hallway_goals():
    N = 5
    base, hall = gen_hallway(N)
    sparse = gen_sparse_set(base)
    for g, M in enumerate(hall, start=1):
        twin = sparse[sparse.ids.index(f"s{g - 1}-h{g}")]
        np.testing.assert_array_equal(twin.P, M.P)
        assert set(zip(*np.nonzero(twin.R.sum(-1)))) == set(zip(*np.nonzero(M.R.sum(-1))))
        assert optimal_values(twin).value == optimal_values(M).value == 1.0


# ------------------------------------------------------------------ reachability


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_max_reach_matches_enumeration(seed):
    M = random_mdp(np.random.default_rng(seed), 2, 2, 3, sparsity=0.5)
    reach = max_reach(M)
    for h in range(3):
        for s in range(2):
            assert reach[h, s] == pytest.approx(brute_max_visit(M.P, M.s1, h, s), abs=1e-12)


def test_hallway_coverage_is_one():
    base, _ = gen_hallway(6)
    b1, unreachable = coverage_constant(base)
    assert b1 == 1.0
    # off-schedule states (s > h) cannot be visited
    assert (3, 1) in unreachable and (1, 1) not in unreachable


def test_branch_coverage():
    assert coverage_constant(branch_chain(0.3))[0] == pytest.approx(0.3)


# ---------------------------------------------------------------------- mirror


def test_mirror_of_fully_reachable_base_only_adds_dummy():
    P = np.zeros((3, 1, 2, 1))
    P[...] = 1.0
    base = TabularMDP(P, np.zeros((3, 1, 2)))
    M2 = mirror_transform(base, 0.1)
    assert M2.S == 2
    np.testing.assert_array_equal(M2.P[:, :1, :, :1], base.P)
    assert np.all(M2.P[:, :1, :, 1] == 0)
    assert np.all(M2.P[:, 1, :, 1] == 1)


def test_mirror_redirects_rare_state():
    beta = 0.2
    base = branch_chain(beta / 2)
    M2 = mirror_transform(base, beta)
    assert M2.P[0, 0, 0, 1] == 0.0
    assert M2.P[0, 0, 0, 3] == pytest.approx(beta / 2)
    reach = max_reach(M2)
    S = base.S
    for h in range(base.H):
        assert reach[h, S] <= h * S * beta + 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.05, 0.1, 0.2, 0.4]))
def test_mirror_reach_gap_and_occupancy(seed, beta):
    rng = np.random.default_rng(seed)
    base = random_mdp(rng, 3, 2, 3, sparsity=0.5)
    M2 = mirror_transform(base, beta)
    reach = max_reach(M2)[:3, :3]
    assert np.all((reach == 0) | (reach > beta))
    kept = reach[1:, :][reach[1:, :] > 0]
    if kept.size:
        assert min(kept) > beta
    for _ in range(10):
        pi = rng.dirichlet(np.ones(2), size=(3, 3))
        mu = occupancy(base, pi)
        mu2 = occupancy(M2, extend_policy(pi, 4))[:, :3]
        assert np.all(mu2 >= mu - 3 * 3 * beta - 1e-9)


def test_mirror_rejects_nonpositive_beta():
    with pytest.raises(ValueError):
        mirror_transform(gen_hallway(2)[0], 0.0)
