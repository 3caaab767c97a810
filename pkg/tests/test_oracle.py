import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from myopic_mtrl.linear import embed_tabular
from myopic_mtrl.mdp import Episode, greedy_actions, optimal_values, random_mdp, sample_episode, uniform_policy
from myopic_mtrl.oracle import Dataset, fqi_linear, fqi_tabular, write_datasets_csv
from myopic_mtrl.tasks import FORWARD, hallway_task


def loop_fqi(records, S, A, H, default=0.0):
    """Per-cell mean of Bellman targets, computed record by record."""
    q = np.zeros((H + 1, S, A))
    for h in range(H - 1, -1, -1):
        sums = {}
        for hh, s, a, r, sn in records:
            if hh == h:
                sums.setdefault((s, a), []).append(r + max(q[h + 1, sn]))
        for s in range(S):
            for a in range(A):
                vals = sums.get((s, a))
                q[h, s, a] = np.mean(vals) if vals else default
    return q


def full_coverage(M):
    D = Dataset(M.S, M.A, M.H)
    for h in range(M.H):
        for s in range(M.S):
            for a in range(M.A):
                D.add_record(h, s, a, M.R[h, s, a], int(np.argmax(M.P[h, s, a])))
    return D


def test_empty_dataset_gives_zero_q_and_action_zero():
    q = fqi_tabular(Dataset(3, 2, 4))
    assert q.shape == (5, 3, 2) and np.all(q == 0)
    assert np.all(greedy_actions(q, 4) == 0)


def test_single_goal_episode_is_retraced():
    M = hallway_task(5, 5)
    D = Dataset(M.S, M.A, M.H)
    ep = Episode(np.arange(6), np.full(5, FORWARD), np.array([0, 0, 0, 0, 1.0]))
    D.add_episode(ep)
    acts = greedy_actions(fqi_tabular(D), 5)
    assert [acts[h, h] for h in range(5)] == [FORWARD] * 5


def test_full_coverage_of_deterministic_mdp_recovers_optimum():
    M = hallway_task(6, 4)
    np.testing.assert_allclose(fqi_tabular(full_coverage(M)), optimal_values(M).q, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 20))
def test_matches_record_loop(seed, n_episodes):
    rng = np.random.default_rng(seed)
    M = random_mdp(rng, 3, 2, 3, sparsity=0.3)
    D = Dataset(3, 2, 3)
    for _ in range(n_episodes):
        D.add_episode(sample_episode(M, uniform_policy(M), rng))
    for default in (0.0, 1.0):
        np.testing.assert_allclose(fqi_tabular(D, default=default), loop_fqi(D.records(), 3, 2, 3, default),
                                   atol=1e-12)


def test_record_order_does_not_matter():
    rng = np.random.default_rng(1)
    M = random_mdp(rng, 3, 2, 3)
    eps = [sample_episode(M, uniform_policy(M), rng) for _ in range(15)]
    a = Dataset(3, 2, 3).extend(eps)
    b = Dataset(3, 2, 3).extend(eps[::-1])
    np.testing.assert_array_equal(fqi_tabular(a), fqi_tabular(b))


def test_out_of_range_record_rejected():
    D = Dataset(2, 2, 2)
    with pytest.raises(ValueError):
        D.add_record(2, 0, 0, 0.0, 0)
    with pytest.raises(ValueError):
        D.add_record(0, 0, 2, 0.0, 0)


# ---------------------------------------------------------------------- linear


def test_linear_empty_dataset_zero_weights():
    feats = np.random.default_rng(0).random((3, 2, 2, 4)) / 4
    assert np.all(fqi_linear(Dataset(2, 2, 3), feats).w == 0)


def test_linear_one_hot_matches_tabular():
    M = random_mdp(np.random.default_rng(2), 3, 2, 3)
    D = full_coverage(M)
    rng = np.random.default_rng(3)
    for _ in range(30):
        D.add_episode(sample_episode(M, uniform_policy(M), rng))
    q_lin = fqi_linear(D, embed_tabular(M).phi).q_values(embed_tabular(M).phi)
    np.testing.assert_allclose(q_lin, fqi_tabular(D), atol=1e-6)


def test_linear_action_independent_features_tie_to_zero():
    rng = np.random.default_rng(4)
    M = random_mdp(rng, 3, 3, 2)
    feats = np.repeat(rng.random((2, 3, 1, 2)) / 2, 3, axis=2)
    D = Dataset(3, 3, 2)
    for _ in range(10):
        D.add_episode(sample_episode(M, uniform_policy(M), rng))
    q = fqi_linear(D, feats).q_values(feats)
    assert np.all(greedy_actions(q, 2) == 0)


def test_datasets_csv(tmp_path):
    M = hallway_task(3, 3)
    D = Dataset(M.S, M.A, M.H)
    D.add_episode(sample_episode(M, uniform_policy(M), np.random.default_rng(0)))
    path = tmp_path / "data.csv"
    write_datasets_csv(path, {"goal3": D})
    lines = path.read_text().splitlines()
    assert lines[0] == "task_id,episode,h,s,a,r,s_next"
    assert len(lines) == 4 and lines[1].split(",")[2] == "1"
