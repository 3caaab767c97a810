"""The numba kernels and their numpy fallbacks agree on random inputs."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from myopic_mtrl import _backend, kernels
from myopic_mtrl.mdp import greedy_actions, random_mdp

pytestmark = pytest.mark.skipif(not _backend.HAVE_NUMBA, reason="numba not installed")

shapes = st.tuples(st.integers(0, 10_000), st.integers(1, 5), st.integers(1, 4), st.integers(1, 5))


def _instance(seed, S, A, H):
    rng = np.random.default_rng(seed)
    M = random_mdp(rng, S, A, H, sparsity=0.4)
    pi = rng.dirichlet(np.ones(A), size=(H, S))
    return rng, M, pi


@settings(max_examples=40, deadline=None)
@given(shapes)
def test_dp_kernels_agree(args):
    rng, M, pi = _instance(*args)
    np.testing.assert_allclose(kernels.occupancy_nb(M.P, pi, M.s1), kernels.occupancy_np(M.P, pi, M.s1),
                               atol=1e-13)
    for x, y in zip(kernels.evaluate_nb(M.P, M.R, pi), kernels.evaluate_np(M.P, M.R, pi)):
        np.testing.assert_allclose(x, y, atol=1e-13)
    for x, y in zip(kernels.optimal_nb(M.P, M.R), kernels.optimal_np(M.P, M.R)):
        np.testing.assert_allclose(x, y, atol=1e-13)
    acts = greedy_actions(rng.random((M.H + 1, M.S, M.A)), M.H)
    assert kernels.evaluate_actions_nb(M.P, M.R, acts, M.s1) == pytest.approx(
        kernels.evaluate_actions_np(M.P, M.R, acts, M.s1), abs=1e-13)
    np.testing.assert_allclose(kernels.max_reach_nb(M.P, M.s1), kernels.max_reach_np(M.P, M.s1), atol=1e-13)


@settings(max_examples=40, deadline=None)
@given(shapes)
def test_sampling_kernels_draw_identical_paths(args):
    rng, M, pi = _instance(*args)
    cum = np.cumsum(pi, axis=-1)
    u = rng.random(2 * M.H)
    for x, y in zip(kernels.sample_nb(M.P_cum, M.R, cum, M.s1, u), kernels.sample_np(M.P_cum, M.R, cum, M.s1, u)):
        np.testing.assert_array_equal(x, y)


@settings(max_examples=40, deadline=None)
@given(shapes)
def test_fqi_kernels_agree(args):
    rng, M, _ = _instance(*args)
    H, S, A = M.H, M.S, M.A
    count = rng.integers(0, 3, size=(H, S, A)).astype(float)
    next_count = np.zeros((H, S, A, S))
    for idx in np.ndindex(H, S, A):
        if count[idx]:
            next_count[idx] = rng.multinomial(int(count[idx]), np.ones(S) / S)
    reward_sum = count * rng.random((H, S, A))
    np.testing.assert_allclose(kernels.fqi_counts_nb(count, reward_sum, next_count, 0.0),
                               kernels.fqi_counts_np(count, reward_sum, next_count, 0.0), atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 12))
def test_jacobi_kernels_agree(seed, d):
    X = np.random.default_rng(seed).standard_normal((d, d))
    C = X @ X.T
    np.testing.assert_allclose(kernels.jacobi_eigenvalues_nb(C, 1e-13, 100),
                               kernels.jacobi_eigenvalues_np(C, 1e-13, 100), atol=1e-9)


def test_backend_flag_matches_binding():
    expected = kernels.occupancy_nb if _backend.USE_NUMBA else kernels.occupancy_np
    assert kernels.occupancy is expected
