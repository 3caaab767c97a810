"""Slow, independent reference computations used as test oracles.

Nothing here calls the package's dynamic-programming code: values come
from enumerating trajectories or policies directly.
"""

import itertools
import math

import numpy as np


def trajectories(P, pi, s1):
    """Yield ``(prob, states, actions)`` for every positive-probability trajectory."""
    H, S, A, _ = P.shape

    def rec(h, s, prob, states, actions):
        if h == H:
            yield prob, tuple(states), tuple(actions)
            return
        for a in range(A):
            pa = pi[h][s][a]
            if pa == 0:
                continue
            for y in range(S):
                py = P[h, s, a, y]
                if py == 0:
                    continue
                yield from rec(h + 1, y, prob * pa * py, states + [s], actions + [a])

    yield from rec(0, s1, 1.0, [], [])


def path_value(P, R, pi, s1):
    total = 0.0
    for prob, states, actions in trajectories(P, pi, s1):
        total += prob * sum(R[h, s, a] for h, (s, a) in enumerate(zip(states, actions)))
    return total


def path_occupancy(P, pi, s1):
    H, S, A, _ = P.shape
    mu = np.zeros((H, S, A))
    for prob, states, actions in trajectories(P, pi, s1):
        for h, (s, a) in enumerate(zip(states, actions)):
            mu[h, s, a] += prob
    return mu


def all_deterministic(H, S, A):
    """Every deterministic Markov policy as an (H, S) action table."""
    for flat in itertools.product(range(A), repeat=H * S):
        yield np.array(flat).reshape(H, S)


def as_policy(actions, A):
    H, S = actions.shape
    pi = np.zeros((H, S, A))
    for h in range(H):
        for s in range(S):
            pi[h, s, actions[h, s]] = 1.0
    return pi


def brute_optimal_value(P, R, s1):
    H, S, A, _ = P.shape
    return max(path_value(P, R, as_policy(a, A), s1) for a in all_deterministic(H, S, A))


def brute_max_visit(P, s1, h, s):
    """``max over deterministic policies of Pr(s_h = s)`` by enumeration."""
    H, S, A, _ = P.shape
    best = 0.0
    for acts in all_deterministic(H, S, A):
        mu = path_occupancy(P, as_policy(acts, A), s1)
        best = max(best, mu[h, s].sum())
    return best


def explored(pi, eps):
    A = pi.shape[-1]
    e = np.asarray(eps)[:, None, None]
    return (1 - e) * pi + e / A


def greedy(q, H):
    return np.argmax(q[:H], axis=-1)


def brute_meg(fs, tasks, eps):
    """Multitask gap by enumerating every deterministic improved policy.

    ``tasks`` is a list of ``(P, R, s1)``. The behavior is the uniform mixture
    of every task's explored greedy policy; the score of a target ``pi`` on
    task ``m`` is ``(V(pi) - V(greedy f_m)) / sqrt(c)`` with
    ``c = max(1, c(greedy f_m), c(pi))``.
    """
    H, S, A, _ = tasks[0][0].shape
    members = [explored(as_policy(greedy(f, H), A), eps) for f in fs]
    best = -math.inf
    for f, (P, R, s1) in zip(fs, tasks):
        mu_b = sum(path_occupancy(P, m, s1) for m in members) / len(members)

        def conc(mu_t):
            c = 1.0
            for idx in zip(*np.nonzero(mu_t)):
                c = max(c, math.inf if mu_b[idx] == 0 else mu_t[idx] / mu_b[idx])
            return c

        g_pi = as_policy(greedy(f, H), A)
        v_g = path_value(P, R, g_pi, s1)
        c_g = conc(path_occupancy(P, g_pi, s1))
        for acts in all_deterministic(H, S, A):
            pi = as_policy(acts, A)
            c = max(c_g, conc(path_occupancy(P, pi, s1)))
            if math.isinf(c):
                continue
            best = max(best, (path_value(P, R, pi, s1) - v_g) / math.sqrt(c))
    return best


def inertia_count(C, x):
    """Number of eigenvalues of symmetric ``C`` strictly below ``x`` (LDL^T pivots)."""
    B = np.array(C, dtype=float) - x * np.eye(len(C))
    n = len(B)
    count = 0
    for k in range(n):
        piv = B[k, k]
        if piv == 0.0:
            piv = 1e-300
        if piv < 0:
            count += 1
        B[k + 1:, k + 1:] -= np.outer(B[k + 1:, k], B[k, k + 1:]) / piv
    return count


def bisect_min_eigenvalue(C, tol=1e-13):
    """Smallest eigenvalue by bisection on the inertia count."""
    r = float(np.abs(C).sum(axis=1).max())
    lo, hi = -r - 1.0, r + 1.0
    while hi - lo > tol * max(1.0, r):
        mid = 0.5 * (lo + hi)
        if inertia_count(C, mid) >= 1:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
