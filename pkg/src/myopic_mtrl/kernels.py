"""Hot numeric kernels, each in a numba and a pure-numpy flavour.

Array conventions shared by every kernel (0-based steps):

* ``P``  -- transitions, shape ``(H, S, A, S)``
* ``R``  -- rewards, shape ``(H, S, A)``
* ``pi`` -- stochastic Markov policy, shape ``(H, S, A)``
* ``Q``  -- action values, shape ``(H + 1, S, A)`` with ``Q[H] == 0``

The public names at the bottom of the module are bound to the numba flavour
unless ``MYOPIC_MTRL_BACKEND=numpy`` is set. Both flavours stay importable as
``*_nb`` / ``*_np`` so tests and the benchmark can compare them directly.
"""

import numpy as np

from ._backend import USE_NUMBA, njit

# ---------------------------------------------------------------- occupancy


@njit
def occupancy_nb(P, pi, s1):
    H, S, A, _ = P.shape
    mu = np.zeros((H, S, A))
    d = np.zeros(S)
    d[s1] = 1.0
    for h in range(H):
        nd = np.zeros(S)
        for s in range(S):
            if d[s] == 0.0:
                continue
            for a in range(A):
                m = d[s] * pi[h, s, a]
                mu[h, s, a] = m
                if m == 0.0:
                    continue
                for t in range(S):
                    nd[t] += m * P[h, s, a, t]
        d = nd
    return mu


def occupancy_np(P, pi, s1):
    H, S, A, _ = P.shape
    mu = np.zeros((H, S, A))
    d = np.zeros(S)
    d[s1] = 1.0
    for h in range(H):
        mu[h] = d[:, None] * pi[h]
        d = np.einsum("sa,sat->t", mu[h], P[h])
    return mu


# ------------------------------------------------------- policy evaluation


@njit
def evaluate_nb(P, R, pi):
    H, S, A, _ = P.shape
    Q = np.zeros((H + 1, S, A))
    V = np.zeros((H + 1, S))
    for h in range(H - 1, -1, -1):
        for s in range(S):
            v = 0.0
            for a in range(A):
                q = R[h, s, a]
                for t in range(S):
                    q += P[h, s, a, t] * V[h + 1, t]
                Q[h, s, a] = q
                v += pi[h, s, a] * q
            V[h, s] = v
    return Q, V


def evaluate_np(P, R, pi):
    H, S, A, _ = P.shape
    Q = np.zeros((H + 1, S, A))
    V = np.zeros((H + 1, S))
    for h in range(H - 1, -1, -1):
        Q[h] = R[h] + P[h] @ V[h + 1]
        V[h] = np.sum(pi[h] * Q[h], axis=1)
    return Q, V


@njit
def evaluate_actions_nb(P, R, actions, s1):
    """Value of the deterministic policy ``actions[h, s]`` from ``s1``."""
    H, S, A, _ = P.shape
    V = np.zeros(S)
    for h in range(H - 1, -1, -1):
        nv = np.empty(S)
        for s in range(S):
            a = actions[h, s]
            v = R[h, s, a]
            for t in range(S):
                v += P[h, s, a, t] * V[t]
            nv[s] = v
        V = nv
    return V[s1]


def evaluate_actions_np(P, R, actions, s1):
    H, S, _, _ = P.shape
    V = np.zeros(S)
    idx = np.arange(S)
    for h in range(H - 1, -1, -1):
        a = actions[h]
        V = R[h, idx, a] + P[h, idx, a] @ V
    return V[s1]


# ---------------------------------------------------------- optimal values


@njit
def optimal_nb(P, R):
    H, S, A, _ = P.shape
    Q = np.zeros((H + 1, S, A))
    act = np.zeros((H, S), dtype=np.int64)
    V = np.zeros(S)
    for h in range(H - 1, -1, -1):
        nv = np.empty(S)
        for s in range(S):
            best = -np.inf
            arg = 0
            for a in range(A):
                q = R[h, s, a]
                for t in range(S):
                    q += P[h, s, a, t] * V[t]
                Q[h, s, a] = q
                if q > best:
                    best = q
                    arg = a
            nv[s] = best
            act[h, s] = arg
        V = nv
    return Q, act


def optimal_np(P, R):
    H, S, A, _ = P.shape
    Q = np.zeros((H + 1, S, A))
    act = np.zeros((H, S), dtype=np.int64)
    V = np.zeros(S)
    for h in range(H - 1, -1, -1):
        Q[h] = R[h] + P[h] @ V
        act[h] = np.argmax(Q[h], axis=1)
        V = Q[h].max(axis=1)
    return Q, act


# ------------------------------------------------- fitted Q from counts


@njit
def fqi_counts_nb(count, reward_sum, next_count, default):
    H, S, A = count.shape
    q = np.zeros((H + 1, S, A))
    v = np.zeros(S)
    for h in range(H - 1, -1, -1):
        for s in range(S):
            for a in range(A):
                n = count[h, s, a]
                if n == 0:
                    q[h, s, a] = default
                    continue
                tot = reward_sum[h, s, a]
                for t in range(S):
                    c = next_count[h, s, a, t]
                    if c != 0:
                        tot += c * v[t]
                q[h, s, a] = tot / n
        for s in range(S):
            best = q[h, s, 0]
            for a in range(1, A):
                if q[h, s, a] > best:
                    best = q[h, s, a]
            v[s] = best
    return q


def fqi_counts_np(count, reward_sum, next_count, default):
    H, S, A = count.shape
    q = np.zeros((H + 1, S, A))
    v = np.zeros(S)
    for h in range(H - 1, -1, -1):
        visited = count[h] > 0
        tot = reward_sum[h] + next_count[h] @ v
        q[h] = np.where(visited, tot / np.where(visited, count[h], 1), default)
        v = q[h].max(axis=1)
    return q


# -------------------------------------------------------- episode sampling


@njit
def _draw_nb(cum, u):
    n = cum.shape[0]
    for i in range(n):
        if u < cum[i]:
            return i
    # u landed in the rounding gap above the last partial sum
    for i in range(n - 1, -1, -1):
        if i == 0 or cum[i] > cum[i - 1]:
            return i
    return n - 1


@njit
def sample_nb(P_cum, R, pi_cum, s1, u):
    """Roll out one episode driven by ``2H`` pre-drawn uniforms ``u``."""
    H, S, A, _ = P_cum.shape
    states = np.empty(H + 1, dtype=np.int64)
    actions = np.empty(H, dtype=np.int64)
    rewards = np.empty(H)
    s = s1
    states[0] = s
    for h in range(H):
        a = _draw_nb(pi_cum[h, s], u[2 * h])
        actions[h] = a
        rewards[h] = R[h, s, a]
        s = _draw_nb(P_cum[h, s, a], u[2 * h + 1])
        states[h + 1] = s
    return states, actions, rewards


def _draw_np(cum, u):
    i = int(np.searchsorted(cum, u, side="right"))
    if i < cum.shape[0]:
        return i
    pos = np.flatnonzero(np.diff(cum, prepend=0.0) > 0)
    return int(pos[-1]) if pos.size else cum.shape[0] - 1


def sample_np(P_cum, R, pi_cum, s1, u):
    H = P_cum.shape[0]
    states = np.empty(H + 1, dtype=np.int64)
    actions = np.empty(H, dtype=np.int64)
    rewards = np.empty(H)
    s = int(s1)
    states[0] = s
    for h in range(H):
        a = _draw_np(pi_cum[h, s], u[2 * h])
        actions[h] = a
        rewards[h] = R[h, s, a]
        s = _draw_np(P_cum[h, s, a], u[2 * h + 1])
        states[h + 1] = s
    return states, actions, rewards


# ------------------------------------------------------------ reachability


@njit
def max_reach_nb(P, s1):
    """``out[t, x] = max over policies of Pr(s_t = x)``, t = 0..H (0-based)."""
    H, S, A, _ = P.shape
    out = np.zeros((H + 1, S))
    out[0, s1] = 1.0
    v = np.empty(S)
    for t in range(1, H + 1):
        W = np.eye(S)  # column x is the indicator target
        for k in range(t - 1, -1, -1):
            nW = np.zeros((S, S))
            for s in range(S):
                for a in range(A):
                    v[:] = 0.0
                    for y in range(S):
                        p = P[k, s, a, y]
                        if p != 0.0:
                            for x in range(S):
                                v[x] += p * W[y, x]
                    for x in range(S):
                        if v[x] > nW[s, x]:
                            nW[s, x] = v[x]
            W = nW
        out[t] = W[s1]
    return out


def max_reach_np(P, s1):
    H, S, _, _ = P.shape
    out = np.zeros((H + 1, S))
    out[0, s1] = 1.0
    for t in range(1, H + 1):
        W = np.eye(S)  # column x is the indicator target
        for k in range(t - 1, -1, -1):
            W = np.einsum("say,yx->sax", P[k], W).max(axis=1)
        out[t] = W[s1]
    return out


# --------------------------------------------------------- Jacobi rotations


@njit
def jacobi_eigenvalues_nb(C, tol, max_sweeps):
    n = C.shape[0]
    a = C.copy()
    scale = 0.0
    for i in range(n):
        for j in range(n):
            scale += a[i, j] * a[i, j]
    scale = np.sqrt(scale)
    thresh = tol * max(scale, 1e-300)
    for _ in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off += 2.0 * a[i, j] * a[i, j]
        if np.sqrt(off) <= thresh:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
    out = np.empty(n)
    for i in range(n):
        out[i] = a[i, i]
    return np.sort(out)


def jacobi_eigenvalues_np(C, tol, max_sweeps):
    a = np.array(C, dtype=float, copy=True)
    n = a.shape[0]
    thresh = tol * max(np.linalg.norm(a), 1e-300)
    iu = np.triu_indices(n, 1)
    for _ in range(max_sweeps):
        if np.sqrt(2.0 * np.sum(a[iu] ** 2)) <= thresh:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau)) if tau != 0 else 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
    return np.sort(np.diag(a).copy())


# ---------------------------------------------------------------- bindings

if USE_NUMBA:
    occupancy = occupancy_nb
    evaluate = evaluate_nb
    evaluate_actions = evaluate_actions_nb
    optimal = optimal_nb
    fqi_counts = fqi_counts_nb
    sample = sample_nb
    max_reach = max_reach_nb
    jacobi_eigenvalues = jacobi_eigenvalues_nb
else:
    occupancy = occupancy_np
    evaluate = evaluate_np
    evaluate_actions = evaluate_actions_np
    optimal = optimal_np
    fqi_counts = fqi_counts_np
    sample = sample_np
    max_reach = max_reach_np
    jacobi_eigenvalues = jacobi_eigenvalues_np
