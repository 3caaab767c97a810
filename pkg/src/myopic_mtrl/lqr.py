"""Finite-horizon LQR with deterministic dynamics and quadratic rewards (maximization)."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exploration import GaussianExploredPolicy
from .mdp import ShapeError

ND_TOL = 1e-9


class IllPosedError(ValueError):
    pass


def _stack(x, H: int, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = np.repeat(x[None], H, axis=0)
    if x.ndim != 3 or x.shape[0] != H:
        raise ShapeError(f"{name} must be one matrix or {H} per-step matrices, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class LQRSystem:
    """``s' = A_h s + B_h a``, reward ``s^T Rs_h s + a^T Ra_h a``."""

    A: np.ndarray  # (H, ds, ds)
    B: np.ndarray  # (H, ds, da)
    Rs: np.ndarray  # (H, ds, ds)
    Ra: np.ndarray  # (H, da, da)
    s1: np.ndarray  # (ds,)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 3:
            raise ShapeError("A must have shape (H, ds, ds)")
        H, ds, _ = A.shape
        B = _stack(self.B, H, "B")
        da = B.shape[2]
        Rs = _stack(self.Rs, H, "Rs")
        Ra = _stack(self.Ra, H, "Ra")
        s1 = np.asarray(self.s1, dtype=float)
        if A.shape != (H, ds, ds):
            raise ShapeError(f"A must be square per step, got {A.shape}")
        if B.shape[1] != ds:
            raise ShapeError(f"B has {B.shape[1]} rows, state dimension is {ds}")
        if Rs.shape != (H, ds, ds) or Ra.shape != (H, da, da):
            raise ShapeError("reward matrices do not match the state/action dimensions")
        if s1.shape != (ds,):
            raise ShapeError(f"s1 must have length {ds}")
        for name, x in (("A", A), ("B", B), ("Rs", Rs), ("Ra", Ra), ("s1", s1)):
            if not np.all(np.isfinite(x)):
                raise ValueError(f"{name} has non-finite entries")
        if not (np.allclose(Rs, Rs.transpose(0, 2, 1)) and np.allclose(Ra, Ra.transpose(0, 2, 1))):
            raise ValueError("reward matrices must be symmetric")
        top = np.linalg.eigvalsh(Ra).max(axis=1)
        if np.any(top > -ND_TOL):
            h = int(np.argmax(top))
            raise ValueError(f"Ra at step {h + 1} is not negative definite (eigenvalue {top[h]!r})")
        for name, x in (("A", A), ("B", B), ("Rs", Rs), ("Ra", Ra), ("s1", s1)):
            x.setflags(write=False)
            object.__setattr__(self, name, x)

    @property
    def H(self) -> int:
        return self.A.shape[0]

    @property
    def ds(self) -> int:
        return self.A.shape[1]

    @property
    def da(self) -> int:
        return self.B.shape[2]

    def reward(self, h: int, s: np.ndarray, a: np.ndarray) -> float:
        return float(s @ self.Rs[h] @ s + a @ self.Ra[h] @ a)

    def step(self, h: int, s: np.ndarray, a: np.ndarray) -> np.ndarray:
        return self.A[h] @ s + self.B[h] @ a

    def to_dict(self) -> dict:
        return {"ds": self.ds, "da": self.da, "A": self.A.tolist(), "B": self.B.tolist(),
                "Rs": self.Rs.tolist(), "Ra": self.Ra.tolist(), "s1": self.s1.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "LQRSystem":
        sys = cls(d["A"], d["B"], d["Rs"], d["Ra"], d["s1"])
        if (sys.ds, sys.da) != (int(d["ds"]), int(d["da"])):
            raise ShapeError("declared ds/da do not match the matrices")
        return sys

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "LQRSystem":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class RiccatiSolution:
    P: np.ndarray  # (H + 1, ds, ds), P[H] = 0
    F: np.ndarray  # (H, da, ds)

    def value(self, s: np.ndarray, h: int = 0) -> float:
        return float(s @ self.P[h] @ s)


def riccati(sys: LQRSystem) -> RiccatiSolution:
    """Backward recursion; Cholesky of ``-K_h`` doubles as the well-posedness check."""
    H, ds, da = sys.H, sys.ds, sys.da
    P = np.zeros((H + 1, ds, ds))
    F = np.zeros((H, da, ds))
    for h in range(H - 1, -1, -1):
        A, B, Pn = sys.A[h], sys.B[h], P[h + 1]
        K = sys.Ra[h] + B.T @ Pn @ B
        try:
            L = np.linalg.cholesky(-K)
        except np.linalg.LinAlgError:
            top = float(np.linalg.eigvalsh(0.5 * (K + K.T)).max())
            raise IllPosedError(
                f"ill-posed maximization at step {h + 1}: K has eigenvalue {top!r}") from None
        rhs = B.T @ Pn @ A
        F[h] = np.linalg.solve(L.T, np.linalg.solve(L, rhs))  # -K^{-1} B^T P A
        Ph = sys.Rs[h] + A.T @ Pn @ A + A.T @ Pn @ B @ F[h]
        P[h] = 0.5 * (Ph + Ph.T)
    return RiccatiSolution(P, F)


def lqr_value(sys: LQRSystem, gains: Sequence[np.ndarray], s1: np.ndarray | None = None) -> float:
    """Return of the linear policy ``a = F_h s`` by backward quadratic propagation."""
    s1 = sys.s1 if s1 is None else np.asarray(s1, dtype=float)
    G = np.asarray(gains, dtype=float)
    if G.shape != (sys.H, sys.da, sys.ds):
        raise ShapeError(f"gains must have shape {(sys.H, sys.da, sys.ds)}, got {G.shape}")
    Pt = np.zeros((sys.ds, sys.ds))
    for h in range(sys.H - 1, -1, -1):
        C = sys.A[h] + sys.B[h] @ G[h]
        Pt = sys.Rs[h] + G[h].T @ sys.Ra[h] @ G[h] + C.T @ Pt @ C
        Pt = 0.5 * (Pt + Pt.T)
    return float(s1 @ Pt @ s1)


def rollout(sys: LQRSystem, gains: Sequence[np.ndarray], s1: np.ndarray | None = None):
    """Deterministic closed loop: returns ``(states (H+1, ds), actions (H, da), total reward)``."""
    s = sys.s1 if s1 is None else np.asarray(s1, dtype=float)
    states, actions, total = [s], [], 0.0
    for h in range(sys.H):
        a = np.asarray(gains[h]) @ s
        total += sys.reward(h, s, a)
        s = sys.step(h, s, a)
        actions.append(a)
        states.append(s)
    return np.array(states), np.array(actions).reshape(sys.H, sys.da), total


def explored_rollout(sys: LQRSystem, policy: GaussianExploredPolicy, rng: np.random.Generator):
    s = sys.s1
    states, actions, total = [s], [], 0.0
    for h in range(sys.H):
        a = policy.action(h, s, rng)
        total += sys.reward(h, s, a)
        s = sys.step(h, s, a)
        actions.append(a)
        states.append(s)
    return np.array(states), np.array(actions), total


# ---------------------------------------------------------------- tasks


def gen_diverse_lqr(A, B, H: int, ds: int, s1=None) -> list[tuple[str, LQRSystem]]:
    """``ds * H`` tasks sharing dynamics; task ``(i, h)`` rewards ``[s_h]_i^2`` and costs ``|a|^2``."""
    A = _stack(A, H, "A")
    B = _stack(B, H, "B")
    if A.shape[1] != ds:
        raise ShapeError(f"A is {A.shape[1]}-dimensional, ds={ds}")
    da = B.shape[2]
    s1 = np.ones(ds) / np.sqrt(ds) if s1 is None else np.asarray(s1, dtype=float)
    Ra = np.repeat(-np.eye(da)[None], H, axis=0)
    out = []
    for h in range(H):
        for i in range(ds):
            Rs = np.zeros((H, ds, ds))
            Rs[h, i, i] = 1.0
            out.append((f"e{i}-h{h + 1}", LQRSystem(A, B, Rs, Ra, s1)))
    return out


def random_lqr(rng: np.random.Generator, ds: int, da: int, H: int, *, max_tries: int = 100) -> LQRSystem:
    """Random system whose Riccati recursion is well-posed (rejection sampling)."""
    for _ in range(max_tries):
        A = rng.standard_normal((H, ds, ds)) / np.sqrt(ds)
        B = rng.standard_normal((H, ds, da)) / np.sqrt(ds)
        C = rng.standard_normal((H, ds, ds))
        Rs = 0.25 * (C + C.transpose(0, 2, 1))
        G = rng.standard_normal((H, da, da))
        Ra = -(G @ G.transpose(0, 2, 1)) / da - np.eye(da)
        sys = LQRSystem(A, B, Rs, Ra, rng.standard_normal(ds))
        try:
            riccati(sys)
        except IllPosedError:
            continue
        return sys
    raise RuntimeError("could not sample a well-posed LQR system")


# ------------------------------------------------------ second moments


def state_covariance(sys: LQRSystem, policies, h: int) -> np.ndarray:
    """Exact ``E[s_h s_h^T]`` (0-based ``h``) under a uniform mixture of explored gain policies.

    On an explore step the mixture mode replaces the gain action by noise and
    the additive mode adds noise to it.
    """
    if isinstance(policies, GaussianExploredPolicy):
        policies = [policies]
    if not 0 <= h <= sys.H:
        raise ValueError(f"step index {h} outside 0..{sys.H}")
    total = np.zeros((sys.ds, sys.ds))
    for pol in policies:
        M = np.outer(sys.s1, sys.s1)
        for k in range(h):
            A, B = sys.A[k], sys.B[k]
            C = A + B @ pol.gains[k]
            eps, noise = pol.eps[k], pol.sigma[k] ** 2 * (B @ B.T)
            follow = C @ M @ C.T
            if pol.mode == "mixture":
                M = (1 - eps) * follow + eps * (A @ M @ A.T + noise)
            else:
                M = follow + eps * noise
            M = 0.5 * (M + M.T)
        total += M
    return total / len(policies)


def transition_products(sys: LQRSystem) -> list:
    """``Phi[h][k] = A_{h-1} ... A_k`` (identity when ``k == h``)."""
    H, ds = sys.H, sys.ds
    Phi = [[np.eye(ds) for _ in range(H + 1)] for _ in range(H + 1)]
    for h in range(H + 1):
        for k in range(h - 1, -1, -1):
            Phi[h][k] = Phi[h][k + 1] @ sys.A[k]
    return Phi


def max_projection(sys: LQRSystem, h: int, nu: np.ndarray, Phi=None) -> float:
    """``max nu^T s_h`` over action sequences with ``|a_k| <= 1``, in closed form."""
    Phi = transition_products(sys) if Phi is None else Phi
    val = float(nu @ Phi[h][0] @ sys.s1)
    for k in range(h):
        val += float(np.linalg.norm(sys.B[k].T @ Phi[h][k + 1].T @ nu))
    return val


def probe_unit_directions(ds: int, n_random: int = 100, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    rand = rng.standard_normal((n_random, ds))
    rand /= np.linalg.norm(rand, axis=1, keepdims=True)
    return np.vstack([np.eye(ds), -np.eye(ds), rand])


@dataclass(frozen=True)
class Regularity:
    b3: float
    b4: float
    b5: float
    b3_table: np.ndarray  # (H, n_directions) for steps 2..H+1
    directions: np.ndarray


def lqr_regularity(sys: LQRSystem, policies: Sequence[Sequence[np.ndarray]],
                   directions: np.ndarray | None = None) -> Regularity:
    """Coverage ``b3`` over probe directions and path-norm bounds ``b4``, ``b5`` of ``policies``.

    ``b3`` is the smallest best-achievable projection over directions and
    steps after the start; ``b4`` and ``b5`` are the largest state and action
    norms along the deterministic closed loops of the given gain sequences.
    """
    directions = probe_unit_directions(sys.ds) if directions is None else np.asarray(directions)
    Phi = transition_products(sys)
    table = np.array([[max_projection(sys, h, nu, Phi) for nu in directions]
                      for h in range(1, sys.H + 1)])
    b4 = b5 = 0.0
    for gains in policies:
        states, actions, _ = rollout(sys, gains)
        b4 = max(b4, float(np.linalg.norm(states, axis=1).max()))
        b5 = max(b5, float(np.linalg.norm(actions, axis=1).max()))
    return Regularity(float(table.min()), b4, b5, table, directions)


# ---------------------------------------------------------- verification


def action_grid(da: int, radius: float, points: int) -> np.ndarray:
    axis = np.linspace(-radius, radius, points)
    return np.array(list(itertools.product(axis, repeat=da)))


def riccati_optimality_check(sys: LQRSystem, sol: RiccatiSolution, trials: int,
                             rng: np.random.Generator, grid_points: int | None = None) -> tuple[float, float]:
    """Bellman-optimality residuals of a Riccati solution at random states and steps.

    Returns ``(analytic, grid)``: the largest ``|s^T P_h s - Q_h(s, F_h s)|`` and
    the largest amount by which any grid action beats ``s^T P_h s`` (0 if none).
    The grid is centred on the analytic maximizer.
    """
    if grid_points is None:
        grid_points = {1: 201, 2: 41, 3: 15}.get(sys.da, 9)
    analytic = grid = 0.0
    for _ in range(trials):
        h = int(rng.integers(sys.H))
        s = rng.standard_normal(sys.ds)
        A, B, Pn = sys.A[h], sys.B[h], sol.P[h + 1]
        a_star = sol.F[h] @ s
        radius = 2.0 * max(1.0, float(np.abs(a_star).max()))
        acts = a_star + action_grid(sys.da, radius, grid_points)
        nxt = s @ A.T + acts @ B.T
        q = (s @ sys.Rs[h] @ s + np.einsum("ni,ij,nj->n", acts, sys.Ra[h], acts)
             + np.einsum("ni,ij,nj->n", nxt, Pn, nxt))
        v = float(s @ sol.P[h] @ s)
        nxt_star = A @ s + B @ a_star
        q_star = sys.reward(h, s, a_star) + float(nxt_star @ Pn @ nxt_star)
        analytic = max(analytic, abs(v - q_star))
        grid = max(grid, max(0.0, float(q.max()) - v))
    return analytic, grid
