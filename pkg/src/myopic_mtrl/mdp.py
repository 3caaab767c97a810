"""Finite episodic MDPs and exact dynamic programming on them.

Steps are 0-based in every array and argument (``h = 0 .. H-1``); only
human-facing messages and exported files use 1-based steps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from . import kernels

STOCHASTIC_TOL = 1e-12
OCCUPANCY_TOL = 1e-10
RETURN_BOUND_TOL = 1e-9


class ShapeError(ValueError):
    """Tensors whose axes do not line up."""


def _frozen(x, dtype=float) -> np.ndarray:
    arr = np.array(x, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TabularMDP:
    """Episodic MDP with transition tensor ``P[h, s, a, s']`` and rewards ``R[h, s, a]``."""

    P: np.ndarray
    R: np.ndarray
    s1: int = 0

    def __post_init__(self):
        P = _frozen(self.P)
        R = _frozen(self.R)
        if P.ndim != 4:
            raise ShapeError(f"P must have 4 axes (h, s, a, s'), got {P.ndim}")
        H, S, A, S2 = P.shape
        if S2 != S:
            raise ShapeError(f"P next-state axis has length {S2}, state axis has {S}")
        if R.shape != (H, S, A):
            for axis, (got, want) in enumerate(zip(R.shape, (H, S, A))):
                if got != want:
                    name = ("h", "s", "a")[axis]
                    raise ShapeError(f"R axis {name} has length {got}, expected {want}")
            raise ShapeError(f"R must have shape {(H, S, A)}, got {R.shape}")
        if not 0 <= int(self.s1) < S:
            raise ShapeError(f"initial state {self.s1} outside 0..{S - 1}")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "s1", int(self.s1))

    @property
    def H(self) -> int:
        return self.P.shape[0]

    @property
    def S(self) -> int:
        return self.P.shape[1]

    @property
    def A(self) -> int:
        return self.P.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.S, self.A, self.H

    @cached_property
    def P_cum(self) -> np.ndarray:
        return np.cumsum(self.P, axis=-1)

    def with_rewards(self, R) -> "TabularMDP":
        return TabularMDP(self.P, R, self.s1)

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "S": self.S,
            "A": self.A,
            "H": self.H,
            "s1": self.s1,
            "P": self.P.tolist(),
            "R": self.R.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TabularMDP":
        mdp = cls(np.asarray(d["P"], dtype=float), np.asarray(d["R"], dtype=float), int(d["s1"]))
        declared = (int(d["S"]), int(d["A"]), int(d["H"]))
        if declared != mdp.shape:
            raise ShapeError(f"declared (S, A, H) = {declared} but tensors give {mdp.shape}")
        return mdp

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "TabularMDP":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class MixturePolicy:
    """Episode-level uniform mixture: one member is drawn per episode and kept."""

    members: tuple

    def __post_init__(self):
        members = tuple(np.asarray(m, dtype=float) for m in self.members)
        if not members:
            raise ValueError("a mixture needs at least one member policy")
        shape = members[0].shape
        for i, m in enumerate(members):
            if m.shape != shape:
                raise ShapeError(f"member {i} has shape {m.shape}, member 0 has {shape}")
        object.__setattr__(self, "members", members)

    def __len__(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    severity: str = "error"


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def errors(self) -> list:
        return [v for v in self.violations if v.severity == "error"]

    @property
    def warnings(self) -> list:
        return [v for v in self.violations if v.severity == "warning"]

    def __len__(self) -> int:
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)


def max_path_return(M: TabularMDP) -> float:
    """Largest cumulative reward along any positive-probability path from s1."""
    W = np.zeros(M.S)
    for h in range(M.H - 1, -1, -1):
        nxt = np.where(M.P[h] > 0, W[None, None, :], -np.inf).max(axis=-1)
        W = (M.R[h] + nxt).max(axis=1)
    return float(W[M.s1])


def validate_mdp(M: TabularMDP) -> ValidationReport:
    report = ValidationReport()
    add = report.violations.append
    P, R = M.P, M.R
    for h, s, a, t in zip(*np.nonzero(P < 0)):
        add(Violation("negative_probability", f"P={P[h, s, a, t]:g} at ({h + 1},{s},{a},{t})"))
    sums = P.sum(axis=-1)
    for h, s, a in zip(*np.nonzero(np.abs(sums - 1.0) > STOCHASTIC_TOL)):
        add(Violation("row_sum", f"row sum {sums[h, s, a]:.12g} at ({h + 1},{s},{a})"))
    for h, s, a in zip(*np.nonzero((R < 0) | (R > 1) | ~np.isfinite(R))):
        add(Violation("reward_range", f"reward {R[h, s, a]:g} at ({h + 1},{s},{a})"))
    if not report.violations:
        total = max_path_return(M)
        if total > 1.0 + RETURN_BOUND_TOL:
            add(Violation("return_bound", f"max cumulative reward {total:.12g}", "warning"))
    return report


# ------------------------------------------------------------------ policies


def deterministic_policy(actions, A: int) -> np.ndarray:
    """One-hot ``(H, S, A)`` policy from an ``(H, S)`` action table."""
    actions = np.asarray(actions, dtype=np.int64)
    pi = np.zeros(actions.shape + (A,))
    np.put_along_axis(pi, actions[..., None], 1.0, axis=-1)
    return pi


def greedy_actions(q: np.ndarray, H: int | None = None) -> np.ndarray:
    """Greedy action table of a Q array; ties go to the lowest action index."""
    q = np.asarray(q)
    H = q.shape[0] - 1 if H is None else H
    return np.argmax(q[:H], axis=-1)


def greedy_policy(q: np.ndarray, H: int | None = None) -> np.ndarray:
    q = np.asarray(q)
    return deterministic_policy(greedy_actions(q, H), q.shape[-1])


def uniform_policy(M: TabularMDP) -> np.ndarray:
    return np.full((M.H, M.S, M.A), 1.0 / M.A)


def check_policy(M: TabularMDP, pi) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (M.H, M.S, M.A):
        raise ShapeError(f"policy shape {pi.shape} does not match (H, S, A) = {(M.H, M.S, M.A)}")
    return pi


# ------------------------------------------------------------ exact DP


class PolicyValue(NamedTuple):
    q: np.ndarray
    v: np.ndarray
    value: float


class OptimalSolution(NamedTuple):
    q: np.ndarray
    policy: np.ndarray
    v: np.ndarray
    actions: np.ndarray
    value: float


def evaluate_policy(M: TabularMDP, pi) -> PolicyValue:
    if isinstance(pi, MixturePolicy):
        parts = [evaluate_policy(M, m) for m in pi.members]
        q = np.mean([p.q for p in parts], axis=0)
        v = np.mean([p.v for p in parts], axis=0)
        return PolicyValue(q, v, float(np.mean([p.value for p in parts])))
    pi = check_policy(M, pi)
    q, v = kernels.evaluate(M.P, M.R, pi)
    return PolicyValue(q, v, float(v[0, M.s1]))


def policy_value(M: TabularMDP, pi) -> float:
    return evaluate_policy(M, pi).value


def action_value(M: TabularMDP, actions) -> float:
    """Exact return of a deterministic action table ``(H, S)``."""
    return float(kernels.evaluate_actions(M.P, M.R, np.asarray(actions, dtype=np.int64), M.s1))


def optimal_values(M: TabularMDP) -> OptimalSolution:
    q, actions = kernels.optimal(M.P, M.R)
    v = np.zeros((M.H + 1, M.S))
    v[: M.H] = q[: M.H].max(axis=-1)
    return OptimalSolution(q, deterministic_policy(actions, M.A), v, actions, float(v[0, M.s1]))


def occupancy(M: TabularMDP, pi) -> np.ndarray:
    """Exact ``mu[h, s, a] = Pr(s_h = s, a_h = a)`` by forward DP."""
    if isinstance(pi, MixturePolicy):
        return np.mean([occupancy(M, m) for m in pi.members], axis=0)
    pi = check_policy(M, pi)
    return kernels.occupancy(M.P, pi, M.s1)


def bellman_residual(M: TabularMDP, f, h: int) -> np.ndarray:
    """``f_h - T_h f_{h+1}`` as an ``(S, A)`` table (``f`` has ``H + 1`` layers)."""
    f = np.asarray(f, dtype=float)
    if f.shape != (M.H + 1, M.S, M.A):
        raise ShapeError(f"Q array shape {f.shape} does not match {(M.H + 1, M.S, M.A)}")
    return f[h] - M.R[h] - M.P[h] @ f[h + 1].max(axis=-1)


def value_difference_check(M: TabularMDP, f, pi_prime) -> tuple[float, float]:
    """Both sides of ``V^{pi'} - V^{pi_f} <= sum_h E_{pi_f}[E_h f] - sum_h E_{pi'}[E_h f]``."""
    f = np.asarray(f, dtype=float)
    pi_f = greedy_policy(f, M.H)
    resid = np.stack([bellman_residual(M, f, h) for h in range(M.H)])
    mu_f = occupancy(M, pi_f)
    mu_p = occupancy(M, pi_prime)
    lhs = policy_value(M, pi_prime) - policy_value(M, pi_f)
    rhs = float(np.sum(mu_f * resid) - np.sum(mu_p * resid))
    return float(lhs), rhs


# -------------------------------------------------------------- sampling


@dataclass(frozen=True)
class Episode:
    """One trajectory; ``states`` has ``H + 1`` entries, the rest ``H``."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)

    def steps(self) -> Iterator[tuple[int, int, int, float, int]]:
        """Yield ``(h, s, a, r, s_next)`` with 1-based ``h``."""
        for h in range(len(self.actions)):
            yield (h + 1, int(self.states[h]), int(self.actions[h]),
                   float(self.rewards[h]), int(self.states[h + 1]))

    def __eq__(self, other):
        if not isinstance(other, Episode):
            return NotImplemented
        return (np.array_equal(self.states, other.states)
                and np.array_equal(self.actions, other.actions)
                and np.array_equal(self.rewards, other.rewards))


def sample_episode(M: TabularMDP, pi, rng: np.random.Generator) -> Episode:
    if isinstance(pi, MixturePolicy):
        member = min(int(rng.random() * len(pi)), len(pi) - 1)
        pi = pi.members[member]
    pi = check_policy(M, pi)
    u = rng.random(2 * M.H)
    states, actions, rewards = kernels.sample(M.P_cum, M.R, np.cumsum(pi, axis=-1), M.s1, u)
    return Episode(states, actions, rewards)


def sample_episode_cum(M: TabularMDP, pi_cum: Sequence[np.ndarray], rng: np.random.Generator) -> Episode:
    """Like :func:`sample_episode` for a mixture given as precomputed action CDFs."""
    member = min(int(rng.random() * len(pi_cum)), len(pi_cum) - 1)
    u = rng.random(2 * M.H)
    states, actions, rewards = kernels.sample(M.P_cum, M.R, pi_cum[member], M.s1, u)
    return Episode(states, actions, rewards)


# ------------------------------------------------------- random instances


def random_mdp(rng: np.random.Generator, S: int, A: int, H: int, *,
               sparsity: float = 0.0, reward_scale: float | None = None) -> TabularMDP:
    """Dirichlet transitions and uniform rewards scaled so returns stay within 1."""
    P = rng.dirichlet(np.ones(S), size=(H, S, A))
    if sparsity > 0:
        keep = rng.random(P.shape) >= sparsity
        empty = ~keep.any(axis=-1)
        np.put_along_axis(keep, np.argmax(P, axis=-1)[..., None],
                          np.take_along_axis(keep, np.argmax(P, axis=-1)[..., None], -1)
                          | empty[..., None], axis=-1)
        P = P * keep
        P /= P.sum(axis=-1, keepdims=True)
    scale = 1.0 / H if reward_scale is None else reward_scale
    R = rng.random((H, S, A)) * scale
    return TabularMDP(P, R, 0)
