"""Exact multitask myopic exploration gap on small tabular task sets.

The gap is a maximization over improved policies. For tabular classes the
Bellman-error constraints reduce to occupancy concentrability, so the search
runs over deterministic Markov policies directly. Policies that differ only
on states they never reach have identical occupancy, so enumeration walks
one representative per occupancy class (unreached states keep action 0).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exploration import ExplorationSchedule, eps_greedy, mixture
from .mdp import (
    TabularMDP,
    greedy_policy,
    occupancy,
    optimal_values,
    policy_value,
)
from .tasks import TaskSet

DEFAULT_CAP = 2**20


class EnumerationCapExceeded(RuntimeError):
    """Raised instead of approximating when a policy search is too large."""


def concentrability_from_occupancy(mu_target: np.ndarray, mu_behavior: np.ndarray) -> float:
    """``max(1, max mu_target / mu_behavior)`` with 0/0 -> 0 and x/0 -> inf."""
    visited = mu_target > 0
    if np.any(visited & (mu_behavior <= 0)):
        return math.inf
    if not visited.any():
        return 1.0
    return max(1.0, float(np.max(mu_target[visited] / mu_behavior[visited])))


def concentrability(M: TabularMDP, behavior, target) -> float:
    return concentrability_from_occupancy(occupancy(M, target), occupancy(M, behavior))


@dataclass(frozen=True)
class SuboptimalJoint:
    """Joint Q-functions, one per task, with at least one beta-suboptimal greedy."""

    fs: tuple
    beta: float

    def __post_init__(self):
        fs = tuple(np.asarray(f, dtype=float) for f in self.fs)
        if not fs:
            raise ValueError("a joint needs one Q-function per task")
        for f in fs:
            if f.ndim != 3 or not np.all(np.isfinite(f)):
                raise ValueError("each Q-function must be a finite (H+1, S, A) array")
        object.__setattr__(self, "fs", fs)

    def gaps(self, tasks: TaskSet) -> np.ndarray:
        return np.array([optimal_values(M).value - policy_value(M, greedy_policy(f, M.H))
                         for M, f in zip(tasks, self.fs)])

    def check(self, tasks: TaskSet) -> None:
        if len(self.fs) != len(tasks):
            raise ValueError(f"{len(self.fs)} Q-functions for {len(tasks)} tasks")
        if not np.any(self.gaps(tasks) > self.beta):
            raise ValueError(f"no task's greedy policy is {self.beta}-suboptimal")


@dataclass(frozen=True)
class MEGResult:
    alpha: float
    c: float
    task_index: int
    improved_policy: np.ndarray  # deterministic action table (H, S)
    feasible: bool

    def to_dict(self) -> dict:
        def num(x):
            return None if not math.isfinite(x) else float(x)

        return {
            "alpha": num(self.alpha),
            "c": num(self.c),
            "task_index": int(self.task_index),
            "improved_policy": np.asarray(self.improved_policy).tolist(),
            "feasible": bool(self.feasible),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


# ------------------------------------------------------------ enumeration


def count_policy_classes(M: TabularMDP) -> int:
    """Number of distinct occupancy classes of deterministic policies."""
    P, H, A = M.P, M.H, M.A
    succ = P > 0  # (H, S, A, S)
    memo: dict = {}

    def count(h, support):
        if h == H:
            return 1
        key = (h, support)
        if key not in memo:
            total = 0
            for choice in itertools.product(range(A), repeat=len(support)):
                nxt = np.zeros(M.S, dtype=bool)
                for s, a in zip(support, choice):
                    nxt |= succ[h, s, a]
                total += count(h + 1, tuple(np.flatnonzero(nxt)))
            memo[key] = total
        return memo[key]

    return count(0, (M.s1,))


def enumerate_policy_classes(M: TabularMDP, cap: int = DEFAULT_CAP) -> tuple[np.ndarray, np.ndarray]:
    """Representative deterministic policies and their occupancies.

    Returns ``(actions, mu)`` with shapes ``(L, H, S)`` and ``(L, H, S, A)``.
    Raises :class:`EnumerationCapExceeded` when there are more than ``cap`` classes.
    """
    n = count_policy_classes(M)
    if n > cap:
        raise EnumerationCapExceeded(
            f"policy enumeration needs {n} occupancy classes, above the cap of {cap}")
    H, S, A = M.H, M.S, M.A
    P = M.P
    out_actions = np.zeros((n, H, S), dtype=np.int64)
    out_mu = np.zeros((n, H, S, A))
    actions = np.zeros((H, S), dtype=np.int64)
    mu = np.zeros((H, S, A))
    k = 0

    def walk(h, d):
        nonlocal k
        if h == H:
            out_actions[k] = actions
            out_mu[k] = mu
            k += 1
            return
        support = np.flatnonzero(d)
        for choice in itertools.product(range(A), repeat=len(support)):
            choice = np.asarray(choice, dtype=np.int64)
            actions[h] = 0
            actions[h, support] = choice
            mu[h] = 0.0
            mu[h, support, choice] = d[support]
            walk(h + 1, d[support] @ P[h, support, choice])

    d0 = np.zeros(S)
    d0[M.s1] = 1.0
    walk(0, d0)
    return out_actions, out_mu


def _batched_concentrability(mu: np.ndarray, mu_b: np.ndarray) -> np.ndarray:
    L = mu.shape[0]
    flat = mu.reshape(L, -1)
    b = mu_b.reshape(-1)
    visited = flat > 0
    blocked = np.any(visited[:, b <= 0], axis=1)
    ratio = np.where(visited & (b > 0), flat / np.where(b > 0, b, 1.0), 0.0)
    c = np.maximum(1.0, ratio.max(axis=1))
    c[blocked] = np.inf
    return c


def behavior_policy(fs: Sequence[np.ndarray], tasks: TaskSet, sched: ExplorationSchedule):
    greedies = [greedy_policy(f, M.H) for f, M in zip(fs, tasks)]
    return greedies, mixture([eps_greedy(g, sched) for g in greedies])


def meg_exact(f, tasks: TaskSet, sched: ExplorationSchedule, cap: int = DEFAULT_CAP) -> MEGResult:
    """Exact multitask gap of the joint ``f`` by exhaustive policy-class search."""
    fs = f.fs if isinstance(f, SuboptimalJoint) else tuple(np.asarray(x, dtype=float) for x in f)
    if len(fs) != len(tasks):
        raise ValueError(f"{len(fs)} Q-functions for {len(tasks)} tasks")
    greedies, behavior = behavior_policy(fs, tasks, sched)

    best = (-math.inf, math.inf, 0, None)
    for m, (M, g) in enumerate(zip(tasks, greedies)):
        mu_b = occupancy(M, behavior)
        mu_g = occupancy(M, g)
        v_g = float(np.sum(mu_g * M.R))
        c_g = concentrability_from_occupancy(mu_g, mu_b)
        acts, mus = enumerate_policy_classes(M, cap)
        values = np.einsum("lhsa,hsa->l", mus, M.R)
        c = np.maximum(_batched_concentrability(mus, mu_b), c_g)
        ok = np.isfinite(c)
        if not ok.any():
            continue
        score = np.full(len(c), -math.inf)
        score[ok] = (values[ok] - v_g) / np.sqrt(c[ok])
        i = int(np.argmax(score))
        if score[i] > best[0]:
            best = (float(score[i]), float(c[i]), m, acts[i])

    alpha, c, m, acts = best
    if acts is None:
        H, S, _ = tasks[0].H, tasks[0].S, tasks[0].A
        return MEGResult(math.nan, math.inf, 0, np.zeros((H, S), dtype=np.int64), False)
    return MEGResult(alpha, c, m, acts, True)


def candidate_score(f, tasks: TaskSet, sched: ExplorationSchedule, task_index: int, pi_tilde) -> float:
    """Objective value of one (possibly stochastic) improved policy on one task."""
    fs = f.fs if isinstance(f, SuboptimalJoint) else tuple(f)
    greedies, behavior = behavior_policy(fs, tasks, sched)
    M = tasks[task_index]
    mu_b = occupancy(M, behavior)
    g = greedies[task_index]
    c = max(concentrability_from_occupancy(occupancy(M, g), mu_b),
            concentrability_from_occupancy(occupancy(M, pi_tilde), mu_b))
    if not math.isfinite(c):
        return -math.inf
    return (policy_value(M, pi_tilde) - policy_value(M, g)) / math.sqrt(c)


def stochastic_spot_check(f, tasks: TaskSet, sched: ExplorationSchedule,
                          rng: np.random.Generator, n: int = 1000) -> float:
    """Largest score over ``n`` random stochastic policies (Dirichlet rows, random task)."""
    H, S, A = tasks[0].H, tasks[0].S, tasks[0].A
    best = -math.inf
    for _ in range(n):
        m = int(rng.integers(len(tasks)))
        pi = rng.dirichlet(np.full(A, 0.5), size=(H, S))
        best = max(best, candidate_score(f, tasks, sched, m, pi))
    return best


# ------------------------------------------------------------ bounds


def sparse_goal(M: TabularMDP) -> tuple[int, int | None, int]:
    """Goal ``(s, a, h)`` of a single-goal task; ``a`` is None if every action is rewarded."""
    nz = np.argwhere(M.R != 0)
    if len(nz) == 1 and M.R[tuple(nz[0])] == 1.0:
        h, s, a = map(int, nz[0])
        return s, a, h
    if len(nz) == M.A and len({(h, s) for h, s, _ in nz}) == 1 and np.all(M.R[M.R != 0] == 1.0):
        h, s, _ = map(int, nz[0])
        return s, None, h
    raise ValueError("reward is not a single goal tuple with value 1")


def meg_upper_sparse(M: TabularMDP, f: np.ndarray, sched: ExplorationSchedule, goal=None) -> float:
    """Square root of the explored greedy policy's occupancy of the goal."""
    found = sparse_goal(M)
    if goal is not None and tuple(goal) != found:
        raise ValueError(f"goal {tuple(goal)} does not match the reward structure {found}")
    s, a, h = found
    mu = occupancy(M, eps_greedy(greedy_policy(f, M.H), sched))
    visit = mu[h, s].sum() if a is None else mu[h, s, a]
    return math.sqrt(float(visit))


def check_prop1(f, tasks: TaskSet, sched: ExplorationSchedule,
                cap: int = DEFAULT_CAP) -> tuple[float, list]:
    """Multitask gap and the per-task single-task gaps."""
    fs = f.fs if isinstance(f, SuboptimalJoint) else tuple(f)
    multi = meg_exact(fs, tasks, sched, cap).alpha
    singles = [meg_exact((fs[i],), tasks.subset([i]), sched, cap).alpha for i in range(len(tasks))]
    return multi, singles


def critical_layer(f, tasks: TaskSet, beta: float, goals: Sequence) -> int | None:
    """Earliest 0-based step whose goal task has a beta-suboptimal greedy."""
    fs = f.fs if isinstance(f, SuboptimalJoint) else tuple(f)
    bad = [goals[i][2] for i, (M, q) in enumerate(zip(tasks, fs))
           if optimal_values(M).value - policy_value(M, greedy_policy(q, M.H)) > beta]
    return min(bad) if bad else None


def explore_factor(sched: ExplorationSchedule, layer: int, A: int) -> float:
    """Probability weight for reaching 0-based ``layer``: follow until ``layer - 1``, then deviate.

    Each earlier step keeps the followed action with probability at least
    ``1 - eps + eps/A``; the deviation step contributes ``eps``, the ``1/A``
    for hitting the right action is kept in the bound's denominator.
    """
    if layer < 1:
        raise ValueError("the critical layer must be past the start step")
    eps = np.asarray(sched.eps)
    keep = 1.0 - eps[: layer - 1] + eps[: layer - 1] / A
    return float(np.prod(keep) * eps[layer - 1])


def sparse_lower_bound(beta: float, n_tasks: int, A: int, factor: float) -> float:
    return math.sqrt(beta**2 * factor / (2 * n_tasks * A))
