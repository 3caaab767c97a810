"""Task sets and their generators: hallway, sparse-reward sets, mirror transitions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .mdp import ShapeError, TabularMDP, validate_mdp

BACKWARD, FORWARD = 0, 1


@dataclass(frozen=True)
class TaskSet:
    tasks: tuple
    ids: tuple = ()

    def __post_init__(self):
        tasks = tuple(self.tasks)
        if not tasks:
            raise ValueError("a task set needs at least one task")
        shape = tasks[0].shape
        for i, M in enumerate(tasks):
            if M.shape != shape:
                raise ShapeError(f"task {i} has (S, A, H) = {M.shape}, task 0 has {shape}")
            if M.s1 != tasks[0].s1:
                raise ShapeError(f"task {i} starts in state {M.s1}, task 0 in {tasks[0].s1}")
        ids = tuple(self.ids) if self.ids else tuple(str(i) for i in range(len(tasks)))
        if len(ids) != len(tasks):
            raise ValueError("one id per task required")
        object.__setattr__(self, "tasks", tasks)
        object.__setattr__(self, "ids", ids)

    def __len__(self) -> int:
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def __getitem__(self, i):
        return self.tasks[i]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.tasks[0].shape

    @property
    def shared_transitions(self) -> bool:
        P0 = self.tasks[0].P
        return all(np.array_equal(M.P, P0) for M in self.tasks[1:])

    def subset(self, indices: Sequence[int]) -> "TaskSet":
        return TaskSet(tuple(self.tasks[i] for i in indices), tuple(self.ids[i] for i in indices))


def validate_taskset(tasks: TaskSet) -> list:
    problems = []
    for tid, M in zip(tasks.ids, tasks.tasks):
        problems.extend(f"task {tid}: {v.message}" for v in validate_mdp(M).errors)
    return problems


# ------------------------------------------------------------------ hallway


def hallway_transitions(N: int) -> np.ndarray:
    """Deterministic line of ``N + 1`` states, action 0 back, action 1 forward, clamped."""
    S, H = N + 1, N
    P = np.zeros((H, S, 2, S))
    for s in range(S):
        P[:, s, BACKWARD, max(s - 1, 0)] = 1.0
        P[:, s, FORWARD, min(s + 1, N)] = 1.0
    return P


def hallway_task(N: int, goal: int) -> TabularMDP:
    """Reward 1 for stepping forward into state ``goal`` on move number ``goal``."""
    P = hallway_transitions(N)
    R = np.zeros((N, N + 1, 2))
    R[goal - 1, goal - 1, FORWARD] = 1.0
    return TabularMDP(P, R, 0)


def gen_hallway(N: int) -> tuple[TabularMDP, TaskSet]:
    """Zero-reward base hallway and the ``N``-task diverse set (task ``i`` has goal ``i``)."""
    if N < 1:
        raise ValueError("hallway length must be at least 1")
    base = TabularMDP(hallway_transitions(N), np.zeros((N, N + 1, 2)), 0)
    tasks = TaskSet(tuple(hallway_task(N, i) for i in range(1, N + 1)),
                    tuple(f"goal{i}" for i in range(1, N + 1)))
    return base, tasks


def hallway_single(N: int) -> TaskSet:
    return TaskSet((hallway_task(N, N),), (f"goal{N}",))


def hallway_goal(N: int, goal: int) -> tuple[int, int, int]:
    """Goal tuple ``(s, a, h)`` of hallway task ``goal`` (0-based step)."""
    return goal - 1, FORWARD, goal - 1


# ------------------------------------------------------- sparse-reward sets


def sparse_task(base: TabularMDP, s: int, h: int) -> TabularMDP:
    R = np.zeros_like(base.R)
    R[h, s, :] = 1.0
    return base.with_rewards(R)


def gen_sparse_set(base: TabularMDP) -> TaskSet:
    """One task per ``(s, h)`` rewarding every action in state ``s`` at step ``h``."""
    tasks, ids = [], []
    for h in range(base.H):
        for s in range(base.S):
            tasks.append(sparse_task(base, s, h))
            ids.append(f"s{s}-h{h + 1}")
    return TaskSet(tuple(tasks), tuple(ids))


def max_reach(M: TabularMDP) -> np.ndarray:
    """``out[t, s] = max_pi Pr(s_t = s)`` for 0-based ``t = 0..H``."""
    return kernels.max_reach(M.P, M.s1)


def coverage_constant(base: TabularMDP) -> tuple[float, list]:
    """Smallest positive max-reach over ``(s, h)`` with ``h`` past the start step.

    Returns ``(b1, unreachable)`` where ``unreachable`` lists 0-based ``(s, h)``
    pairs no policy can visit. ``b1`` is ``inf`` when nothing past the start is
    reachable (horizon 1).
    """
    reach = max_reach(base)[: base.H]
    unreachable = [(int(s), int(h)) for h, s in zip(*np.nonzero(reach == 0.0))]
    positive = reach[1:][reach[1:] > 0]
    return (float(positive.min()) if positive.size else float("inf")), unreachable


# ------------------------------------------------------------ mirror MDP


def mirror_transform(base: TabularMDP, beta: float) -> TabularMDP:
    """Redirect mass of states whose max-reach is at most ``beta`` to a dummy state.

    The dummy is appended as the last state index (``base.S``); it is absorbing
    and reward-free. Layers are processed forward and, within a layer, states in
    ascending index order with reachability recomputed after every redirection.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    H, S, A = base.H, base.S, base.A
    dummy = S
    P = np.zeros((H, S + 1, A, S + 1))
    P[:, :S, :, :S] = base.P
    P[:, dummy, :, dummy] = 1.0
    R = np.zeros((H, S + 1, A))
    R[:, :S] = base.R
    for h in range(H - 1):
        for s in range(S):
            reach = kernels.max_reach(P[: h + 1], base.s1)[h + 1, s]
            if reach <= beta:
                P[h, :, :, dummy] += P[h, :, :, s]
                P[h, :, :, s] = 0.0
    return TabularMDP(P, R, base.s1)


def extend_policy(pi: np.ndarray, S_new: int) -> np.ndarray:
    """Pad a policy with uniform rows for extra (dummy) states."""
    H, S, A = pi.shape
    out = np.full((H, S_new, A), 1.0 / A)
    out[:, :S] = pi
    return out
