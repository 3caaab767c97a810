"""Round-based multitask learning with shared policies, plus a fixed-curriculum learner."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .exploration import ExplorationSchedule, constant_schedule, eps_greedy
from .mdp import (
    Episode,
    MixturePolicy,
    deterministic_policy,
    greedy_actions,
    optimal_values,
    policy_value,
    sample_episode,
    uniform_policy,
)
from .oracle import Dataset, fqi_tabular
from .tasks import TaskSet

RUNLOG_COLUMNS = ("round", "task_id", "greedy_value", "optimal_value",
                  "suboptimality", "episodes_total", "seed")


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``key`` (e.g. seed index, round, task) under ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


@dataclass
class RunLog:
    """Exact per-round greedy values for every task.

    ``greedy_value[t, m]`` is the value of the greedy policy fitted before
    round ``t + 1`` collected its episodes (round numbers are 1-based in CSV).
    """

    task_ids: tuple
    optimal_value: np.ndarray
    greedy_value: np.ndarray
    rounds: np.ndarray
    seed: int = 0
    greedy_actions: np.ndarray | None = None
    config: dict = field(default_factory=dict)

    @property
    def n_tasks(self) -> int:
        return len(self.task_ids)

    @property
    def episodes_total(self) -> np.ndarray:
        return self.rounds * self.n_tasks

    @property
    def suboptimality(self) -> np.ndarray:
        return self.optimal_value[None, :] - self.greedy_value

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(RUNLOG_COLUMNS)
        gap = self.suboptimality
        for i, t in enumerate(self.rounds):
            for m, tid in enumerate(self.task_ids):
                writer.writerow((int(t), tid, repr(float(self.greedy_value[i, m])),
                                 repr(float(self.optimal_value[m])), repr(float(gap[i, m])),
                                 int(t) * self.n_tasks, self.seed))
        return buf.getvalue()


def _greedy_value(M, actions) -> float:
    return float(kernels.evaluate_actions(M.P, M.R, actions, M.s1))


def run_algorithm1(tasks: TaskSet, sched: ExplorationSchedule, T: int, seed: int = 0, *,
                   stream_key: Sequence[int] = (), stop_beta: float | None = None,
                   eval_every: int = 1, default: float = 0.0,
                   keep_actions: bool = False, keep_datasets: bool = False):
    """Policy-sharing multitask loop.

    Each round fits every task's tabular FQI on its data so far, shares the
    mixture of all explored greedy policies, and samples one episode per task
    from that mixture. The generator for round ``t`` and task ``m`` is
    ``substream(seed, *stream_key, t, m)``, so results do not depend on the
    order in which tasks are processed.

    ``stop_beta`` ends the run after the first logged round in which every
    greedy policy is ``stop_beta``-optimal; the log up to that point is
    identical to a full run's prefix.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    if eval_every < 1:
        raise ValueError("eval_every must be at least 1")
    H, S, A = tasks[0].H, tasks[0].S, tasks[0].A
    if sched.H != H:
        raise ValueError(f"schedule horizon {sched.H} does not match task horizon {H}")
    n = len(tasks)
    data = [Dataset(S, A, H) for _ in range(n)]
    v_star = np.array([optimal_values(M).value for M in tasks])

    rounds, values, history = [], [], []
    eps = np.asarray(sched.eps)[:, None]
    for t in range(1, T + 1):
        acts = [greedy_actions(fqi_tabular(D, default=default), H) for D in data]
        if (t - 1) % eval_every == 0 or t == T:
            v = np.array([_greedy_value(M, a) for M, a in zip(tasks, acts)])
            rounds.append(t)
            values.append(v)
            if keep_actions:
                history.append(np.stack(acts))
            if stop_beta is not None and np.all(v_star - v <= stop_beta):
                break
        # cumulative action probabilities of each explored greedy member
        cums = []
        for a in acts:
            pi = (1.0 - eps[..., None]) * np.eye(A)[a] + eps[..., None] / A
            cums.append(np.cumsum(pi, axis=-1))
        for m, M in enumerate(tasks):
            rng = substream(seed, *stream_key, t, m)
            member = min(int(rng.random() * n), n - 1)
            u = rng.random(2 * H)
            st, ac, rw = kernels.sample(M.P_cum, M.R, cums[member], M.s1, u)
            data[m].add_episode(Episode(st, ac, rw))

    log = RunLog(
        task_ids=tuple(tasks.ids),
        optimal_value=v_star,
        greedy_value=np.array(values),
        rounds=np.array(rounds, dtype=np.int64),
        seed=seed,
        greedy_actions=np.array(history) if keep_actions else None,
        config={"T": T, "eps": list(sched.eps), "stop_beta": stop_beta,
                "eval_every": eval_every, "default": default},
    )
    return (log, data) if keep_datasets else log


def sample_complexity(log: RunLog, beta: float) -> int | None:
    """First logged round at which every task's greedy policy is ``beta``-optimal."""
    ok = np.all(log.suboptimality <= beta, axis=1)
    hits = np.flatnonzero(ok)
    return int(log.rounds[hits[0]]) if hits.size else None


def returned_policy(log: RunLog, task: int, A: int, mode: str = "final_greedy"):
    """Policy returned for one task: the last greedy, or the mixture of all greedies."""
    if log.greedy_actions is None:
        raise ValueError("run with keep_actions=True to recover returned policies")
    acts = log.greedy_actions[:, task]
    if mode == "final_greedy":
        return deterministic_policy(acts[-1], A)
    if mode == "mixture_greedy":
        return MixturePolicy(tuple(deterministic_policy(a, A) for a in acts))
    raise ValueError(f"unknown mode {mode!r}")


def returned_suboptimality(log: RunLog, task: int, mode: str = "final_greedy") -> float:
    """Exact suboptimality of :func:`returned_policy`, read off the logged values.

    The mixture's value is the mean of its members' values, so no extra
    evaluation is needed.
    """
    v = log.greedy_value[:, task]
    value = v[-1] if mode == "final_greedy" else float(np.mean(v))
    if mode not in ("final_greedy", "mixture_greedy"):
        raise ValueError(f"unknown mode {mode!r}")
    return float(log.optimal_value[task] - value)


# ------------------------------------------------------------ curriculum


@dataclass(frozen=True)
class CurriculumResult:
    policy: np.ndarray
    episodes: int
    success: bool
    phase_episodes: tuple


def curriculum_budget(A: int, H: int, n_phases: int, delta: float) -> list[int]:
    return [math.ceil(4 * A * t * math.log(H / delta)) for t in range(1, n_phases + 1)]


def _is_deterministic(P: np.ndarray) -> bool:
    return bool(np.all((P == 0.0) | (P == 1.0)))


def run_curriculum(tasks: TaskSet, delta: float, seed: int = 0, *,
                   stream_key: Sequence[int] = ()) -> CurriculumResult:
    """Learn tasks in order, exploring around the previous phase's greedy policy.

    Phase ``t`` (1-based) explores with a constant ``eps = 1/t`` around the
    previous greedy policy (uniform before the first phase), collects
    ``ceil(4 A t log(H / delta))`` episodes on task ``t`` and fits FQI on that
    phase's episodes only.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if not tasks.shared_transitions or not all(_is_deterministic(M.P) for M in tasks):
        raise ValueError("the curriculum learner needs deterministic, shared transitions")
    H, S, A = tasks[0].H, tasks[0].S, tasks[0].A
    budgets = curriculum_budget(A, H, len(tasks), delta)
    pi = uniform_policy(tasks[0])
    for t, (M, n_t) in enumerate(zip(tasks, budgets), start=1):
        behavior = eps_greedy(pi, constant_schedule(H, 1.0 / t))
        D = Dataset(S, A, H)
        for e in range(n_t):
            D.add_episode(sample_episode(M, behavior, substream(seed, *stream_key, t, e)))
        pi = deterministic_policy(greedy_actions(fqi_tabular(D), H), A)
    last = tasks[len(tasks) - 1]
    success = abs(optimal_values(last).value - policy_value(last, pi)) <= 1e-12
    return CurriculumResult(pi, int(sum(budgets)), success, tuple(budgets))
