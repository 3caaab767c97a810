"""Offline learning oracle: fitted Q-iteration for tabular and linear classes.

Both oracles work from per-cell sufficient statistics (visit counts, reward
sums, successor counts), so their output does not depend on the order in
which records arrived.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from . import kernels
from .mdp import Episode, ShapeError

RIDGE = 1e-6


class Dataset:
    """Append-only transition data for one task."""

    def __init__(self, S: int, A: int, H: int):
        self.S, self.A, self.H = S, A, H
        self.episodes: list[Episode] = []
        self.loose_records: list[tuple] = []
        self.count = np.zeros((H, S, A), dtype=np.int64)
        self.reward_sum = np.zeros((H, S, A))
        self.next_count = np.zeros((H, S, A, S), dtype=np.int64)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.S, self.A, self.H

    def __len__(self) -> int:
        return len(self.episodes)

    def _check(self, h, s, a, s_next):
        if not 0 <= h < self.H:
            raise ValueError(f"record step {h + 1} outside 1..{self.H}")
        if not (0 <= s < self.S and 0 <= s_next < self.S):
            raise ValueError(f"record state out of range: s={s}, s'={s_next}, S={self.S}")
        if not 0 <= a < self.A:
            raise ValueError(f"record action {a} outside 0..{self.A - 1}")

    def add_record(self, h: int, s: int, a: int, r: float, s_next: int) -> None:
        """Add one transition (0-based step ``h``) outside any episode."""
        self._check(h, s, a, s_next)
        self.loose_records.append((h, s, a, float(r), s_next))
        self.count[h, s, a] += 1
        self.reward_sum[h, s, a] += r
        self.next_count[h, s, a, s_next] += 1

    def add_episode(self, ep: Episode) -> None:
        if len(ep) != self.H:
            raise ValueError(f"episode has {len(ep)} steps, dataset horizon is {self.H}")
        st, ac = ep.states, ep.actions
        if st.min() < 0 or st.max() >= self.S or ac.min() < 0 or ac.max() >= self.A:
            raise ValueError("episode state or action out of range")
        h = np.arange(self.H)
        np.add.at(self.count, (h, st[:-1], ac), 1)
        np.add.at(self.reward_sum, (h, st[:-1], ac), ep.rewards)
        np.add.at(self.next_count, (h, st[:-1], ac, st[1:]), 1)
        self.episodes.append(ep)

    def extend(self, episodes: Iterable[Episode]) -> "Dataset":
        for ep in episodes:
            self.add_episode(ep)
        return self

    def records(self) -> list[tuple]:
        """All ``(h, s, a, r, s_next)`` records, 0-based ``h``, sorted by ``(h, s, a)``."""
        out = list(self.loose_records)
        for ep in self.episodes:
            out.extend((h - 1, s, a, r, sn) for h, s, a, r, sn in ep.steps())
        return sorted(out, key=lambda rec: rec[:3])


def as_dataset(data, shape: tuple[int, int, int] | None = None) -> Dataset:
    if isinstance(data, Dataset):
        if shape is not None and tuple(shape) != data.shape:
            raise ShapeError(f"dataset shape {data.shape} does not match requested {tuple(shape)}")
        return data
    if shape is None:
        raise ValueError("shape (S, A, H) is required when passing raw episodes")
    S, A, H = shape
    return Dataset(S, A, H).extend(data)


def fqi_tabular(data, shape: tuple[int, int, int] | None = None, *, default: float = 0.0) -> np.ndarray:
    """Exact empirical-Bellman-error minimizer over tabular Q-functions.

    Unvisited cells receive ``default``: 0 is the pessimistic choice, 1 an
    optimistic ablation.
    """
    D = as_dataset(data, shape)
    return kernels.fqi_counts(D.count, D.reward_sum, D.next_count, float(default))


@dataclass(frozen=True)
class LinearQ:
    """Per-step weights ``w[h]`` of ``Q_h(s, a) = <phi_h(s, a), w_h>``."""

    w: np.ndarray

    @property
    def d(self) -> int:
        return self.w.shape[1]

    @property
    def radius(self) -> float:
        return 2.0 * np.sqrt(self.d)

    def q_values(self, features: np.ndarray) -> np.ndarray:
        """Tabulate on a finite carrier; returns ``(H + 1, S, A)`` with a zero last layer."""
        H = self.w.shape[0]
        q = np.zeros((H + 1,) + features.shape[1:3])
        q[:H] = np.einsum("hsad,hd->hsa", features[:H], self.w)
        return q


def fqi_linear(data, features: np.ndarray, *, lam: float = RIDGE) -> LinearQ:
    """Backward ridge regression of Bellman targets onto ``features[h, s, a, :]``."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 4:
        raise ShapeError("features must have shape (H, S, A, d)")
    H_f, S, A, d = features.shape
    D = as_dataset(data, (S, A, data.H if isinstance(data, Dataset) else H_f))
    if H_f < D.H:
        raise ShapeError(f"features cover {H_f} steps, data has horizon {D.H}")
    w = np.zeros((D.H, d))
    v_next = np.zeros(S)
    radius = 2.0 * np.sqrt(d)
    for h in range(D.H - 1, -1, -1):
        n = D.count[h].astype(float)
        phi = features[h]
        targets = D.reward_sum[h] + D.next_count[h] @ v_next  # per-cell sum of targets
        if not np.all(np.isfinite(targets)):
            raise ValueError(f"non-finite regression targets at step {h + 1}")
        gram = np.einsum("sa,sai,saj->ij", n, phi, phi) + lam * np.eye(d)
        rhs = np.einsum("sai,sa->i", phi, targets)
        wh = np.linalg.solve(gram, rhs)
        norm = np.linalg.norm(wh)
        if norm > radius:
            wh *= radius / norm
        w[h] = wh
        v_next = (phi @ wh).max(axis=-1)
    return LinearQ(w)


DATASET_COLUMNS = ("task_id", "episode", "h", "s", "a", "r", "s_next")


def write_datasets_csv(path, datasets: Mapping) -> None:
    """Export episodes as CSV rows with 1-based ``h``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DATASET_COLUMNS)
        for task_id, D in datasets.items():
            for e, ep in enumerate(D.episodes):
                for h, s, a, r, sn in ep.steps():
                    writer.writerow((task_id, e, h, s, a, repr(r), sn))
