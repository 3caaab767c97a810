"""Myopic exploration: epsilon-greedy and Gaussian perturbations of a policy."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .mdp import MixturePolicy, ShapeError

__all__ = [
    "ExplorationSchedule",
    "GaussianExploredPolicy",
    "MixturePolicy",
    "constant_schedule",
    "default_schedule",
    "eps_greedy",
    "gaussian_expl",
    "mixture",
    "survival_explore",
]


@dataclass(frozen=True)
class ExplorationSchedule:
    kind: str
    eps: tuple
    sigma: tuple | None = None

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps)
        if self.kind not in ("epsilon_greedy", "gaussian"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if any(not 0.0 <= e <= 1.0 for e in eps):
            raise ValueError(f"epsilon entries must lie in [0, 1], got {eps}")
        object.__setattr__(self, "eps", eps)
        if self.kind == "gaussian":
            if self.sigma is None or len(self.sigma) != len(eps):
                raise ValueError("gaussian schedule needs one sigma per step")
            sigma = tuple(float(s) for s in self.sigma)
            if any(s <= 0 for s in sigma):
                raise ValueError(f"sigma entries must be positive, got {sigma}")
            object.__setattr__(self, "sigma", sigma)

    @property
    def H(self) -> int:
        return len(self.eps)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "eps": list(self.eps)}
        if self.sigma is not None:
            d["sigma"] = list(self.sigma)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExplorationSchedule":
        return cls(d["kind"], tuple(d["eps"]), tuple(d["sigma"]) if "sigma" in d else None)


def default_schedule(H: int, variant: str = "thm2") -> ExplorationSchedule:
    """``thm2``: eps_h = 1/(h+1); ``propC``: eps_h = 1/h (1-based h)."""
    if H < 1:
        raise ValueError("horizon must be at least 1")
    h = np.arange(1, H + 1)
    if variant == "thm2":
        eps = 1.0 / (h + 1)
    elif variant == "propC":
        eps = 1.0 / h
    else:
        raise ValueError(f"unknown schedule variant {variant!r}")
    return ExplorationSchedule("epsilon_greedy", tuple(eps))


def constant_schedule(H: int, eps: float) -> ExplorationSchedule:
    return ExplorationSchedule("epsilon_greedy", (float(eps),) * H)


def survival_explore(sched: ExplorationSchedule, h: int) -> float:
    """``prod_{k<h} (1 - eps_k) * eps_h`` for 0-based step ``h``."""
    eps = np.asarray(sched.eps)
    return float(np.prod(1.0 - eps[:h]) * eps[h])


def eps_greedy(pi, sched: ExplorationSchedule):
    if isinstance(pi, MixturePolicy):
        return MixturePolicy(tuple(eps_greedy(m, sched) for m in pi.members))
    if sched.kind != "epsilon_greedy":
        raise ValueError("eps_greedy needs an epsilon_greedy schedule")
    pi = np.asarray(pi, dtype=float)
    if pi.ndim != 3 or pi.shape[0] != sched.H:
        raise ShapeError(f"policy shape {pi.shape} does not match schedule horizon {sched.H}")
    eps = np.asarray(sched.eps)[:, None, None]
    return (1.0 - eps) * pi + eps / pi.shape[-1]


def mixture(policies: Sequence) -> MixturePolicy:
    return MixturePolicy(tuple(policies))


@dataclass(frozen=True)
class GaussianExploredPolicy:
    """Linear-gain policy with per-step Gaussian exploration.

    ``mode="mixture"``: with probability eps_h the action is pure N(0, sigma_h^2 I)
    noise, otherwise the gain action ``F_h s``. ``mode="additive"``: with
    probability eps_h the noise is added to the gain action instead.
    """

    gains: tuple
    eps: tuple
    sigma: tuple
    mode: str = "mixture"

    def action(self, h: int, s: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        F = self.gains[h]
        # both draws happen every step so the stream stays aligned across branches
        u = rng.random()
        noise = rng.normal(0.0, self.sigma[h], size=F.shape[0])
        base = F @ s
        if u < self.eps[h]:
            return noise if self.mode == "mixture" else base + noise
        return base


def gaussian_expl(gains: Sequence, sched: ExplorationSchedule, mode: str = "mixture") -> GaussianExploredPolicy:
    if sched.kind != "gaussian":
        raise ValueError("gaussian_expl needs a gaussian schedule")
    if mode not in ("mixture", "additive"):
        raise ValueError(f"unknown gaussian exploration mode {mode!r}")
    gains = tuple(np.asarray(F, dtype=float) for F in gains)
    if len(gains) != sched.H:
        raise ShapeError(f"{len(gains)} gains for a {sched.H}-step schedule")
    return GaussianExploredPolicy(gains, sched.eps, sched.sigma, mode)
