"""Linear MDPs on a finite carrier: features, covariance spectra, coverage certificates."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .exploration import ExplorationSchedule, eps_greedy, mixture
from .mdp import ShapeError, TabularMDP, occupancy, optimal_values
from .tasks import TaskSet

NORM_TOL = 1e-10
SYMMETRY_TOL = 1e-12
N_RANDOM_DIRECTIONS = 100


@dataclass(frozen=True)
class LinearMDP:
    """``P_h(s'|s,a) = <phi[h,s,a], nu[h,s']>`` and ``R_h(s,a) = <phi[h,s,a], theta[h]>``."""

    phi: np.ndarray  # (H, S, A, d)
    nu: np.ndarray  # (H, S, d)
    theta: np.ndarray  # (H, d)
    s1: int = 0

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        nu = np.array(self.nu, dtype=float)
        theta = np.array(self.theta, dtype=float)
        if phi.ndim != 4:
            raise ShapeError(f"phi must be (H, S, A, d), got {phi.shape}")
        H, S, A, d = phi.shape
        if nu.shape != (H, S, d):
            raise ShapeError(f"nu must be {(H, S, d)}, got {nu.shape}")
        if theta.shape != (H, d):
            raise ShapeError(f"theta must be {(H, d)}, got {theta.shape}")
        if not 0 <= int(self.s1) < S:
            raise ValueError(f"initial state {self.s1} outside 0..{S - 1}")
        for name, arr in (("phi", phi), ("nu", nu), ("theta", theta)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "s1", int(self.s1))

    @property
    def H(self) -> int:
        return self.phi.shape[0]

    @property
    def S(self) -> int:
        return self.phi.shape[1]

    @property
    def A(self) -> int:
        return self.phi.shape[2]

    @property
    def d(self) -> int:
        return self.phi.shape[3]

    def transitions(self) -> np.ndarray:
        return np.einsum("hsak,htk->hsat", self.phi, self.nu)

    def rewards(self) -> np.ndarray:
        return np.einsum("hsak,hk->hsa", self.phi, self.theta)

    def violations(self) -> list[str]:
        out = []
        d = self.d
        if np.any(self.phi < 0):
            out.append("negative feature entry")
        if np.any(self.nu < 0):
            out.append("negative measure entry")
        mass = np.einsum("hsak,hk->hsa", self.phi, self.nu.sum(axis=1))
        bad = np.argwhere(np.abs(mass - 1.0) > NORM_TOL)
        if len(bad):
            h, s, a = bad[0]
            out.append(f"transition mass {mass[h, s, a]!r} at ({h + 1},{s},{a})")
        if np.any(np.linalg.norm(self.phi, axis=-1) > 1.0 + NORM_TOL):
            out.append("feature norm above 1")
        if np.any(np.linalg.norm(self.nu, axis=-1) > np.sqrt(d) + NORM_TOL):
            out.append("measure norm above sqrt(d)")
        if np.any(np.linalg.norm(self.theta, axis=-1) > np.sqrt(d) + NORM_TOL):
            out.append("reward parameter norm above sqrt(d)")
        R = self.rewards()
        if np.any(R < -NORM_TOL) or np.any(R > 1.0 + NORM_TOL):
            out.append("induced reward outside [0, 1]")
        return out

    def with_theta(self, theta) -> "LinearMDP":
        return LinearMDP(self.phi, self.nu, theta, self.s1)

    def to_dict(self) -> dict:
        return {"d": self.d, "s1": self.s1, "phi": self.phi.tolist(),
                "nu": self.nu.tolist(), "theta": self.theta.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearMDP":
        lm = cls(np.asarray(d["phi"], dtype=float), np.asarray(d["nu"], dtype=float),
                 np.asarray(d["theta"], dtype=float), int(d.get("s1", 0)))
        if lm.d != int(d["d"]):
            raise ShapeError(f"declared d={d['d']} but features have {lm.d} columns")
        return lm

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "LinearMDP":
        return cls.from_dict(json.loads(text))


def to_tabular(LM: LinearMDP) -> TabularMDP:
    problems = LM.violations()
    if problems:
        raise ValueError("linear MDP normalization violated: " + "; ".join(problems))
    P = np.clip(LM.transitions(), 0.0, None)
    R = np.clip(LM.rewards(), 0.0, 1.0)
    return TabularMDP(P, R, LM.s1)


def embed_tabular(M: TabularMDP) -> LinearMDP:
    """One-hot embedding with ``d = S * A``; coordinate ``s * A + a``."""
    H, S, A = M.H, M.S, M.A
    d = S * A
    phi = np.zeros((H, S, A, d))
    idx = np.arange(d).reshape(S, A)
    phi[:, np.arange(S)[:, None], np.arange(A)[None, :], idx] = 1.0
    nu = M.P.reshape(H, d, S).transpose(0, 2, 1).copy()
    theta = M.R.reshape(H, d).copy()
    return LinearMDP(phi, nu, theta, M.s1)


def feature_covariance(LM: LinearMDP, pi, h: int) -> np.ndarray:
    """``sum_{s,a} mu_h(s,a) phi phi^T`` at 0-based step ``h``."""
    mu = occupancy(to_tabular(LM.with_theta(np.zeros_like(LM.theta))), pi)[h]
    phi = LM.phi[h]
    C = np.einsum("sa,sai,saj->ij", mu, phi, phi)
    return 0.5 * (C + C.T)


def min_eigenvalue(C: np.ndarray, tol: float = 1e-13, max_sweeps: int = 100) -> float:
    return float(eigenvalues(C, tol, max_sweeps)[0])


def eigenvalues(C: np.ndarray, tol: float = 1e-13, max_sweeps: int = 100) -> np.ndarray:
    """Sorted eigenvalues of a symmetric matrix by cyclic Jacobi rotations."""
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ShapeError(f"need a square matrix, got shape {C.shape}")
    scale = max(1.0, float(np.abs(C).max(initial=0.0)))
    if np.abs(C - C.T).max(initial=0.0) > SYMMETRY_TOL * scale:
        raise ValueError("matrix is not symmetric")
    return kernels.jacobi_eigenvalues(np.ascontiguousarray(C), tol, max_sweeps)


# ----------------------------------------------------------- diverse tasks


@dataclass(frozen=True)
class LinearTaskSet:
    tasks: tuple
    ids: tuple

    def __len__(self) -> int:
        return len(self.tasks)

    def to_taskset(self) -> TaskSet:
        return TaskSet(tuple(to_tabular(t) for t in self.tasks), self.ids)


def basis_task(LM: LinearMDP, i: int, h: int) -> LinearMDP:
    theta = np.zeros((LM.H, LM.d))
    theta[h, i] = 1.0
    return LM.with_theta(theta)


def gen_diverse_linear(LM: LinearMDP) -> LinearTaskSet:
    """``d * H`` tasks; task ``(i, h)`` has reward parameter ``e_i`` at step ``h`` only."""
    tasks, ids = [], []
    for h in range(LM.H):
        for i in range(LM.d):
            tasks.append(basis_task(LM, i, h))
            ids.append(f"e{i}-h{h + 1}")
    return LinearTaskSet(tuple(tasks), tuple(ids))


# --------------------------------------------------------------- coverage


def probe_directions(d: int, n_random: int = N_RANDOM_DIRECTIONS, seed: int = 0) -> np.ndarray:
    """Basis vectors followed by seeded random unit vectors in the positive orthant."""
    rng = np.random.default_rng(seed)
    rand = np.abs(rng.standard_normal((n_random, d)))
    rand /= np.linalg.norm(rand, axis=1, keepdims=True)
    return np.vstack([np.eye(d), rand])


@dataclass(frozen=True)
class CoverageCertificate:
    """Coverage over a finite direction test set; not a certificate for every direction."""

    b1: float
    b1_basis: float
    b1_random: float
    values: np.ndarray
    directions: np.ndarray
    step: int


def max_linear_reach(LM: LinearMDP, h: int, nu: np.ndarray) -> float:
    """``max_pi E_pi[nu^T phi_h(s_h, a_h)]`` by backward DP."""
    R = np.zeros((LM.H, LM.S, LM.A))
    R[h] = LM.phi[h] @ nu
    P = LM.transitions()
    _, act = kernels.optimal(np.ascontiguousarray(P[: h + 1]), np.ascontiguousarray(R[: h + 1]))
    return float(kernels.evaluate_actions(np.ascontiguousarray(P[: h + 1]),
                                          np.ascontiguousarray(R[: h + 1]), act, LM.s1))


def active_coordinates(LM: LinearMDP, h: int) -> np.ndarray:
    """Feature coordinates some policy activates at 0-based step ``h``."""
    eye = np.eye(LM.d)
    return np.array([j for j in range(LM.d) if max_linear_reach(LM, h, eye[j]) > 0], dtype=np.int64)


def coverage_b1(LM: LinearMDP, h: int, directions: np.ndarray | None = None,
                coords: Sequence[int] | None = None) -> CoverageCertificate:
    """Minimum over probe directions of the best achievable ``E[nu^T phi_h]``.

    With ``coords`` the probes live in the span of those coordinates only.
    """
    d = LM.d if coords is None else len(coords)
    if directions is None:
        directions = probe_directions(d)
        if coords is not None:
            full = np.zeros((len(directions), LM.d))
            full[:, np.asarray(coords, dtype=np.int64)] = directions
            directions = full
    vals = np.array([max_linear_reach(LM, h, nu) for nu in directions])
    basis = vals[:d] if len(vals) >= d else vals
    rest = vals[d:] if len(vals) > d else np.array([np.inf])
    return CoverageCertificate(float(vals.min()), float(basis.min()), float(rest.min()),
                               vals, directions, h)


# ----------------------------------------------------- lambda_min lemma


@dataclass(frozen=True)
class LemmaCheck:
    lhs: float
    rhs: float
    b1: float
    step: int
    degenerate: tuple  # coordinates no policy can activate at the task step

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs


def lemma_rhs(sched: ExplorationSchedule, h: int, b1: float, d: int, A: int) -> float:
    """``eps_h prod_{k<h}(1 - eps_k) b1^2 / (2 d A)`` for 0-based ``h``."""
    eps = np.asarray(sched.eps)
    return float(eps[h] * np.prod(1.0 - eps[:h]) * b1**2 / (2 * d * A))


def check_lemma_linear2(LM: LinearMDP, h: int, sched: ExplorationSchedule,
                        b1: float | None = None, *, restrict: bool = False) -> LemmaCheck:
    """Covariance of explored optimal policies of the step-``h`` basis tasks, one step later.

    ``h`` is 0-based and must leave a following step. ``b1`` defaults to the
    coverage certificate at step ``h + 1``. Tasks whose goal coordinate is
    unreachable are reported in ``degenerate``; their (arbitrary) optimal
    policies stay in the mixture, which keeps ``d`` members.

    ``restrict=True`` evaluates the covariance and the coverage only on the
    coordinates reachable at step ``h + 1``; without it any never-active
    coordinate forces both sides to zero.
    """
    if not 0 <= h < LM.H - 1:
        raise ValueError(f"step {h + 1} has no following step in horizon {LM.H}")
    coords = active_coordinates(LM, h + 1) if restrict else np.arange(LM.d)
    if b1 is None:
        b1 = coverage_b1(LM, h + 1, coords=coords if restrict else None).b1
    members, degenerate = [], []
    for i in range(LM.d):
        task = to_tabular(basis_task(LM, i, h))
        sol = optimal_values(task)
        if sol.value <= 0.0:
            degenerate.append(i)
        members.append(eps_greedy(sol.policy, sched))
    C = feature_covariance(LM, mixture(members), h + 1)[np.ix_(coords, coords)]
    return LemmaCheck(min_eigenvalue(C), lemma_rhs(sched, h, b1, LM.d, LM.A), float(b1), h,
                      tuple(degenerate))


def random_linear_mdp(rng: np.random.Generator, S: int, A: int, H: int) -> LinearMDP:
    from .mdp import random_mdp

    return embed_tabular(random_mdp(rng, S, A, H))


# ------------------------------------------------------------- fixtures


def full_rank_reward_fixture() -> tuple[TabularMDP, TaskSet]:
    """Two states, two tasks at step 2 with linearly independent state rewards.

    Action 0 leads to state 0 and action 1 to state 1. Task one rewards state 0;
    task two rewards state 0 with 0.51 and state 1 with 0.49. Both optimal
    policies head for state 0, so their visit distribution at step 2 is a single
    point even though the reward vectors span the plane.
    """
    P = np.zeros((2, 2, 2, 2))
    P[:, :, 0, 0] = 1.0
    P[:, :, 1, 1] = 1.0
    R1 = np.zeros((2, 2, 2))
    R1[1, 0, :] = 1.0
    R2 = np.zeros((2, 2, 2))
    R2[1, 0, :] = 0.51
    R2[1, 1, :] = 0.49
    base = TabularMDP(P, np.zeros((2, 2, 2)), 0)
    return base, TaskSet((base.with_rewards(R1), base.with_rewards(R2)), ("state0", "mixed"))


# ------------------------------------------------------------------ export

EIGEN_COLUMNS = ("policy", "h", "rank", "eigenvalue")


def write_spectra_csv(path, spectra: Sequence[tuple[str, int, np.ndarray]]) -> None:
    """Rows of sorted eigenvalues per (policy label, 1-based step)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EIGEN_COLUMNS)
        for label, h, vals in spectra:
            for k, v in enumerate(np.sort(np.asarray(vals))):
                writer.writerow((label, h, k, repr(float(v))))
