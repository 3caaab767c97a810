"""Verification suites: each check returns rows of (both sides, margin, pass flag)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .exploration import default_schedule
from .linear import check_lemma_linear2, random_linear_mdp
from .lqr import lqr_value, random_lqr, riccati, riccati_optimality_check
from .mdp import (
    TabularMDP,
    optimal_values,
    occupancy,
    random_mdp,
    value_difference_check,
)
from .meg import (
    SuboptimalJoint,
    check_prop1,
    critical_layer,
    explore_factor,
    meg_exact,
    meg_upper_sparse,
    sparse_lower_bound,
)
from .tasks import (
    TaskSet,
    coverage_constant,
    extend_policy,
    gen_sparse_set,
    hallway_single,
    max_reach,
    mirror_transform,
)

SLACK = 1e-9
AUDIT_COLUMNS = ("check", "instance", "lhs", "rhs", "margin", "passed")


@dataclass(frozen=True)
class AuditRow:
    """One checked inequality ``lhs >= rhs`` (margin = lhs - rhs)."""

    check: str
    instance: str
    lhs: float
    rhs: float
    slack: float = SLACK

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs

    @property
    def passed(self) -> bool:
        return self.lhs >= self.rhs - self.slack

    def as_record(self) -> dict:
        d = asdict(self)
        d.pop("slack")
        d.update(margin=self.margin, passed=self.passed)
        return d


def _random_q(rng: np.random.Generator, H: int, S: int, A: int) -> np.ndarray:
    q = np.zeros((H + 1, S, A))
    q[:H] = rng.random((H, S, A))
    return q


# ------------------------------------------------------------------ hallway


def hallway_bound_rows(Ns=(6, 8, 10), cap: int = 2**20) -> list[AuditRow]:
    """Single-task gap of the always-backward greedy against ``2^{-H/2}``."""
    rows = []
    for N in Ns:
        tasks = hallway_single(N)
        sched = default_schedule(N, "thm2")
        f = np.zeros((N + 1, N + 1, 2))
        bound = 2.0 ** (-N / 2)
        upper = meg_upper_sparse(tasks[0], f, sched)
        rows.append(AuditRow("hallway_upper_sparse", f"N={N}", bound, upper))
        alpha = meg_exact([f], tasks, sched, cap).alpha
        rows.append(AuditRow("hallway_meg_exact", f"N={N}", bound, alpha))
    return rows


# ------------------------------------------------------------- Prop 1 / 2


def prop1_instance(rng: np.random.Generator, beta: float = 0.01):
    S = int(rng.integers(2, 4))
    H = int(rng.integers(2, 4))
    n = int(rng.integers(2, 4))
    tasks = TaskSet(tuple(random_mdp(rng, S, 2, H) for _ in range(n)))
    while True:
        fs = tuple(_random_q(rng, H, S, 2) for _ in range(n))
        joint = SuboptimalJoint(fs, beta)
        if np.any(joint.gaps(tasks) > beta):
            return joint, tasks


def prop1_rows(n_instances: int = 50, seed: int = 0) -> list[AuditRow]:
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(n_instances):
        joint, tasks = prop1_instance(rng)
        sched = default_schedule(tasks[0].H, "thm2")
        multi, singles = check_prop1(joint, tasks, sched)
        rhs = max(singles) / math.sqrt(len(tasks))
        rows.append(AuditRow("prop1", f"instance={k}", multi, rhs))
    return rows


def sparse_instance(rng: np.random.Generator) -> tuple[TabularMDP, tuple[int, int, int]]:
    """Random MDP whose only reward is 1 at a reachable goal tuple."""
    S = int(rng.integers(2, 4))
    H = int(rng.integers(2, 4))
    base = random_mdp(rng, S, 2, H, sparsity=0.3)
    reach = max_reach(base)[:H]
    while True:
        h = int(rng.integers(H))
        s = int(rng.integers(S))
        if reach[h, s] > 0:
            break
    a = int(rng.integers(2))
    R = np.zeros((H, S, 2))
    R[h, s, a] = 1.0
    return base.with_rewards(R), (s, a, h)


def prop2_rows(n_instances: int = 30, seed: int = 0) -> list[AuditRow]:
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(n_instances):
        M, goal = sparse_instance(rng)
        f = _random_q(rng, M.H, M.S, M.A)
        sched = default_schedule(M.H, "thm2")
        alpha = meg_exact([f], TaskSet((M,)), sched).alpha
        rows.append(AuditRow("prop2", f"instance={k}", meg_upper_sparse(M, f, sched, goal), alpha))
    return rows


# ------------------------------------------------------ sparse-set lower bound


def sparse_set_instance(rng: np.random.Generator, S: int = 3, H: int = 3):
    """Sparse task set on a random base plus a joint whose first bad layer is past the start."""
    while True:
        base = random_mdp(rng, S, 2, H, sparsity=float(rng.choice([0.0, 0.4])))
        b1, _ = coverage_constant(base)
        if math.isfinite(b1):
            break
    tasks = gen_sparse_set(base)
    goals = [(s, None, h) for h in range(H) for s in range(S)]
    beta = b1 / 2
    opt = [optimal_values(M).q for M in tasks]
    while True:
        layer = int(rng.integers(1, H))
        fs = tuple(opt[i] if goals[i][2] < layer else _random_q(rng, H, S, 2)
                   for i in range(len(tasks)))
        if critical_layer(fs, tasks, beta, goals) == layer:
            return tasks, SuboptimalJoint(fs, beta), layer, b1


def sparse_lower_rows(n_instances: int = 10, seed: int = 0) -> list[AuditRow]:
    """Exact gap against the bound at the first layer holding a suboptimal task.

    Two bound variants are checked: one whose per-step factor counts the
    followed action being drawn while exploring (``1 - eps + eps/A``), and
    the literal product ``prod (1 - eps) * eps``.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(n_instances):
        tasks, joint, layer, b1 = sparse_set_instance(rng)
        H, A = tasks[0].H, tasks[0].A
        sched = default_schedule(H, "propC")
        alpha = meg_exact(joint, tasks, sched).alpha
        n = len(tasks)
        eps = np.asarray(sched.eps)
        literal = float(np.prod(1.0 - eps[: layer - 1]) * eps[layer - 1])
        tag = f"instance={k},layer={layer + 1},b1={b1:.4g}"
        rows.append(AuditRow("sparse_lower", tag, alpha,
                             sparse_lower_bound(joint.beta, n, A, explore_factor(sched, layer, A))))
        rows.append(AuditRow("sparse_lower_literal", tag, alpha,
                             sparse_lower_bound(joint.beta, n, A, literal)))
    return rows


# -------------------------------------------------------- value difference


def value_difference_rows(n_instances: int = 100, seed: int = 0) -> list[AuditRow]:
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(n_instances):
        S, A, H = (int(x) for x in rng.integers(2, 5, size=3))
        M = random_mdp(rng, S, A, H)
        f = _random_q(rng, H, S, A)
        pi = rng.dirichlet(np.ones(A), size=(H, S))
        lhs, rhs = value_difference_check(M, f, pi)
        rows.append(AuditRow("value_difference", f"instance={k}", rhs, lhs))
    return rows


# ------------------------------------------------------------------ linear


def lemma_linear_rows(n_instances: int = 20, seed: int = 0) -> list[AuditRow]:
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(n_instances):
        S = int(rng.integers(2, 6))
        A = int(rng.integers(2, 4))
        H = int(rng.integers(2, 5))
        LM = random_linear_mdp(rng, S, A, H)
        sched = default_schedule(H, "thm2")
        for h in range(H - 1):
            res = check_lemma_linear2(LM, h, sched)
            rows.append(AuditRow("lemma_linear2", f"instance={k},h={h + 1}", res.lhs, res.rhs))
    return rows


# --------------------------------------------------------------------- LQR


def lqr_rows(n_instances: int = 50, seed: int = 0, trials: int = 20, n_gains: int = 100,
             tol: float = 1e-6) -> list[AuditRow]:
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(n_instances):
        ds, da, H = int(rng.integers(1, 5)), int(rng.integers(1, 5)), int(rng.integers(1, 7))
        sys = random_lqr(rng, ds, da, H)
        sol = riccati(sys)
        analytic, grid = riccati_optimality_check(sys, sol, trials, rng)
        tag = f"instance={k}"
        rows.append(AuditRow("riccati_analytic_residual", tag, tol, analytic, slack=0.0))
        rows.append(AuditRow("riccati_grid_shortfall", tag, tol, grid, slack=0.0))
        v = sol.value(sys.s1)
        best = max(lqr_value(sys, rng.standard_normal((H, da, ds))) for _ in range(n_gains))
        rows.append(AuditRow("riccati_dominates_random_gains", tag, v, best, slack=1e-8))
    # one-step horizon: the terminal case
    sys = random_lqr(rng, 3, 2, 1)
    P1 = riccati(sys).P[0]
    rows.append(AuditRow("riccati_terminal_exact", "H=1", 0.0, float(np.abs(P1 - sys.Rs[0]).max()),
                         slack=0.0))
    return rows


# ------------------------------------------------------------------ mirror


def mirror_rows(n_instances: int = 20, betas=(0.05, 0.2), seed: int = 0,
                n_policies: int = 100) -> list[AuditRow]:
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(n_instances):
        S, H = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        base = random_mdp(rng, S, 2, H, sparsity=0.5)
        for beta in betas:
            tag = f"instance={k},beta={beta}"
            M2 = mirror_transform(base, beta)
            reach = max_reach(M2)[:H, :S]
            kept = reach[reach > 0]
            rows.append(AuditRow("mirror_reach_gap", tag, float(kept.min()), beta, slack=0.0)
                        if kept.size else AuditRow("mirror_reach_gap", tag, 1.0, 0.0))
            dummy = max_reach(M2)[:H, S]
            worst_dummy = float(np.max(dummy - np.arange(H) * S * beta))
            rows.append(AuditRow("mirror_dummy_reach", tag, 0.0, worst_dummy))
            worst = math.inf
            for _ in range(n_policies):
                pi = rng.dirichlet(np.ones(2), size=(H, S))
                mu = occupancy(base, pi).sum(axis=-1)
                mu2 = occupancy(M2, extend_policy(pi, S + 1)).sum(axis=-1)[:, :S]
                worst = min(worst, float(np.min(mu2 - (mu - H * S * beta))))
            rows.append(AuditRow("mirror_occupancy", tag, worst, 0.0))
    return rows


SUITES = {
    "meg_audit": {
        "hallway_bound": hallway_bound_rows,
        "prop1": prop1_rows,
        "prop2": prop2_rows,
        "sparse_lower": sparse_lower_rows,
        "value_difference": value_difference_rows,
    },
    "lemma_linear2": {"lemma_linear2": lemma_linear_rows},
    "lqr_suite": {"lqr": lqr_rows},
    "mirror_audit": {"mirror": mirror_rows},
}
