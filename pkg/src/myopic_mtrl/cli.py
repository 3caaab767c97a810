"""Command-line front end: ``run``, ``gen`` and ``audit`` subcommands."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .audits import AUDIT_COLUMNS, SUITES
from .engine import run_algorithm1, run_curriculum, sample_complexity
from .exploration import ExplorationSchedule, default_schedule
from .linear import LinearMDP, embed_tabular, gen_diverse_linear
from .lqr import LQRSystem, gen_diverse_lqr
from .mdp import TabularMDP, random_mdp, validate_mdp
from .meg import EnumerationCapExceeded
from .tasks import TaskSet, gen_hallway, gen_sparse_set, hallway_single, mirror_transform

log = logging.getLogger("myopic_mtrl")

WORKERS_ENV = "MYOPIC_MTRL_WORKERS"
RUN_KINDS = ("mtrl_run", "single_task_run", "curriculum_run")
AUDIT_KINDS = tuple(SUITES)
CURRICULUM_COLUMNS = ("seed_index", "seed", "episodes", "success")


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# ------------------------------------------------------------------ files


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_json(path: Path, obj) -> None:
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def rows_to_csv(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    return buf.getvalue()


def load_tabular(path) -> TabularMDP:
    M = TabularMDP.from_json(Path(path).read_text())
    errors = validate_mdp(M).errors
    if errors:
        raise ValueError(f"{path}: " + "; ".join(v.message for v in errors))
    return M


def workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(WORKERS_ENV, f"expected an integer, got {raw!r}") from None
    return max(1, n)


# ----------------------------------------------------------------- config


def _require(cfg: dict, key: str, path: str, kind=None):
    if key not in cfg:
        raise ConfigError(f"{path}.{key}", "required field missing")
    value = cfg[key]
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(f"{path}.{key}", f"expected {getattr(kind, '__name__', kind)}")
    return value


def _positive_int(cfg: dict, key: str, path: str, default=None) -> int:
    if key not in cfg and default is not None:
        return default
    value = _require(cfg, key, path)
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"{path}.{key}", f"expected a positive integer, got {value!r}")
    return value


def load_env(cfg: dict, kind: str, path: str = "config.env") -> TaskSet:
    if "file" in cfg or "files" in cfg:
        files = cfg.get("files") or [cfg["file"]]
        try:
            tasks = TaskSet(tuple(load_tabular(f) for f in files),
                            tuple(Path(f).stem for f in files))
        except (OSError, ValueError) as exc:
            raise ConfigError(path, str(exc)) from None
        if kind == "single_task_run":
            i = cfg.get("task", len(tasks) - 1)
            tasks = tasks.subset([i])
        return tasks
    gen = _require(cfg, "generator", path, str)
    if gen != "hallway":
        raise ConfigError(f"{path}.generator", f"unknown generator {gen!r}")
    n = _positive_int(cfg, "n", path)
    return hallway_single(n) if kind == "single_task_run" else gen_hallway(n)[1]


def load_schedule(cfg, H: int, path: str = "config.schedule") -> ExplorationSchedule:
    if cfg is None:
        return default_schedule(H, "thm2")
    if "variant" in cfg:
        try:
            return default_schedule(H, cfg["variant"])
        except ValueError as exc:
            raise ConfigError(f"{path}.variant", str(exc)) from None
    try:
        sched = ExplorationSchedule.from_dict(cfg)
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(path, f"invalid schedule: {exc}") from None
    if sched.H != H:
        raise ConfigError(f"{path}.eps", f"length {sched.H} does not match horizon {H}")
    return sched


def seed_plan(cfg: dict, path: str = "config") -> list[tuple[int, int, tuple]]:
    """``(seed index, seed, stream key prefix)`` for every requested seed."""
    if "seeds" in cfg:
        seeds = cfg["seeds"]
        if not isinstance(seeds, list) or not seeds:
            raise ConfigError(f"{path}.seeds", "expected a nonempty list of integers")
        if not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in seeds):
            raise ConfigError(f"{path}.seeds", "seeds must be nonnegative integers")
        return [(i, s, ()) for i, s in enumerate(seeds)]
    master = _require(cfg, "master_seed", path, int)
    n = _positive_int(cfg, "n_seeds", path)
    return [(i, master, (i,)) for i in range(n)]


def _beta(cfg: dict, path: str = "config") -> float:
    beta = cfg.get("beta", 0.05)
    if not isinstance(beta, (int, float)) or isinstance(beta, bool) or not beta > 0:
        raise ConfigError(f"{path}.beta", f"expected a positive number, got {beta!r}")
    return float(beta)


# ------------------------------------------------------------------- runs


def _one_mtrl(args):
    tasks, sched, T, seed, key, beta, stop = args
    return run_algorithm1(tasks, sched, T, seed, stream_key=key, stop_beta=beta if stop else None)


def _one_curriculum(args):
    tasks, delta, seed, key = args
    return run_curriculum(tasks, delta, seed, stream_key=key)


def _map(fn, jobs):
    n = workers()
    if n == 1 or len(jobs) == 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, jobs))


def _median(values) -> float:
    vals = sorted(math.inf if v is None else v for v in values)
    m = len(vals)
    mid = vals[m // 2] if m % 2 else 0.5 * (vals[m // 2 - 1] + vals[m // 2])
    return mid


def summarize_complexities(complexities: list, beta: float, T: int) -> dict:
    med = _median(complexities)
    return {
        "beta": beta,
        "T": T,
        "n_seeds": len(complexities),
        "sample_complexity": complexities,
        "median_sample_complexity": None if math.isinf(med) else med,
        "success_fraction": sum(c is not None for c in complexities) / len(complexities),
    }


def run_experiment(cfg: dict, out: Path) -> int:
    kind = _require(cfg, "kind", "config", str)
    if kind in AUDIT_KINDS:
        return run_audit(kind, cfg, out)
    if kind not in RUN_KINDS:
        raise ConfigError("config.kind", f"unknown kind {kind!r}")
    tasks = load_env(_require(cfg, "env", "config", dict), kind)
    plan = seed_plan(cfg)

    if kind == "curriculum_run":
        delta = cfg.get("delta", 0.1)
        if not isinstance(delta, (int, float)) or not 0 < delta < 1:
            raise ConfigError("config.delta", f"expected a number in (0, 1), got {delta!r}")
        results = _map(_one_curriculum, [(tasks, float(delta), s, k) for _, s, k in plan])
        rows = [(i, s, r.episodes, int(r.success)) for (i, s, _), r in zip(plan, results)]
        atomic_write(out / "curriculum.csv", rows_to_csv(CURRICULUM_COLUMNS, rows))
        write_json(out / "summary.json", {
            "kind": kind, "delta": delta, "n_seeds": len(plan),
            "episodes": [r.episodes for r in results],
            "success_fraction": sum(r.success for r in results) / len(results),
        })
        return 0

    T = _positive_int(cfg, "T", "config")
    beta = _beta(cfg)
    sched = load_schedule(cfg.get("schedule"), tasks[0].H)
    stop = bool(cfg.get("stop_early", True))
    jobs = [(tasks, sched, T, s, k, beta, stop) for _, s, k in plan]
    logs = _map(_one_mtrl, jobs)
    complexities = []
    for (i, s, _), lg in zip(plan, logs):
        atomic_write(out / f"runlog_seed{i}.csv", lg.to_csv())
        complexities.append(sample_complexity(lg, beta))
    summary = summarize_complexities(complexities, beta, T)
    summary["kind"] = kind
    write_json(out / "summary.json", summary)
    return 0


def run_audit(kind: str, cfg: dict, out: Path) -> int:
    suites = SUITES[kind]
    params = cfg.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("config.params", "expected an object")
    selected = cfg.get("checks", list(suites))
    unknown = [c for c in selected if c not in suites]
    if unknown:
        raise ConfigError("config.checks", f"unknown checks {unknown} for {kind}")
    rows = []
    for name in selected:
        kwargs = params.get(name, {})
        try:
            rows.extend(suites[name](**kwargs))
        except TypeError as exc:
            raise ConfigError(f"config.params.{name}", str(exc)) from None
    records = [r.as_record() for r in rows]
    atomic_write(out / f"{kind}.csv", rows_to_csv(
        AUDIT_COLUMNS, [[rec[c] if not isinstance(rec[c], float) else repr(rec[c])
                         for c in AUDIT_COLUMNS] for rec in records]))
    failed = [rec for rec in records if not rec["passed"]]
    write_json(out / "summary.json", {
        "kind": kind, "checks": selected, "n_rows": len(records), "n_failed": len(failed),
        "failed": [{k: rec[k] for k in AUDIT_COLUMNS} for rec in failed],
    })
    for rec in failed:
        log.error("FAIL %s %s: lhs=%r rhs=%r", rec["check"], rec["instance"], rec["lhs"], rec["rhs"])
    return 1 if failed else 0


# -------------------------------------------------------------------- gen


def generate(args) -> int:
    out = Path(args.output)
    name = args.generator
    if name == "hallway":
        if args.n is None or args.n < 1:
            raise ConfigError("--n", "hallway needs a positive --n")
        base, tasks = gen_hallway(args.n)
        atomic_write(out / "base.json", base.to_json())
        for tid, M in zip(tasks.ids, tasks):
            atomic_write(out / f"task_{tid}.json", M.to_json())
    elif name == "random-mdp":
        rng = np.random.default_rng(args.seed)
        M = random_mdp(rng, args.S, args.A, args.H, sparsity=args.sparsity)
        atomic_write(out / "random_mdp.json", M.to_json())
    elif name == "sparse":
        tasks = gen_sparse_set(_input_tabular(args))
        for tid, M in zip(tasks.ids, tasks):
            atomic_write(out / f"task_{tid}.json", M.to_json())
    elif name == "mirror":
        if args.beta is None or args.beta <= 0:
            raise ConfigError("--beta", "mirror needs a positive --beta")
        atomic_write(out / "mirror.json", mirror_transform(_input_tabular(args), args.beta).to_json())
    elif name == "diverse-linear":
        if args.file is None:
            raise ConfigError("--file", "diverse-linear needs an input file")
        raw = json.loads(Path(args.file).read_text())
        LM = LinearMDP.from_dict(raw) if "phi" in raw else embed_tabular(_input_tabular(args))
        lts = gen_diverse_linear(LM)
        for tid, task in zip(lts.ids, lts.tasks):
            atomic_write(out / f"task_{tid}.json", task.to_json())
    elif name == "diverse-lqr":
        if args.file is None:
            raise ConfigError("--file", "diverse-lqr needs an LQR system file for the dynamics")
        sys_ = LQRSystem.from_json(Path(args.file).read_text())
        for tid, task in gen_diverse_lqr(sys_.A, sys_.B, sys_.H, sys_.ds, sys_.s1):
            atomic_write(out / f"task_{tid}.json", task.to_json())
    else:
        raise ConfigError("generator", f"unknown generator {name!r}")
    return 0


def _input_tabular(args) -> TabularMDP:
    if args.file is None:
        raise ConfigError("--file", f"{args.generator} needs an input MDP file")
    try:
        return load_tabular(args.file)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError("--file", str(exc)) from None


# ------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="myopic-mtrl", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment or audit described by a JSON config")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="output directory (overrides config.output)")

    g = sub.add_parser("gen", help="write generated environments as JSON files")
    g.add_argument("generator", choices=("hallway", "random-mdp", "sparse", "mirror",
                                         "diverse-linear", "diverse-lqr"))
    g.add_argument("--n", type=int)
    g.add_argument("--beta", type=float)
    g.add_argument("--file")
    g.add_argument("--S", type=int, default=3)
    g.add_argument("--A", type=int, default=2)
    g.add_argument("--H", type=int, default=3)
    g.add_argument("--sparsity", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", required=True)

    a = sub.add_parser("audit", help="run one verification suite")
    a.add_argument("kind", choices=AUDIT_KINDS)
    a.add_argument("config", help="JSON config with optional 'checks' and 'params'")
    a.add_argument("-o", "--output")
    return p


def _load_config(path: str) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config", "top level must be an object")
    return cfg


def _output_dir(cfg: dict, override) -> Path:
    out = override or cfg.get("output")
    if not out:
        raise ConfigError("config.output", "required field missing (or pass -o)")
    return Path(out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "gen":
            return generate(args)
        cfg = _load_config(args.config)
        out = _output_dir(cfg, args.output)
        if args.command == "audit":
            return run_audit(args.kind, cfg, out)
        return run_experiment(cfg, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EnumerationCapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
