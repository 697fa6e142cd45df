"""Seeded experiment runner and command-line interface.

Subcommands::

    logitbandits run [--config FILE] [--model ...] [--algo ...] ...
    logitbandits verify --check NAME|all --trials N --seed S

Outputs of ``run`` (all under ``--out``):

* ``run_seed<k>.csv`` -- ``seed,t,arm,instant_regret,cum_regret,in_confidence_set,mle_iters,wall_ms``
* ``aggregate.csv`` -- ``t,mean_cum_regret,stderr_cum_regret,coverage_rate``
* ``snapshot_t<round>.json`` -- 2-D confidence-set boundary of the first seed
* ``run_meta.json`` -- resolved configuration, constants and failed seeds
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .agents import make_agent
from .confidence import boundary_trace_2d
from .env import Environment, LogisticEnvSpec, MNLEnvSpec, default_mnl_kappa
from .errors import ConfigurationError, SolverError

RUN_COLUMNS = ("seed", "t", "arm", "instant_regret", "cum_regret", "in_confidence_set",
               "mle_iters", "wall_ms")
AGG_COLUMNS = ("t", "mean_cum_regret", "stderr_cum_regret", "coverage_rate")
SNAPSHOT_RAYS = 256
MODELS = ("logistic", "mnl")
ALGOS = ("ofulogplus", "mnl_ucb_plus", "eps_greedy", "radius_scaled", "uniform")


@dataclass
class ExperimentConfig:
    model: str = "logistic"
    algo: str = "ofulogplus"
    d: int = 2
    K: int = 3
    S: float = 5.0
    R: float = 1.0
    T: int = 4000
    delta: float = 0.05
    arms: int = 20
    seeds: int = 10
    base_seed: int = 0
    c_gamma: float = 1.0
    radius_scale: float | None = None
    eps: float = 0.1
    kappa: float | None = None
    out: str = "runs"
    snapshot_rounds: tuple = ()
    workers: int = 1
    timing: bool = False
    theta_star: tuple | None = None
    rho: tuple | None = None

    def validate(self) -> "ExperimentConfig":
        if self.model not in MODELS:
            raise ConfigurationError(f"model must be one of {MODELS}")
        if self.algo not in ALGOS:
            raise ConfigurationError(f"algo must be one of {ALGOS}")
        if self.model == "logistic" and self.algo == "mnl_ucb_plus":
            raise ConfigurationError("mnl_ucb_plus needs the mnl model")
        if self.model == "mnl" and self.algo in ("ofulogplus", "radius_scaled"):
            raise ConfigurationError(f"{self.algo} needs the logistic model")
        if not 0 < self.delta < 1:
            raise ConfigurationError("delta must lie in (0, 1)")
        for name in ("T", "seeds", "d", "K", "arms", "workers"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be at least 1")
        if not self.S > 0 or not self.R > 0:
            raise ConfigurationError("S and R must be positive")
        if any(not 1 <= r <= self.T for r in self.snapshot_rounds):
            raise ConfigurationError("snapshot rounds must lie in [1, T]")
        if self.snapshot_rounds and self.d != 2:
            raise ConfigurationError("snapshots need d = 2")
        return self


# -- config parsing -----------------------------------------------------------

def _parse_floats(text):
    return tuple(float(v) for v in str(text).replace(" ", "").split(",") if v)


def _parse_ints(text):
    return tuple(int(v) for v in str(text).replace(" ", "").split(",") if v)


_CONVERTERS = {
    "model": str, "algo": str, "d": int, "K": int, "S": float, "R": float, "T": int,
    "delta": float, "arms": int, "seeds": int, "base_seed": int, "c_gamma": float,
    "radius_scale": float, "eps": float, "kappa": float, "out": str,
    "snapshot_rounds": _parse_ints, "workers": int,
    "timing": lambda v: str(v).lower() in ("1", "true", "yes", "on"),
    "theta_star": _parse_floats, "rho": _parse_floats,
}


def _key(name: str) -> str:
    name = name.strip().replace("-", "_")
    lowered = {k.lower(): k for k in _CONVERTERS}
    if name.lower() not in lowered:
        raise ConfigurationError(f"unknown config key {name!r}")
    return lowered[name.lower()]


def read_config_file(path) -> dict:
    """Flat ``key=value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected key=value")
        k, v = line.split("=", 1)
        key = _key(k)
        values[key] = _CONVERTERS[key](v.strip())
    return values


def config_from_mapping(values: dict) -> ExperimentConfig:
    return ExperimentConfig(**values).validate()


# -- environment and agent construction ------------------------------------------

def build_env_spec(cfg: ExperimentConfig):
    if cfg.model == "logistic":
        th = (np.asarray(cfg.theta_star, dtype=float) if cfg.theta_star is not None
              else np.full(cfg.d, (cfg.S - 1.0) / math.sqrt(cfg.d)))
        if th.size != cfg.d:
            raise ConfigurationError("theta_star needs d entries")
        return LogisticEnvSpec(th, cfg.S, cfg.arms, cfg.T)
    if cfg.theta_star is not None:
        mat = np.asarray(cfg.theta_star, dtype=float)
        if mat.size != cfg.K * cfg.d:
            raise ConfigurationError("theta_star needs K*d entries (rows stacked)")
        mat = mat.reshape(cfg.K, cfg.d)
    else:
        mat = default_mnl_theta(cfg.d, cfg.K, cfg.S)
    rho = (np.asarray(cfg.rho, dtype=float) if cfg.rho is not None
           else np.full(cfg.K, 1.0 / math.sqrt(cfg.K)))
    return MNLEnvSpec(mat, rho, cfg.S, cfg.R, cfg.arms, cfg.T)


def default_mnl_theta(d: int, K: int, S: float) -> np.ndarray:
    """Rows of equal length ``(S - 1)/sqrt(K)``; evenly spread angles in the plane."""
    if d == 2:
        ang = 2.0 * np.pi * np.arange(K) / K
        dirs = np.column_stack((np.cos(ang), np.sin(ang)))
    else:
        dirs = np.eye(d)[np.arange(K) % d]
    return dirs * (S - 1.0) / math.sqrt(K)


def resolved_kappa(cfg: ExperimentConfig) -> float | None:
    if cfg.model != "mnl":
        return None
    return cfg.kappa if cfg.kappa is not None else default_mnl_kappa(cfg.K, cfg.S)


def build_agent(cfg: ExperimentConfig, seed: int):
    spec_rho = build_env_spec(cfg).rho if cfg.model == "mnl" else None
    return make_agent(cfg.algo, model=cfg.model, d=cfg.d, K=cfg.K if cfg.model == "mnl" else None,
                      S=cfg.S, delta=cfg.delta, eps=cfg.eps, seed=seed, rho=spec_rho,
                      radius_scale=cfg.radius_scale, kappa=resolved_kappa(cfg), R=cfg.R,
                      c_gamma=cfg.c_gamma)


# -- running -------------------------------------------------------------------

@dataclass
class RunRecord:
    seed: int
    rows: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    # confidence sets behind the snapshots, kept in memory for membership checks
    snapshot_sets: list = field(default_factory=list)
    failed: bool = False
    error: str = ""

    @property
    def cum_regret(self) -> np.ndarray:
        return np.array([r[4] for r in self.rows])

    @property
    def coverage(self) -> np.ndarray:
        return np.array([r[5] for r in self.rows], dtype=bool)

    def summary(self) -> dict:
        return {"seed": self.seed, "rounds": len(self.rows), "failed": self.failed,
                "error": self.error,
                "final_cum_regret": float(self.rows[-1][4]) if self.rows else None,
                "always_covered": bool(self.coverage.all()) if self.rows else None}


def run_single(cfg: ExperimentConfig, seed: int, snapshot_rounds=()) -> RunRecord:
    """One seeded run. Solver failures end the run and are recorded, not raised."""
    spec = build_env_spec(cfg)
    env = Environment(spec, seed)
    agent = build_agent(cfg, seed)
    theta_star = spec.theta_star.ravel()
    record = RunRecord(seed)
    snaps = set(snapshot_rounds)
    cum = 0.0
    try:
        for t in range(1, cfg.T + 1):
            start = time.perf_counter()
            arm_set = env.arm_set()
            idx = agent.choose(arm_set)
            # Reporting-only channel: the agent never sees theta_star.
            cset = agent.confidence_set()
            covered = cset.contains(theta_star)
            if t in snaps:
                shown = agent.confidence_set(agent.last_record.get("radius_sq", cset.radius_sq))
                record.snapshot_sets.append(shown)
                record.snapshots.append({
                    "round": t,
                    "mle": shown.center.tolist(),
                    "theta_star": theta_star.tolist(),
                    "boundary": boundary_trace_2d(shown, SNAPSHOT_RAYS).tolist(),
                    "radius_sq": shown.radius_sq,
                })
            regret = env.regret(arm_set, idx)
            outcome = env.pull(arm_set[idx])
            agent.update(arm_set[idx], outcome)
            cum += regret
            wall = (time.perf_counter() - start) * 1e3 if cfg.timing else float("nan")
            record.rows.append((seed, t, idx, regret, cum, int(covered), agent.mle.iterations, wall))
    except SolverError as exc:
        record.failed = True
        record.error = str(exc)
    return record


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % v


def write_csv(path: Path, columns, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_csv(path) -> tuple[list, np.ndarray]:
    """Header and float matrix of a CSV written by this module."""
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]]).reshape(-1, len(header))
    return header, data


def aggregate(records) -> list:
    """Per-round mean and standard error of cumulative regret over completed runs."""
    done = [r for r in records if not r.failed]
    if not done:
        return []
    cum = np.vstack([r.cum_regret for r in done])
    cov = np.vstack([r.coverage for r in done]).astype(float)
    n = cum.shape[0]
    mean = cum.mean(axis=0)
    se = cum.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(cum.shape[1])
    rate = cov.mean(axis=0)
    return [(t + 1, mean[t], se[t], rate[t]) for t in range(cum.shape[1])]


def _run_seed(args):
    cfg, seed, snaps = args
    return run_single(cfg, seed, snaps)


def run_experiment(cfg: ExperimentConfig, write: bool = True):
    """Run every seed, then write per-run CSVs, the aggregate CSV, snapshots and metadata.

    Returns ``(records, aggregate_rows)``. Files are written in seed order.
    """
    cfg.validate()
    seeds = [cfg.base_seed + i for i in range(cfg.seeds)]
    jobs = [(cfg, s, tuple(cfg.snapshot_rounds) if i == 0 else ()) for i, s in enumerate(seeds)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(_run_seed, jobs))
    else:
        records = [_run_seed(j) for j in jobs]
    agg = aggregate(records)
    if write:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        for rec in records:
            write_csv(out / f"run_seed{rec.seed}.csv", RUN_COLUMNS, rec.rows)
            for snap in rec.snapshots:
                (out / f"snapshot_t{snap['round']}.json").write_text(json.dumps(snap, indent=1) + "\n")
        write_csv(out / "aggregate.csv", AGG_COLUMNS, agg)
        meta = {
            "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()},
            "constants": {"c_gamma": cfg.c_gamma, "kappa": resolved_kappa(cfg),
                          "L": 0.5 if cfg.model == "mnl" else None,
                          "radius_scale": (cfg.S if cfg.radius_scale is None else cfg.radius_scale)
                          if cfg.algo == "radius_scaled" else None},
            "arm_stream": "arm sets and reward draws depend only on the seed and are shared by all algorithms",
            "runs": [r.summary() for r in records],
            "failed_seeds": [r.seed for r in records if r.failed],
        }
        (out / "run_meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return records, agg


# -- command line ----------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="logitbandits",
                                     description="Logistic and MNL bandit experiments")
    sub = parser.add_subparsers(dest="command")
    run = sub.add_parser("run", help="run a seeded experiment")
    run.add_argument("--config", help="key=value file; command-line flags take precedence")
    run.add_argument("--model", choices=MODELS)
    run.add_argument("--algo", choices=ALGOS)
    for flag, typ in (("--d", int), ("--K", int), ("--S", float), ("--R", float), ("--T", int),
                      ("--delta", float), ("--arms", int), ("--seeds", int), ("--base-seed", int),
                      ("--c-gamma", float), ("--radius-scale", float), ("--eps", float),
                      ("--kappa", float), ("--workers", int)):
        run.add_argument(flag, type=typ)
    run.add_argument("--out")
    run.add_argument("--snapshot-rounds", type=_parse_ints, help="comma-separated rounds")
    run.add_argument("--theta-star", type=_parse_floats, help="comma-separated, rows stacked")
    run.add_argument("--rho", type=_parse_floats)
    run.add_argument("--timing", action="store_true", default=None,
                     help="record wall-clock per round (outputs are then not reproducible)")

    ver = sub.add_parser("verify", help="run numerical lemma checks")
    ver.add_argument("--check", default="all")
    ver.add_argument("--trials", type=int, default=10_000)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--out", default="verify_report.json")
    return parser


def config_from_args(ns) -> ExperimentConfig:
    values = read_config_file(ns.config) if ns.config else {}
    for f in fields(ExperimentConfig):
        v = getattr(ns, f.name, None)
        if v is not None:
            values[f.name] = v
    return config_from_mapping(values)


def _cmd_run(ns) -> int:
    cfg = config_from_args(ns)
    records, agg = run_experiment(cfg)
    failed = [r.seed for r in records if r.failed]
    if agg:
        print(f"final mean cumulative regret {agg[-1][1]:.6g} (+/- {agg[-1][2]:.3g}) "
              f"over {len(records) - len(failed)} runs; output in {cfg.out}")
    for r in records:
        if r.failed:
            print(f"seed {r.seed} failed: {r.error}", file=sys.stderr)
    return 1 if failed else 0


def _cmd_verify(ns) -> int:
    from .lemma_lab import CHECKS, LEMMA2_NOTE, run_checks

    names = list(CHECKS) if ns.check == "all" else [ns.check]
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ConfigurationError(f"unknown check {unknown[0]!r}; choose from {sorted(CHECKS)}")
    reports = run_checks(names, trials=ns.trials, seed=ns.seed)
    for rep in reports:
        print(rep.line())
    print(LEMMA2_NOTE)
    payload = {"seed": ns.seed, "note": LEMMA2_NOTE, "checks": [rep.to_json() for rep in reports]}
    Path(ns.out).write_text(json.dumps(payload, indent=1) + "\n")
    return 0 if all(rep.passed for rep in reports) else 1


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] not in ("run", "verify", "-h", "--help"):
        argv.insert(0, "run")
    parser = _build_parser()
    ns = parser.parse_args(argv)
    try:
        return _cmd_run(ns) if ns.command == "run" else _cmd_verify(ns)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
