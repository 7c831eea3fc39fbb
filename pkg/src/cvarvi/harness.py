"""Experiment harness: configuration files, seeded replications, CSV output.

Configuration files are YAML (JSON is accepted too). See ``configs/`` and
the README for the schema. All CSV numbers are written with 17 significant
digits so 64-bit floats round-trip exactly.
"""

from __future__ import annotations

import csv
import io
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import InvalidInputError
from .feasible import Box, project
from .problem import ViProblem
from .routing import RoutingNetwork, benchmark_instance, load_network, to_vi_problem
from .solvers import (
    IterateTrace,
    PenaltyRamp,
    SampleSchedule,
    SolverConfig,
    StepSchedule,
    run,
)

__all__ = [
    "BENCHMARK_H0",
    "ConfigError",
    "ExperimentConfig",
    "RunSummary",
    "derive_seed",
    "empirical_cdf",
    "load_config",
    "run_experiment",
    "run_replication",
    "splitmix64",
    "write_cdf_csv",
    "write_summary_csv",
    "write_trace_csv",
]

SEED_ENV = "CVARVI_SEED"

# Benchmark start: reference + 19.86 * (1, -1, 0, 1, -1). The offset lies in
# the tangent space of the demand constraints and keeps every flow positive,
# so the point is feasible and exactly 39.72 away from the reference.
BENCHMARK_H0 = np.array([109.38, 78.53, 72.09, 94.18, 75.82])

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class ConfigError(InvalidInputError):
    """Malformed or inconsistent configuration."""


def splitmix64(x: int) -> int:
    """One SplitMix64 output for state ``x`` (all arithmetic mod 2**64)."""
    z = (x + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(base_seed: int, replication: int) -> int:
    """seed_r = splitmix64(splitmix64(base_seed) + r * GOLDEN mod 2**64)."""
    return splitmix64((splitmix64(int(base_seed) & _MASK64) + replication * _GOLDEN) & _MASK64)


def _fmt(x) -> str:
    return format(float(x), ".17g")


@dataclass
class ExperimentConfig:
    problem_source: str = "benchmark"
    solver: dict = field(default_factory=dict)
    replications: int = 1
    base_seed: int = 0
    alpha: float | None = None
    reference: list | None = None
    outputs: dict = field(default_factory=dict)
    downsample_stride: int = 1
    record_wall_time: bool = False
    verify_samples: int = 100_000

    def output_path(self, key: str, out_dir) -> Path | None:
        name = self.outputs.get(key)
        if not name:
            return None
        p = Path(name)
        return p if p.is_absolute() else Path(out_dir) / p


@dataclass(frozen=True)
class RunSummary:
    replication_index: int
    seed: int
    final_error: float
    final_h: np.ndarray
    iterations: int
    wall_time_seconds: float


def resolve_seed(cli_seed, config_seed) -> int:
    if cli_seed is not None:
        return int(cli_seed)
    if config_seed is not None:
        return int(config_seed)
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from exc
    return 0


_TOP_KEYS = {"problem", "alpha", "reference", "solver", "seed", "replications",
             "outputs", "downsample_stride", "record_wall_time", "verify_samples"}


def load_config(path, seed=None) -> ExperimentConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    source = str(data.get("problem", "benchmark"))
    if source != "benchmark":
        p = Path(source)
        source = str(p if p.is_absolute() else path.parent / p)
    solver = data.get("solver")
    if not isinstance(solver, dict):
        raise ConfigError(f"{path}: missing 'solver' section")
    try:
        cfg = ExperimentConfig(
            problem_source=source,
            solver=solver,
            replications=int(data.get("replications", 1)),
            base_seed=resolve_seed(seed, data.get("seed")),
            alpha=None if data.get("alpha") is None else float(data["alpha"]),
            reference=data.get("reference"),
            outputs=dict(data.get("outputs") or {}),
            downsample_stride=int(data.get("downsample_stride", 1)),
            record_wall_time=bool(data.get("record_wall_time", False)),
            verify_samples=int(data.get("verify_samples", 100_000)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if cfg.replications < 1:
        raise ConfigError("replications must be at least 1")
    # build once so errors surface before any work starts
    problem, _, reference = build_problem(cfg)
    build_solver_config(cfg, problem, 0)
    if cfg.reference is not None and len(cfg.reference) != problem.n:
        raise ConfigError(f"reference has {len(cfg.reference)} entries, problem has {problem.n}")
    return cfg


def build_problem(cfg: ExperimentConfig) -> tuple[ViProblem, RoutingNetwork, np.ndarray | None]:
    try:
        if cfg.problem_source == "benchmark":
            net, alpha, reference = benchmark_instance()
        else:
            net, raw = load_network(cfg.problem_source)
            alpha = raw.get("alpha", 0.2)
            reference = raw.get("reference")
        if cfg.alpha is not None:
            alpha = cfg.alpha
        if cfg.reference is not None:
            reference = cfg.reference
        problem = to_vi_problem(net, alpha)
    except OSError as exc:
        raise ConfigError(f"cannot read network file: {exc}") from exc
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from exc
    ref = None if reference is None else np.asarray(reference, dtype=float)
    return problem, net, ref


def _vector(value, n, name):
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.size != n:
        raise ConfigError(f"{name} needs {n} entries, got {arr.size}")
    return arr


def _box(spec, n, name):
    if isinstance(spec, dict):
        lo, hi = spec.get("lower"), spec.get("upper")
        if np.isscalar(lo):
            lo = [lo] * n
        if np.isscalar(hi):
            hi = [hi] * n
        return Box(_vector(lo, n, name + ".lower"), _vector(hi, n, name + ".upper"))
    raise ConfigError(f"{name} must be 'none', 'default' or a mapping with lower/upper")


def build_solver_config(cfg: ExperimentConfig, problem: ViProblem, seed: int) -> SolverConfig:
    s = dict(cfg.solver)
    n = problem.n
    set_ = problem.set
    try:
        algorithm = s.pop("algorithm")
        iterations = int(s.pop("iterations"))
        st = dict(s.pop("steps", {}) or {})
        steps = StepSchedule(st.pop("kind", "harmonic"), float(st.pop("scale", 1.0)),
                             float(st.pop("shift", 0.0)), int(st.pop("start_index", 1)))
        sm = dict(s.pop("samples", {}) or {})
        samples = SampleSchedule(sm.pop("kind", "constant"), int(sm.pop("N0", 100)),
                                 growth_power=float(sm.pop("growth_power", 0.5)))
        if st or sm:
            raise ConfigError(f"unknown step/sample keys: {sorted(st) + sorted(sm)}")
        penalty_c = s.pop("penalty_c", None)
        ramp = s.pop("penalty_ramp", None)
        if ramp is not None:
            ramp = PenaltyRamp(float(ramp["c_init"]), float(ramp["c_target"]), int(ramp["ramp_iters"]))

        guard = s.pop("safeguard", "none")
        if guard is None or guard == "none":
            safeguard = None
        elif guard == "default":
            dmax = float(np.max(np.abs(set_.b_eq))) if set_.t else 1.0
            safeguard = Box.uniform(n, -2.0 * dmax, 2.0 * dmax)
        else:
            safeguard = _box(guard, n, "safeguard")
        mguard = s.pop("multiplier_safeguard", None)
        mult_box = None if mguard in (None, "none") else _box(mguard, set_.s + set_.t, "multiplier_safeguard")

        h0 = s.pop("h0", "default")
        if isinstance(h0, str):
            if h0 != "default":
                raise ConfigError("h0 must be 'default' or a list of numbers")
            h0 = BENCHMARK_H0.copy() if cfg.problem_source == "benchmark" else project(set_, np.zeros(n))
        else:
            h0 = _vector(h0, n, "h0")
        lam0 = s.pop("lambda0", None)
        mu0 = s.pop("mu0", None)
        if s:
            raise ConfigError(f"unknown solver keys: {sorted(s)}")
        return SolverConfig(
            algorithm=algorithm,
            h0=h0,
            steps=steps,
            samples=samples,
            iterations=iterations,
            penalty_c=None if penalty_c is None else float(penalty_c),
            penalty_ramp=ramp,
            safeguard=safeguard,
            multiplier_safeguard=mult_box,
            lambda0=None if lam0 is None else _vector(lam0, set_.s, "lambda0"),
            mu0=None if mu0 is None else _vector(mu0, set_.t, "mu0"),
            seed=seed,
            downsample_stride=cfg.downsample_stride,
        )
    except ConfigError:
        raise
    except KeyError as exc:
        raise ConfigError(f"missing solver key {exc}") from exc
    except (InvalidInputError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def run_replication(cfg: ExperimentConfig, r: int) -> tuple[RunSummary, IterateTrace]:
    """Run replication ``r`` with seed ``derive_seed(base_seed, r)``."""
    problem, _, reference = build_problem(cfg)
    seed = derive_seed(cfg.base_seed, r)
    solver_cfg = build_solver_config(cfg, problem, seed)
    start = time.perf_counter()
    trace = run(problem, solver_cfg, reference=reference)
    elapsed = time.perf_counter() - start
    final = trace.final
    err = float("nan") if final.error_to_reference is None else final.error_to_reference
    return RunSummary(r, seed, err, final.h, final.k, elapsed), trace


def _summary_only(args) -> RunSummary:
    cfg, r = args
    return run_replication(cfg, r)[0]


def run_experiment(cfg: ExperimentConfig, parallel: int | None = None) -> list[RunSummary]:
    """All replications, sorted by replication index."""
    jobs = [(cfg, r) for r in range(cfg.replications)]
    workers = parallel or os.cpu_count() or 1
    if workers <= 1 or cfg.replications == 1:
        results = [_summary_only(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, cfg.replications)) as pool:
            results = list(pool.map(_summary_only, jobs))
    return sorted(results, key=lambda s: s.replication_index)


def empirical_cdf(errors) -> list[tuple[float, float]]:
    """(error_level, fraction_of_runs) at each order statistic."""
    e = np.sort(np.asarray(errors, dtype=float))
    R = e.size
    return [(float(v), (i + 1) / R) for i, v in enumerate(e)]


def _write_rows(path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(buf.getvalue())


def write_trace_csv(path, trace: IterateTrace) -> None:
    """Header ``k,gamma,N,h_1..h_n[,lambda_1..lambda_s,mu_1..mu_t],err``.

    Multiplier columns appear only for traces that carry multipliers.
    """
    first = trace.records[0]
    n = first.h.size
    header = ["k", "gamma", "N"] + [f"h_{i + 1}" for i in range(n)]
    with_mult = first.lam is not None
    if with_mult:
        header += [f"lambda_{i + 1}" for i in range(first.lam.size)]
        header += [f"mu_{i + 1}" for i in range(first.mu.size)]
    header.append("err")
    rows = []
    for rec in trace.records:
        row = [str(rec.k), _fmt(rec.gamma), str(rec.N)] + [_fmt(v) for v in rec.h]
        if with_mult:
            lam = rec.lam if rec.lam is not None else np.full(first.lam.size, np.nan)
            mu = rec.mu if rec.mu is not None else np.full(first.mu.size, np.nan)
            row += [_fmt(v) for v in lam] + [_fmt(v) for v in mu]
        row.append("" if rec.error_to_reference is None else _fmt(rec.error_to_reference))
        rows.append(row)
    _write_rows(path, header, rows)


def write_summary_csv(path, summaries, record_wall_time: bool = False) -> None:
    """Header ``replication,seed,final_error,wall_time``.

    ``wall_time`` is left empty unless ``record_wall_time`` is set, so that
    repeated runs produce byte-identical files.
    """
    rows = [[str(s.replication_index), str(s.seed), _fmt(s.final_error),
             _fmt(s.wall_time_seconds) if record_wall_time else ""]
            for s in summaries]
    _write_rows(path, ["replication", "seed", "final_error", "wall_time"], rows)


def write_cdf_csv(path, summaries) -> None:
    rows = [[_fmt(e), _fmt(f)] for e, f in empirical_cdf([s.final_error for s in summaries])]
    _write_rows(path, ["error_level", "fraction_of_runs"], rows)
