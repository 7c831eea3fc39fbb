"""Command-line interface: ``cvarvi solve|experiment|bounds|verify``.

Exit codes: 0 success, 2 configuration/argument error, 3 divergence,
4 candidate is not an equilibrium.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .complexity import ComplexityInputs, bias_bound, required_bias, required_samples
from .errors import DivergenceError, InvalidInputError
from .feasible import kkt_residuals, recover_multipliers
from .harness import (
    ConfigError,
    build_problem,
    load_config,
    run_experiment,
    run_replication,
    write_cdf_csv,
    write_summary_csv,
    write_trace_csv,
)
from .problem import empirical_map, exact_map
from .routing import verify_cwe

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_NOT_EQUILIBRIUM = 4

BENCHMARK_USED_PATH_TOL = 1e-6
BENCHMARK_COST_GAP_TOL = 1.0


def _err(msg: str) -> None:
    print(f"cvarvi: {msg}", file=sys.stderr)


def _vec(v) -> str:
    return "[" + ", ".join(f"{x:.6g}" for x in np.asarray(v).reshape(-1)) + "]"


def _map_at(problem, h, cfg):
    if problem.model.exact_cvar_map is not None:
        return exact_map(problem, h)
    rng = np.random.Generator(np.random.Philox(cfg.base_seed))
    return empirical_map(problem, h, cfg.verify_samples, rng)[0]


def _print_kkt(problem, h, F, label="KKT residuals (least-squares multipliers)", lam=None, mu=None):
    if lam is None:
        lam, mu = recover_multipliers(problem.set, F, h)
    kkt = kkt_residuals(problem.set, F, h, lam, mu)
    print(f"{label}: stationarity={kkt.stationarity_residual:.6g} "
          f"primal={kkt.primal_residual:.6g} complementarity={kkt.complementarity_residual:.6g}")


def cmd_solve(args) -> int:
    try:
        cfg = load_config(args.config, seed=args.seed)
        problem, _, reference = build_problem(cfg)
    except (ConfigError, InvalidInputError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    out_dir = Path(args.out_dir)
    trace_path = cfg.output_path("trace_csv", out_dir) or out_dir / "trace.csv"
    try:
        summary, trace = run_replication(cfg, 0)
    except DivergenceError as exc:
        _err(f"divergence: {exc}")
        if exc.trace is not None and exc.trace.records:
            last = exc.trace.records[-1]
            _err(f"last recorded iterate k={last.k}: h={_vec(last.h)} gamma={last.gamma:.6g}")
            write_trace_csv(trace_path, exc.trace)
        return EXIT_DIVERGED
    write_trace_csv(trace_path, trace)
    final = trace.final
    print(f"algorithm: {trace.algorithm}  iterations: {final.k}  seed: {summary.seed}")
    print(f"final h: {_vec(final.h)}")
    if final.error_to_reference is not None:
        print(f"final error: {final.error_to_reference:.6g}")
    print(f"distance to H: {np.linalg.norm(final.h - problem.set.project(final.h)):.6g}")
    F = _map_at(problem, final.h, cfg)
    _print_kkt(problem, final.h, F)
    if final.lam is not None:
        _print_kkt(problem, final.h, F, "KKT residuals (iterated multipliers)", final.lam, final.mu)
    print(f"trace written to {trace_path}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    try:
        cfg = load_config(args.config, seed=args.seed)
        _, _, reference = build_problem(cfg)
    except (ConfigError, InvalidInputError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    if reference is None:
        _err("experiment needs a reference solution to measure final errors")
        return EXIT_CONFIG
    out_dir = Path(args.out_dir)
    summary_path = cfg.output_path("summary_csv", out_dir) or out_dir / "summary.csv"
    cdf_path = cfg.output_path("cdf_csv", out_dir) or out_dir / "cdf.csv"
    try:
        summaries = run_experiment(cfg, parallel=args.parallel)
    except DivergenceError as exc:
        _err(f"divergence in a replication: {exc}")
        return EXIT_DIVERGED
    write_summary_csv(summary_path, summaries, cfg.record_wall_time)
    write_cdf_csv(cdf_path, summaries)
    errors = np.array([s.final_error for s in summaries])
    print(f"replications: {len(summaries)}  median final error: {np.median(errors):.6g}  "
          f"max: {errors.max():.6g}")
    print(f"summary written to {summary_path}")
    print(f"cdf written to {cdf_path}")
    return EXIT_OK


def cmd_bounds(args) -> int:
    try:
        inputs = ComplexityInputs(
            n=args.n, alpha=args.alpha, z1=args.z1, z2=args.z2, c_F=args.c_F,
            h_plus=args.h_plus, epsilon=args.epsilon, c_d=args.c_d,
        )
        rb = required_bias(args.variant, inputs)
        N = required_samples(args.variant, inputs)
        bb = bias_bound(inputs.n, inputs.alpha, inputs.z1, inputs.z2, N)
    except InvalidInputError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    print(f"variant: {args.variant}")
    print(f"required_bias: {rb:.10g}")
    print(f"required_samples: {N}")
    print(f"bias_bound_at_N: {bb:.10g}")
    return EXIT_OK


def read_candidate(path) -> np.ndarray:
    """Flow vector from a CSV file.

    Accepts a bare row of numbers, or a file with a header; in the latter
    case the ``h_i`` columns of the last row are used (so a trace CSV works).
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ConfigError(f"{path}: empty candidate file")
    try:
        return np.array([float(c) for c in rows[-1] if c.strip()]) if len(rows) == 1 else _from_header(rows)
    except ValueError as exc:
        raise ConfigError(f"{path}: cannot parse candidate ({exc})") from exc


def _from_header(rows):
    header = [c.strip() for c in rows[0]]
    cols = [i for i, name in enumerate(header) if name.startswith("h_")]
    if not cols:
        cols = list(range(len(header)))
    return np.array([float(rows[-1][i]) for i in cols])


def cmd_verify(args) -> int:
    try:
        cfg = load_config(args.config, seed=args.seed)
        problem, net, _ = build_problem(cfg)
        h = read_candidate(args.candidate)
    except (ConfigError, InvalidInputError, OSError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    if h.size != problem.n:
        _err(f"candidate has {h.size} entries, problem has {problem.n}")
        return EXIT_CONFIG
    used_tol, gap_tol = args.used_path_tol, args.cost_gap_tol
    if cfg.problem_source == "benchmark":
        # the benchmark reference is given to two decimals
        used_tol = BENCHMARK_USED_PATH_TOL if used_tol is None else used_tol
        gap_tol = BENCHMARK_COST_GAP_TOL if gap_tol is None else gap_tol
    rng = np.random.Generator(np.random.Philox(cfg.base_seed))
    report = verify_cwe(net, problem.alpha, h, used_path_tol=used_tol,
                        cost_gap_tol=gap_tol, n_samples=cfg.verify_samples, rng=rng)
    print(f"is_equilibrium: {report.is_equilibrium}")
    print(f"demand_residual: {_vec(report.demand_residual)}")
    print(f"min_flow: {report.min_flow:.6g}")
    print(f"max_cost_gap: {report.max_cost_gap:.6g}")
    print(f"used_path_tol: {report.used_path_tol:.6g}  cost_gap_tol: {report.cost_gap_tol:.6g}")
    print(f"path CVaR costs: {_vec(report.path_costs)}")
    _print_kkt(problem, h, report.path_costs)
    return EXIT_OK if report.is_equilibrium else EXIT_NOT_EQUILIBRIUM


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _err(message)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="base seed; overrides the config and $CVARVI_SEED")
    common.add_argument("--out-dir", default=".", help="directory for relative output paths")
    common.add_argument("--parallel", type=int, default=None,
                        help="max concurrent replications (default: all cores)")

    parser = _Parser(prog="cvarvi", description="Stochastic approximation for CVaR-based VIs.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", parents=[common], help="run one solve and write its trace")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("experiment", parents=[common], help="multi-seed replications + CDF")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("bounds", parents=[common], help="bias and sample-size bounds")
    p.add_argument("--variant", choices=["penalty", "multiplier"], required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--z1", type=float, required=True)
    p.add_argument("--z2", type=float, required=True)
    p.add_argument("--c-F", dest="c_F", type=float, required=True)
    p.add_argument("--h-plus", dest="h_plus", type=float, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--c-d", dest="c_d", type=float, default=None)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("verify", parents=[common], help="check a candidate flow for equilibrium")
    p.add_argument("--config", required=True)
    p.add_argument("--candidate", required=True, help="CSV file holding the candidate h")
    p.add_argument("--used-path-tol", type=float, default=None)
    p.add_argument("--cost-gap-tol", type=float, default=None)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
