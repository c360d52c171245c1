"""Command-line interface: ``ssa-vc <command> [options]``.

Exit codes: 0 success, 2 input error, 3 numerical failure, 4 empty result.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dimension import GlobalDimensionResult, LocalDimensionResult, TestConfig, global_dimension
from .dimension import local_dimension_grid, split_test
from .errors import DomainError, EmptyPool, ModelError, NumericalFailure
from .kernel import TimeSeries
from .numeric import make_rng
from .simulation import BUILTIN_IDS, MonteCarloStudy, builtin_model, run_mc_study, simulate_vc
from .subspace import default_u_grid, estimate_stationary_subspace

SCHEMA = "ssa-vc/1"
EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_EMPTY = 0, 2, 3, 4
MIN_T = 64


class InputError(Exception):
    pass


# ------------------------------------------------------------------- CSV I/O


def _parse_float(text: str, row: int, col: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise InputError(f"row {row}, column {col}: cannot parse {text!r} as a number") from None
    if not math.isfinite(v):
        raise InputError(f"row {row}, column {col}: non-finite value {text!r}")
    return v


def parse_csv(text: str) -> TimeSeries:
    """Parse comma-separated rows (one observation per row, optional header)."""
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise InputError("input contains no data")
    start = 0
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        start = 1
    data = []
    width = None
    for n, r in enumerate(rows[start:], start=start + 1):
        if width is None:
            width = len(r)
        elif len(r) != width:
            raise InputError(f"row {n}: expected {width} columns, found {len(r)}")
        data.append([_parse_float(c.strip(), n, j + 1) for j, c in enumerate(r)])
    if not data:
        raise InputError("input contains a header but no data rows")
    try:
        return TimeSeries.from_rows(np.array(data))
    except DomainError as exc:
        raise InputError(str(exc)) from None


def read_series(path: str) -> TimeSeries:
    try:
        text = sys.stdin.read() if path == "-" else Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    return parse_csv(text)


def format_csv(x: TimeSeries, header: bool = True) -> str:
    out = io.StringIO()
    if header:
        out.write(",".join(f"x{i + 1}" for i in range(x.p)) + "\n")
    for row in x.rows:
        out.write(",".join(repr(float(v)) for v in row) + "\n")
    return out.getvalue()


# ---------------------------------------------------------------------- JSON


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def global_to_dict(res: GlobalDimensionResult) -> dict:
    kind = "zeta" if res.zeta is not None else "eta"
    curve = res.zeta if res.zeta is not None else res.eta
    return {"interval": list(res.interval), "d0": res.d0_hat, "dplus": res.dplus_hat,
            "dminus": res.dminus_hat, "d": res.d_hat, "xi": res.xi_global,
            "pvalues": res.pvalues, "critical_value": res.critical_value,
            "zeta_or_eta": curve, "zeta_or_eta_kind": kind, "r_hat": res.r_hat,
            "mu4": res.mu4, "grid_points": res.n_grid}


def local_to_dict(res: LocalDimensionResult) -> dict:
    return {"u": res.u, "gamma": res.gamma_hat, "xi": res.xi, "pvalues": res.pvalues,
            "d0": res.d0_hat, "dplus": res.dplus_hat, "dminus": res.dminus_hat, "d": res.d_hat}


# ------------------------------------------------------------------ commands


def _config(args) -> TestConfig:
    return TestConfig(alpha=args.alpha, h=args.h, mu4=args.mu4,
                      grid_density=args.grid if args.grid is not None else 64)


def _load(args) -> TimeSeries:
    if args.input is None:
        raise InputError("--input is required")
    x = read_series(args.input)
    if x.T < MIN_T:
        raise InputError(f"need at least {MIN_T} observations, got {x.T}")
    return x


def _emit(args, text: str) -> None:
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text)


def cmd_test_dim(args) -> int:
    x = _load(args)
    cfg = _config(args)
    report = {"schema": SCHEMA, "command": "test-dim", "p": x.p, "T": x.T,
              "h": cfg.kernel(x.T).h, "alpha": cfg.alpha,
              "global": global_to_dict(global_dimension(x, cfg))}
    if args.local:
        us = default_u_grid(cfg.kernel(x.T).h)
        report["local"] = [local_to_dict(r) for r in local_dimension_grid(x, us, cfg)]
    _emit(args, dumps(report))
    return EXIT_OK


def cmd_split(args) -> int:
    if not 0 <= args.depth <= 4:
        raise InputError("--depth must lie in 0..4")
    x = _load(args)
    cfg = _config(args)
    tree = split_test(x, cfg, args.depth)
    nodes = []
    for (lev, i), node in sorted(tree.nodes.items()):
        entry = {"level": lev, "index": i, "interval": list(node.interval),
                 "midpoint": node.midpoint, "flags": list(node.flags),
                 "outcome": tree.outcomes.get((lev, i))}
        if node.result is not None:
            entry["result"] = global_to_dict(node.result)
        nodes.append(entry)
    report = {"schema": SCHEMA, "command": "split", "depth": args.depth, "p": x.p, "T": x.T,
              "h": cfg.kernel(x.T).h, "alpha": cfg.alpha, "nodes": nodes}
    _emit(args, dumps(report))
    return EXIT_OK


def cmd_subspace(args) -> int:
    x = _load(args)
    cfg = TestConfig(alpha=args.alpha, h=args.h, mu4=args.mu4)
    h = cfg.kernel(x.T).h
    n_u = args.grid if args.grid is not None else 24
    if n_u < 2:
        raise InputError("--grid must be at least 2 for the subspace grid")
    theta0 = math.radians(args.theta0)
    est, rep = estimate_stationary_subspace(x, cfg, default_u_grid(h, n_u), theta0=theta0)
    report = {"schema": SCHEMA, "command": "subspace", "p": x.p, "T": x.T, "h": h,
              "theta0_degrees": args.theta0,
              "basis": est.basis.tolist(), "d": est.d, "origin_u": est.origin_u,
              "cluster_sizes": list(rep.sizes), "centers": list(rep.centers),
              "center_bases": [c.tolist() for c in est.candidates],
              "denseness": list(rep.denseness), "selected": rep.selected,
              "u_proportions": list(rep.u_proportions), "fallback": rep.fallback,
              "pool_size": est.n_pool,
              "small_cluster_sizes": [len(c) for c in rep.small_clusters]}
    _emit(args, dumps(report))
    if args.pool_csv:
        buf = io.StringIO()
        buf.write("vertex,u,pairing,column," + ",".join(f"b{i + 1}" for i in range(x.p)) + "\n")
        for v, s in enumerate(est.graph.vertices):
            for j in range(s.d):
                vals = ",".join(repr(float(c)) for c in s.basis[:, j])
                buf.write(f"{v},{s.origin_u!r},{s.pairing_id},{j},{vals}\n")
        Path(args.pool_csv).write_text(buf.getvalue())
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.model is None:
        raise InputError("--model is required")
    try:
        spec = builtin_model(args.model)
    except DomainError as exc:
        raise InputError(str(exc)) from None
    x = simulate_vc(spec, args.T, make_rng(args.seed))
    _emit(args, format_csv(x))
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.reps < 10:
        raise InputError("--reps must be at least 10")
    models = args.models.split(",")
    for m in models:
        if m not in BUILTIN_IDS:
            raise InputError(f"unknown model {m!r}")
    default_T = "200,2000" if args.suite == "dims" else "2000"
    T_values = tuple(int(t) for t in (args.T_list or default_T).split(","))
    cfg = TestConfig(alpha=args.alpha, h=args.h, mu4=args.mu4)
    out_dir = Path(args.output or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    all_rows, summary = [], {}
    for j, m in enumerate(models):
        study = MonteCarloStudy(m, T_values, args.reps, seed=args.seed + j, config=cfg,
                                compute_d3=args.suite == "d3", theta0=math.radians(args.theta0))
        rows, summ = run_mc_study(study, jobs=args.jobs)
        all_rows.extend(rows)
        summary[m] = summ
    fields = ["model", "T", "rep", "seed", "status", "d0", "dplus", "dminus", "d"]
    if args.suite == "d3":
        fields.append("d3")
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for r in all_rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    (out_dir / "tables.csv").write_text(buf.getvalue())
    (out_dir / "summary.json").write_text(dumps({"schema": SCHEMA, "command": "bench",
                                                 "suite": args.suite, "reps": args.reps,
                                                 "seed": args.seed, "models": summary}))
    return EXIT_OK


def _seed_default() -> int:
    env = os.environ.get("SSA_VC_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise InputError(f"SSA_VC_SEED must be an integer, got {env!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="CSV file (one observation per row) or '-' for stdin")
    common.add_argument("--output", help="output file (directory for bench); stdout by default")
    common.add_argument("--h", type=float, default=None, help="bandwidth (default T^-0.35)")
    common.add_argument("--alpha", type=float, default=0.05)
    common.add_argument("--mu4", choices=["gauss", "plugin", "ustat"], default="gauss")
    common.add_argument("--grid", type=int, default=None,
                        help="quadrature nodes per unit length (tests) or number of u points"
                             " (subspace)")
    common.add_argument("--theta0", type=float, default=20.0, help="edge threshold in degrees")
    common.add_argument("--depth", type=int, default=2)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--model", default=None)
    common.add_argument("--T", type=int, default=1000)
    common.add_argument("--reps", type=int, default=100)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--local", action="store_true", help="include per-u local results")

    parser = argparse.ArgumentParser(prog="ssa-vc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("test-dim", parents=[common], help="global (and local) dimension tests")
    sub.add_parser("split", parents=[common], help="dyadic interval-splitting tests")
    p_sub = sub.add_parser("subspace", parents=[common], help="estimate a stationary subspace")
    p_sub.add_argument("--pool-csv", default=None, help="write all pooled bases to this CSV")
    sub.add_parser("simulate", parents=[common], help="simulate a builtin model to CSV")
    p_bench = sub.add_parser("bench", parents=[common], help="Monte Carlo reproduction tables")
    p_bench.add_argument("--suite", choices=["dims", "d3"], default="dims")
    p_bench.add_argument("--models", default="1,2,3,4")
    p_bench.add_argument("--T-list", dest="T_list", default=None,
                         help="comma-separated sample sizes")
    return parser


COMMANDS = {"test-dim": cmd_test_dim, "split": cmd_split, "subspace": cmd_subspace,
            "simulate": cmd_simulate, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        if args.seed is None:
            args.seed = _seed_default()
        return COMMANDS[args.command](args)
    except (InputError, DomainError, ModelError) as exc:
        print(f"ssa-vc: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except EmptyPool as exc:
        print(f"ssa-vc: empty result: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (NumericalFailure, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"ssa-vc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
