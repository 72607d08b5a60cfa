"""Command line entry point.

Exit codes: 0 success, 1 verification failure (or target not reached within
the bound), 2 usage or input error.  Machine-readable results go to stdout
as JSON lines, human summaries to stderr.
"""
import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, engine, harness, matrix, mmio, verification
from .harness import ConfigError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _emit(record):
    print(json.dumps(record, sort_keys=True), flush=True)


def _say(msg):
    print(msg, file=sys.stderr, flush=True)


def _workers(args, default=1):
    """--workers, then KACZMARZ_WORKERS, then ``default``."""
    if getattr(args, "workers", None):
        return args.workers
    env = os.environ.get("KACZMARZ_WORKERS")
    if env:
        try:
            w = int(env)
        except ValueError:
            raise UsageError(f"KACZMARZ_WORKERS must be an integer, got {env!r}") from None
        if w < 1:
            raise UsageError("KACZMARZ_WORKERS must be >= 1")
        return w
    return default


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0 or not math.isfinite(v):
        raise argparse.ArgumentTypeError("must be a positive number")
    return v


def _add_matrix_args(p, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--matrix", metavar="PATH", help="Matrix Market file (real, array or coordinate)")
    g.add_argument("--hilbert", metavar="N", type=_positive_int, help="use the N x N Hilbert matrix")


def _load_matrix(args):
    if args.hilbert is not None:
        return matrix.hilbert(args.hilbert)
    return mmio.read_matrix(args.matrix)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="kaczmarz",
        description="Randomized Kaczmarz for approximate solutions of linear systems.",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("solve", help="run the iteration on one system")
    _add_matrix_args(p)
    rhs = p.add_mutually_exclusive_group(required=True)
    rhs.add_argument("--rhs", metavar="PATH", help="right-hand side b (Matrix Market or plain text); truth unknown")
    rhs.add_argument("--truth", choices=["ones"], help="known solution; b is computed as A @ truth")
    p.add_argument("--x0", default="zeros", metavar="zeros|PATH", help="starting vector (default zeros)")
    stop = p.add_mutually_exclusive_group(required=True)
    stop.add_argument("--eps", type=_positive_float,
                      help="stop once ||A x_k - b|| <= EPS * ||x_0 - x|| or at the iteration bound (needs --truth)")
    stop.add_argument("--steps", type=_nonneg_int, help="run exactly this many projections")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--stride", type=_positive_int, help="record the residual every STRIDE steps")
    p.add_argument("--out", metavar="DIR", help="write history.csv, final_iterate.csv and result.json here")

    p = sub.add_parser("bound", help="print the iteration bound as JSON")
    _add_matrix_args(p)
    p.add_argument("--eps", type=_positive_float, required=True, help="target accuracy")

    p = sub.add_parser("verify", help="run the identity and inequality checks")
    p.add_argument("--suite", choices=list(verification.SUITES) + ["all"], default="all",
                   help="which checks to run (default all)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--trials", type=_positive_int, default=10_000, help="Monte Carlo trials (default 10000)")
    p.add_argument("--matrix", metavar="PATH", help="check this Matrix Market matrix instead of the built-in fixtures")

    p = sub.add_parser("experiment", help="run an ensemble described by a JSON config")
    p.add_argument("--config", required=True, metavar="PATH", help="experiment config (JSON)")
    p.add_argument("--out", metavar="DIR", help="override output_dir")
    p.add_argument("--workers", type=_positive_int, help="concurrent trials (default: KACZMARZ_WORKERS, then the config value)")

    p = sub.add_parser("hilbert-demo", help="H_1000, truth all ones, x_0 = 0, 10^4 steps")
    p.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    p.add_argument("--trials", type=_positive_int, default=1, help="number of seeded runs (default 1)")
    p.add_argument("--stride", type=_positive_int, default=5, help="record every STRIDE steps (default 5)")
    p.add_argument("--out", default="hilbert_demo", metavar="DIR", help="output directory (default hilbert_demo)")
    p.add_argument("--workers", type=_positive_int, help="concurrent trials (default KACZMARZ_WORKERS or 1)")
    return parser


# -- subcommands -----------------------------------------------------------------------


def cmd_solve(args):
    A = _load_matrix(args)
    m, n = A.shape
    if args.truth == "ones":
        system = engine.LinearSystem.from_truth(A, np.ones(n))
    else:
        system = engine.LinearSystem(A, mmio.read_vector(args.rhs))
    x0 = np.zeros(n) if args.x0 == "zeros" else mmio.read_vector(args.x0)
    if x0.shape != (n,):
        raise UsageError(f"x0 has length {x0.size}, need {n}")

    report = None
    if args.eps is not None:
        if system.truth is None:
            raise UsageError("--eps needs a known truth (use --truth)")
        report = analysis.theorem1_bound(matrix.spectral_summary(A), args.eps)
        stop = engine.TargetRatio(args.eps, report.k)
    else:
        stop = engine.MaxSteps(args.steps)
    hist = engine.run(system, x0, stop, seed=args.seed, stride=args.stride)

    result = {
        "status": hist.status,
        "steps": hist.final_step,
        "initial_residual": float(hist.residual_norms[0]),
        "final_residual": float(hist.residual_norms[-1]),
        "final_error": None if system.truth is None else float(hist.error_norms[-1]),
        "seed": args.seed,
        "stride": hist.stride,
    }
    code = EXIT_OK
    if report is not None:
        result["bound"] = report.to_dict()
        target = args.eps * float(hist.error_norms[0])
        result["target_residual"] = target
        if hist.status == "step_cap":
            result["stopped_by"] = "iteration_bound"
            code = EXIT_FAIL
        else:
            result["stopped_by"] = "target" if hist.status == "target_ratio" else hist.status
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        harness.emit_csv(hist, out / "history.csv")
        harness.coordinates_snapshot(hist.x, out / "final_iterate.csv")
        with open(out / "result.json", "w") as fh:
            json.dump(result, fh, indent=2, sort_keys=True)
            fh.write("\n")
    _emit(result)
    _say(f"solve: {hist.status} after {hist.final_step} steps, residual "
         f"{result['initial_residual']:.6g} -> {result['final_residual']:.6g}")
    if code == EXIT_FAIL:
        _say("target not reached within the iteration bound (the bound is an existence result)")
    return code


def cmd_bound(args):
    A = _load_matrix(args)
    report = analysis.theorem1_bound(matrix.spectral_summary(A), args.eps)
    _emit(report.to_dict())
    how = "exact SVD" if report.norms_used.exact else "estimated norms"
    _say(f"bound: k = {report.k} ({how})")
    return EXIT_OK


def cmd_verify(args):
    A = mmio.read_matrix(args.matrix) if args.matrix else None
    if A is not None:
        engine.LinearSystem.from_truth(A, np.ones(A.shape[1]))  # reject zero rows up front
    results = verification.run_suite(args.suite, seed=args.seed, trials=args.trials, matrix=A)
    failed = 0
    for r in results:
        _emit(r.to_dict())
        failed += not r.passed
    _say(f"verify: {len(results) - failed}/{len(results)} checks passed")
    return EXIT_FAIL if failed else EXIT_OK


def _report_experiment(summary):
    t = summary.terminal
    _say(f"experiment: {len(t)} trial(s); initial residual {summary.residual['mean'][0]:.6g}, "
         f"final residual median {np.median([x['residual_norm'] for x in t]):.6g}, "
         f"max-norm median {np.median([x['residual_inf_norm'] for x in t]):.6g}")
    _emit({"trials": len(t), "terminal": t, "bounds": summary.bounds})


def cmd_experiment(args):
    cfg = harness.ExperimentConfig.from_json(args.config)
    if args.out:
        cfg.output_dir = args.out
    # None lets the config's own worker count apply
    summary = harness.run_experiment(cfg, workers=_workers(args, default=None))
    _report_experiment(summary)
    return EXIT_OK


def cmd_hilbert_demo(args):
    cfg = harness.ExperimentConfig.hilbert_demo(args.out, args.trials, args.seed, args.stride, _workers(args))
    summary = harness.run_experiment(cfg)
    _report_experiment(summary)
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "bound": cmd_bound,
    "verify": cmd_verify,
    "experiment": cmd_experiment,
    "hilbert-demo": cmd_hilbert_demo,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on usage errors
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, ValueError, OSError) as exc:
        _say(f"error: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
