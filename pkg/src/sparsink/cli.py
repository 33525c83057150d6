"""Command line interface.

Exit codes: 0 success, 2 solver did not converge (or failed numerically),
3 degenerate sketch, 4 input error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io
from .barycenter import BarycenterProblem, ibp, spar_ibp
from .errors import DegenerateSketch, InputError, NotConverged, SparSinkError
from .geometry import kernel_from_cost, sq_euclidean_cost, wfr_cost
from .harness import cardio, experiments, scenarios
from .solvers import (
    IMPORTANCE,
    UNIFORM,
    SolverConfig,
    sinkhorn_ot,
    sinkhorn_uot,
    spar_sink_ot,
    spar_sink_uot,
)

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_DEGENERATE = 3
EXIT_INPUT = 4


def parse_budget(text, n):
    """``"5000"`` is an absolute budget; ``"8s0"`` means ``8 * s0(n)``."""
    t = text.strip().lower()
    try:
        if t.endswith("s0"):
            mult = float(t[:-2] or 1)
            return mult * scenarios.s0(n)
        return float(t)
    except ValueError:
        raise InputError(f"cannot parse budget {text!r}") from None


def _add_solver_args(p, unbalanced):
    p.add_argument("--a", required=True, help="source measure CSV (weight,x1,...,xd)")
    p.add_argument("--b", required=True, help="target measure CSV")
    p.add_argument("--cost", choices=("sqeuclid", "wfr"), default="wfr" if unbalanced else "sqeuclid")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--eta", type=float, default=None, help="WFR length scale")
    p.add_argument("--spar", default=None, help="sketch budget, absolute or like 8s0")
    p.add_argument("--sampling", choices=(IMPORTANCE, UNIFORM), default=IMPORTANCE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--theta", type=float, default=0.0)
    p.add_argument("--delta", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--stabilize", action="store_true", help="absorb large scalings into the kernel")
    p.add_argument("--orphans", choices=("raise", "drop"), default="raise")
    p.add_argument("--out", default=None, help="write the report JSON here")
    p.add_argument("--plan", default=None, help="write the dense plan (binary matrix) here")


def build_parser():
    parser = argparse.ArgumentParser(prog="sparsink", description="Sparsified Sinkhorn solvers.")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_solver_args(sub.add_parser("ot", help="entropic OT"), unbalanced=False)
    p = sub.add_parser("uot", help="entropic unbalanced OT / WFR")
    _add_solver_args(p, unbalanced=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)

    p = sub.add_parser("barycenter", help="fixed-support barycenter (IBP / Spar-IBP)")
    p.add_argument("--measures", required=True, help="directory of measure CSVs sharing one support")
    p.add_argument("--weights", default=None, help="CSV of barycenter weights (default uniform)")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--spar", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--delta", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--orphans", choices=("raise", "drop"), default="raise")
    p.add_argument("--out", default=None, help="barycenter weight CSV (metadata goes to OUT.json)")

    p = sub.add_parser("bench", help="error and timing experiments")
    p.add_argument("kind", choices=("rmae", "timing"))
    p.add_argument("--scenario", choices=scenarios.SCENARIOS, default="C1")
    p.add_argument("--n", type=int, nargs="+", default=[1000])
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--sparsity", choices=tuple(scenarios.SPARSITY), default=None)
    p.add_argument("--unbalanced", type=float, nargs=2, default=None, metavar=("MASS_A", "MASS_B"))
    p.add_argument("--spread", choices=(scenarios.VARIANCE, scenarios.STD), default=scenarios.VARIANCE)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--multipliers", type=float, nargs="+", default=[2, 4, 8, 16])
    p.add_argument("--methods", nargs="+", default=[experiments.SPAR_SINK, experiments.RAND_SINK])
    p.add_argument("--budget", type=float, default=None, help="fixed budget for timing")
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)

    p = sub.add_parser("cardio", help="pairwise WFR distances between frames")
    p.add_argument("--frames", required=True, help="directory of .pgm frames")
    p.add_argument("--eta", type=float, default=15.0)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--stride", type=int, default=3)
    p.add_argument("--spar", default="8s0")
    p.add_argument("--method", choices=experiments.METHODS, default=experiments.SPAR_SINK)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--es", type=int, default=None, help="ES frame index (after striding) to predict ED from")
    p.add_argument("--out", required=True)
    return parser


def _cmd_transport(args, unbalanced):
    a = io.read_measure_csv(args.a)
    b = io.read_measure_csv(args.b)
    if args.cost == "wfr":
        if args.eta is None:
            raise InputError("--eta is required for the wfr cost")
        cost = wfr_cost(a.support, b.support, eta=args.eta)
    else:
        cost = sq_euclidean_cost(a.support, b.support)
    K = kernel_from_cost(cost, args.eps)
    cfg = SolverConfig(
        args.eps,
        lam=args.lam if unbalanced else math.inf,
        delta=args.delta,
        max_iter=args.max_iter,
        stabilize=args.stabilize,
        orphans=args.orphans,
    )
    if args.spar is None:
        solver = sinkhorn_uot if unbalanced else sinkhorn_ot
        plan, report = solver(K, a, b, cfg)
    else:
        solver = spar_sink_uot if unbalanced else spar_sink_ot
        s = parse_budget(args.spar, len(a))
        plan, report = solver(K, a, b, cfg, s, seed=args.seed, theta=args.theta, sampling=args.sampling)
    out = report.to_dict()
    if unbalanced and args.cost == "wfr":
        out["wfr_distance"] = math.sqrt(max(report.objective, 0.0))
    text = json.dumps(out, indent=2, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    if args.plan:
        io.write_matrix(args.plan, plan.matrix())
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def _cmd_barycenter(args):
    paths = sorted(p for p in Path(args.measures).iterdir() if p.suffix.lower() == ".csv")
    if not paths:
        raise InputError(f"{args.measures}: no measure CSVs")
    measures = [io.read_measure_csv(p, require_simplex=True) for p in paths]
    support = measures[0].support
    if any(m.support.shape != support.shape or not np.array_equal(m.support, support) for m in measures):
        raise InputError("barycenter inputs must share one support")
    w = io.read_weights_csv(args.weights) if args.weights else np.full(len(measures), 1.0 / len(measures))
    K = kernel_from_cost(sq_euclidean_cost(support), args.eps)
    prob = BarycenterProblem(measures, [K] * len(measures), w, args.delta, args.max_iter, args.orphans)
    s = None
    if args.spar is None:
        res = ibp(prob)
    else:
        s = parse_budget(args.spar, prob.n)
        res = spar_ibp(prob, s, args.seed)
    meta = {
        "m": len(measures),
        "n": prob.n,
        "epsilon": args.eps,
        "s": s,
        "seed": args.seed if s is not None else None,
        "iterations": res.iterations,
        "converged": res.converged,
        "wall_time_s": res.wall_time,
        "inputs": [p.name for p in paths],
    }
    if args.out:
        io.write_weights_csv(args.out, res.weights, meta)
    else:
        for v in res.weights:
            print(repr(float(v)))
    print(json.dumps(meta, sort_keys=True), file=sys.stderr)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _cmd_bench(args):
    lam = math.inf if args.lam is None else args.lam
    cfg = SolverConfig(args.eps, lam=lam, max_iter=args.max_iter)
    unbalanced = tuple(args.unbalanced) if args.unbalanced else None
    if args.kind == "rmae":
        spec = scenarios.ScenarioSpec(
            args.scenario, args.n[0], args.d, args.seed, unbalanced, args.sparsity, args.spread
        )
        reports = experiments.rmae_experiment(
            spec, args.methods, args.multipliers, args.reps, cfg, workers=args.workers
        )
        rows = [dict(r.row(), spread=args.spread) for r in reports]
    else:
        specs = [
            scenarios.ScenarioSpec(args.scenario, n, args.d, args.seed, unbalanced, args.sparsity, args.spread)
            for n in args.n
        ]
        methods = args.methods if experiments.SINKHORN in args.methods else [experiments.SINKHORN] + args.methods
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NotConverged)
            rows = experiments.timing_sweep(
                specs, methods, cfg, budget=args.budget, multiplier=args.multipliers[0], seed=args.seed
            )
    experiments.write_rows(rows, args.out)
    for r in rows:
        print(json.dumps(r, default=str))
    return EXIT_OK


def _cmd_cardio(args):
    frames = io.read_frames(args.frames)
    n = frames[0].height * frames[0].width
    s = parse_budget(args.spar, n) if args.method != experiments.SINKHORN else None
    D = cardio.pairwise_wfr(
        frames, args.eta, args.lam, args.eps, s=s, seed=args.seed, stride=args.stride,
        method=args.method, workers=args.workers,
    )
    io.write_matrix_csv(args.out, D.values)
    meta = {
        "frame_indices": list(D.frame_indices),
        "failed_pairs": [list(p) for p in D.failed],
        "eta": args.eta,
        "lambda": args.lam,
        "epsilon": args.eps,
        "s": s,
        "seed": args.seed,
        "method": args.method,
    }
    if args.es is not None:
        pred = cardio.predict_ed(D.values, args.es, range(D.values.shape[0]))
        meta["predicted_ed"] = pred.t_ed_hat
    io.write_json(args.out + ".json", meta)
    print(json.dumps(meta, sort_keys=True))
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NotConverged)
            if args.command == "ot":
                return _cmd_transport(args, unbalanced=False)
            if args.command == "uot":
                return _cmd_transport(args, unbalanced=True)
            if args.command == "barycenter":
                return _cmd_barycenter(args)
            if args.command == "bench":
                return _cmd_bench(args)
            return _cmd_cardio(args)
    except DegenerateSketch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SparSinkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
