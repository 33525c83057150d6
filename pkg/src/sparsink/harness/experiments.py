"""Replicated error experiments and timing sweeps."""

from __future__ import annotations

import csv
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from ..barycenter import BarycenterProblem, ibp, spar_ibp
from ..errors import BaselineFailed, InputError, NotConverged, SparSinkError
from ..geometry import kernel_from_cost, sq_euclidean_cost
from ..solvers import (
    DROP,
    IMPORTANCE,
    UNIFORM,
    SolverConfig,
    sinkhorn_ot,
    sinkhorn_uot,
    spar_sink_ot,
    spar_sink_uot,
)
from ..sparsify import derived_seed
from .scenarios import build_instance, mixture_measures, s0

SINKHORN = "sinkhorn"
SPAR_SINK = "spar-sink"
RAND_SINK = "rand-sink"
SPAR_IBP = "spar-ibp"
RAND_IBP = "rand-ibp"
METHODS = (SINKHORN, SPAR_SINK, RAND_SINK)


@dataclass(frozen=True)
class RmaeReport:
    """Errors of one method at one budget across replications."""

    method: str
    baseline: str
    errors: tuple
    budget: Optional[float] = None
    multiplier: Optional[float] = None
    failures: int = 0
    mean_iterations: float = float("nan")
    mean_time: float = float("nan")
    meta: dict = field(default_factory=dict)

    @property
    def replications(self):
        return len(self.errors)

    @property
    def mean(self):
        e = np.asarray(self.errors, dtype=np.float64)
        e = e[np.isfinite(e)]
        return float(e.mean()) if e.size else float("nan")

    @property
    def stderr(self):
        e = np.asarray(self.errors, dtype=np.float64)
        e = e[np.isfinite(e)]
        return float(e.std(ddof=1) / math.sqrt(e.size)) if e.size > 1 else 0.0

    def row(self):
        return {
            "method": self.method,
            "baseline": self.baseline,
            "multiplier": self.multiplier,
            "budget": self.budget,
            "replications": self.replications,
            "failures": self.failures,
            "rmae": self.mean,
            "stderr": self.stderr,
            "mean_iterations": self.mean_iterations,
            "mean_time_s": self.mean_time,
        }


def relative_error(approx, exact):
    """``|approx - exact| / |exact|``; entropic values can be negative."""
    if exact == 0:
        return 0.0 if approx == 0 else math.inf
    return abs(approx - exact) / abs(exact)


def harness_config(cfg):
    """Config used for sketched runs: drop orphaned mass, absorb large scalings.

    Low budgets routinely leave rows of a sketch empty and the sparse
    pattern may admit no feasible plan; this keeps those runs finite.
    """
    return replace(cfg, orphans=DROP, stabilize=True)


def _solve_exact(inst, cfg):
    solver = sinkhorn_ot if math.isinf(cfg.lam) else sinkhorn_uot
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NotConverged)
            return solver(inst.kernel, inst.a, inst.b, cfg)[1]
    except SparSinkError as exc:
        raise BaselineFailed(f"dense baseline failed: {exc}") from exc


def _solve_approx(inst, cfg, method, s, seed):
    if method == SINKHORN:
        return _solve_exact(inst, cfg)
    sampling = UNIFORM if method == RAND_SINK else IMPORTANCE
    solver = spar_sink_ot if math.isinf(cfg.lam) else spar_sink_uot
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NotConverged)
        return solver(inst.kernel, inst.a, inst.b, cfg, s, seed=seed, sampling=sampling)[1]


def _pool_map(fn, items, workers):
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def rmae_experiment(spec, methods, multipliers, replications, cfg, approx_cfg=None, workers=1):
    """Relative errors of sketched solvers against dense Sinkhorn.

    Replication ``r`` regenerates the instance with seed
    ``derived_seed(spec.seed, r)``, solves it densely once, then runs each
    method at each budget ``multiplier * s0(n)`` with sketch seed
    ``derived_seed(spec.seed, r, i)`` for the ``i``-th budget (shared by all
    methods). ``cfg.lam`` selects OT (infinite) or UOT. Solver failures in an
    approximate run are recorded as ``nan`` and counted, never replaced.

    Returns a list of :class:`RmaeReport`, methods outer, budgets inner.
    """
    if replications < 1:
        raise InputError("replications must be at least 1")
    if isinstance(methods, str):
        methods = [methods]
    approx_cfg = harness_config(cfg) if approx_cfg is None else approx_cfg
    n = spec.n
    budgets = [m * s0(n) for m in multipliers]
    baseline = "Sinkhorn" if math.isinf(cfg.lam) else "SinkhornUOT"

    def one(r):
        inst = build_instance(replace(spec, seed=derived_seed(spec.seed, r)), cfg.epsilon)
        exact = _solve_exact(inst, cfg).objective
        out = {}
        for meth in methods:
            for i, s in enumerate(budgets):
                try:
                    rep = _solve_approx(inst, approx_cfg, meth, s, derived_seed(spec.seed, r, i))
                    out[meth, i] = (relative_error(rep.objective, exact), rep.iterations, rep.wall_time)
                except SparSinkError:
                    out[meth, i] = (math.nan, math.nan, math.nan)
        return out

    runs = _pool_map(one, range(replications), workers)
    reports = []
    for meth in methods:
        for i, (mult, s) in enumerate(zip(multipliers, budgets)):
            errs = tuple(run[meth, i][0] for run in runs)
            its = [run[meth, i][1] for run in runs]
            times = [run[meth, i][2] for run in runs]
            reports.append(
                RmaeReport(
                    meth,
                    baseline,
                    errs,
                    budget=s,
                    multiplier=mult,
                    failures=int(sum(not math.isfinite(e) for e in errs)),
                    mean_iterations=float(np.nanmean(its)) if np.any(np.isfinite(its)) else math.nan,
                    mean_time=float(np.nanmean(times)) if np.any(np.isfinite(times)) else math.nan,
                    meta=dict(spec.metadata(), epsilon=cfg.epsilon, lam=cfg.lam),
                )
            )
    return reports


def barycenter_experiment(n, d, epsilon, multipliers, replications, seed=0, methods=(SPAR_IBP,),
                          delta=1e-6, max_iter=1000, workers=1):
    """l1 error of sketched IBP against dense IBP on the three-measure mixture.

    Replication ``r`` redraws the support with ``derived_seed(seed, r)``.
    """
    if replications < 1:
        raise InputError("replications must be at least 1")
    budgets = [m * s0(n) for m in multipliers]

    def one(r):
        measures, x = mixture_measures(n, d, derived_seed(seed, r))
        K = kernel_from_cost(sq_euclidean_cost(x), epsilon)
        prob = BarycenterProblem(measures, [K] * 3, [1 / 3] * 3, delta, max_iter, orphans=DROP)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NotConverged)
            try:
                exact = ibp(prob).weights
            except SparSinkError as exc:
                raise BaselineFailed(f"dense IBP failed: {exc}") from exc
            out = {}
            for meth in methods:
                sampling = "uniform" if meth == RAND_IBP else "importance"
                for i, s in enumerate(budgets):
                    try:
                        res = spar_ibp(prob, s, derived_seed(seed, r, i), sampling=sampling)
                        out[meth, i] = (float(np.abs(res.weights - exact).sum()), res.iterations, res.wall_time)
                    except SparSinkError:
                        out[meth, i] = (math.nan, math.nan, math.nan)
        return out

    runs = _pool_map(one, range(replications), workers)
    reports = []
    for meth in methods:
        for i, (mult, s) in enumerate(zip(multipliers, budgets)):
            errs = tuple(run[meth, i][0] for run in runs)
            reports.append(
                RmaeReport(
                    meth,
                    "IBP",
                    errs,
                    budget=s,
                    multiplier=mult,
                    failures=int(sum(not math.isfinite(e) for e in errs)),
                    mean_iterations=float(np.nanmean([run[meth, i][1] for run in runs])),
                    mean_time=float(np.nanmean([run[meth, i][2] for run in runs])),
                    meta={"n": n, "d": d, "epsilon": epsilon, "seed": seed},
                )
            )
    return reports


def timing_sweep(specs, methods, cfg, budget=None, multiplier=8, seed=0, approx_cfg=None):
    """Wall time and per-iteration time of each method on each spec.

    The sketched methods use a fixed ``budget`` when given, otherwise
    ``multiplier * s0(n)``. Kernels are built blockwise without storing C.
    Returns a list of row dicts (see :func:`write_rows`).
    """
    approx_cfg = harness_config(cfg) if approx_cfg is None else approx_cfg
    rows = []
    for spec in specs:
        started = time.perf_counter()
        inst = build_instance(spec, cfg.epsilon, keep_cost=False)
        build_time = time.perf_counter() - started
        s = budget if budget is not None else multiplier * s0(spec.n)
        for meth in methods:
            run_cfg = cfg if meth == SINKHORN else approx_cfg
            rep = _solve_approx(inst, run_cfg, meth, s, derived_seed(seed, spec.n))
            rows.append(
                {
                    "scenario": spec.scenario,
                    "n": spec.n,
                    "method": meth,
                    "budget": None if meth == SINKHORN else s,
                    "iterations": rep.iterations,
                    "wall_time_s": rep.wall_time,
                    "time_per_iteration_s": rep.time_per_iteration,
                    "sketch_time_s": rep.sketch_time,
                    "kernel_build_s": build_time,
                    "converged": rep.converged,
                }
            )
        del inst
    return rows


def loglog_slope(ns, times):
    """Least-squares slope of log(time) against log(n)."""
    x = np.log(np.asarray(ns, dtype=np.float64))
    y = np.log(np.asarray(times, dtype=np.float64))
    return float(np.polyfit(x, y, 1)[0])


def write_rows(rows: Sequence[dict], path):
    """Write dict rows as CSV with the keys of the first row as header."""
    rows = list(rows)
    if not rows:
        raise InputError("nothing to write")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
