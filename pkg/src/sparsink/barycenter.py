"""Fixed-support entropic Wasserstein barycenters: IBP and Spar-IBP."""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DegenerateSketch, InputError, LengthMismatch, NotConverged, NotNormalized, ZeroDenominator
from .geometry import KernelMatrix
from .measures import SIMPLEX_TOL, as_weights
from .solvers import DROP, RAISE, KernelOperator
from .sparsify import (
    barycenter_probabilities,
    derived_seed,
    empty_lines,
    poisson_sparsify,
    shrink_with_uniform,
    uniform_probabilities,
)


@dataclass(frozen=True)
class BarycenterProblem:
    measures: Sequence
    kernels: Sequence
    weights: Sequence[float]
    delta: float = 1e-6
    max_iter: int = 1000
    orphans: str = RAISE

    def __post_init__(self):
        m = len(self.measures)
        if m == 0 or len(self.kernels) != m or len(self.weights) != m:
            raise LengthMismatch("need matching, non-empty lists of measures, kernels and weights")
        w = np.asarray(self.weights, dtype=np.float64)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
            raise NotNormalized("barycenter weights must lie on the simplex")
        n = len(as_weights(self.measures[0]))
        for b, K in zip(self.measures, self.kernels):
            if len(as_weights(b)) != n or K.shape != (n, n):
                raise LengthMismatch("all measures and kernels must share one n-point support")
            if abs(as_weights(b).sum() - 1.0) > SIMPLEX_TOL:
                raise NotNormalized("input measures must be probability vectors")
        if self.orphans not in (RAISE, DROP):
            raise InputError(f"orphans must be 'raise' or 'drop', got {self.orphans!r}")

    @property
    def n(self):
        return len(as_weights(self.measures[0]))


class BarycenterResult(NamedTuple):
    weights: np.ndarray
    iterations: int
    converged: bool
    wall_time: float


def _prepare(ops, measures, orphans):
    bs = []
    for op, b in zip(ops, measures):
        b = np.array(as_weights(b), dtype=np.float64)
        _, cols = op.empty()
        cols &= b > 0
        if cols.any():
            if orphans == RAISE:
                raise ZeroDenominator(f"{int(cols.sum())} columns carry mass but have no kernel entry")
            b[cols] = 0.0
            b /= b.sum()
        bs.append(b)
    return bs


def _ratio(num, den):
    if not np.all(np.isfinite(den)):
        raise ZeroDenominator("kernel products overflowed")
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def ibp(prob):
    """Iterative Bregman projections.

    Starts from ``q = 1/n`` and ``u_k = 1``; each sweep computes
    ``v_k = b_k / K_k^T u_k``, then ``q = prod_k (K_k v_k)^{w_k}``, then
    ``u_k = q / K_k v_k``, stopping once ``||q_t - q_{t-1}||_1 <= delta``.
    Measures with zero weight are skipped.
    """
    w = np.asarray(prob.weights, dtype=np.float64)
    active = [k for k in range(len(w)) if w[k] > 0]
    ops = [KernelOperator(prob.kernels[k]) for k in active]
    bs = _prepare(ops, [prob.measures[k] for k in active], prob.orphans)
    n = prob.n
    q = np.full(n, 1.0 / n)
    us = [np.ones(n) for _ in active]
    converged = False
    started = time.perf_counter()
    t = 0
    for t in range(1, prob.max_iter + 1):
        q_prev = q
        q = np.ones(n)
        kvs = []
        for j, k in enumerate(active):
            ktu = ops[j].rmatvec(us[j])
            # under "drop", rows emptied in another sketch can starve a column; its mass is dropped too
            if prob.orphans == RAISE and np.any((ktu <= 0) & (bs[j] > 0)):
                raise ZeroDenominator("K^T u has zero entries facing positive mass")
            kv = ops[j].matvec(_ratio(bs[j], ktu))
            kvs.append(kv)
            q *= kv ** w[k]
        # u_k uses the fresh q; pairing it with q_prev oscillates with period 2
        us = [_ratio(q, kv) for kv in kvs]
        if not np.all(np.isfinite(q)):
            raise ZeroDenominator("barycenter iterate overflowed")
        if np.abs(q - q_prev).sum() <= prob.delta:
            converged = True
            break
    elapsed = time.perf_counter() - started
    if not converged:
        warnings.warn(f"IBP stopped at max_iter={prob.max_iter}", NotConverged, stacklevel=2)
    return BarycenterResult(q, t, converged, elapsed)


def sketch_kernels(prob, s, seed, theta=0.0, sampling="importance"):
    """One Poisson sketch per measure with independent derived seeds.

    Sketches that reproduce their kernel exactly are replaced by the kernel.
    """
    out = []
    for k, (b, K) in enumerate(zip(prob.measures, prob.kernels)):
        if sampling == "uniform":
            plan = uniform_probabilities(K)
        else:
            plan = barycenter_probabilities(b, K)
        if theta:
            plan = shrink_with_uniform(plan, theta)
        sk = poisson_sparsify(K, plan, s, derived_seed(seed, k))
        if sk.exact:
            out.append(K)
            continue
        if prob.orphans == RAISE:
            rows, cols = empty_lines(sk, None, b)
            if rows.size or cols.size:
                raise DegenerateSketch(
                    f"sketch {k} left {rows.size} rows and {cols.size} columns empty", rows, cols
                )
        out.append(sk)
    return out


def spar_ibp(prob, s, seed=0, theta=0.0, sampling="importance"):
    """Spar-IBP: IBP on column-importance Poisson sketches of every kernel."""
    sketches = sketch_kernels(prob, s, seed, theta, sampling)
    sparse_prob = BarycenterProblem(
        prob.measures, sketches, prob.weights, prob.delta, prob.max_iter, prob.orphans
    )
    return ibp(sparse_prob)


def as_kernel_list(kernel, m):
    """Repeat one shared kernel ``m`` times (same cost for every measure)."""
    if isinstance(kernel, (list, tuple)):
        return list(kernel)
    if not isinstance(kernel, KernelMatrix):
        raise InputError("expected a KernelMatrix or a list of kernels")
    return [kernel] * m
