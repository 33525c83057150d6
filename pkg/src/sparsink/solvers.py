"""Sinkhorn matrix scaling for entropic OT and UOT, dense or on sparse sketches.

The OT loop alternates ``u <- a / K v`` and ``v <- b / K^T u``; the UOT loop
raises both updates to the power ``lam / (lam + eps)``. Both stop when
``||u_t - u_{t-1}||_1 + ||v_t - v_{t-1}||_1 <= delta``. Spar-Sink variants
draw a Poisson sketch of K first and run the same loop on it.
"""

from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import (
    DegenerateSketch,
    InfiniteCostOnSupport,
    InputError,
    LengthMismatch,
    NotConverged,
    NotNormalized,
    ZeroDenominator,
)
from .geometry import CostMatrix, KernelMatrix
from .measures import SIMPLEX_TOL, as_weights
from .sparsify import (
    SparseKernel,
    empty_lines,
    ot_probabilities,
    poisson_sparsify,
    shrink_with_uniform,
    uniform_probabilities,
    uot_probabilities,
)

RAISE = "raise"
DROP = "drop"
IMPORTANCE = "importance"
UNIFORM = "uniform"

_BLOCK = 512


@dataclass(frozen=True)
class SolverConfig:
    """Parameters shared by every scaling loop.

    ``lam = inf`` means balanced OT. ``orphans`` controls rows or columns of
    the kernel that carry mass but have no entry: ``"raise"`` fails, ``"drop"``
    removes that mass from the problem (renormalizing for balanced OT).
    """

    epsilon: float
    lam: float = math.inf
    delta: float = 1e-6
    max_iter: int = 1000
    stabilize: bool = False
    absorb_threshold: float = 30.0
    orphans: str = RAISE

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InputError(f"epsilon must be positive, got {self.epsilon}")
        if not self.lam > 0:
            raise InputError(f"lambda must be positive, got {self.lam}")
        if not self.delta > 0:
            raise InputError(f"delta must be positive, got {self.delta}")
        if self.max_iter < 1:
            raise InputError("max_iter must be at least 1")
        if self.orphans not in (RAISE, DROP):
            raise InputError(f"orphans must be 'raise' or 'drop', got {self.orphans!r}")

    @property
    def exponent(self):
        """``lam / (lam + eps)``; 1 for balanced OT."""
        if math.isinf(self.lam):
            return 1.0
        return self.lam / (self.lam + self.epsilon)


@dataclass
class SolveReport:
    objective: float
    iterations: int
    residual_row: float
    residual_col: float
    wall_time: float
    converged: bool
    sketch_nnz: Optional[int] = None
    seed: Optional[int] = None
    sketch_time: float = 0.0
    dropped_rows: int = 0
    dropped_cols: int = 0
    kernel_mass_ratio: Optional[float] = None

    @property
    def time_per_iteration(self):
        return self.wall_time / max(self.iterations, 1)

    def to_dict(self):
        d = asdict(self)
        d["wall_time_s"] = d.pop("wall_time")
        return d

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


class KernelOperator:
    """Uniform ``K v`` / ``K^T u`` over dense arrays and CSR sketches."""

    def __init__(self, K):
        if isinstance(K, SparseKernel):
            self.sparse = True
            self.mat = K.matrix
        elif isinstance(K, KernelMatrix):
            self.sparse = False
            self.mat = K.entries
        elif sp.issparse(K):
            self.sparse = True
            self.mat = sp.csr_matrix(K)
        else:
            self.sparse = False
            self.mat = np.asarray(K, dtype=np.float64)
            if self.mat.ndim != 2:
                raise InputError("kernel must be a matrix")
        self.shape = self.mat.shape

    def matvec(self, v):
        return self.mat @ v

    def rmatvec(self, u):
        return self.mat.T @ u

    def empty(self):
        if self.sparse:
            csr = sp.csr_matrix(self.mat)
            rows = np.diff(csr.indptr) == 0
            cols = np.bincount(csr.indices, minlength=self.shape[1]) == 0
        else:
            nz = self.mat > 0
            rows = ~nz.any(axis=1)
            cols = ~nz.any(axis=0)
        return rows, cols

    def scaled(self, f, g):
        """Kernel ``diag(e^f) K diag(e^g)`` as a new operator."""
        if self.sparse:
            csr = sp.csr_matrix(self.mat)
            rows = np.repeat(np.arange(self.shape[0]), np.diff(csr.indptr))
            data = csr.data * np.exp(f[rows] + g[csr.indices])
            m = sp.csr_matrix((data, csr.indices, csr.indptr), shape=self.shape)
        else:
            m = np.exp(f[:, None] + g[None, :]) * self.mat
        return KernelOperator(m)


@dataclass
class TransportPlan:
    """``T = diag(u) K diag(v)``, materialized lazily.

    When log-domain absorption ran, ``work`` is the absorbed kernel
    ``diag(e^{f}) K diag(e^{g})`` and ``u``, ``v`` are relative to it.
    """

    u: np.ndarray
    v: np.ndarray
    kernel: object
    converged: bool
    iterations: int
    work: object = None
    log_u_absorbed: Optional[np.ndarray] = None
    log_v_absorbed: Optional[np.ndarray] = None
    _op: object = field(default=None, repr=False)

    def __post_init__(self):
        if self._op is None:
            self._op = self.work if isinstance(self.work, KernelOperator) else KernelOperator(self.kernel if self.work is None else self.work)

    @property
    def shape(self):
        return self._op.shape

    @property
    def is_sparse(self):
        return self._op.sparse

    def row_sums(self):
        return self.u * self._op.matvec(self.v)

    def col_sums(self):
        return self.v * self._op.rmatvec(self.u)

    def matrix(self):
        """Dense n x m plan."""
        if self._op.sparse:
            return (sp.diags(self.u) @ self._op.mat @ sp.diags(self.v)).toarray()
        return self.u[:, None] * self._op.mat * self.v[None, :]

    def blocks(self):
        """Yield ``(rows, cols, T_ij)`` over the kernel support, in row blocks."""
        mat = self._op.mat
        if self._op.sparse:
            coo = sp.csr_matrix(mat).tocoo()
            yield coo.row, coo.col, self.u[coo.row] * coo.data * self.v[coo.col]
            return
        for start in range(0, mat.shape[0], _BLOCK):
            kb = mat[start : start + _BLOCK]
            r, c = np.nonzero(kb > 0)
            yield r + start, c, self.u[r + start] * kb[r, c] * self.v[c]


def _kernel_epsilon(K):
    if isinstance(K, KernelMatrix):
        return K.epsilon
    if isinstance(K, SparseKernel):
        return K.epsilon
    return None


def _cost_lookup(kernel, cost, epsilon):
    """Return ``f(rows, cols) -> C_ij`` for the plan's support."""
    if isinstance(cost, CostMatrix):
        cost = cost.entries
    if cost is not None:
        c = np.asarray(cost, dtype=np.float64)
        return lambda r, j: c[r, j]
    if isinstance(kernel, KernelMatrix) and kernel.cost is not None:
        c = kernel.cost.entries
        return lambda r, j: c[r, j]
    if isinstance(kernel, SparseKernel):
        if kernel.source is not None:
            return _cost_lookup(kernel.source, None, epsilon)
        # stored entries come back in CSR order, aligned with base_values()
        base = kernel.base_values()

        def from_sketch(r, j):
            if r.shape[0] != base.shape[0]:
                raise InputError("sketch without a source kernel needs an explicit cost")
            return -epsilon * np.log(base)

        return from_sketch
    if sp.issparse(kernel):
        raise InputError("a bare sparse kernel needs an explicit cost")
    dense = kernel.entries if isinstance(kernel, KernelMatrix) else np.asarray(kernel, dtype=np.float64)

    def from_kernel(r, j):
        with np.errstate(divide="ignore"):
            return -epsilon * np.log(dense[r, j])

    return from_kernel


def _terms(plan, cost, epsilon):
    """(<T, C>, H(T)) summed over the plan support with 0 log 0 = 0."""
    lookup = _cost_lookup(plan.kernel, cost, epsilon)
    transport = 0.0
    entropy = 0.0
    for r, j, t in plan.blocks():
        c = lookup(r, j)
        pos = t > 0
        if np.any(~np.isfinite(c[pos])):
            raise InfiniteCostOnSupport("plan puts mass on an entry with infinite cost")
        tp = t[pos]
        transport += float(np.dot(tp, c[pos]))
        entropy -= float(np.dot(tp, np.log(tp) - 1.0))
    return transport, entropy


def entropy(T):
    """``H(T) = -sum T_ij (log T_ij - 1)`` for an array, with 0 log 0 = 0."""
    t = np.asarray(T, dtype=np.float64).ravel()
    t = t[t > 0]
    return float(-np.dot(t, np.log(t) - 1.0))


def kl_divergence(x, y):
    """Generalized KL ``sum x log(x / y) - x + y`` with 0 log 0 = 0."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    pos = x > 0
    if np.any(y[pos] <= 0):
        return math.inf
    return float(np.dot(x[pos], np.log(x[pos] / y[pos])) - x.sum() + y.sum())


def ot_objective(plan, C=None, epsilon=None):
    """``<T, C> - eps H(T)``, evaluated over the kernel support only."""
    epsilon = epsilon if epsilon is not None else _kernel_epsilon(plan.kernel)
    transport, h = _terms(plan, C, epsilon)
    return transport - epsilon * h


def uot_objective(plan, C, a, b, lam, epsilon):
    """``<T, C> + lam KL(T 1 | a) + lam KL(T^T 1 | b) - eps H(T)``."""
    transport, h = _terms(plan, C, epsilon)
    a, b = as_weights(a), as_weights(b)
    return (
        transport
        + lam * kl_divergence(plan.row_sums(), a)
        + lam * kl_divergence(plan.col_sums(), b)
        - epsilon * h
    )


def marginal_residuals(plan, a, b):
    """``(||T 1 - a||_1, ||T^T 1 - b||_1)``."""
    return (
        float(np.abs(plan.row_sums() - as_weights(a)).sum()),
        float(np.abs(plan.col_sums() - as_weights(b)).sum()),
    )


def wfr_distance(uot_value):
    """WFR distance from an entropic UOT value, clamped at zero."""
    return math.sqrt(max(uot_value, 0.0))


def _check_inputs(op, a, b, cfg, kernel):
    n, m = op.shape
    if a.shape[0] != n or b.shape[0] != m:
        raise LengthMismatch(f"kernel is {n}x{m}, marginals have lengths {a.shape[0]}, {b.shape[0]}")
    if np.any(a < 0) or np.any(b < 0):
        raise InputError("marginals must be non-negative")
    eps = _kernel_epsilon(kernel)
    if eps is not None and not math.isclose(eps, cfg.epsilon, rel_tol=1e-12):
        raise InputError(f"kernel built with epsilon={eps} but config has epsilon={cfg.epsilon}")


def _orphans(op, a, b, cfg, balanced):
    """Apply the orphan policy; return possibly adjusted (a, b) and counts."""
    rows, cols = op.empty()
    rows &= a > 0
    cols &= b > 0
    nr, nc = int(rows.sum()), int(cols.sum())
    if nr == 0 and nc == 0:
        return a, b, 0, 0
    if cfg.orphans == RAISE:
        raise ZeroDenominator(f"{nr} rows and {nc} columns carry mass but have no kernel entry")
    a = np.where(rows, 0.0, a)
    b = np.where(cols, 0.0, b)
    if balanced:
        if not (a.sum() > 0 and b.sum() > 0):
            raise ZeroDenominator("dropping empty rows/columns removed all mass")
        a = a / a.sum()
        b = b / b.sum()
    return a, b, nr, nc


def _update(num, den, power, what):
    bad = (den <= 0) & (num > 0)
    if np.any(bad) or not np.all(np.isfinite(den)):
        raise ZeroDenominator(f"{what} has {int(bad.sum())} zero entries facing positive mass")
    out = np.divide(num, den, out=np.zeros_like(num), where=num > 0)
    if power != 1.0:
        out **= power
    return out


def _scale(op, a, b, cfg, cost=None, unbalanced=False):
    """Shared scaling loop. Returns (u, v, iterations, converged, absorbed)."""
    power = cfg.exponent if unbalanced else 1.0
    n, m = op.shape
    v = np.ones(m)
    # OT leaves u^(0) undefined, so its stopping rule starts at t = 2
    u = np.ones(n) if unbalanced else None
    f = np.zeros(n)
    g = np.zeros(m)
    base = op
    absorbed = False
    converged = False
    t = 0
    for t in range(1, cfg.max_iter + 1):
        u_prev, v_prev = u, v
        u = _update(a, op.matvec(v), power, "K v")
        v = _update(b, op.rmatvec(u), power, "K^T u")
        if u_prev is not None:
            err = np.abs(u - u_prev).sum() + np.abs(v - v_prev).sum()
            if not np.isfinite(err):
                raise ZeroDenominator("scaling vectors overflowed; try stabilize=True or a larger epsilon")
            if err <= cfg.delta:
                converged = True
                break
        if cfg.stabilize and (_logmax(u) > cfg.absorb_threshold or _logmax(v) > cfg.absorb_threshold):
            f += _safe_log(u)
            g += _safe_log(v)
            op = _absorb(base, f, g, cost, cfg.epsilon)
            # express previous iterates relative to the new base
            u = _rel(u, u)
            v = _rel(v, v)
            absorbed = True
    if absorbed:
        return u, v, t, converged, (op, f, g)
    return u, v, t, converged, None


def _logmax(x):
    pos = x[x > 0]
    return float(np.abs(np.log(pos)).max()) if pos.size else 0.0


def _safe_log(x):
    with np.errstate(divide="ignore"):
        lx = np.log(x)
    lx[x == 0] = 0.0
    return lx


def _rel(x, by):
    return np.where(by > 0, 1.0, 0.0) if x is by else np.divide(x, by, out=np.zeros_like(x), where=by > 0)


def _absorb(base, f, g, cost, epsilon):
    if not base.sparse and cost is not None:
        c = cost.entries if isinstance(cost, CostMatrix) else np.asarray(cost)
        with np.errstate(invalid="ignore"):
            k = np.exp(f[:, None] + g[None, :] - c / epsilon)
        k[~np.isfinite(c)] = 0.0
        return KernelOperator(k)
    return base.scaled(f, g)


def _solve(K, a, b, cfg, cost, unbalanced):
    op = KernelOperator(K)
    a0, b0 = as_weights(a), as_weights(b)
    _check_inputs(op, a0, b0, cfg, K)
    a1, b1, nr, nc = _orphans(op, a0, b0, cfg, balanced=not unbalanced)
    started = time.perf_counter()
    u, v, iters, converged, absorbed = _scale(op, a1, b1, cfg, cost, unbalanced)
    elapsed = time.perf_counter() - started
    if absorbed is None:
        plan = TransportPlan(u, v, K, converged, iters, _op=op)
    else:
        work, f, g = absorbed
        plan = TransportPlan(u, v, K, converged, iters, work=work, log_u_absorbed=f, log_v_absorbed=g)
    if not converged:
        warnings.warn(f"stopped at max_iter={cfg.max_iter} before reaching delta={cfg.delta:g}", NotConverged, stacklevel=3)
    if unbalanced:
        obj = uot_objective(plan, cost, a0, b0, cfg.lam, cfg.epsilon)
    else:
        obj = ot_objective(plan, cost, cfg.epsilon)
    rr, rc = marginal_residuals(plan, a0, b0)
    report = SolveReport(obj, iters, rr, rc, elapsed, converged, dropped_rows=nr, dropped_cols=nc)
    # diagnostic only: 1^T K 1 / n^2
    report.kernel_mass_ratio = float(op.mat.sum()) / (op.shape[0] * op.shape[1])
    return plan, report


def _require_simplex(a, b):
    for name, w in (("a", a), ("b", b)):
        if abs(w.sum() - 1.0) > SIMPLEX_TOL:
            raise NotNormalized(f"{name} sums to {w.sum():.12g}; balanced OT needs probability vectors")


def sinkhorn_ot(K, a, b, cfg, cost=None):
    r"""Entropic OT by alternating scaling ``u = a / K v``, ``v = b / K^T u``.

    Parameters
    ----------
    K : KernelMatrix, SparseKernel, ndarray or scipy sparse matrix
        Gibbs kernel (or a sketch of it).
    a, b : DiscreteMeasure or array-like
        Probability vectors.
    cfg : SolverConfig
    cost : CostMatrix or ndarray, optional
        Cost used for the objective. Defaults to the kernel's own cost, or
        ``-eps log K`` on its support.

    Returns
    -------
    plan : TransportPlan
    report : SolveReport
        ``objective`` is :math:`\langle T, C\rangle - \varepsilon H(T)`.
    """
    _require_simplex(as_weights(a), as_weights(b))
    return _solve(K, a, b, cfg, cost, unbalanced=False)


def sinkhorn_uot(K, a, b, cfg, cost=None):
    r"""Entropic UOT with KL-relaxed marginals.

    Updates are ``u = (a / K v)^f`` and ``v = (b / K^T u)^f`` with
    ``f = lam / (lam + eps)``, starting from ``u = v = 1``. ``cfg.lam`` must be
    finite; the objective is

    .. math::
        \langle T, C\rangle + \lambda KL(T1 \| a) + \lambda KL(T^\top 1 \| b) - \varepsilon H(T)
    """
    if math.isinf(cfg.lam):
        raise InputError("sinkhorn_uot needs a finite lambda; use sinkhorn_ot for balanced problems")
    return _solve(K, a, b, cfg, cost, unbalanced=True)


def _sketch(K, plan, s, seed, theta, workers):
    if theta:
        plan = shrink_with_uniform(plan, theta)
    started = time.perf_counter()
    sketch = poisson_sparsify(K, plan, s, seed, workers=workers)
    return sketch, time.perf_counter() - started


def _check_sketch(sketch, a, b, cfg):
    rows, cols = empty_lines(sketch, a, b)
    if (rows.size or cols.size) and cfg.orphans == RAISE:
        raise DegenerateSketch(
            f"sketch left {rows.size} rows and {cols.size} columns without entries; "
            "raise s, use theta > 0 or another seed",
            rows,
            cols,
        )


def _spar(K, a, b, cfg, s, seed, theta, sampling, workers, unbalanced, cost):
    if not isinstance(K, KernelMatrix):
        k = np.asarray(K, dtype=np.float64)
        K = KernelMatrix(k, cfg.epsilon, float(np.count_nonzero(k)) / k.size)
    if sampling == UNIFORM:
        probs = uniform_probabilities(K)
    elif unbalanced:
        probs = uot_probabilities(a, b, K, cfg.lam, cfg.epsilon)
    else:
        probs = ot_probabilities(a, b, K)
    sketch, sketch_time = _sketch(K, probs, s, seed, theta, workers)
    if sketch.exact:
        # every supported entry kept with p* = 1: the sketch is K itself
        target = K
    else:
        _check_sketch(sketch, a, b, cfg)
        target = sketch
    solver = sinkhorn_uot if unbalanced else sinkhorn_ot
    plan, report = solver(target, a, b, cfg, cost)
    report.sketch_nnz = sketch.realized_nnz
    report.seed = int(seed)
    report.sketch_time = sketch_time
    return plan, report


def spar_sink_ot(K, a, b, cfg, s, seed=0, theta=0.0, sampling=IMPORTANCE, workers=1, cost=None):
    """Spar-Sink for OT: sketch K with ``p_ij ~ sqrt(a_i b_j)``, then run Sinkhorn.

    ``sampling="uniform"`` gives the Rand-Sink baseline. ``theta`` mixes the
    importance probabilities with uniform ones.
    """
    return _spar(K, a, b, cfg, s, seed, theta, sampling, workers, False, cost)


def spar_sink_uot(K, a, b, cfg, s, seed=0, theta=0.0, sampling=IMPORTANCE, workers=1, cost=None):
    """Spar-Sink for UOT with ``p_ij ~ (a_i b_j)^(lam/(2lam+eps)) K_ij^(eps/(2lam+eps))``."""
    if math.isinf(cfg.lam):
        raise InputError("spar_sink_uot needs a finite lambda")
    return _spar(K, a, b, cfg, s, seed, theta, sampling, workers, True, cost)


def rand_sink_ot(K, a, b, cfg, s, seed=0, **kw):
    return spar_sink_ot(K, a, b, cfg, s, seed, sampling=UNIFORM, **kw)


def rand_sink_uot(K, a, b, cfg, s, seed=0, **kw):
    return spar_sink_uot(K, a, b, cfg, s, seed, sampling=UNIFORM, **kw)
