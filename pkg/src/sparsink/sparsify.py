"""Importance sampling probabilities and Poisson element-wise kernel sketches.

Every sampling plan used here factorizes as

    p_ij = (1 - theta) * r_i * c_j * K_ij**kappa / Z + theta / nnz(K)

on the support of K (and 0 off it), so plans are stored by their factors and
materialized one row block at a time. That keeps sketching of n ~ 1e4 kernels
within a single n x n array of memory.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import AllZeroKernel, BudgetTooLarge, LengthMismatch, ThetaOutOfRange
from .geometry import KernelMatrix
from .measures import as_weights

OT = "ot"
UOT = "uot"
BARYCENTER = "barycenter"
UNIFORM = "uniform"

# rows per RNG stream; fixed so sketches do not depend on how work is split
ROW_BLOCK = 256


def _dense(K):
    return K.entries if isinstance(K, KernelMatrix) else np.asarray(K, dtype=np.float64)


@dataclass(frozen=True)
class SamplingPlan:
    """Selection probabilities over the support of a kernel, in factored form."""

    kind: str
    row_weights: np.ndarray
    col_weights: np.ndarray
    kernel_power: float
    normalizer: float
    support_size: int
    theta: float = 0.0
    s: Optional[float] = None
    params: tuple = ()

    @property
    def n(self):
        return self.row_weights.shape[0]

    def block(self, K, start, stop):
        """Probabilities for rows ``start:stop`` given the dense kernel."""
        kb = K[start:stop]
        support = kb > 0
        p = np.outer(self.row_weights[start:stop], self.col_weights)
        if self.kernel_power != 0.0:
            with np.errstate(divide="ignore"):
                p *= np.where(support, kb, 0.0) ** self.kernel_power
        p /= self.normalizer
        if self.theta > 0:
            p *= 1.0 - self.theta
            p += self.theta / self.support_size
        p[~support] = 0.0
        return p

    def probs(self, K):
        """Full n x n probability grid."""
        K = _dense(K)
        return self.block(K, 0, K.shape[0])

    def with_budget(self, s):
        return replace(self, s=float(s))


def _make_plan(kind, K, r, c, power, params=()):
    K = _dense(K)
    n, m = K.shape
    if r.shape[0] != n or c.shape[0] != m:
        raise LengthMismatch(f"weights of length {r.shape[0]}, {c.shape[0]} for a {n}x{m} kernel")
    z = 0.0
    nnz = 0
    for start in range(0, n, ROW_BLOCK):
        kb = K[start : start + ROW_BLOCK]
        support = kb > 0
        nnz += int(np.count_nonzero(support))
        w = np.outer(r[start : start + ROW_BLOCK], c)
        if power != 0.0:
            w *= np.where(support, kb, 0.0) ** power
        z += float(w[support].sum())
    if nnz == 0 or not z > 0:
        raise AllZeroKernel("no kernel entry has positive sampling weight")
    return SamplingPlan(kind, r, c, float(power), z, nnz, params=params)


def ot_probabilities(a, b, K):
    """Probabilities proportional to ``sqrt(a_i b_j)`` on the support of K."""
    a, b = as_weights(a), as_weights(b)
    return _make_plan(OT, K, np.sqrt(a), np.sqrt(b), 0.0)


def uot_probabilities(a, b, K, lam, epsilon):
    """Probabilities proportional to ``(a_i b_j)^(lam/(2lam+eps)) K_ij^(eps/(2lam+eps))``."""
    a, b = as_weights(a), as_weights(b)
    denom = 2.0 * lam + epsilon
    gamma = lam / denom if np.isfinite(lam) else 0.5
    kappa = epsilon / denom if np.isfinite(lam) else 0.0
    return _make_plan(UOT, K, a**gamma, b**gamma, kappa, params=(float(lam), float(epsilon)))


def barycenter_probabilities(b, K):
    """Column-constant probabilities ``sqrt(b_j) / (n sum_j sqrt(b_j))``."""
    b = as_weights(b)
    n = _dense(K).shape[0]
    return _make_plan(BARYCENTER, K, np.full(n, 1.0 / n), np.sqrt(b), 0.0)


def uniform_probabilities(K):
    """Uniform probabilities over the support of K (the Rand-Sink baseline)."""
    n, m = _dense(K).shape
    return _make_plan(UNIFORM, K, np.ones(n), np.ones(m), 0.0)


def shrink_with_uniform(plan, theta):
    """Mix ``plan`` with the uniform plan on the kernel support."""
    if not 0 <= theta < 1:
        raise ThetaOutOfRange(f"theta must lie in [0, 1), got {theta}")
    # mixing composes: (1-t2)((1-t1)p + t1 u) + t2 u
    mixed = 1.0 - (1.0 - plan.theta) * (1.0 - theta)
    return replace(plan, theta=mixed)


@dataclass(frozen=True)
class SparseKernel:
    """Row-compressed sketch of a kernel with inverse-probability rescaling.

    ``matrix`` holds ``K_ij / p*_ij`` on kept entries; ``p_star`` is aligned
    with ``matrix.data``. ``exact`` is set when every supported entry was
    kept with ``p* = 1``, i.e. the sketch equals K.
    """

    matrix: sp.csr_matrix
    p_star: np.ndarray
    seed: int
    s: float
    theta: float
    kind: str
    exact: bool
    expected_nnz: float
    source: Optional[KernelMatrix] = None

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def indptr(self):
        return self.matrix.indptr

    @property
    def indices(self):
        return self.matrix.indices

    @property
    def data(self):
        return self.matrix.data

    @property
    def realized_nnz(self):
        return int(self.matrix.nnz)

    @property
    def epsilon(self):
        return self.source.epsilon if self.source is not None else None

    def base_values(self):
        """Original kernel entries ``K_ij`` at the stored positions."""
        return self.matrix.data * self.p_star

    def toarray(self):
        return self.matrix.toarray()


def derived_seed(*keys):
    """Independent 32-bit seed derived from a tuple of integer keys."""
    ss = np.random.SeedSequence([int(k) for k in keys])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def block_rng(seed, block):
    """Counter-based generator for one row block of a sketch."""
    ss = np.random.SeedSequence([int(seed), int(block)])
    return np.random.Generator(np.random.Philox(ss))


def _sketch_block(K, plan, s, seed, start, stop):
    p = plan.block(K, start, stop)
    p_star = np.minimum(1.0, s * p)
    u = block_rng(seed, start // ROW_BLOCK).random(p.shape)
    keep = u < p_star
    rows, cols = np.nonzero(keep)
    ps = p_star[rows, cols]
    vals = K[start:stop][rows, cols] / ps
    saturated = bool(np.all(p_star[K[start:stop] > 0] == 1.0))
    return rows + start, cols, vals, ps, float(p_star.sum()), saturated


def poisson_sparsify(K, plan, s=None, seed=0, workers=1):
    """Draw the Poisson sketch: keep ``K_ij`` w.p. ``min(1, s p_ij)``, rescale by it.

    Each block of ``ROW_BLOCK`` rows uses its own stream keyed by
    ``(seed, block)``, so the result is identical for any ``workers``.
    """
    kernel = K if isinstance(K, KernelMatrix) else None
    Kd = _dense(K)
    n, m = Kd.shape
    if plan.n != n:
        raise LengthMismatch(f"plan is {plan.n}-dimensional, kernel is {n}x{m}")
    s = plan.s if s is None else float(s)
    if s is None or not s > 0:
        raise BudgetTooLarge("budget s must be positive")
    if s >= n * m:
        raise BudgetTooLarge(f"budget s={s:g} must be below n^2={n * m}")
    starts = list(range(0, n, ROW_BLOCK))
    job = lambda st: _sketch_block(Kd, plan, s, seed, st, min(st + ROW_BLOCK, n))  # noqa: E731
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(job, starts))
    else:
        parts = [job(st) for st in starts]
    rows = np.concatenate([q[0] for q in parts])
    cols = np.concatenate([q[1] for q in parts])
    vals = np.concatenate([q[2] for q in parts])
    pst = np.concatenate([q[3] for q in parts])
    expected = sum(q[4] for q in parts)
    exact = all(q[5] for q in parts)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    np.cumsum(indptr, out=indptr)
    # np.nonzero walks row-major, so columns are already sorted within rows
    mat = sp.csr_matrix((vals, cols.astype(np.int32), indptr), shape=(n, m))
    mat.has_sorted_indices = True
    return SparseKernel(mat, pst, int(seed), s, plan.theta, plan.kind, exact, expected, kernel)


def _vec(x, n):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (n,):
        raise LengthMismatch(f"expected a vector of length {n}, got shape {x.shape}")
    return x


def spmv(M, v):
    """``M @ v`` for a sketch."""
    return M.matrix @ _vec(v, M.shape[1])


def spmv_t(M, u):
    """``M.T @ u`` for a sketch."""
    return M.matrix.T @ _vec(u, M.shape[0])


def empty_lines(M, row_mass=None, col_mass=None):
    """Indices of rows / columns with no stored entry but positive mass."""
    row_counts = np.diff(M.matrix.indptr)
    col_counts = np.bincount(M.matrix.indices, minlength=M.shape[1])
    rows = row_counts == 0
    cols = col_counts == 0
    if row_mass is not None:
        rows &= as_weights(row_mass) > 0
    if col_mass is not None:
        cols &= as_weights(col_mass) > 0
    return np.flatnonzero(rows), np.flatnonzero(cols)
