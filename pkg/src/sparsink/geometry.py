"""Ground costs and Gibbs kernels.

Infinite costs are kept as IEEE ``inf`` and map to exact zeros in the kernel,
so WFR truncation does not depend on exp underflow.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import DegenerateSupport, DimensionMismatch, InputError, NonPositiveEpsilon, NonPositiveEta
from .measures import DiscreteMeasure

SQEUCLIDEAN = "sqeuclidean"
EUCLIDEAN = "euclidean"
WFR = "wfr"

# rows per block when building large matrices
_BLOCK = 512


@dataclass(frozen=True)
class CostMatrix:
    entries: np.ndarray
    kind: str
    eta: Optional[float] = None
    c0: Optional[float] = None

    @property
    def shape(self):
        return self.entries.shape


@dataclass(frozen=True)
class KernelMatrix:
    """Dense Gibbs kernel ``exp(-C / epsilon)``."""

    entries: np.ndarray
    epsilon: float
    nnz_ratio: float
    cost: Optional[CostMatrix] = None

    @property
    def shape(self):
        return self.entries.shape

    @property
    def n(self):
        return self.entries.shape[0]


def _points(x):
    if isinstance(x, DiscreteMeasure):
        return x.support
    p = np.asarray(x, dtype=np.float64)
    if p.ndim == 1:
        p = p[:, None]
    return p


def _check_dims(x, y):
    if x.shape[1] != y.shape[1]:
        raise DimensionMismatch(f"points live in R^{x.shape[1]} and R^{y.shape[1]}")


def _finite_max(c):
    finite = c[np.isfinite(c)]
    return float(finite.max()) if finite.size else None


def sq_euclidean_cost(x, y=None):
    """Pairwise squared Euclidean distances ``||x_i - y_j||^2``."""
    x = _points(x)
    y = x if y is None else _points(y)
    _check_dims(x, y)
    c = cdist(x, y, "sqeuclidean")
    return CostMatrix(c, SQEUCLIDEAN, c0=_finite_max(c))


def euclidean_cost(x, y=None):
    x = _points(x)
    y = x if y is None else _points(y)
    _check_dims(x, y)
    c = cdist(x, y, "euclidean")
    return CostMatrix(c, EUCLIDEAN, c0=_finite_max(c))


def wfr_from_distance(d, eta):
    """Wasserstein-Fisher-Rao cost ``-log cos_+^2(d / (2 eta))`` (in place safe).

    Distances ``d >= pi * eta`` get ``+inf``.
    """
    if not eta > 0:
        raise NonPositiveEta(f"eta must be positive, got {eta}")
    d = np.asarray(d, dtype=np.float64)
    blocked = d >= np.pi * eta
    z = np.minimum(d / (2.0 * eta), np.pi / 2)
    with np.errstate(divide="ignore"):
        c = -2.0 * np.log(np.cos(z))
    c[blocked] = np.inf
    # cos(0) == 1 exactly, but keep the diagonal a clean +0.0
    c[d == 0] = 0.0
    return c


def wfr_cost(x, y=None, eta=1.0):
    x = _points(x)
    y = x if y is None else _points(y)
    _check_dims(x, y)
    if not eta > 0:
        raise NonPositiveEta(f"eta must be positive, got {eta}")
    c = wfr_from_distance(cdist(x, y, "euclidean"), eta)
    return CostMatrix(c, WFR, eta=float(eta), c0=_finite_max(c))


def kernel_from_cost(C, epsilon):
    """Entrywise ``exp(-C / epsilon)``; ``+inf`` costs give exact zeros."""
    if not epsilon > 0:
        raise NonPositiveEpsilon(f"epsilon must be positive, got {epsilon}")
    cost = C if isinstance(C, CostMatrix) else None
    c = C.entries if cost is not None else np.asarray(C, dtype=np.float64)
    if np.any(c < 0):
        raise InputError("costs must be non-negative")
    k = np.exp(-c / epsilon)
    return KernelMatrix(k, float(epsilon), float(np.count_nonzero(k)) / k.size, cost)


def gibbs_kernel(x, epsilon, kind=SQEUCLIDEAN, eta=None, y=None):
    """Build the kernel straight from points, block by block, without keeping C.

    Peak memory is one n x n float64 array, which matters at n ~ 1e4.
    """
    if not epsilon > 0:
        raise NonPositiveEpsilon(f"epsilon must be positive, got {epsilon}")
    x = _points(x)
    y = x if y is None else _points(y)
    _check_dims(x, y)
    k = np.empty((x.shape[0], y.shape[0]))
    for start in range(0, x.shape[0], _BLOCK):
        blk = k[start : start + _BLOCK]
        if kind == SQEUCLIDEAN:
            blk[:] = cdist(x[start : start + _BLOCK], y, "sqeuclidean")
        elif kind == WFR:
            blk[:] = wfr_from_distance(cdist(x[start : start + _BLOCK], y, "euclidean"), eta)
        elif kind == EUCLIDEAN:
            blk[:] = cdist(x[start : start + _BLOCK], y, "euclidean")
        else:
            raise InputError(f"unknown cost kind {kind!r}")
        np.divide(blk, -epsilon, out=blk)
        np.exp(blk, out=blk)
    return KernelMatrix(k, float(epsilon), float(np.count_nonzero(k)) / k.size, None)


def cost_values(kernel, rows, cols):
    """Cost entries at given indices, from the stored cost or ``-eps * log K``."""
    if kernel.cost is not None:
        return kernel.cost.entries[rows, cols]
    with np.errstate(divide="ignore"):
        return -kernel.epsilon * np.log(kernel.entries[rows, cols])


def eta_for_sparsity(x, target_nnz_ratio):
    """Pick eta so that about ``target`` of all n^2 pairs satisfy ``d < pi * eta``.

    Reads the target quantile of the sorted pairwise distances (diagonal
    included) and places the threshold halfway to the next distinct value.
    """
    x = _points(x)
    if not 0 < target_nnz_ratio <= 1:
        raise InputError(f"target ratio must be in (0, 1], got {target_nnz_ratio}")
    n = x.shape[0]
    off = pdist(x)
    if target_nnz_ratio >= 1:
        top = float(off.max()) if off.size else 0.0
        return (top * (1 + 1e-9) + 1e-12) / np.pi
    if n < 2 or not np.any(off > 0):
        raise DegenerateSupport("all support points coincide")
    d = np.sort(np.concatenate([np.zeros(n), off, off]))
    k = int(round(target_nnz_ratio * n * n))
    k = min(max(k, 1), d.size - 1)
    lo, hi = d[k - 1], d[k]
    if hi > lo:
        thresh = 0.5 * (lo + hi)
    else:
        # tie at the quantile: keep strictly smaller distances only
        thresh = hi
    if thresh <= 0:
        thresh = float(d[d > 0].min()) * 0.5
    return thresh / np.pi
