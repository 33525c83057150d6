"""Pairwise WFR distances between frames and ED-frame prediction."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..errors import EmptyWindow, InputError, LengthMismatch, NotConverged, SparSinkError
from ..geometry import kernel_from_cost, wfr_cost
from ..measures import measure_from_image, pixel_grid
from ..solvers import DROP, IMPORTANCE, UNIFORM, SolverConfig, sinkhorn_uot, spar_sink_uot, wfr_distance
from ..sparsify import derived_seed
from .experiments import RAND_SINK, SINKHORN, SPAR_SINK
from .scenarios import s0


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric frame distances; ``failed`` lists pairs left as ``nan``."""

    values: np.ndarray
    frame_indices: tuple
    failed: tuple


def _pair_solver(frames, eta, lam, epsilon, s, seed, stride, method, multiplier, delta, max_iter):
    if stride < 1:
        raise InputError("stride must be positive")
    picked = list(range(0, len(frames), stride))
    if len(picked) < 2:
        raise InputError("need at least two frames after striding")
    shape = (frames[0].height, frames[0].width)
    if any((f.height, f.width) != shape for f in frames):
        raise LengthMismatch("all frames must have the same dimensions")
    if method not in (SINKHORN, SPAR_SINK, RAND_SINK):
        raise InputError(f"unknown method {method!r}")
    measures = [measure_from_image(frames[i]) for i in picked]
    K = kernel_from_cost(wfr_cost(pixel_grid(*shape), eta=eta), epsilon)
    n = K.n
    if s is None:
        s = min(multiplier * s0(n), np.nextafter(n * n, 0))
    cfg = SolverConfig(epsilon, lam=lam, delta=delta, max_iter=max_iter)
    sketch_cfg = SolverConfig(epsilon, lam=lam, delta=delta, max_iter=max_iter, orphans=DROP, stabilize=True)

    def one(pair):
        i, j = min(pair), max(pair)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", NotConverged)
                if method == SINKHORN:
                    rep = sinkhorn_uot(K, measures[i], measures[j], cfg)[1]
                else:
                    sampling = UNIFORM if method == RAND_SINK else IMPORTANCE
                    rep = spar_sink_uot(K, measures[i], measures[j], sketch_cfg, s,
                                        seed=derived_seed(seed, i, j), sampling=sampling)[1]
            return wfr_distance(rep.objective)
        except SparSinkError:
            return math.nan

    return picked, one


def _run(one, pairs, workers):
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, pairs))
    return [one(p) for p in pairs]


def pairwise_wfr(frames, eta, lam, epsilon, s=None, seed=0, stride=1, method=SPAR_SINK,
                 multiplier=8, workers=1, delta=1e-6, max_iter=1000):
    """WFR distance for every unordered pair of (strided) frames.

    Each pair is solved once and mirrored, so the matrix is exactly
    symmetric. ``s`` defaults to ``multiplier * s0(pixels)``; pair ``(i, j)``
    sketches with seed ``derived_seed(seed, i, j)``. Pairs whose solver
    raises are stored as ``nan`` and listed in ``failed``.
    """
    picked, one = _pair_solver(frames, eta, lam, epsilon, s, seed, stride, method, multiplier, delta, max_iter)
    m = len(picked)
    pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]
    dists = _run(one, pairs, workers)
    D = np.zeros((m, m))
    failed = []
    for (i, j), dist in zip(pairs, dists):
        D[i, j] = D[j, i] = dist
        if math.isnan(dist):
            failed.append((i, j))
    return DistanceMatrix(D, tuple(picked), tuple(failed))


def wfr_row(frames, ref, eta, lam, epsilon, s=None, seed=0, stride=1, method=SPAR_SINK,
            multiplier=8, workers=1, delta=1e-6, max_iter=1000):
    """Distances from strided frame ``ref`` to all strided frames.

    Entries equal the matching row of :func:`pairwise_wfr` with the same
    arguments (same per-pair seeds).
    """
    picked, one = _pair_solver(frames, eta, lam, epsilon, s, seed, stride, method, multiplier, delta, max_iter)
    if not 0 <= ref < len(picked):
        raise InputError(f"reference frame {ref} out of range")
    others = [j for j in range(len(picked)) if j != ref]
    row = np.zeros(len(picked))
    row[others] = _run(one, [(ref, j) for j in others], workers)
    return row


@dataclass(frozen=True)
class EdPrediction:
    t_ed_hat: int
    error: float


def ed_error(t_hat, t_es, t_ed):
    """``|1 - (t_hat - t_es) / (t_ed - t_es)|``."""
    if t_ed == t_es:
        raise InputError("true ED must differ from ES")
    return abs(1.0 - (t_hat - t_es) / (t_ed - t_es))


def predict_ed(distances, t_es, window, t_ed=None):
    """Frame in ``window`` farthest from ``t_es``; ties go to the earliest index.

    ``distances`` is a full matrix or the ES row. ``window`` is an iterable of
    indices (e.g. a ``range``). ``nan`` entries are skipped. The error is
    ``nan`` when ``t_ed`` is not given.
    """
    D = np.asarray(distances, dtype=np.float64)
    row = D[t_es] if D.ndim == 2 else D
    if not 0 <= t_es < row.shape[0]:
        raise InputError(f"t_es={t_es} out of range")
    idx = sorted({int(i) for i in window})
    if any(not 0 <= i < row.shape[0] for i in idx):
        raise InputError("window reaches outside the distance matrix")
    idx = [i for i in idx if not math.isnan(row[i])]
    if not idx:
        raise EmptyWindow("no candidate frame with a known distance")
    vals = row[idx]
    # np.argmax returns the first maximum, i.e. the earliest index
    t_hat = idx[int(np.argmax(vals))]
    err = ed_error(t_hat, t_es, t_ed) if t_ed is not None else math.nan
    return EdPrediction(t_hat, err)
