"""Synthetic instances: C1-C3 transport scenarios, R1-R3 WFR sparsity, mixtures, frames."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from ..errors import InputError
from ..geometry import (
    SQEUCLIDEAN,
    WFR,
    eta_for_sparsity,
    gibbs_kernel,
    kernel_from_cost,
    sq_euclidean_cost,
    wfr_cost,
)
from ..measures import FrameImage, new_measure
from ..sparsify import derived_seed

SCENARIOS = ("C1", "C2", "C3")
SPARSITY = {"R1": 0.7, "R2": 0.5, "R3": 0.3}
VARIANCE = "variance"
STD = "std"

# (location, spread) of a and b; spread read per ScenarioSpec.spread
_AB = ((1 / 3, 1 / 20), (1 / 2, 1 / 20))


@dataclass(frozen=True)
class ScenarioSpec:
    """One synthetic instance family.

    ``spread`` says how the second distribution parameter is read:
    ``"variance"`` (default) or ``"std"``.
    """

    scenario: str
    n: int
    d: int = 5
    seed: int = 0
    unbalanced: Optional[tuple] = None
    sparsity: Optional[str] = None
    spread: str = VARIANCE

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise InputError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.n < 2 or self.d < 1:
            raise InputError("need n >= 2 and d >= 1")
        if self.unbalanced is not None:
            if len(self.unbalanced) != 2 or min(self.unbalanced) <= 0:
                raise InputError("unbalanced masses must be two positive numbers")
        if self.sparsity is not None and self.sparsity not in SPARSITY:
            raise InputError(f"sparsity must be one of {tuple(SPARSITY)}, got {self.sparsity!r}")
        if self.spread not in (VARIANCE, STD):
            raise InputError("spread must be 'variance' or 'std'")

    def metadata(self):
        return {
            "scenario": self.scenario,
            "n": self.n,
            "d": self.d,
            "seed": self.seed,
            "unbalanced": list(self.unbalanced) if self.unbalanced else None,
            "sparsity": self.sparsity,
            "spread": self.spread,
        }


def index_grid(n):
    """The points ``i / (n + 1)`` for ``i = 1..n``."""
    return np.arange(1, n + 1, dtype=np.float64) / (n + 1)


def _scale(spread_value, spread):
    return math.sqrt(spread_value) if spread == VARIANCE else spread_value


def gaussian_weights(n, loc, spread_value, spread=VARIANCE):
    """Normal density on the index grid, normalized to the simplex."""
    w = stats.norm.pdf(index_grid(n), loc=loc, scale=_scale(spread_value, spread))
    return w / w.sum()


def t5_weights(n, loc, spread_value, spread=VARIANCE):
    """Student-t (5 dof) density on the index grid, normalized to the simplex."""
    w = stats.t.pdf(index_grid(n), df=5, loc=loc, scale=_scale(spread_value, spread))
    return w / w.sum()


def _support(spec, rng):
    if spec.scenario == "C2":
        idx = np.arange(spec.d)
        sigma = 0.5 ** np.abs(idx[:, None] - idx[None, :])
        return rng.standard_normal((spec.n, spec.d)) @ np.linalg.cholesky(sigma).T
    return rng.random((spec.n, spec.d))


def generate_scenario(spec):
    """Weights ``a``, ``b`` and a shared support for ``spec``; pure in the spec."""
    rng = np.random.default_rng(derived_seed(spec.seed, 0))
    x = _support(spec, rng)
    dens = t5_weights if spec.scenario == "C3" else gaussian_weights
    a = dens(spec.n, *_AB[0], spec.spread)
    b = dens(spec.n, *_AB[1], spec.spread)
    if spec.unbalanced is not None:
        a = a * spec.unbalanced[0]
        b = b * spec.unbalanced[1]
    return new_measure(a, x), new_measure(b, x), x


@dataclass(frozen=True)
class Instance:
    """A generated problem with its kernel; ``eta`` is set for WFR costs."""

    spec: ScenarioSpec
    a: object
    b: object
    support: np.ndarray
    kernel: object
    epsilon: float
    eta: Optional[float] = None
    kind: str = SQEUCLIDEAN
    meta: dict = field(default_factory=dict)


def build_instance(spec, epsilon, keep_cost=True):
    """Generate ``spec`` and its Gibbs kernel.

    With a sparsity tag the cost is WFR, with eta tuned to the tag's
    non-zero ratio; otherwise it is squared Euclidean. ``keep_cost=False``
    builds the kernel blockwise without storing C (large n).
    """
    a, b, x = generate_scenario(spec)
    eta = None
    kind = SQEUCLIDEAN
    if spec.sparsity is not None:
        kind = WFR
        eta = eta_for_sparsity(x, SPARSITY[spec.sparsity])
    if keep_cost:
        cost = wfr_cost(x, eta=eta) if kind == WFR else sq_euclidean_cost(x)
        K = kernel_from_cost(cost, epsilon)
    else:
        K = gibbs_kernel(x, epsilon, kind, eta)
    meta = dict(spec.metadata(), epsilon=epsilon, eta=eta, nnz_ratio=K.nnz_ratio)
    return Instance(spec, a, b, x, K, float(epsilon), eta, kind, meta)


def s0(n):
    """Budget unit ``1e-3 n log(n)^4`` (natural log)."""
    return 1e-3 * n * math.log(n) ** 4


class BudgetClamped(UserWarning):
    """A requested budget reached n^2 and was clamped below it."""


def s_schedule(n, multipliers=(2, 4, 8, 16)):
    """``multiplier * s0(n)`` for each multiplier, clamped to stay below ``n^2``.

    Returns ``(budgets, clamped)`` where ``clamped`` flags each entry.
    """
    if n < 2:
        raise InputError("n must be at least 2")
    cap = float(np.nextafter(n * n, 0))
    budgets, flags = [], []
    for m in multipliers:
        s = m * s0(n)
        flags.append(s >= n * n)
        budgets.append(min(s, cap))
    if any(flags):
        warnings.warn(f"budgets clamped below n^2={n * n}", BudgetClamped, stacklevel=2)
    return budgets, flags


def mixture_measures(n, d=5, seed=0, spread=VARIANCE, smooth=1e-2):
    """Three inputs for barycenter experiments on a shared uniform support.

    Gaussian N(1/5, 1/50), mixture of N(1/2, 1/60) and N(4/5, 1/80), and
    t5(3/5, 1/100); each is lifted by ``smooth * max`` and renormalized.
    """
    rng = np.random.default_rng(derived_seed(seed, 1))
    x = rng.random((n, d))
    b1 = gaussian_weights(n, 1 / 5, 1 / 50, spread)
    b2 = 0.5 * gaussian_weights(n, 1 / 2, 1 / 60, spread) + 0.5 * gaussian_weights(n, 4 / 5, 1 / 80, spread)
    b3 = t5_weights(n, 3 / 5, 1 / 100, spread)
    out = []
    for b in (b1, b2, b3):
        b = b / b.sum()
        b = b + smooth * b.max()
        out.append(new_measure(b / b.sum(), x))
    return out, x


@dataclass(frozen=True)
class BlobSequence:
    """Synthetic cycle: a blob drifts away from its ES position and back."""

    frames: list
    t_es: int
    t_ed: int
    offsets: np.ndarray


def moving_blob_sequence(size=16, n_frames=9, seed=0, sigma=1.5, max_shift=4.0):
    """Frames of one Gaussian blob whose displacement from frame 0 peaks at ``t_ed``.

    The displacement rises linearly to ``max_shift`` at a seed-dependent
    ``t_ed`` and falls back, so the farthest frame from ES is unique.
    """
    if n_frames < 3:
        raise InputError("need at least 3 frames")
    rng = np.random.default_rng(derived_seed(seed, 2))
    t_ed = int(rng.integers(1, n_frames - 1))
    angle = rng.uniform(0, 2 * np.pi)
    direction = np.array([np.cos(angle), np.sin(angle)])
    centre0 = (size - 1) / 2 - 0.5 * max_shift * direction
    t = np.arange(n_frames, dtype=np.float64)
    rise = t / t_ed
    fall = (n_frames - 1 - t) / (n_frames - 1 - t_ed) if t_ed < n_frames - 1 else rise
    # fall stays strictly below 1 after the peak, so the peak is unique
    profile = np.where(t <= t_ed, rise, 0.8 * fall)
    offsets = max_shift * profile
    rr, cc = np.indices((size, size), dtype=np.float64)
    frames = []
    for off in offsets:
        cy, cx = centre0 + off * direction
        img = np.exp(-((rr - cy) ** 2 + (cc - cx) ** 2) / (2 * sigma**2))
        frames.append(FrameImage(img / img.max()))
    return BlobSequence(frames, 0, t_ed, offsets)
