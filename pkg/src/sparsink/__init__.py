"""Sinkhorn solvers for entropic OT, UOT and barycenters on importance-sparsified kernels."""

from .barycenter import BarycenterProblem, BarycenterResult, as_kernel_list, ibp, sketch_kernels, spar_ibp
from .errors import (
    AllBlack,
    AllZeroKernel,
    BaselineFailed,
    BudgetTooLarge,
    DegenerateSketch,
    DegenerateSupport,
    DimensionMismatch,
    EmptyOutput,
    EmptyWindow,
    InfiniteCostOnSupport,
    InputError,
    LengthMismatch,
    NegativeWeight,
    NonPositiveEpsilon,
    NonPositiveEta,
    NotConverged,
    NotNormalized,
    SparSinkError,
    ThetaOutOfRange,
    ZeroDenominator,
)
from .geometry import (
    CostMatrix,
    KernelMatrix,
    cost_values,
    eta_for_sparsity,
    euclidean_cost,
    gibbs_kernel,
    kernel_from_cost,
    sq_euclidean_cost,
    wfr_cost,
    wfr_from_distance,
)
from .measures import DiscreteMeasure, FrameImage, mean_pool, measure_from_image, new_measure, pixel_grid
from .solvers import (
    SolveReport,
    SolverConfig,
    TransportPlan,
    entropy,
    kl_divergence,
    marginal_residuals,
    ot_objective,
    rand_sink_ot,
    rand_sink_uot,
    sinkhorn_ot,
    sinkhorn_uot,
    spar_sink_ot,
    spar_sink_uot,
    uot_objective,
    wfr_distance,
)
from .sparsify import (
    SamplingPlan,
    SparseKernel,
    barycenter_probabilities,
    derived_seed,
    empty_lines,
    ot_probabilities,
    poisson_sparsify,
    shrink_with_uniform,
    spmv,
    spmv_t,
    uniform_probabilities,
    uot_probabilities,
)

__version__ = "0.1.0"
