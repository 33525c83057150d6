"""Synthetic scenarios, error experiments, timing sweeps and frame-distance tools."""

from .cardio import DistanceMatrix, EdPrediction, ed_error, pairwise_wfr, predict_ed, wfr_row
from .experiments import (
    RmaeReport,
    barycenter_experiment,
    harness_config,
    loglog_slope,
    relative_error,
    rmae_experiment,
    timing_sweep,
    write_rows,
)
from .scenarios import (
    BlobSequence,
    Instance,
    ScenarioSpec,
    build_instance,
    generate_scenario,
    mixture_measures,
    moving_blob_sequence,
    s0,
    s_schedule,
)
