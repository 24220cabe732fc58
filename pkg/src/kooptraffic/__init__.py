"""Koopman-mode analysis of signalized traffic data.

Linear operators fitted by dynamic mode decomposition (DMD) on flow and
queue series reveal signal timing, flag sustained queue growth, replay
queues under other schedules and expose coupling between intersections.
A small fixed-time intersection simulator supplies ground truth.
"""

from .dmd import (DmdcModel, DmdModel, SnapshotMatrix, fit_dmd, fit_dmdc, hankel_augment,
                  multi_step_reconstruct, spectral_radius, truncated_svd)
from .errors import (DimensionError, InsufficientDataError, KoopTrafficError, NoEstimateError,
                     NoOscillationError, RankZeroError, StructureUnavailableError,
                     ValidationError)
from .timing import TimingPlan, estimate_green_splits, sliding_window_estimate
from .stability import counter_to_duration, rolling_instability
from .control import PhaseSchedule, synth_phase_schedule, what_if_reconstruct
from .netstruct import compare_prediction_mse, detect_coupling, extract_companion_blocks, fit_var
from .simgen import IntersectionConfig, simulate_corridor, simulate_intersection

__version__ = "0.1.0"

__all__ = [
    "DmdModel", "DmdcModel", "SnapshotMatrix", "fit_dmd", "fit_dmdc", "hankel_augment",
    "multi_step_reconstruct", "spectral_radius", "truncated_svd",
    "KoopTrafficError", "ValidationError", "DimensionError", "RankZeroError",
    "StructureUnavailableError", "NoOscillationError", "InsufficientDataError", "NoEstimateError",
    "TimingPlan", "estimate_green_splits", "sliding_window_estimate",
    "counter_to_duration", "rolling_instability",
    "PhaseSchedule", "synth_phase_schedule", "what_if_reconstruct",
    "compare_prediction_mse", "detect_coupling", "extract_companion_blocks", "fit_var",
    "IntersectionConfig", "simulate_corridor", "simulate_intersection",
]
