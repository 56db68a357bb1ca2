from .api import (
    WalkState,
    gradient_estimate,
    naive_woi_estimate,
    transition_sample,
    wob_estimate,
    woi_estimate,
    woi_vr_estimate,
)
from .config import Diagnostics, EstimateReport, EstimatorConfig
from .engine import run_walk_estimator, stream_rng, walk_debug

__all__ = [
    "WalkState",
    "gradient_estimate",
    "naive_woi_estimate",
    "transition_sample",
    "wob_estimate",
    "woi_estimate",
    "woi_vr_estimate",
    "Diagnostics",
    "EstimateReport",
    "EstimatorConfig",
    "run_walk_estimator",
    "stream_rng",
    "walk_debug",
]
