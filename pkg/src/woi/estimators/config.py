"""Run configuration and result container shared by all estimator variants."""

import time
from dataclasses import dataclass, field

import numpy as np

__all__ = ["EstimatorConfig", "EstimateReport", "Diagnostics"]

VARIANTS = ("wob", "naive-woi", "woi", "woi-vr")
TRANSITIONS = ("uniform-area", "ray-cast")
# antithetic: coupled pair shares the schedule and the initial point, and each
# later step antithesizes the primary chain's draw.  antithetic-y0 also flips
# the initial point (antipode); antithetic-full flips the schedule draws too.
# identical duplicates the chain.
COUPLINGS = ("antithetic", "antithetic-y0", "antithetic-full", "identical")


@dataclass
class EstimatorConfig:
    """Knobs for one estimation run.

    ``walkers`` counts chains; the variance-reduced variant spends two chains
    per sample, so it draws walkers/2 coupled pairs.  ``schedules`` = None
    draws a fresh schedule for every walker (the default); an explicit value S
    reuses each schedule for walkers/S chains.
    """

    steps: int = 4
    walkers: int = 10_000
    schedules: int | None = None
    transition: str = "uniform-area"
    seed: int = 0
    variant: str = "woi"
    gradient: bool = False
    threads: int = 1
    coupling: str = "antithetic"
    block_size: int = 8192

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.walkers < 1:
            raise ValueError("walkers must be >= 1")
        if self.schedules is not None and self.schedules < 1:
            raise ValueError("schedules must be >= 1")
        if self.transition not in TRANSITIONS:
            raise ValueError(f"transition must be one of {TRANSITIONS}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.coupling not in COUPLINGS:
            raise ValueError(f"coupling must be one of {COUPLINGS}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass
class Diagnostics:
    """Counters surfaced in reports for reproducibility forensics."""

    ray_retries: int = 0
    aborted_walkers: int = 0
    resampled_walkers: int = 0
    cross_surface_fallbacks: int = 0
    near_surface_queries: int = 0

    def merge(self, other: "Diagnostics"):
        self.ray_retries += other.ray_retries
        self.aborted_walkers += other.aborted_walkers
        self.resampled_walkers += other.resampled_walkers
        self.cross_surface_fallbacks += other.cross_surface_fallbacks
        self.near_surface_queries += other.near_surface_queries

    def as_dict(self):
        return {
            "ray_retries": self.ray_retries,
            "aborted_walkers": self.aborted_walkers,
            "resampled_walkers": self.resampled_walkers,
            "cross_surface_fallbacks": self.cross_surface_fallbacks,
            "near_surface_queries": self.near_surface_queries,
        }


@dataclass
class EstimateReport:
    """Per-query estimates with calibrated uncertainty.

    ``variance`` is the sample variance across independent aggregation units
    (walkers, coupled pairs, or schedule means, whichever the run used) and
    ``w_effective`` counts those units, so the 95% half-width is
    1.96 * sqrt(variance / w_effective).
    """

    points: np.ndarray
    estimates: np.ndarray
    walkers: int
    schedules: int
    variance: np.ndarray
    w_effective: int
    wall_time: float = 0.0
    diagnostics: Diagnostics = field(default_factory=Diagnostics)
    near_surface_flags: np.ndarray | None = None

    @property
    def ci_halfwidth(self) -> np.ndarray:
        return 1.96 * np.sqrt(self.variance / max(self.w_effective, 1))

    @property
    def mean_variance(self) -> np.ndarray:
        """Estimated variance of the reported estimate itself."""
        return self.variance / max(self.w_effective, 1)

    @property
    def standard_error(self) -> np.ndarray:
        return np.sqrt(self.mean_variance)


class Stopwatch:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        return False
