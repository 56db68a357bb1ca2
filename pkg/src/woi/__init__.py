"""Grid-free Monte Carlo solver for Neumann elliptic interface problems."""

from . import densities, estimators, geometry, kernels, problems
from .densities import InterfaceProblem, build_coefficients, check_compatibility
from .estimators import (
    EstimateReport,
    EstimatorConfig,
    gradient_estimate,
    naive_woi_estimate,
    wob_estimate,
    woi_estimate,
    woi_vr_estimate,
)
from .geometry import DomainTree, Ellipsoid, Sphere, StarCurve2D, load_domain_json
from .problems import Benchmark, benchmark_by_name, l2_error

__version__ = "0.1.0"

__all__ = [
    "densities",
    "estimators",
    "geometry",
    "kernels",
    "problems",
    "InterfaceProblem",
    "build_coefficients",
    "check_compatibility",
    "EstimateReport",
    "EstimatorConfig",
    "gradient_estimate",
    "naive_woi_estimate",
    "wob_estimate",
    "woi_estimate",
    "woi_vr_estimate",
    "DomainTree",
    "Ellipsoid",
    "Sphere",
    "StarCurve2D",
    "load_domain_json",
    "Benchmark",
    "benchmark_by_name",
    "l2_error",
]
