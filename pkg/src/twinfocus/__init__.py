"""Simulation toolkit for wavefront shaping of photon pairs through scattering media."""

__version__ = "0.1.0"

from .state import (  # noqa: E402
    GaussianStateParams,
    ModeGrid,
    PhaseMask,
    TwoPhotonState,
    build_double_gaussian,
    build_mixed_separable,
    build_pure_separable,
    classical_field,
    schmidt_number,
)
from .medium import MediumSpec, ScatteringMatrix, make_medium  # noqa: E402
from .shape import System, TargetSpec, optimize_classical, optimize_nonclassical  # noqa: E402

__all__ = [
    "GaussianStateParams",
    "MediumSpec",
    "ModeGrid",
    "PhaseMask",
    "ScatteringMatrix",
    "System",
    "TargetSpec",
    "TwoPhotonState",
    "build_double_gaussian",
    "build_mixed_separable",
    "build_pure_separable",
    "classical_field",
    "make_medium",
    "optimize_classical",
    "optimize_nonclassical",
    "schmidt_number",
]
