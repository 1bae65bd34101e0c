"""Fourth-order vector compact scheme for the n-dimensional wave equation."""

from .grid import Axis, Field, Grid, MeshError, TimeMesh, make_axis, make_graded_axis, make_uniform_axis
from .scheme import (
    DivergenceError,
    Problem,
    RunReport,
    SchemeConfig,
    SchemeState,
    StabilityRejected,
    run,
)
from .stability import StabilityCertificate, certify, sufficient_dt
from .stencil_ops import ConfigError, MeshQualityError

__all__ = [
    "Axis",
    "ConfigError",
    "DivergenceError",
    "Field",
    "Grid",
    "MeshError",
    "MeshQualityError",
    "Problem",
    "RunReport",
    "SchemeConfig",
    "SchemeState",
    "StabilityCertificate",
    "StabilityRejected",
    "TimeMesh",
    "certify",
    "make_axis",
    "make_graded_axis",
    "make_uniform_axis",
    "run",
    "sufficient_dt",
]
