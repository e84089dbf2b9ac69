"""Numerical laboratory for a two-parameter family of fourth-order kernels,
their deterministic evolutions, and the white-noise-driven SPDEs they solve,
in spatial dimensions one to three."""

__version__ = "0.1.0"

from .grids import Field, Grid, SpectralField
from .kernel import KernelSpec, QuadratureConfig, QuadratureError
from .noise import NoisePlan, NoiseRecord, white_noise_increment
from .spdesim import (
    DiffusionSpec,
    DriftSpec,
    SimConfig,
    SimulationDivergedError,
    simulate,
    step_exponential_euler,
    weak_form_residual,
)

__all__ = [
    "Field",
    "Grid",
    "SpectralField",
    "KernelSpec",
    "QuadratureConfig",
    "QuadratureError",
    "NoisePlan",
    "NoiseRecord",
    "white_noise_increment",
    "DriftSpec",
    "DiffusionSpec",
    "SimConfig",
    "SimulationDivergedError",
    "simulate",
    "step_exponential_euler",
    "weak_form_residual",
    "__version__",
]
