"""NB-Fi uplink capacity toolkit: analytic model, simulator and allocation search."""

from . import _backend
from .core import (
    PALETTE,
    Allocation,
    BitrateClass,
    ConstraintViolation,
    DomainError,
    Infeasible,
    NbfiError,
    NoiseModel,
    PropagationParams,
    Scenario,
    allocation_from_radii,
    single_bn_allocation,
    table1_palette,
)

__version__ = "0.1.0"
BACKEND = _backend.name

__all__ = [
    "PALETTE",
    "Allocation",
    "BitrateClass",
    "ConstraintViolation",
    "DomainError",
    "Infeasible",
    "NbfiError",
    "NoiseModel",
    "PropagationParams",
    "Scenario",
    "allocation_from_radii",
    "single_bn_allocation",
    "table1_palette",
    "BACKEND",
]
