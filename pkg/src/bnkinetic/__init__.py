"""Deterministic velocity-grid solver and numerical inequality checks for the Boltzmann-Nordheim equation for bosons with hard potentials."""

from .collision_op import QuadratureSpec, q_apply, q_minus, q_plus, q_plus_carleman, weak_form
from .config import RunConfig, parse_config
from .errors import (
    BNKError,
    ConfigError,
    DegenerateDirectionError,
    FitFailureError,
    InputContractError,
    InvalidKernelError,
    SnapshotFormatError,
    StepRejectedError,
    UnsupportedRegimeError,
)
from .grid_state import Distribution, VelocityGrid, read_snapshot, write_snapshot
from .kernel_geometry import AngularKernel, CollisionTriple, KernelParams, sphere_quadrature

__all__ = [
    "AngularKernel", "BNKError", "CollisionTriple", "ConfigError", "DegenerateDirectionError", "Distribution",
    "FitFailureError", "InputContractError", "InvalidKernelError", "KernelParams", "QuadratureSpec", "RunConfig",
    "SnapshotFormatError", "StepRejectedError", "UnsupportedRegimeError", "VelocityGrid", "parse_config",
    "q_apply", "q_minus", "q_plus", "q_plus_carleman", "read_snapshot", "sphere_quadrature", "weak_form",
    "write_snapshot",
]
