"""Fractional porous medium laboratory: discrete fractional Laplacians, implicit
evolution, friendly giants and decay-rate checks."""

__version__ = "0.1.0"

from .spectral import (DomainSpec, EigenBasis, GreenKernel, GridFunction, OperatorSpec,  # noqa: E402
                       apply, apply_halfpower, apply_inverse, build_basis, build_rfl_basis,
                       build_rfl_matrix, build_sfl_basis, green_kernel)
from .evolution import EvolutionParams, EvolutionTrace, NonlinearitySpec, evolve, resolvent_solve  # noqa: E402

__all__ = [
    "DomainSpec", "EigenBasis", "GreenKernel", "GridFunction", "OperatorSpec", "apply",
    "apply_halfpower", "apply_inverse", "build_basis", "build_rfl_basis", "build_rfl_matrix",
    "build_sfl_basis", "green_kernel", "EvolutionParams", "EvolutionTrace", "NonlinearitySpec",
    "evolve", "resolvent_solve",
]
