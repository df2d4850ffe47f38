"""Fredholm indices of Cauchy-Riemann operators on strips, cylinders and punctured surfaces."""

from .antilinear import (
    TAG_ORDER,
    ZERO_TYPES,
    build_deformation,
    concentration_profile,
    deformation_index,
    gaussian_element,
    kernel_overlap,
    local_model,
)
from .asymptotic_ops import (
    AsymptoticOperator,
    conjugate_operator,
    is_nondegenerate,
    make_operator,
    reference_operator,
    solve_asymptotic,
    spectrum,
)
from .cz_flow import cz_index, cz_index_direct, parity_shift, spectral_flow
from .numerics import AmbiguousRank, CRIndexError, DegenerateInput, Unstable, ValidationError, kernel_dims
from .strip_operator import CRProblem, discretize_cr, fredholm_index, glue, solve_translation_invariant
from .surface import SurfaceSpec, assemble_index, euler_characteristic, maslov_from_transitions

__version__ = "0.1.0"

__all__ = [
    "TAG_ORDER", "ZERO_TYPES", "build_deformation", "concentration_profile", "deformation_index",
    "gaussian_element", "kernel_overlap", "local_model",
    "AsymptoticOperator", "conjugate_operator", "is_nondegenerate", "make_operator", "reference_operator",
    "solve_asymptotic", "spectrum",
    "cz_index", "cz_index_direct", "parity_shift", "spectral_flow",
    "AmbiguousRank", "CRIndexError", "DegenerateInput", "Unstable", "ValidationError", "kernel_dims",
    "CRProblem", "discretize_cr", "fredholm_index", "glue", "solve_translation_invariant",
    "SurfaceSpec", "assemble_index", "euler_characteristic", "maslov_from_transitions",
]
