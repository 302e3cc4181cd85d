"""Compound matrices, their inversion, and harmonic-form numerics on grids."""

from .compound import (
    CompoundMatrix,
    apply_differential,
    cofactor_bridge,
    compound,
    compound_array,
    compound_differential,
    sylvester_exponent,
    wedge_extend,
)
from .errors import (
    AmbiguityError,
    AmbiguousDimensionError,
    ConvergenceError,
    DegreeError,
    MetricError,
    MinorforgeError,
    NotInImageError,
    SingularInputError,
)
from .multiindex import MultiIndex, basis, complement, complement_matrix, lex_rank, lex_unrank
from .reconstruct import (
    CompoundField,
    ReconstructionResult,
    SignHint,
    is_compound,
    reconstruct,
    reconstruct_field,
)

__version__ = "0.1.0"
