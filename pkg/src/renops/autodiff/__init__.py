from . import ops
from .check import finite_difference_check
from .dual import (Dual, DualBundle, coordinate_derivatives,
                   directional_derivatives, lift_like, primal_value,
                   zeros_like_struct)
from .tensor import (AutodiffError, DomainError, ShapeMismatch, Tape,
                     TapeError, Tensor, active_tape, backward, concat,
                     gather_rows, interp_linear, matmul, no_grad, ones,
                     reset_tape, scatter_add_rows, segment_max, zeros)

__all__ = [
    "AutodiffError", "DomainError", "Dual", "DualBundle", "ShapeMismatch",
    "Tape", "TapeError", "Tensor", "active_tape", "backward", "concat",
    "coordinate_derivatives", "directional_derivatives",
    "finite_difference_check", "gather_rows", "interp_linear", "lift_like",
    "matmul", "no_grad", "ones", "ops", "primal_value", "reset_tape",
    "scatter_add_rows", "segment_max", "zeros", "zeros_like_struct",
]
