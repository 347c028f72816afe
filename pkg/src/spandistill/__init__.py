"""Desk-scale knowledge distillation with saliency-weighted span alignment."""

from spandistill.tensor import Tensor, Tape, ShapeError, TapeError, finite_diff_check

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "TapeError",
    "finite_diff_check",
    "__version__",
]
