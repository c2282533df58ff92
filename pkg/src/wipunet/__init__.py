"""Conservative image denoisers on a small deterministic autodiff engine."""

__version__ = "0.1.0"

from .engine import NumericError, ShapeError, Tape, Tensor
from .rng import Rng

__all__ = ["Tensor", "Tape", "Rng", "ShapeError", "NumericError", "__version__"]
