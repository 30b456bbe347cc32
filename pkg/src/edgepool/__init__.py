"""Edge-preserving pooling layers (LGCA, WADCA) on a small numpy autodiff core."""

from .models import CAESpec, ClassifierSpec, build_model
from .pooling import PoolingLayer, PoolingVariant, PoolKind
from .tensor import Parameter, ShapeError, Tape, Tensor, backward

__version__ = "0.1.0"

__all__ = ["CAESpec", "ClassifierSpec", "build_model", "PoolingLayer", "PoolingVariant", "PoolKind",
           "Parameter", "ShapeError", "Tape", "Tensor", "backward"]
