"""Small dense-tensor kernel: autodiff over numpy, Adam, gradient checking."""

from . import tensor as ops
from .gradcheck import GradCheckReport, grad_check, relative_error
from .optim import DivergenceError, OptimizerState, adam_step
from .tensor import GraphError, Parameter, ShapeError, Tensor, as_tensor, backward, no_grad

__all__ = [
    "ops",
    "Tensor",
    "Parameter",
    "as_tensor",
    "backward",
    "no_grad",
    "GraphError",
    "ShapeError",
    "DivergenceError",
    "OptimizerState",
    "adam_step",
    "GradCheckReport",
    "grad_check",
    "relative_error",
]
