from src.autodiff.tensor import (Gradients, Tensor, as_tensor, current_dtype, evaluate,
                                 gradients, precision, topological_order)
from src.autodiff import functional
from src.autodiff.grad_check import grad_check

__all__ = [
    "Gradients",
    "Tensor",
    "as_tensor",
    "current_dtype",
    "evaluate",
    "functional",
    "grad_check",
    "gradients",
    "precision",
    "topological_order",
]
