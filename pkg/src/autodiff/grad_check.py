from typing import Callable, Sequence

import numpy as np

from src.autodiff.tensor import Tensor, gradients, precision
from src.constants import GRAD_CHECK_DENOMINATOR_FLOOR, GRAD_CHECK_DTYPE, GRAD_CHECK_EPSILON
from src.exception import ParameterRangeError, ShapeMismatchError


def _scalar(function: Callable[..., Tensor], arrays: Sequence[np.ndarray]) -> float:
    out = function(*[Tensor(a) for a in arrays])
    return float(np.asarray(out.value, dtype=np.float64).reshape(-1)[0])


def grad_check(function: Callable[..., Tensor],
               point: Sequence[np.ndarray],
               epsilon: float = GRAD_CHECK_EPSILON) -> float:
    """
    Compares reverse-mode gradients with central differences.

    :param function: builds a scalar-valued graph from one Tensor per input array.
    :param point: input arrays at which the gradient is checked.
    :param epsilon: finite-difference step, in (0, 1e-2].
    :return: max over all input coordinates of |analytic - numeric| / (|analytic| + 1e-8).

    The graph is rebuilt in 64-bit precision for every evaluation.
    """
    if not 0 < epsilon <= 1e-2:
        raise ParameterRangeError(f"grad_check epsilon must be in (0, 1e-2], got {epsilon}", epsilon=epsilon)

    with precision(GRAD_CHECK_DTYPE):
        base = [np.array(p, dtype=np.float64) for p in point]
        leaves = [Tensor(p, requires_grad=True) for p in base]
        loss = function(*leaves)
        if loss.size != 1:
            raise ShapeMismatchError(f"grad_check needs a scalar function, got shape {loss.shape}",
                                     shape=list(loss.shape))
        analytic = gradients(loss, wrt=leaves)

        worst = 0.0
        for i, leaf in enumerate(leaves):
            grad = analytic[leaf]
            for idx in np.ndindex(base[i].shape):
                shifted = list(base)
                probe = base[i].copy()
                probe[idx] += epsilon
                shifted[i] = probe
                f_plus = _scalar(function, shifted)
                probe = base[i].copy()
                probe[idx] -= epsilon
                shifted[i] = probe
                f_minus = _scalar(function, shifted)
                numeric = (f_plus - f_minus) / (2 * epsilon)
                error = abs(grad[idx] - numeric) / (abs(grad[idx]) + GRAD_CHECK_DENOMINATOR_FLOOR)
                worst = max(worst, float(error))
    return worst
