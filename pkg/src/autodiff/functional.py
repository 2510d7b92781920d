"""
Differentiable primitives of the tensor engine.

Each primitive builds one graph node from a pure forward function of its input
arrays and a backward function ``(grad, out, *inputs) -> input grads``.
"""
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.autodiff.tensor import Tensor, as_tensor, current_dtype
from src.constants import LEAKY_SLOPE
from src.exception import ShapeMismatchError

TensorLike = Union[Tensor, np.ndarray, float, int]
Axis = Optional[Union[int, Tuple[int, ...]]]


def _node(op: str, inputs: Sequence[Tensor], forward, backward) -> Tensor:
    value = forward(*[t.value for t in inputs])
    return Tensor(value,
                  requires_grad=any(t.requires_grad for t in inputs),
                  op=op, inputs=inputs, forward=forward, backward=backward)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatchError(
            f"{op}: cannot broadcast node {a.id} of shape {a.shape} with node {b.id} of shape {b.shape}",
            op=op, inputs=[a.id, b.id], shapes=[list(a.shape), list(b.shape)],
        ) from None


def _binary(op: str, a: TensorLike, b: TensorLike, forward, backward) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(op, a, b)
    return _node(op, (a, b), forward, backward)


# ----------------------------------------------------------------------------
# Elementwise arithmetic
# ----------------------------------------------------------------------------

def add(a: TensorLike, b: TensorLike) -> Tensor:
    return _binary("add", a, b,
                   lambda x, y: x + y,
                   lambda g, out, x, y: (_unbroadcast(g, x.shape), _unbroadcast(g, y.shape)))


def sub(a: TensorLike, b: TensorLike) -> Tensor:
    return _binary("sub", a, b,
                   lambda x, y: x - y,
                   lambda g, out, x, y: (_unbroadcast(g, x.shape), _unbroadcast(-g, y.shape)))


def mul(a: TensorLike, b: TensorLike) -> Tensor:
    return _binary("mul", a, b,
                   lambda x, y: x * y,
                   lambda g, out, x, y: (_unbroadcast(g * y, x.shape), _unbroadcast(g * x, y.shape)))


def div(a: TensorLike, b: TensorLike) -> Tensor:
    return _binary("div", a, b,
                   lambda x, y: x / y,
                   lambda g, out, x, y: (_unbroadcast(g / y, x.shape),
                                         _unbroadcast(-g * x / (y * y), y.shape)))


def neg(a: TensorLike) -> Tensor:
    return _node("neg", (as_tensor(a),), lambda x: -x, lambda g, out, x: (-g,))


def power(base: TensorLike, exponent: TensorLike) -> Tensor:
    """Elementwise ``base ** exponent`` for a positive base; differentiable in both."""
    def backward(g, out, x, y):
        safe_log = np.log(np.where(x > 0, x, 1))
        return (_unbroadcast(g * y * np.power(x, y - 1), x.shape),
                _unbroadcast(g * out * safe_log, y.shape))

    return _binary("power", base, exponent, np.power, backward)


def exp(a: TensorLike) -> Tensor:
    return _node("exp", (as_tensor(a),), np.exp, lambda g, out, x: (g * out,))


def log(a: TensorLike) -> Tensor:
    return _node("log", (as_tensor(a),), np.log, lambda g, out, x: (g / x,))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1 / (1 + e), e / (1 + e))


def sigmoid(a: TensorLike) -> Tensor:
    return _node("sigmoid", (as_tensor(a),), _sigmoid, lambda g, out, x: (g * out * (1 - out),))


def clamp(a: TensorLike, lo: float, hi: float) -> Tensor:
    """Identity gradient inside [lo, hi] (boundaries included), zero outside."""
    return _node("clamp", (as_tensor(a),),
                 lambda x: np.clip(x, lo, hi),
                 lambda g, out, x: (g * ((x >= lo) & (x <= hi)),))


def absolute(a: TensorLike) -> Tensor:
    return _node("abs", (as_tensor(a),), np.abs, lambda g, out, x: (g * np.sign(x),))


def leaky_relu(a: TensorLike, slope: float = LEAKY_SLOPE) -> Tensor:
    return _node("leaky_relu", (as_tensor(a),),
                 lambda x: np.where(x > 0, x, slope * x),
                 lambda g, out, x: (g * np.where(x > 0, 1, slope),))


# ----------------------------------------------------------------------------
# Reductions and shape manipulation
# ----------------------------------------------------------------------------

def _expand_reduced(g: np.ndarray, shape: Tuple[int, ...], axis: Axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape).copy()


def sum(a: TensorLike, axis: Axis = None, keepdims: bool = False) -> Tensor:
    return _node("sum", (as_tensor(a),),
                 lambda x: np.sum(x, axis=axis, keepdims=keepdims),
                 lambda g, out, x: (_expand_reduced(g, x.shape, axis, keepdims),))


def mean(a: TensorLike, axis: Axis = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return _node("mean", (a,),
                 lambda x: np.mean(x, axis=axis, keepdims=keepdims),
                 lambda g, out, x: (_expand_reduced(g, x.shape, axis, keepdims) / count,))


def reshape(a: TensorLike, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    try:
        target = np.empty(a.shape, dtype=np.int8).reshape(tuple(shape)).shape
    except ValueError:
        raise ShapeMismatchError(f"reshape: node {a.id} of shape {a.shape} cannot become {tuple(shape)}",
                                 op="reshape", inputs=[a.id], shapes=[list(a.shape), list(shape)]) from None
    return _node("reshape", (a,),
                 lambda x: x.reshape(target),
                 lambda g, out, x: (g.reshape(x.shape),))


def broadcast_to(a: TensorLike, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    try:
        np.broadcast_shapes(a.shape, shape)
    except ValueError:
        raise ShapeMismatchError(f"broadcast_to: node {a.id} of shape {a.shape} cannot become {shape}",
                                 op="broadcast_to", inputs=[a.id], shapes=[list(a.shape), list(shape)]) from None
    return _node("broadcast_to", (a,),
                 lambda x: np.broadcast_to(x, shape).copy(),
                 lambda g, out, x: (_unbroadcast(g, x.shape),))


def getitem(a: TensorLike, index) -> Tensor:
    def backward(g, out, x):
        grad = np.zeros_like(x)
        np.add.at(grad, index, g)
        return (grad,)

    return _node("getitem", (as_tensor(a),), lambda x: np.array(x[index]), backward)


def matmul(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul: node {a.id} {a.shape} @ node {b.id} {b.shape}",
                                 op="matmul", inputs=[a.id, b.id], shapes=[list(a.shape), list(b.shape)])
    return _node("matmul", (a, b),
                 lambda x, y: x @ y,
                 lambda g, out, x, y: (g @ y.T, x.T @ g))


def _softmax(x: np.ndarray) -> np.ndarray:
    shifted = np.exp(x - np.max(x, axis=-1, keepdims=True))
    return shifted / np.sum(shifted, axis=-1, keepdims=True)


def softmax(a: TensorLike) -> Tensor:
    """Softmax along the last axis."""
    return _node("softmax", (as_tensor(a),), _softmax,
                 lambda g, out, x: (out * (g - np.sum(g * out, axis=-1, keepdims=True)),))


def log_softmax(a: TensorLike) -> Tensor:
    def forward(x):
        shifted = x - np.max(x, axis=-1, keepdims=True)
        return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))

    return _node("log_softmax", (as_tensor(a),), forward,
                 lambda g, out, x: (g - np.exp(out) * np.sum(g, axis=-1, keepdims=True),))


def channel_mean_array(x: np.ndarray) -> np.ndarray:
    """Per-pixel mean over the channel axis (-3), replicated to every channel."""
    m = x.astype(np.float64).mean(axis=-3, keepdims=True).astype(x.dtype)
    return np.broadcast_to(m, x.shape).copy()


def channel_mean(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    if a.ndim < 3:
        raise ShapeMismatchError(f"channel_mean: node {a.id} needs (..., C, H, W), got {a.shape}",
                                 op="channel_mean", inputs=[a.id], shapes=[list(a.shape)])
    channels = a.shape[-3]
    return _node("channel_mean", (a,), channel_mean_array,
                 lambda g, out, x: (np.broadcast_to(g.sum(axis=-3, keepdims=True) / channels, x.shape).copy(),))


def mean_pool2(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    h, w = a.shape[-2:]
    if h % 2 or w % 2:
        raise ShapeMismatchError(f"mean_pool2: node {a.id} needs even spatial dims, got {a.shape}",
                                 op="mean_pool2", inputs=[a.id], shapes=[list(a.shape)])
    lead = a.shape[:-2]

    def forward(x):
        return x.reshape(lead + (h // 2, 2, w // 2, 2)).mean(axis=(-3, -1))

    def backward(g, out, x):
        return (np.repeat(np.repeat(g, 2, axis=-2), 2, axis=-1) / 4,)

    return _node("mean_pool2", (a,), forward, backward)


def sort(a: TensorLike, axis: int = 0) -> Tensor:
    """Sort along ``axis``; the backward pass routes gradients through the same permutation."""
    def forward(x):
        return np.take_along_axis(x, np.argsort(x, axis=axis, kind="stable"), axis=axis)

    def backward(g, out, x):
        grad = np.zeros_like(x)
        np.put_along_axis(grad, np.argsort(x, axis=axis, kind="stable"), g, axis=axis)
        return (grad,)

    return _node("sort", (as_tensor(a),), forward, backward)


# ----------------------------------------------------------------------------
# Convolution
# ----------------------------------------------------------------------------

def mirror_indices(n: int, pad: int) -> np.ndarray:
    """Edge-inclusive mirror indices: ``cba|abcd|dcb``."""
    idx = np.arange(-pad, n + pad)
    idx = np.where(idx < 0, -idx - 1, idx)
    return np.where(idx >= n, 2 * n - idx - 1, idx)


def _mirror_matrix(n: int, pad: int, dtype) -> np.ndarray:
    return np.eye(n, dtype=dtype)[mirror_indices(n, pad)]


def conv2d(x: TensorLike, weight: TensorLike, groups: int = 1) -> Tensor:
    """
    Stride-1 'same' convolution with reflect padding.

    x: (B, C, H, W); weight: (O, C // groups, k, k) with odd k. ``groups`` is 1
    (dense) or C (depthwise, O == C).
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeMismatchError(f"conv2d: node {x.id} {x.shape} with kernel node {weight.id} {weight.shape}",
                                 op="conv2d", inputs=[x.id, weight.id], shapes=[list(x.shape), list(weight.shape)])
    batch, channels, height, width = x.shape
    out_channels, in_per_group, k, k2 = weight.shape
    depthwise = groups == channels and groups > 1
    valid = (k == k2 and k % 2 == 1
             and (k // 2) <= min(height, width)
             and ((groups == 1 and in_per_group == channels)
                  or (depthwise and in_per_group == 1 and out_channels == channels)))
    if not valid:
        raise ShapeMismatchError(
            f"conv2d: input node {x.id} {x.shape} incompatible with kernel node {weight.id} {weight.shape} "
            f"(groups={groups})",
            op="conv2d", inputs=[x.id, weight.id], shapes=[list(x.shape), list(weight.shape)],
        )
    pad = k // 2
    dtype = current_dtype()
    rows = _mirror_matrix(height, pad, dtype)
    cols = _mirror_matrix(width, pad, dtype)

    def windows(xv):
        padded = rows @ xv @ cols.T
        return sliding_window_view(padded, (k, k), axis=(-2, -1))

    def forward(xv, wv):
        if depthwise:
            return np.einsum("bchwij,cij->bchw", windows(xv), wv[:, 0], optimize=True)
        return np.einsum("bchwij,ocij->bohw", windows(xv), wv, optimize=True)

    def backward(g, out, xv, wv):
        win = windows(xv)
        if depthwise:
            grad_w = np.einsum("bchwij,bchw->cij", win, g, optimize=True)[:, None]
            grad_win = np.einsum("bchw,cij->bchwij", g, wv[:, 0], optimize=True)
        else:
            grad_w = np.einsum("bchwij,bohw->ocij", win, g, optimize=True)
            grad_win = np.einsum("bohw,ocij->bchwij", g, wv, optimize=True)
        grad_padded = np.zeros(xv.shape[:2] + (height + 2 * pad, width + 2 * pad), dtype=xv.dtype)
        for i in range(k):
            for j in range(k):
                grad_padded[..., i:i + height, j:j + width] += grad_win[..., i, j]
        return rows.T @ grad_padded @ cols, grad_w

    return _node("conv2d", (x, weight), forward, backward)


# ----------------------------------------------------------------------------
# Operator overloads
# ----------------------------------------------------------------------------

Tensor.__add__ = lambda self, other: add(self, other)
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__sub__ = lambda self, other: sub(self, other)
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = lambda self, other: mul(self, other)
Tensor.__rmul__ = lambda self, other: mul(other, self)
Tensor.__truediv__ = lambda self, other: div(self, other)
Tensor.__rtruediv__ = lambda self, other: div(other, self)
Tensor.__neg__ = lambda self: neg(self)
Tensor.__pow__ = lambda self, other: power(self, other)
Tensor.__rpow__ = lambda self, other: power(other, self)
Tensor.__matmul__ = lambda self, other: matmul(self, other)
Tensor.__getitem__ = lambda self, index: getitem(self, index)
