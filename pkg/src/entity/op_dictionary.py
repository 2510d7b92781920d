"""
The dictionary of candidate image operations a stylization policy composes.

Every operation works on images shaped (..., 3, H, W) with values in [0, 1] and
takes one normalized parameter ``mu01`` in [0, 1], mapped to the operation's
physical range. The smooth variant is differentiable in both pixels and
parameter; the hard variant is what inference and the baselines use.
"""
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable, Dict, Iterator, Optional, Tuple, Union

import numpy as np

from src.autodiff import Tensor, as_tensor, functional as F
from src.constants import BLUR_KERNEL_SIZE, CONTRAST_PIVOT, GAMMA_OFFSET, SOLARIZE_SHARPNESS
from src.exception import ParameterRangeError, ShapeMismatchError, UnknownOperationError

Kernel = Callable[[Tensor, Optional[Tensor]], Tensor]
ParamLike = Union[float, Tensor, np.ndarray, None]


class ParamScale(str, Enum):
    LINEAR = "linear"
    LOGARITHMIC = "logarithmic"


@dataclass(frozen=True)
class OpDescriptor:
    op_id: int
    name: str
    has_param: bool
    param_lo: float = 0.0
    param_hi: float = 1.0
    param_scale: ParamScale = ParamScale.LINEAR

    def __post_init__(self):
        if self.has_param:
            if not self.param_lo < self.param_hi:
                raise ParameterRangeError(f"{self.name}: param_lo must be below param_hi",
                                          op=self.name, lo=self.param_lo, hi=self.param_hi)
            if self.param_scale == ParamScale.LOGARITHMIC and self.param_lo <= 0:
                raise ParameterRangeError(f"{self.name}: a logarithmic range needs a positive lower bound",
                                          op=self.name, lo=self.param_lo)


@dataclass(frozen=True)
class OpRegistry:
    ops: Tuple[OpDescriptor, ...]

    def __post_init__(self):
        for position, op in enumerate(self.ops):
            if op.op_id != position:
                raise ParameterRangeError(f"op ids must run 0..N-1 in order; {op.name} has id {op.op_id}",
                                          op=op.name, op_id=op.op_id, position=position)
        names = [op.name for op in self.ops]
        if len(set(names)) != len(names):
            raise ParameterRangeError("op names must be unique within a registry", names=names)

    @property
    def N(self) -> int:
        return len(self.ops)

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(op.name for op in self.ops)

    def descriptor(self, key: Union[str, int]) -> OpDescriptor:
        if isinstance(key, str):
            for op in self.ops:
                if op.name == key:
                    return op
        elif 0 <= int(key) < len(self.ops):
            return self.ops[int(key)]
        raise UnknownOperationError(f"unknown operation {key!r}", op=key, known=list(self.names))

    def index(self, name: str) -> int:
        return self.descriptor(name).op_id

    def param_mask(self) -> np.ndarray:
        return np.array([op.has_param for op in self.ops])

    def extended(self, name: str, has_param: bool, param_lo: float = 0.0, param_hi: float = 1.0,
                 param_scale: ParamScale = ParamScale.LINEAR) -> "OpRegistry":
        """Returns a new registry with one more operation appended (its kernels must be registered)."""
        if name not in _SMOOTH_KERNELS:
            raise UnknownOperationError(f"no kernel registered for {name!r}", op=name)
        op = OpDescriptor(len(self.ops), name, has_param, param_lo, param_hi, param_scale)
        return OpRegistry(self.ops + (op,))

    def __len__(self) -> int:
        return len(self.ops)

    def __iter__(self) -> Iterator[OpDescriptor]:
        return iter(self.ops)


@lru_cache(maxsize=None)
def default_registry() -> OpRegistry:
    return OpRegistry((
        OpDescriptor(0, "identity", False),
        OpDescriptor(1, "invert", False),
        OpDescriptor(2, "grayscale", False),
        OpDescriptor(3, "brightness", True, -0.5, 0.5, ParamScale.LINEAR),
        OpDescriptor(4, "contrast", True, 0.25, 2.0, ParamScale.LOGARITHMIC),
        OpDescriptor(5, "gamma", True, 0.25, 4.0, ParamScale.LOGARITHMIC),
        OpDescriptor(6, "solarize", True, 0.0, 1.0, ParamScale.LINEAR),
        OpDescriptor(7, "gaussian_blur", True, 0.1, 2.0, ParamScale.LINEAR),
    ))


def _check_mu01(op: OpDescriptor, values: np.ndarray) -> None:
    if np.any(~np.isfinite(values)) or np.any(values < 0) or np.any(values > 1):
        raise ParameterRangeError(f"{op.name}: mu01 must lie in [0, 1]", op=op.name,
                                  mu01=np.asarray(values, dtype=np.float64).reshape(-1).tolist())


def param_map(op: OpDescriptor, mu01: Union[float, Tensor]) -> Union[float, Tensor]:
    """
    Maps a normalized parameter to the operation's physical range.

    Floats map to floats; Tensors map to differentiable Tensors.
    """
    if isinstance(mu01, Tensor):
        _check_mu01(op, mu01.value)
        if op.param_scale == ParamScale.LOGARITHMIC:
            return op.param_lo * F.exp(mu01 * math.log(op.param_hi / op.param_lo))
        return op.param_lo + mu01 * (op.param_hi - op.param_lo)

    _check_mu01(op, np.asarray(mu01, dtype=np.float64))
    mu01 = float(mu01)
    if op.param_scale == ParamScale.LOGARITHMIC:
        return op.param_lo * (op.param_hi / op.param_lo) ** mu01
    return op.param_lo + mu01 * (op.param_hi - op.param_lo)


def param_unmap(op: OpDescriptor, physical: float) -> float:
    """Inverse of param_map for floats; raises when ``physical`` is outside the range."""
    if not op.has_param:
        return 0.0
    if not op.param_lo <= physical <= op.param_hi:
        raise ParameterRangeError(f"{op.name}: {physical} outside [{op.param_lo}, {op.param_hi}]",
                                  op=op.name, value=physical, lo=op.param_lo, hi=op.param_hi)
    if op.param_scale == ParamScale.LOGARITHMIC:
        return math.log(physical / op.param_lo) / math.log(op.param_hi / op.param_lo)
    return (physical - op.param_lo) / (op.param_hi - op.param_lo)


def gaussian_kernel(sigma: float, size: int = BLUR_KERNEL_SIZE) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - size // 2
    d2 = offsets[:, None] ** 2 + offsets[None, :] ** 2
    kernel = np.exp(-d2 / (2 * sigma * sigma))
    return kernel / kernel.sum()


def _clamp01(x: Tensor) -> Tensor:
    return F.clamp(x, 0.0, 1.0)


def _identity(x: Tensor, param: Optional[Tensor]) -> Tensor:
    return x


def _invert(x: Tensor, param: Optional[Tensor]) -> Tensor:
    return _clamp01(1.0 - x)


def _grayscale(x: Tensor, param: Optional[Tensor]) -> Tensor:
    return _clamp01(F.channel_mean(x))


def _brightness(x: Tensor, shift: Tensor) -> Tensor:
    return _clamp01(x + shift)


def _contrast(x: Tensor, gain: Tensor) -> Tensor:
    return _clamp01(CONTRAST_PIVOT + gain * (x - CONTRAST_PIVOT))


def _gamma(x: Tensor, exponent: Tensor) -> Tensor:
    return _clamp01(F.power(x + GAMMA_OFFSET, exponent))


def _solarize_smooth(x: Tensor, threshold: Tensor) -> Tensor:
    s = F.sigmoid(SOLARIZE_SHARPNESS * (x - threshold))
    return _clamp01((1.0 - s) * x + s * (1.0 - x))


def _solarize_hard(x: Tensor, threshold: Tensor) -> Tensor:
    above = Tensor((x.value >= threshold.value).astype(x.value.dtype))
    return _clamp01(above * (1.0 - x) + (1.0 - above) * x)


def _gaussian_blur(x: Tensor, sigma: Tensor) -> Tensor:
    size = BLUR_KERNEL_SIZE
    offsets = np.arange(size) - size // 2
    d2 = Tensor(offsets[:, None] ** 2 + offsets[None, :] ** 2)
    weights = F.exp(d2 * -0.5 / (sigma * sigma))
    weights = weights / F.sum(weights)
    channels, height, width = x.shape[-3:]
    kernel = F.broadcast_to(F.reshape(weights, (1, 1, size, size)), (channels, 1, size, size))
    lead = x.shape[:-3]
    batch = F.reshape(x, (-1, channels, height, width))
    blurred = F.conv2d(batch, kernel, groups=channels)
    return _clamp01(F.reshape(blurred, lead + (channels, height, width)))


_SMOOTH_KERNELS: Dict[str, Kernel] = {
    "identity": _identity,
    "invert": _invert,
    "grayscale": _grayscale,
    "brightness": _brightness,
    "contrast": _contrast,
    "gamma": _gamma,
    "solarize": _solarize_smooth,
    "gaussian_blur": _gaussian_blur,
}

_HARD_KERNELS: Dict[str, Kernel] = dict(_SMOOTH_KERNELS, solarize=_solarize_hard)


def register_kernel(name: str, smooth: Kernel, hard: Optional[Kernel] = None) -> None:
    """Makes a new operation available to ``OpRegistry.extended``."""
    _SMOOTH_KERNELS[name] = smooth
    _HARD_KERNELS[name] = hard or smooth


def _apply(kernels: Dict[str, Kernel], op_id: int, x, mu01: ParamLike,
           registry: Optional[OpRegistry]) -> Tensor:
    registry = registry or default_registry()
    op = registry.descriptor(int(op_id))
    x = as_tensor(x)
    if x.ndim < 3 or x.shape[-3] != 3:
        raise ShapeMismatchError(f"{op.name}: expected an image shaped (..., 3, H, W), got {x.shape}",
                                 op=op.name, node=x.id, shapes=[list(x.shape)])
    param = None
    if op.has_param:
        if mu01 is None:
            raise ParameterRangeError(f"{op.name} needs a parameter", op=op.name)
        param = param_map(op, as_tensor(mu01))
    return kernels[op.name](x, param)


def apply_smooth(op_id: int, x, mu01: ParamLike = None, registry: Optional[OpRegistry] = None) -> Tensor:
    """Training variant: differentiable w.r.t. pixels and ``mu01``. ``mu01`` is ignored for no-param ops."""
    return _apply(_SMOOTH_KERNELS, op_id, x, mu01, registry)


def apply_hard(op_id: int, x, mu01: ParamLike = None, registry: Optional[OpRegistry] = None) -> Tensor:
    """Inference variant: identical to apply_smooth except for the exact solarize rule."""
    return _apply(_HARD_KERNELS, op_id, x, mu01, registry)
