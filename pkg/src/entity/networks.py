"""
Small convolutional networks used as the learned critic and the task head.

Both share one body shape: three blocks of 3x3 conv, bias, leaky rectifier and
2x mean pooling, a spatial mean, then a two-layer fully connected head.
"""
import math
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from src.autodiff import Tensor, as_tensor, functional as F
from src.constants import CRITIC_CHANNELS, CRITIC_HIDDEN, WORKING_RESOLUTION
from src.exception import ShapeMismatchError

Leaves = Mapping[str, Tensor]


def pool_to(x: Tensor, size: int = WORKING_RESOLUTION) -> Tensor:
    """Mean-pools by 2 until the spatial side is at most ``size``."""
    while x.shape[-1] > size and x.shape[-1] % 2 == 0 and x.shape[-2] % 2 == 0:
        x = F.mean_pool2(x)
    return x


class ConvNet:
    def __init__(self,
                 out_features: int,
                 rng: np.random.Generator,
                 channels: Tuple[int, ...] = CRITIC_CHANNELS,
                 hidden: int = CRITIC_HIDDEN):
        self.out_features = out_features
        self.channels = tuple(channels)
        self.hidden = hidden
        self.params: Dict[str, np.ndarray] = {}
        for i, (c_in, c_out) in enumerate(zip(self.channels[:-1], self.channels[1:])):
            self.params[f"conv{i}_w"] = self._uniform(rng, (c_out, c_in, 3, 3), c_in * 9)
            self.params[f"conv{i}_b"] = self._uniform(rng, (c_out,), c_in * 9)
        self.params["fc0_w"] = self._uniform(rng, (self.channels[-1], hidden), self.channels[-1])
        self.params["fc0_b"] = self._uniform(rng, (hidden,), self.channels[-1])
        self.params["fc1_w"] = self._uniform(rng, (hidden, out_features), hidden)
        self.params["fc1_b"] = self._uniform(rng, (out_features,), hidden)

    @staticmethod
    def _uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape).astype(np.float32)

    @property
    def num_blocks(self) -> int:
        return len(self.channels) - 1

    def leaves(self, requires_grad: bool = True) -> Dict[str, Tensor]:
        return {name: Tensor(value, requires_grad=requires_grad) for name, value in self.params.items()}

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: value.copy() for name, value in self.params.items()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        for name, value in self.params.items():
            new = np.asarray(state[name], dtype=np.float32)
            if new.shape != value.shape:
                raise ShapeMismatchError(f"parameter {name}: expected {value.shape}, got {new.shape}",
                                         parameter=name, shapes=[list(value.shape), list(new.shape)])
            self.params[name] = new.copy()

    def forward(self, x, leaves: Optional[Leaves] = None) -> Tensor:
        """(B, 3, H, W) images to (B, out_features) outputs."""
        x = as_tensor(x)
        if x.ndim != 4 or x.shape[1] != self.channels[0]:
            raise ShapeMismatchError(f"expected (B, {self.channels[0]}, H, W), got {x.shape}",
                                     node=x.id, shapes=[list(x.shape)])
        p = leaves if leaves is not None else self.leaves(requires_grad=False)
        h = pool_to(x)
        for i in range(self.num_blocks):
            c_out = self.channels[i + 1]
            h = F.conv2d(h, p[f"conv{i}_w"]) + F.reshape(p[f"conv{i}_b"], (c_out, 1, 1))
            h = F.leaky_relu(h)
            if h.shape[-1] % 2 == 0 and h.shape[-2] % 2 == 0:
                h = F.mean_pool2(h)
        h = F.mean(h, axis=(2, 3))
        h = F.leaky_relu(h @ p["fc0_w"] + p["fc0_b"])
        return h @ p["fc1_w"] + p["fc1_b"]

    __call__ = forward


class CriticNet(ConvNet):
    """Scores each image with one real number; weights may be clipped into [-c, c]."""

    def __init__(self, rng: np.random.Generator, clip_value: Optional[float] = None, **kwargs):
        super().__init__(1, rng, **kwargs)
        self.clip_value = clip_value
        if clip_value is not None:
            self.clip()

    def clip(self) -> None:
        c = self.clip_value
        self.params = {name: np.clip(value, -c, c).astype(np.float32) for name, value in self.params.items()}

    def score(self, x, leaves: Optional[Leaves] = None) -> Tensor:
        out = self.forward(x, leaves)
        return F.reshape(out, (out.shape[0],))


class TaskHead(ConvNet):
    def __init__(self, num_classes: int, rng: np.random.Generator, **kwargs):
        super().__init__(num_classes, rng, **kwargs)

    @property
    def num_classes(self) -> int:
        return self.out_features
