import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from src.constants import DEFAULT_DTYPE
from src.exception import ShapeMismatchError

_node_ids = itertools.count()
_local = threading.local()

ForwardFn = Callable[..., np.ndarray]
BackwardFn = Callable[..., Tuple[Optional[np.ndarray], ...]]


def current_dtype() -> np.dtype:
    return getattr(_local, "dtype", np.dtype(DEFAULT_DTYPE))


@contextmanager
def precision(dtype: Union[str, np.dtype]) -> Iterator[None]:
    """
    Tensors created inside the block use ``dtype``. Thread-local, so independent
    graphs built on other threads keep their own precision.
    """
    previous = current_dtype()
    _local.dtype = np.dtype(dtype)
    try:
        yield
    finally:
        _local.dtype = previous


class Tensor:
    """
    A node of a define-by-run graph: an immutable dense array plus the recipe
    (op kind, inputs, forward and backward closures) that produced it.

    Node ids grow with creation order, so every input id precedes its consumer.
    """
    __slots__ = ("id", "op", "inputs", "value", "requires_grad", "_forward", "_backward")

    def __init__(self,
                 value,
                 requires_grad: bool = False,
                 *,
                 op: str = "leaf",
                 inputs: Sequence["Tensor"] = (),
                 forward: Optional[ForwardFn] = None,
                 backward: Optional[BackwardFn] = None):
        self.id: int = next(_node_ids)
        self.op = op
        self.inputs: Tuple["Tensor", ...] = tuple(inputs)
        array = np.array(value, dtype=current_dtype())
        array.setflags(write=False)
        self.value: np.ndarray = array
        self.requires_grad = bool(requires_grad)
        self._forward = forward
        self._backward = backward

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return int(self.value.size)

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view of the values."""
        return self.value.reshape(-1)

    @property
    def is_leaf(self) -> bool:
        return not self.inputs

    def numpy(self) -> np.ndarray:
        return self.value

    def item(self) -> float:
        if self.value.size != 1:
            raise ShapeMismatchError(f"item() on node {self.id} of shape {self.shape}",
                                     node=self.id, shape=list(self.shape))
        return float(self.value.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.value)

    def __repr__(self) -> str:
        return f"Tensor(id={self.id}, op={self.op}, shape={self.shape}, requires_grad={self.requires_grad})"

    __hash__ = object.__hash__


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def topological_order(outputs: Sequence[Tensor]) -> List[Tensor]:
    seen: Dict[int, Tensor] = {}
    stack = list(outputs)
    while stack:
        node = stack.pop()
        if node.id in seen:
            continue
        seen[node.id] = node
        stack.extend(node.inputs)
    return [seen[node_id] for node_id in sorted(seen)]


def evaluate(outputs: Sequence[Tensor]) -> List[np.ndarray]:
    """
    Replays the forward pass of the graph reaching ``outputs`` from its leaf values
    and returns the requested values. Replaying the same graph is bit-identical to
    the values computed when the graph was built.
    """
    values: Dict[int, np.ndarray] = {}
    for node in topological_order(outputs):
        if node.is_leaf:
            values[node.id] = node.value
            continue
        result = node._forward(*[values[parent.id] for parent in node.inputs])
        values[node.id] = np.asarray(result, dtype=node.value.dtype)
    return [values[node.id] for node in outputs]


class Gradients(Mapping[int, np.ndarray]):
    """Mapping from leaf node id to the gradient of the loss, same shape as the leaf."""

    def __init__(self, grads: Dict[int, np.ndarray]):
        self._grads = grads

    def __getitem__(self, key: Union[Tensor, int]) -> np.ndarray:
        node_id = key.id if isinstance(key, Tensor) else key
        return self._grads[node_id]

    def __iter__(self) -> Iterator[int]:
        return iter(self._grads)

    def __len__(self) -> int:
        return len(self._grads)

    def of(self, named: Mapping[str, Tensor]) -> Dict[str, np.ndarray]:
        return {name: self[leaf] for name, leaf in named.items()}

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(g)) for g in self._grads.values())


def gradients(loss: Tensor, wrt: Optional[Sequence[Tensor]] = None) -> Gradients:
    """
    Reverse-mode accumulation over the topological order of the graph behind ``loss``.

    Returns gradients for every reachable leaf that requires grad; leaves listed in
    ``wrt`` but not reached by the loss get a zero gradient.
    """
    if loss.size != 1:
        raise ShapeMismatchError(
            f"gradients() needs a scalar loss, node {loss.id} ({loss.op}) has shape {loss.shape}",
            node=loss.id, op=loss.op, shape=list(loss.shape),
        )

    order = topological_order([loss])
    grads: Dict[int, np.ndarray] = {loss.id: np.ones_like(loss.value)}

    for node in reversed(order):
        grad = grads.get(node.id)
        if grad is None or node.is_leaf or not node.requires_grad:
            continue
        parent_values = [parent.value for parent in node.inputs]
        parent_grads = node._backward(grad, node.value, *parent_values)
        for parent, parent_grad in zip(node.inputs, parent_grads):
            if parent_grad is None or not parent.requires_grad:
                continue
            parent_grad = np.asarray(parent_grad, dtype=parent.value.dtype)
            if parent_grad.shape != parent.shape:
                raise ShapeMismatchError(
                    f"{node.op} (node {node.id}) produced a gradient of shape {parent_grad.shape} "
                    f"for input node {parent.id} of shape {parent.shape}",
                    node=node.id, op=node.op, input=parent.id,
                    shapes=[list(parent_grad.shape), list(parent.shape)],
                )
            if parent.id in grads:
                grads[parent.id] = grads[parent.id] + parent_grad
            else:
                grads[parent.id] = parent_grad

    result = {node.id: grads[node.id] for node in order
              if node.is_leaf and node.requires_grad and node.id in grads}
    for leaf in wrt or ():
        if leaf.id not in result:
            result[leaf.id] = np.zeros_like(leaf.value)
    return Gradients(result)
