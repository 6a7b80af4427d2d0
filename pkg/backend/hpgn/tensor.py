"""
Dense tensor engine with reverse-mode differentiation.

Every differentiable primitive is a `Function` subclass with a numpy `forward`
and a `backward` returning one gradient per input. `Function.apply` wraps the
result in a `Tensor` that remembers its creator; `Tensor.backward` records the
reachable graph into a `ComputationTape` and replays it in reverse.

Arrays are float32 by default. `precision("float64")` switches the dtype of
newly created tensors, which is what the finite-difference checks run under.
"""
import logging
import threading
from contextlib import contextmanager
from functools import lru_cache
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .errors import ContractError, DimensionError, StaleTapeError
from .settings import get_settings

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence[Any]]


class _EngineState(threading.local):
    def __init__(self) -> None:
        self.dtype = np.dtype(get_settings().precision)
        self.grad_enabled = True


_state = _EngineState()


def default_dtype() -> np.dtype:
    return _state.dtype


@contextmanager
def precision(dtype: Union[str, np.dtype, type]) -> Iterator[None]:
    """Create new tensors with `dtype` (float32 or float64) inside the block."""
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ContractError(f"unsupported precision {dtype}; use float32 or float64")
    previous = _state.dtype
    _state.dtype = dtype
    try:
        yield
    finally:
        _state.dtype = previous


@contextmanager
def no_grad() -> Iterator[None]:
    previous = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum `grad` over the axes that were broadcast to reach its shape."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Function:
    """Base class of differentiable primitives."""

    def __init__(self, *inputs: "Tensor"):
        self.inputs = inputs
        self.released = False

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no forward")

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError(f"{type(self).__name__} has no backward")

    def release(self) -> None:
        # saved activations go; the graph edges stay so a replay can be detected
        for key in list(vars(self)):
            if key not in ("inputs", "released"):
                setattr(self, key, None)
        self.released = True

    @classmethod
    def apply(cls, *inputs: "Tensor", **kwargs: Any) -> "Tensor":
        fn = cls(*inputs)
        out = fn.forward(*(t.data for t in inputs), **kwargs)
        requires_grad = _state.grad_enabled and any(t.requires_grad for t in inputs)
        return Tensor(
            out,
            requires_grad=requires_grad,
            dtype=out.dtype,
            _creator=fn if requires_grad else None,
        )


class Tensor:
    """N-dimensional float array with optional gradient tracking."""

    __array_priority__ = 100

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        dtype: Optional[np.dtype] = None,
        name: Optional[str] = None,
        _creator: Optional[Function] = None,
    ):
        self.data = np.asarray(data, dtype=dtype or default_dtype())
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._creator = _creator

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._creator is None

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got {list(self.shape)}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> "ComputationTape":
        if self.size != 1 or self.ndim > 1:
            raise ContractError(f"backward needs a scalar loss of shape [] or [1], got {list(self.shape)}")
        if not self.requires_grad:
            raise ContractError("loss does not depend on any tensor that requires grad")
        tape = ComputationTape.record(self)
        tape.replay(np.ones_like(self.data))
        return tape

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={list(self.shape)}, dtype={self.dtype}, requires_grad={self.requires_grad}{label})"

    def __add__(self, other: Any) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: Any) -> "Tensor":
        return add(_lift(other, self), self)

    def __sub__(self, other: Any) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        return sub(_lift(other, self), self)

    def __mul__(self, other: Any) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: Any) -> "Tensor":
        return mul(_lift(other, self), self)

    def __neg__(self) -> "Tensor":
        return mul(self, -1.0)


class ComputationTape:
    """Tensors reachable from a root, inputs always before the outputs they feed."""

    def __init__(self, nodes: List[Tensor]):
        self.nodes = nodes

    @classmethod
    def record(cls, root: Tensor) -> "ComputationTape":
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node._creator is not None:
                for parent in node._creator.inputs:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return cls(order)

    def leaves(self) -> List[Tensor]:
        return [node for node in self.nodes if node.is_leaf]

    def replay(self, seed: np.ndarray) -> None:
        for node in self.nodes:
            if node._creator is not None and node._creator.released:
                raise StaleTapeError("backward already ran over this graph; recompute the forward pass")
        root = self.nodes[-1]
        pending: Dict[int, np.ndarray] = {id(root): seed}
        for node in reversed(self.nodes):
            grad = pending.pop(id(node), None)
            if grad is None:
                continue
            node.grad = np.array(grad, dtype=node.dtype) if node.grad is None else node.grad + grad
            fn = node._creator
            if fn is None:
                continue
            for parent, parent_grad in zip(fn.inputs, fn.backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                parent_grad = unbroadcast(parent_grad, parent.shape)
                key = id(parent)
                pending[key] = parent_grad if key not in pending else pending[key] + parent_grad
            fn.release()
        logger.debug("replayed tape over %d nodes", len(self.nodes))


def backward(loss: Tensor) -> List[Tensor]:
    """Populate gradients from a scalar loss; returns the leaf tensors reached."""
    return loss.backward().leaves()


def tensor(data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


def zeros(shape: Sequence[int]) -> Tensor:
    return Tensor(np.zeros(tuple(shape), dtype=default_dtype()))


def ones_like(x: Tensor) -> Tensor:
    return Tensor(np.ones_like(x.data), dtype=x.dtype)


def zeros_like(x: Tensor) -> Tensor:
    return Tensor(np.zeros_like(x.data), dtype=x.dtype)


def _lift(value: Any, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.dtype), dtype=like.dtype)


def _check_broadcast(a: Tensor, b: Tensor) -> None:
    if a.ndim == 0 or b.ndim == 0 or a.shape == b.shape:
        return
    compatible = a.ndim == b.ndim and all(x == y or x == 1 or y == 1 for x, y in zip(a.shape, b.shape))
    if not compatible:
        raise DimensionError(f"shapes {list(a.shape)} and {list(b.shape)} are not broadcastable")


# ---------------------------------------------------------------------------
# Elementwise primitives
# ---------------------------------------------------------------------------


class Add(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a + b

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return grad, grad


class Sub(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a - b

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return grad, -grad


class Mul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.a, self.b = a, b
        return a * b

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return grad * self.b, grad * self.a


class Sigmoid(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.out = expit(x)
        return self.out

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad * self.out * (1 - self.out),)


class Relu(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.mask = x > 0
        return np.where(self.mask, x, 0).astype(x.dtype)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad * self.mask,)


class LeakyRelu(Function):
    def forward(self, x: np.ndarray, alpha: float = 0.2) -> np.ndarray:
        self.mask = x > 0
        self.alpha = alpha
        return np.where(self.mask, x, alpha * x).astype(x.dtype)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (np.where(self.mask, grad, self.alpha * grad),)


class Clamp(Function):
    def forward(self, x: np.ndarray, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        self.inside = (x > low) & (x < high)
        return np.clip(x, low, high)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad * self.inside,)


class Softplus(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.x = x
        return np.logaddexp(0, x).astype(x.dtype)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad * expit(self.x),)


class Tanh(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.out = np.tanh(x)
        return self.out

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad * (1 - self.out**2),)


class Abs(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.sign = np.sign(x)
        return np.abs(x)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad * self.sign,)


def _binary(fn: type, a: Any, b: Any) -> Tensor:
    if not isinstance(a, Tensor):
        a = _lift(a, b)
    b = _lift(b, a)
    _check_broadcast(a, b)
    return fn.apply(a, b)


def add(a: Any, b: Any) -> Tensor:
    return _binary(Add, a, b)


def sub(a: Any, b: Any) -> Tensor:
    return _binary(Sub, a, b)


def mul(a: Any, b: Any) -> Tensor:
    return _binary(Mul, a, b)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


def relu(x: Tensor) -> Tensor:
    return Relu.apply(x)


def leaky_relu(x: Tensor, alpha: float = 0.2) -> Tensor:
    return LeakyRelu.apply(x, alpha=alpha)


def clamp(x: Tensor, low: float = 0.0, high: float = 1.0) -> Tensor:
    return Clamp.apply(x, low=low, high=high)


def softplus(x: Tensor) -> Tensor:
    return Softplus.apply(x)


def tanh(x: Tensor) -> Tensor:
    return Tanh.apply(x)


def abs_(x: Tensor) -> Tensor:
    return Abs.apply(x)


_UNARY = {
    "sigmoid": sigmoid,
    "relu": relu,
    "leaky_relu": leaky_relu,
    "clamp": clamp,
    "softplus": softplus,
    "tanh": tanh,
    "abs": abs_,
}
_BINARY = {"add": add, "sub": sub, "mul": mul}


def elementwise(op: str, a: Tensor, b: Optional[Any] = None, **kwargs: Any) -> Tensor:
    """Dispatch an elementwise op by name; binary ops take `b`, unary ops take keyword options."""
    if op in _BINARY:
        if b is None:
            raise ContractError(f"elementwise {op} needs a second operand")
        return _BINARY[op](a, b)
    if op in _UNARY:
        return _UNARY[op](a, **kwargs)
    raise ContractError(f"unknown elementwise op {op!r}")


# ---------------------------------------------------------------------------
# Reductions and shape plumbing
# ---------------------------------------------------------------------------


def _axes(axis: Union[None, int, Sequence[int]], ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


class Sum(Function):
    def forward(self, x: np.ndarray, axis: Any = None, keepdims: bool = False) -> np.ndarray:
        self.shape = x.shape
        self.axes = _axes(axis, x.ndim)
        self.keepdims = keepdims
        return np.asarray(x.sum(axis=self.axes, keepdims=keepdims))

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        if not self.keepdims:
            grad = np.expand_dims(grad, self.axes)
        return (np.broadcast_to(grad, self.shape),)


class Mean(Function):
    def forward(self, x: np.ndarray, axis: Any = None, keepdims: bool = False) -> np.ndarray:
        self.shape = x.shape
        self.axes = _axes(axis, x.ndim)
        self.keepdims = keepdims
        self.count = int(np.prod([x.shape[a] for a in self.axes]))
        return np.asarray(x.mean(axis=self.axes, keepdims=keepdims))

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        if not self.keepdims:
            grad = np.expand_dims(grad, self.axes)
        return (np.broadcast_to(grad / self.count, self.shape),)


class Reshape(Function):
    def forward(self, x: np.ndarray, shape: Tuple[int, ...] = ()) -> np.ndarray:
        self.shape = x.shape
        return x.reshape(shape)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad.reshape(self.shape),)


class BroadcastTo(Function):
    def forward(self, x: np.ndarray, shape: Tuple[int, ...] = ()) -> np.ndarray:
        self.shape = x.shape
        return np.ascontiguousarray(np.broadcast_to(x, shape))

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (unbroadcast(grad, self.shape),)


class Concat(Function):
    def forward(self, *arrays: np.ndarray, axis: int = 1) -> np.ndarray:
        self.axis = axis
        self.bounds = np.cumsum([a.shape[axis] for a in arrays])[:-1]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, ...]:
        return tuple(np.split(grad, self.bounds, axis=self.axis))


class Narrow(Function):
    def forward(self, x: np.ndarray, axis: int = 1, start: int = 0, stop: int = 0) -> np.ndarray:
        self.shape = x.shape
        self.index = tuple(slice(start, stop) if a == axis else slice(None) for a in range(x.ndim))
        return x[self.index]

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        full = np.zeros(self.shape, dtype=grad.dtype)
        full[self.index] = grad
        return (full,)


class Softmax(Function):
    def forward(self, x: np.ndarray, axis: int = 1) -> np.ndarray:
        self.axis = axis
        shifted = np.exp(x - x.max(axis=axis, keepdims=True))
        self.out = shifted / shifted.sum(axis=axis, keepdims=True)
        return self.out

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        dot = (grad * self.out).sum(axis=self.axis, keepdims=True)
        return (self.out * (grad - dot),)


def sum_(x: Tensor, axis: Any = None, keepdims: bool = False) -> Tensor:
    return Sum.apply(x, axis=axis, keepdims=keepdims)


def mean(x: Tensor, axis: Any = None, keepdims: bool = False) -> Tensor:
    return Mean.apply(x, axis=axis, keepdims=keepdims)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    try:
        np.empty(x.shape, dtype=np.bool_).reshape(shape)
    except ValueError:
        raise DimensionError(f"cannot reshape {list(x.shape)} to {list(shape)}")
    return Reshape.apply(x, shape=shape)


def broadcast_to(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    if x.ndim != len(shape) or any(s != t and s != 1 for s, t in zip(x.shape, shape)):
        raise DimensionError(f"cannot broadcast {list(x.shape)} to {list(shape)}")
    return BroadcastTo.apply(x, shape=shape)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    first = tensors[0]
    for other in tensors[1:]:
        same = other.ndim == first.ndim and all(
            s == t for a, (s, t) in enumerate(zip(first.shape, other.shape)) if a != axis % first.ndim
        )
        if not same:
            raise DimensionError(f"cannot concatenate {list(first.shape)} with {list(other.shape)} on axis {axis}")
    return Concat.apply(*tensors, axis=axis)


def narrow(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    if not 0 <= start < stop <= x.shape[axis]:
        raise DimensionError(f"slice [{start}:{stop}] out of range for axis {axis} of {list(x.shape)}")
    return Narrow.apply(x, axis=axis, start=start, stop=stop)


def softmax(x: Tensor, axis: int = 1) -> Tensor:
    return Softmax.apply(x, axis=axis)


# ---------------------------------------------------------------------------
# Convolution, pooling, resampling
# ---------------------------------------------------------------------------


class Conv2d(Function):
    """Grouped cross-correlation with zero padding."""

    def forward(self, x: np.ndarray, w: np.ndarray, stride: int = 1, padding: int = 0, groups: int = 1) -> np.ndarray:
        N, C, H, W = x.shape
        O, Cg, k, _ = w.shape
        self.x_shape, self.w = x.shape, w
        self.stride, self.padding, self.groups = stride, padding, groups
        self.xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
        windows = self._windows()
        Ho, Wo = windows.shape[2:4]
        if groups == 1:
            cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(N * Ho * Wo, C * k * k)
            out = cols @ w.reshape(O, -1).T
            return np.ascontiguousarray(out.reshape(N, Ho, Wo, O).transpose(0, 3, 1, 2))
        win = windows.reshape(N, groups, Cg, Ho, Wo, k, k)
        wg = w.reshape(groups, O // groups, Cg, k, k)
        return np.einsum("ngcyxij,gocij->ngoyx", win, wg).reshape(N, O, Ho, Wo)

    def _windows(self) -> np.ndarray:
        k, s = self.w.shape[-1], self.stride
        return sliding_window_view(self.xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        N, C, H, W = self.x_shape
        O, Cg, k, _ = self.w.shape
        G, s, p = self.groups, self.stride, self.padding
        windows = self._windows()
        Ho, Wo = windows.shape[2:4]
        if G == 1:
            cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(N * Ho * Wo, C * k * k)
            gm = grad.transpose(0, 2, 3, 1).reshape(N * Ho * Wo, O)
            grad_w = (gm.T @ cols).reshape(self.w.shape)
            grad_win = (gm @ self.w.reshape(O, -1)).reshape(N, Ho, Wo, C, k, k).transpose(0, 3, 1, 2, 4, 5)
        else:
            win = windows.reshape(N, G, Cg, Ho, Wo, k, k)
            wg = self.w.reshape(G, O // G, Cg, k, k)
            gg = grad.reshape(N, G, O // G, Ho, Wo)
            grad_w = np.einsum("ngoyx,ngcyxij->gocij", gg, win).reshape(self.w.shape)
            grad_win = np.einsum("ngoyx,gocij->ngcyxij", gg, wg).reshape(N, C, Ho, Wo, k, k)
        grad_xp = np.zeros(self.xp.shape, dtype=grad.dtype)
        for i in range(k):
            for j in range(k):
                grad_xp[:, :, i : i + s * (Ho - 1) + 1 : s, j : j + s * (Wo - 1) + 1 : s] += grad_win[..., i, j]
        return grad_xp[:, :, p : p + H, p : p + W], grad_w


def conv2d(
    input: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
) -> Tensor:
    if input.ndim != 4 or weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise DimensionError(f"conv2d expects N×C×H×W input and O×C×k×k weight, got {list(input.shape)} and {list(weight.shape)}")
    N, C, H, W = input.shape
    O, Cg, k, _ = weight.shape
    if C != Cg * groups or O % groups:
        raise DimensionError(
            f"conv2d channel mismatch: input {list(input.shape)} vs weight {list(weight.shape)} (groups={groups})"
        )
    if stride < 1 or padding < 0:
        raise ContractError(f"conv2d needs stride >= 1 and padding >= 0, got {stride} and {padding}")
    if k > H + 2 * padding or k > W + 2 * padding:
        raise DimensionError(f"kernel {k} larger than padded input {list(input.shape)} with padding {padding}")
    out = Conv2d.apply(input, weight, stride=stride, padding=padding, groups=groups)
    if bias is not None:
        if bias.shape != (O,):
            raise DimensionError(f"conv2d bias must have shape [{O}], got {list(bias.shape)}")
        out = add(out, reshape(bias, (1, O, 1, 1)))
    return out


class AvgPool2(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        *lead, H, W = x.shape
        return x.reshape(*lead, H // 2, 2, W // 2, 2).mean(axis=(-3, -1))

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (np.repeat(np.repeat(grad, 2, axis=-2), 2, axis=-1) * 0.25,)


@lru_cache(maxsize=64)
def _upsample_matrix(n: int, dtype: str) -> np.ndarray:
    # half-pixel centres, edge samples clamped to the border
    u = np.zeros((2 * n, n), dtype=dtype)
    for i in range(n):
        u[2 * i, i] += 0.75
        u[2 * i, max(i - 1, 0)] += 0.25
        u[2 * i + 1, i] += 0.75
        u[2 * i + 1, min(i + 1, n - 1)] += 0.25
    u.setflags(write=False)
    return u


class Upsample2(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        H, W = x.shape[-2:]
        self.uh = _upsample_matrix(H, x.dtype.str)
        self.uw = _upsample_matrix(W, x.dtype.str)
        return self.uh @ x @ self.uw.T

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (self.uh.T @ grad @ self.uw,)


def resample(input: Tensor, mode: str) -> Tensor:
    if input.ndim < 2:
        raise DimensionError(f"resample needs spatial axes, got {list(input.shape)}")
    if mode == "down2":
        H, W = input.shape[-2:]
        if H % 2 or W % 2:
            raise DimensionError(f"down2 needs even spatial extents, got {list(input.shape)}")
        return AvgPool2.apply(input)
    if mode == "up2":
        return Upsample2.apply(input)
    raise ContractError(f"unknown resample mode {mode!r}")


def down2(input: Tensor) -> Tensor:
    return resample(input, "down2")


def up2(input: Tensor) -> Tensor:
    return resample(input, "up2")


def global_avg_pool(input: Tensor) -> Tensor:
    if input.ndim != 4 or input.shape[2] < 1 or input.shape[3] < 1:
        raise DimensionError(f"global_avg_pool expects N×C×H×W, got {list(input.shape)}")
    return mean(input, axis=(2, 3), keepdims=True)
