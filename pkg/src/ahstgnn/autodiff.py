"""Dense float64 tensors with reverse-mode differentiation.

Every op records its parents and a backward closure on the output tensor.
Calling :func:`backward` on a scalar orders the recorded graph topologically
(the tape) and replays the closures in reverse, accumulating into ``.grad``
of every leaf tensor that requires gradients.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError

LEAKY_SLOPE = 0.2

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable recording for the current thread (evaluation passes)."""
    prev = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    """A node in the differentiation graph.

    ``data`` is always a float64 ndarray. Leaves created by the user carry
    ``requires_grad``; their ``grad`` is populated (and accumulated) by
    :func:`backward`.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division is only supported by constants")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return reduce("sum", self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce("mean", self, axis, keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"cannot broadcast shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)

    def bw(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)

    def bw(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)

    def bw(g):
        ga = unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(a.data * b.data, (a, b), bw)


_ELEMENTWISE = {"add": add, "sub": sub, "mul": mul}


def elementwise(op: str, a, b) -> Tensor:
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    return fn(a, b)


# ---------------------------------------------------------------- activations


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    # tanh form cannot overflow
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),))


def tanh(x: Tensor) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _make(y, (x,), lambda g: (g * (1.0 - y * y),))


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    return _make(np.maximum(x.data, 0.0), (x,), lambda g: (g * pos,))


def leaky_relu(x: Tensor, alpha: float = LEAKY_SLOPE) -> Tensor:
    x = as_tensor(x)
    slope = np.where(x.data > 0, 1.0, alpha)
    return _make(x.data * slope, (x,), lambda g: (g * slope,))


def elu(x: Tensor, alpha: float = 1.0) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    neg = alpha * np.expm1(np.minimum(x.data, 0.0))
    y = np.where(pos, x.data, neg)
    return _make(y, (x,), lambda g: (np.where(pos, g, g * (neg + alpha)),))


def absolute(x: Tensor) -> Tensor:
    x = as_tensor(x)
    s = np.sign(x.data)
    return _make(np.abs(x.data), (x,), lambda g: (g * s,))


def exp(x: Tensor) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.data)
    return _make(y, (x,), lambda g: (g * y,))


_ACTIVATIONS = {
    "sigmoid": sigmoid,
    "tanh": tanh,
    "relu": relu,
    "leaky_relu": leaky_relu,
    "elu": elu,
}


def activation(kind: str, x: Tensor) -> Tensor:
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None
    return fn(x)


# ---------------------------------------------------------------- softmax


def _check_axis(x: Tensor, axis: int) -> int:
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"axis {axis} out of range for shape {x.shape}")
    return axis % x.ndim


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    axis = _check_axis(x, axis)
    e = np.exp(x.data - x.data.max(axis=axis, keepdims=True))
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _make(y, (x,), bw)


def masked_softmax(x: Tensor, mask: np.ndarray, axis: int = -1) -> Tensor:
    """Softmax restricted to ``mask``; masked-out entries are exactly zero.

    Every slice along ``axis`` must keep at least one entry.
    """
    x = as_tensor(x)
    axis = _check_axis(x, axis)
    mask = np.asarray(mask, dtype=bool)
    try:
        np.broadcast_shapes(mask.shape, x.shape)
    except ValueError:
        raise DimensionError(f"mask {mask.shape} does not broadcast to {x.shape}") from None
    aligned = mask.reshape((1,) * (x.ndim - mask.ndim) + mask.shape)
    if not aligned.any(axis=axis).all():
        raise ContractError("masked softmax over an empty neighbour set")
    # exp(-inf) is exactly 0, so masked entries come out as exact zeros
    z = x.data + np.where(mask, 0.0, -np.inf)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _make(y, (x,), bw)


# ---------------------------------------------------------------- linear algebra


def _mm_right2d(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # a[..., m, k] @ b[k, n] as one GEMM
    return (a.reshape(-1, a.shape[-1]) @ b).reshape(a.shape[:-1] + (b.shape[-1],))


def _mm_left2d(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # a[m, k] @ b[..., k, n] as one GEMM over the node axis
    lead = b.shape[:-2]
    k, n = b.shape[-2:]
    bt = np.moveaxis(b, -2, 0).reshape(k, -1)
    return np.moveaxis((a @ bt).reshape((a.shape[0],) + lead + (n,)), 0, -2)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product with numpy broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise DimensionError(f"matmul batch mismatch: {a.shape} @ {b.shape}") from None

    if b.ndim == 2:
        out = _mm_right2d(a.data, b.data)

        def bw(g):
            ga = _mm_right2d(g, b.data.T) if a.requires_grad else None
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1]) if b.requires_grad else None
            return ga, gb

    elif a.ndim == 2:
        out = _mm_left2d(a.data, b.data)

        def bw(g):
            ga = gb = None
            if a.requires_grad:
                gt = np.moveaxis(g, -2, 0).reshape(g.shape[-2], -1)
                bt = np.moveaxis(b.data, -2, 0).reshape(b.shape[-2], -1)
                ga = gt @ bt.T
            if b.requires_grad:
                gb = _mm_left2d(a.data.T, g)
            return ga, gb

    else:
        out = a.data @ b.data

        def bw(g):
            ga = unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
            gb = unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
            return ga, gb

    return _make(out, (a, b), bw)


def dilated_causal_conv1d(x: Tensor, kernel: Tensor, dilation: int = 1) -> Tensor:
    """Causal convolution along axis 1 of ``x[B, T, N, Cin]``.

    ``kernel[k, Cin, Cout]``; tap ``j`` looks back ``(k - 1 - j) * dilation``
    steps. The time axis is left-padded with zeros so the output keeps length T.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 3:
        raise DimensionError(f"conv expects x[B,T,N,C] and kernel[k,Cin,Cout], got {x.shape}, {kernel.shape}")
    k, cin, _ = kernel.shape
    if k < 1 or dilation < 1:
        raise ValueError("kernel width and dilation must be >= 1")
    if x.shape[-1] != cin:
        raise DimensionError(f"conv channel mismatch: input {x.shape} vs kernel {kernel.shape}")
    B, T, N, _ = x.shape
    cout = kernel.shape[2]
    lags = [(k - 1 - j) * dilation for j in range(k)]
    x2 = x.data.reshape(-1, cin)
    # the zero-lag tap sets the output; earlier taps are shifted forward in time
    out = (x2 @ kernel.data[k - 1]).reshape(B, T, N, cout)
    for j, lag in enumerate(lags[:-1]):
        if lag < T:
            out[:, lag:] += (x2 @ kernel.data[j]).reshape(B, T, N, cout)[:, : T - lag]

    def bw(g):
        g2 = g.reshape(-1, cout)
        gx = (g2 @ kernel.data[k - 1].T).reshape(x.shape) if x.requires_grad else None
        gk = np.zeros_like(kernel.data)
        if kernel.requires_grad:
            gk[k - 1] = x2.T @ g2
        for j, lag in enumerate(lags[:-1]):
            if lag >= T:
                continue
            shifted = np.zeros_like(g)
            shifted[:, : T - lag] = g[:, lag:]
            s2 = shifted.reshape(-1, cout)
            if x.requires_grad:
                gx += (s2 @ kernel.data[j].T).reshape(x.shape)
            if kernel.requires_grad:
                gk[j] = x2.T @ s2
        return gx, (gk if kernel.requires_grad else None)

    return _make(out, (x, kernel), bw)


# ---------------------------------------------------------------- shape ops


def _norm_axes(x: Tensor, axes) -> tuple[int, ...]:
    if axes is None:
        return tuple(range(x.ndim))
    if isinstance(axes, int):
        axes = (axes,)
    return tuple(_check_axis(x, a) for a in axes)


def reduce(kind: str, x: Tensor, axes=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    ax = _norm_axes(x, axes)
    if kind == "sum":
        scale = 1.0
    elif kind == "mean":
        count = int(np.prod([x.shape[a] for a in ax])) if ax else 1
        scale = 1.0 / count
    else:
        raise ValueError(f"unknown reduction {kind!r}")
    y = x.data.sum(axis=ax, keepdims=keepdims) * scale if ax else x.data * scale

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, ax)
        return (np.broadcast_to(g * scale, x.shape).copy(),)

    return _make(np.asarray(y, dtype=np.float64), (x,), bw)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return reduce("sum", x, axis, keepdims)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    return reduce("mean", x, axis, keepdims)


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat of nothing")
    axis = _check_axis(tensors[0], axis)
    try:
        y = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat mismatch {[t.shape for t in tensors]}: {exc}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(y, tuple(tensors), bw)


def reshape(x: Tensor, shape) -> Tensor:
    x = as_tensor(x)
    try:
        y = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"cannot reshape {x.shape} into {tuple(shape)}") from None
    return _make(y, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes=None) -> Tensor:
    x = as_tensor(x)
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    if sorted(a % x.ndim for a in axes) != list(range(x.ndim)):
        raise DimensionError(f"invalid permutation {axes} for shape {x.shape}")
    inv = np.argsort([a % x.ndim for a in axes])
    return _make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def swapaxes(x: Tensor, a1: int, a2: int) -> Tensor:
    x = as_tensor(x)
    axes = list(range(x.ndim))
    a1, a2 = _check_axis(x, a1), _check_axis(x, a2)
    axes[a1], axes[a2] = axes[a2], axes[a1]
    return transpose(x, axes)


def _is_basic_index(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (slice, int, type(Ellipsis))) or p is None for p in parts)


def getitem(x: Tensor, index) -> Tensor:
    x = as_tensor(x)
    y = x.data[index]

    def bw(g):
        gx = np.zeros_like(x.data)
        if _is_basic_index(index):
            gx[index] += g
        else:
            np.add.at(gx, index, g)
        return (gx,)

    return _make(np.array(y, dtype=np.float64), (x,), bw)


# ---------------------------------------------------------------- tape


def build_tape(root: Tensor) -> list[Tensor]:
    """Topological order of every recorded tensor that ``root`` depends on."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every reachable leaf.

    Gradients accumulate across calls; callers zero them between steps.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss has no recorded operations requiring gradients")
    tape = build_tape(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


# ---------------------------------------------------------------- checking


def numerical_gradient(fn: Callable[[], Tensor], x: Tensor, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar ``fn()`` with respect to ``x.data``."""
    grad = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    gflat = grad.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = fn().item()
            flat[i] = orig - eps
            lo = fn().item()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Norm-wise relative error ``|a - n| / max(|a|, |n|, floor)``."""
    diff = np.linalg.norm(analytic - numeric)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    return float(diff / scale)


def gradcheck(fn: Callable[[], Tensor], inputs: Sequence[Tensor], eps: float = 1e-5) -> dict[int, float]:
    """Compare backward against finite differences for each input.

    Returns the relative error per input position.
    """
    for t in inputs:
        t.grad = None
    backward(fn())
    errors = {}
    for i, t in enumerate(inputs):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        errors[i] = relative_error(analytic, numerical_gradient(fn, t, eps))
    return errors
