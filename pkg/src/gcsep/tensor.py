"""Dense tensors with reverse-mode automatic differentiation.

The op set is deliberately closed: it is exactly what the separator, the
training objective and the layers need. Every op records a backward closure
on its output; ``Tensor.backward`` replays them in reverse topological order.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError

DEFAULT_DTYPE = np.float64

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Build no graph inside the block (inference)."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_array(data, dtype=None) -> np.ndarray:
    if dtype is None and isinstance(data, np.ndarray) and data.dtype.kind == "f":
        return data
    return np.asarray(data, dtype=dtype or DEFAULT_DTYPE)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = _as_array(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.op = "leaf"

    # -- introspection -------------------------------------------------
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
        return float(self.data.reshape(()))

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    def __len__(self):
        return self.shape[0]

    def zero_grad(self):
        self.grad = None

    def detach(self) -> Tensor:
        return Tensor(self.data)

    # -- autodiff ------------------------------------------------------
    def backward(self, grad=None):
        """Accumulate d(self)/d(x) into ``x.grad`` for every tracked ancestor."""
        if grad is None:
            if self.size != 1:
                raise ContractError(
                    f"backward() needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)
        else:
            grad = _as_array(grad, self.data.dtype)
            if grad.shape != self.shape:
                raise DimensionError(
                    f"seed gradient shape {grad.shape} != tensor shape {self.shape}")
        if not self.requires_grad:
            raise ContractError("loss is not connected to any tensor requiring grad")

        order = _topological_order(self)
        # id -> [array, owned]; owned arrays may be accumulated into in place
        pending: dict[int, list] = {id(self): [grad, False]}
        for node in reversed(order):
            entry = pending.pop(id(node), None)
            if entry is None:
                continue
            g = entry[0]
            node.grad = g if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                _accumulate(pending, parent, pg)

    # -- operator sugar ------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return slice_(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


class _SliceGrad:
    """Gradient that is zero outside ``data[index]``; avoids dense temporaries."""

    __slots__ = ("index", "value")

    def __init__(self, index, value):
        self.index = index
        self.value = value


def _accumulate(pending: dict, parent: Tensor, pg):
    key = id(parent)
    entry = pending.get(key)
    if isinstance(pg, _SliceGrad):
        if entry is None:
            full = np.zeros(parent.shape, dtype=pg.value.dtype)
            full[pg.index] = pg.value
            pending[key] = [full, True]
            return
        if not entry[1]:
            entry[0], entry[1] = entry[0].copy(), True
        entry[0][pg.index] += pg.value
        return
    if entry is None:
        pending[key] = [pg, False]
    elif entry[1]:
        entry[0] += pg
    else:
        entry[0], entry[1] = entry[0] + pg, True


def _topological_order(root: Tensor) -> list[Tensor]:
    # iterative DFS: LSTM graphs are thousands of nodes deep
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def zeros(shape, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype or DEFAULT_DTYPE), requires_grad)


def ones(shape, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype or DEFAULT_DTYPE), requires_grad)


def _lift(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    # python scalars take the partner's dtype so float32 graphs stay float32
    return Tensor(x, dtype=like.data.dtype if like is not None else None)


def _lift_pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, _lift(b, a)
    b = _lift(b)
    return _lift(a, b), b


def _make(data: np.ndarray, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    out.requires_grad = _grad_enabled and any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


# -- elementwise -----------------------------------------------------------

def _check_broadcast(a: Tensor, b: Tensor, op: str):
    """One operand must dominate: the other is a suffix of its shape, possibly
    with size-1 axes (as left by keepdims reductions). No mutual expansion."""
    sa, sb = a.shape, b.shape
    if sa == sb:
        return
    big, small = (sa, sb) if len(sa) >= len(sb) else (sb, sa)
    if not _dominates(big, small):
        big, small = small, big
        if len(big) < len(small) or not _dominates(big, small):
            raise DimensionError(f"{op}: shapes {sa} and {sb} are not broadcast-compatible")


def _dominates(big: tuple[int, ...], small: tuple[int, ...]) -> bool:
    tail = big[len(big) - len(small):]
    return all(s == t or s == 1 for s, t in zip(small, tail))


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _lift_pair(a, b)
    _check_broadcast(a, b, "add")

    def backward(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return _make(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = _lift_pair(a, b)
    _check_broadcast(a, b, "sub")

    def backward(g):
        return _reduce_to(g, a.shape), -_reduce_to(g, b.shape)

    return _make(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = _lift_pair(a, b)
    _check_broadcast(a, b, "mul")

    def backward(g):
        return _reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), backward, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = a.data.dtype.type(c)
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


def sigmoid(a: Tensor) -> Tensor:
    # tanh form is overflow-free
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0  # subgradient 0 at 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise ContractError("log of a non-positive value")
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def power(a: Tensor, p: float) -> Tensor:
    p = float(p)
    out = a.data ** p
    return _make(out, (a,), lambda g: (g * p * a.data ** (p - 1.0),), "power")


# -- linear algebra --------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast as in numpy."""
    a, b = _lift(a), _lift(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast_batch(ga, a.shape), _unbroadcast_batch(gb, b.shape)

    return _make(a.data @ b.data, (a, b), backward, "matmul")


def _unbroadcast_batch(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape[:-2]) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _frames(x: np.ndarray, width: int, stride: int) -> np.ndarray:
    """View ``x[..., L]`` as ``[..., L', width]`` windows at the given hop."""
    win = np.lib.stride_tricks.sliding_window_view(x, width, axis=-1)
    return win[..., ::stride, :]


def _overlap_add(frames: np.ndarray, stride: int, length: int) -> np.ndarray:
    """Inverse scatter of ``_frames``: sum ``[..., L', W]`` windows into ``[..., length]``."""
    n_frames, width = frames.shape[-2:]
    out = np.zeros(frames.shape[:-2] + (length,), dtype=frames.dtype)
    stop = (n_frames - 1) * stride + 1
    for w in range(width):
        out[..., w:w + stop:stride] += frames[..., w]
    return out


def conv1d(x: Tensor, kernels: Tensor, stride: int = 1) -> Tensor:
    """Valid 1-D correlation. ``x``: [..., C_in, L]; ``kernels``: [C_out, C_in, W]."""
    if stride < 1:
        raise ContractError("stride must be positive")
    c_out, c_in, width = kernels.shape
    if x.ndim < 2 or x.shape[-2] != c_in:
        raise DimensionError(f"conv1d: input {x.shape} vs kernels {kernels.shape}")
    length = x.shape[-1]
    if length < width:
        raise ContractError(f"conv1d: input length {length} shorter than kernel {width}")
    lead = x.shape[:-2]
    fr = _frames(x.data.reshape((-1, c_in, length)), width, stride)  # [B, C_in, L', W]
    out = np.einsum("bclw,ocw->bol", fr, kernels.data)

    def backward(g):
        g = g.reshape((-1,) + g.shape[-2:])
        gk = np.einsum("bol,bclw->ocw", g, fr)
        gfr = np.einsum("bol,ocw->bclw", g, kernels.data)
        return _overlap_add(gfr, stride, length).reshape(x.shape), gk

    out = out.reshape(lead + out.shape[-2:])

    return _make(out, (x, kernels), backward, "conv1d")


def conv1d_transpose(x: Tensor, kernels: Tensor, stride: int = 1) -> Tensor:
    """Transposed 1-D convolution. ``x``: [..., C_in, L]; ``kernels``: [C_in, C_out, W]."""
    if stride < 1:
        raise ContractError("stride must be positive")
    c_in, c_out, width = kernels.shape
    if x.ndim < 2 or x.shape[-2] != c_in:
        raise DimensionError(f"conv1d_transpose: input {x.shape} vs kernels {kernels.shape}")
    n = x.shape[-1]
    length = (n - 1) * stride + width
    lead = x.shape[:-2]
    xb = x.data.reshape((-1, c_in, n))
    fr = np.einsum("bcl,cow->bolw", xb, kernels.data)
    out = _overlap_add(fr, stride, length).reshape(lead + (c_out, length))

    def backward(g):
        gfr = _frames(g.reshape((-1, c_out, length)), width, stride)  # [B, C_out, L, W]
        gx = np.einsum("bolw,cow->bcl", gfr, kernels.data)
        gk = np.einsum("bcl,bolw->cow", xb, gfr)
        return gx.reshape(x.shape), gk

    return _make(out, (x, kernels), backward, "conv1d_transpose")


# -- reductions and shape ops ----------------------------------------------

def _norm_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    out = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise DimensionError(f"axis {ax} out of range for {ndim}-d tensor")
        out.append(ax % ndim)
    return tuple(out)


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(np.asarray(out), (a,), backward, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes]))
    return scale(sum_(a, axes, keepdims), 1.0 / count)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"cannot reshape {a.shape} to {shape}") from exc
    return _make(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = _norm_axes(axes, a.ndim)
    if sorted(axes) != list(range(a.ndim)):
        raise DimensionError(f"transpose: {axes} is not a permutation of {a.ndim} axes")
    inverse = np.argsort(axes)
    out = np.ascontiguousarray(a.data.transpose(axes))
    return _make(out, (a,), lambda g: (g.transpose(inverse),), "transpose")


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    axes = list(range(a.ndim))
    ax1, ax2 = ax1 % a.ndim, ax2 % a.ndim
    axes[ax1], axes[ax2] = axes[ax2], axes[ax1]
    return transpose(a, axes)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    if not tensors:
        raise ContractError("concat of an empty list")
    ndim = tensors[0].ndim
    axis = _norm_axes(axis, ndim)[0]
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != ndim or t.shape[:axis] + t.shape[axis + 1:] != ref[:axis] + ref[axis + 1:]:
            raise DimensionError(f"concat: extent mismatch {ref} vs {t.shape} on axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)
    out = np.concatenate([t.data for t in tensors], axis=axis)

    def backward(g):
        idx = [slice(None)] * g.ndim
        grads = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            idx[axis] = slice(lo, hi)
            grads.append(g[tuple(idx)])
        return grads

    return _make(out, tensors, backward, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    ndim = tensors[0].ndim + 1
    axis = axis % ndim
    expanded = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors]
    return concat(expanded, axis)


def slice_(a: Tensor, index) -> Tensor:
    """Basic (view) indexing: ints, slices, Ellipsis, None. No fancy indexing."""
    if not isinstance(index, tuple):
        index = (index,)
    for part in index:
        if not (part is None or part is Ellipsis or isinstance(part, (int, np.integer, slice))):
            raise ContractError(f"unsupported index component {part!r}")
    try:
        out = a.data[index]
    except IndexError as exc:
        raise DimensionError(str(exc)) from exc

    return _make(np.array(out), (a,), lambda g: (_SliceGrad(index, g),), "slice")


def pad_last(a: Tensor, before: int, after: int) -> Tensor:
    """Zero-pad the last axis (differentiable)."""
    width = [(0, 0)] * (a.ndim - 1) + [(before, after)]
    out = np.pad(a.data, width)
    stop = before + a.shape[-1]
    return _make(out, (a,), lambda g: (g[..., before:stop],), "pad")
