"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations record themselves on the active :class:`Tape` (entered with a
``with`` block) when at least one input requires a gradient. Shapes must
match exactly; the only implicit expansion is the bias row in
:func:`add_bias`, which is part of that operation's contract.
"""

from __future__ import annotations

import contextvars
import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

_ids = itertools.count()
_active: contextvars.ContextVar[Optional["Tape"]] = contextvars.ContextVar("active_tape", default=None)


class ShapeError(ValueError):
    pass


class Tensor:
    """Immutable float64 array that may take part in a recorded computation."""

    __slots__ = ("data", "requires_grad", "id", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.array(data, dtype=np.float64)
        arr.setflags(write=False)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.id = next(_ids)
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # arithmetic sugar; all of these go through the recorded ops below
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class _Record:
    op: str
    inputs: tuple
    output: Tensor
    backward: Callable[[np.ndarray], tuple]


@dataclass
class Tape:
    """Ordered record of executed operations for one computation."""

    records: list = field(default_factory=list)

    def __enter__(self) -> "Tape":
        self._token = _active.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _active.reset(self._token)

    def __len__(self) -> int:
        return len(self.records)

    def backward(self, loss: Tensor, params: Optional[Iterable[Tensor]] = None) -> dict:
        return backward(self, loss, params)


def backward(tape: Tape, loss: Tensor, params: Optional[Iterable[Tensor]] = None) -> dict:
    """Propagate d(loss) back through ``tape``.

    Returns a mapping from tensor id to gradient array for every
    gradient-requiring tensor the loss reaches. Tensors listed in ``params``
    that the loss never reaches are included with zero gradients.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict = {loss.id: np.ones_like(loss.data)}
    for rec in reversed(tape.records):
        g = grads.get(rec.output.id)
        if g is None:
            continue
        for inp, gi in zip(rec.inputs, rec.backward(g)):
            if gi is None or not isinstance(inp, Tensor) or not inp.requires_grad:
                continue
            if inp.id in grads:
                grads[inp.id] = grads[inp.id] + gi
            else:
                grads[inp.id] = gi
    # drop intermediates, keep leaves and anything explicitly asked for
    produced = {rec.output.id for rec in tape.records}
    out = {k: v for k, v in grads.items() if k not in produced or k == loss.id}
    if params is not None:
        for p in params:
            if p.id not in out:
                out[p.id] = grads.get(p.id, np.zeros_like(p.data))
    return out


def _record(op: str, inputs: Sequence, data: np.ndarray, fn: Callable[[np.ndarray], tuple]) -> Tensor:
    needs = any(isinstance(t, Tensor) and t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    tape = _active.get()
    if needs and tape is not None:
        tape.records.append(_Record(op, tuple(inputs), out, fn))
    return out


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ (no broadcasting)")


# --- elementwise -----------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _record("add", (a, b), a.data + b.data, lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return _record("sub", (a, b), a.data - b.data, lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    x, y = a.data, b.data
    return _record("mul", (a, b), x * y, lambda g: (g * y, g * x))


def scale(a: Tensor, c: float) -> Tensor:
    return _record("scale", (a,), a.data * c, lambda g: (g * c,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    # np.maximum keeps NaN visible so divergence is not silently zeroed
    return _record("relu", (x,), np.maximum(x.data, 0.0), lambda g: (g * mask,))


def log(x: Tensor, floor: float = 0.0) -> Tensor:
    """Natural log of ``max(x, floor)``; no gradient flows through the floor."""
    live = x.data > floor
    safe = np.maximum(x.data, floor)
    return _record("log", (x,), np.log(safe), lambda g: (np.where(live, g / safe, 0.0),))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """``x + b`` with ``b`` a vector matching the last axis of ``x``."""
    if b.data.ndim != 1 or x.shape[-1:] != b.shape:
        raise ShapeError(f"add_bias: bias {b.shape} does not match trailing axis of {x.shape}")
    lead = tuple(range(x.data.ndim - 1))
    return _record("add_bias", (x, b), x.data + b.data, lambda g: (g, g.sum(axis=lead)))


# --- linear algebra --------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    x, y = a.data, b.data
    return _record("matmul", (a, b), x @ y, lambda g: (g @ y.T, x.T @ g))


def linear(x: Tensor, w: Tensor) -> Tensor:
    """Apply ``w`` (d x d') to the last axis of ``x`` (... x d)."""
    if w.data.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: cannot apply {w.shape} to {x.shape}")
    xd, wd = x.data, w.data

    def fn(g):
        return g @ wd.T, xd.reshape(-1, xd.shape[-1]).T @ g.reshape(-1, g.shape[-1])

    return _record("linear", (x, w), xd @ wd, fn)


def propagate(s: np.ndarray, h: Tensor) -> Tensor:
    """Graph aggregation ``S @ H_b`` for every batch element of ``h`` (b x N x d)."""
    s = np.asarray(s, dtype=np.float64)
    if h.data.ndim != 3 or s.shape != (h.shape[1], h.shape[1]):
        raise ShapeError(f"propagate: operator {s.shape} incompatible with node features {h.shape}")
    out = np.einsum("ij,bjd->bid", s, h.data)
    return _record("propagate", (h,), out, lambda g: (np.einsum("ji,bjd->bid", s, g),))


# --- shape -----------------------------------------------------------------

def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    old = x.shape
    return _record("reshape", (x,), x.data.reshape(shape), lambda g: (g.reshape(old),))


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not parts:
        raise ShapeError("concat: empty list of parts")
    nd = parts[0].data.ndim
    ax = axis % nd
    for p in parts[1:]:
        if p.data.ndim != nd or any(p.shape[i] != parts[0].shape[i] for i in range(nd) if i != ax):
            raise ShapeError(f"concat: part {p.shape} does not line up with {parts[0].shape} off axis {ax}")
    offsets = np.cumsum([p.shape[ax] for p in parts])[:-1]
    return _record("concat", tuple(parts), np.concatenate([p.data for p in parts], axis=ax),
                   lambda g: tuple(np.split(g, offsets, axis=ax)))


def concat_channelwise(parts: Sequence[Tensor]) -> Tensor:
    """Column-wise concatenation of n x d_i matrices in argument order."""
    for p in parts:
        if p.data.ndim != 2:
            raise ShapeError(f"concat_channelwise expects matrices, got {p.shape}")
    if parts and len({p.shape[0] for p in parts}) != 1:
        raise ShapeError(f"concat_channelwise: leading dimensions differ: {[p.shape for p in parts]}")
    return concat(parts, axis=1)


# --- reductions ------------------------------------------------------------

def sum(x: Tensor, axis: Optional[int] = None) -> Tensor:  # noqa: A001
    shape = x.shape

    def fn(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _record("sum", (x,), x.data.sum(axis=axis), fn)


def mean(x: Tensor, axis: Optional[int] = None) -> Tensor:
    count = x.size if axis is None else x.shape[axis]
    return scale(sum(x, axis), 1.0 / count)


def softmax(logits: Tensor) -> Tensor:
    """Row-wise softmax of an n x c matrix, max-shifted."""
    if logits.data.ndim != 2 or logits.shape[1] < 2:
        raise ShapeError(f"softmax expects n x c with c >= 2, got {logits.shape}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)
    return _record("softmax", (logits,), s, lambda g: (s * (g - (g * s).sum(axis=1, keepdims=True)),))


# --- temporal layers -------------------------------------------------------

def conv1d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Valid 1-D convolution over time.

    x: (n, T, f), w: (width, f, c), b: (c,) -> (n, T - width + 1, c).
    """
    if x.data.ndim != 3 or w.data.ndim != 3 or x.shape[2] != w.shape[1] or b.shape != (w.shape[2],):
        raise ShapeError(f"conv1d: input {x.shape}, kernel {w.shape}, bias {b.shape} do not fit")
    width = w.shape[0]
    if x.shape[1] < width:
        raise ShapeError(f"conv1d: sequence length {x.shape[1]} shorter than kernel width {width}")
    xd, wd = x.data, w.data
    # (n, T', f, width) -> (n, T', width, f)
    patches = np.lib.stride_tricks.sliding_window_view(xd, width, axis=1).transpose(0, 1, 3, 2)
    out = np.tensordot(patches, wd, axes=([2, 3], [0, 1])) + b.data
    steps = out.shape[1]

    def fn(g):
        gx = np.zeros_like(xd)
        for k in range(width):
            gx[:, k:k + steps, :] += g @ wd[k].T
        gw = np.tensordot(patches, g, axes=([0, 1], [0, 1]))
        return gx, gw, g.sum(axis=(0, 1))

    return _record("conv1d", (x, w, b), out, fn)


def maxpool1d(x: Tensor, size: int) -> Tensor:
    """Non-overlapping max pooling over time; a trailing remainder is dropped."""
    n, t, c = x.shape
    steps = t // size
    if steps < 1:
        raise ShapeError(f"maxpool1d: length {t} shorter than pool size {size}")
    windows = x.data[:, :steps * size, :].reshape(n, steps, size, c)
    arg = windows.argmax(axis=2)
    out = np.take_along_axis(windows, arg[:, :, None, :], axis=2)[:, :, 0, :]

    def fn(g):
        gw = np.zeros_like(windows)
        np.put_along_axis(gw, arg[:, :, None, :], g[:, :, None, :], axis=2)
        gx = np.zeros_like(x.data)
        gx[:, :steps * size, :] = gw.reshape(n, steps * size, c)
        return (gx,)

    return _record("maxpool1d", (x,), out, fn)
