"""Dense float64 tensors with a define-by-run reverse-mode gradient tape.

Ops execute eagerly on numpy arrays and append their backward rules to the
active tape in execution order, which is already a topological order. One
backward pass per tape; parameters accumulate gradients with += until
explicitly cleared. Every forward result is checked finite.

Broadcasting is deliberately restricted to the two cases the networks need:
scalar-with-tensor and same-shape. Row-vector addition has its own op.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import ContractError, DomainError, NumericError, ShapeError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr, "tensor")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """A grad-free copy sharing no graph history."""
        return Tensor(self.data.copy(), requires_grad=False)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class _Node:
    __slots__ = ("inputs", "output", "backward_fn")

    def __init__(self, inputs, output, backward_fn):
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of primitive ops; context manager scopes it as active."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self.consumed = False

    def reset(self) -> None:
        self.nodes.clear()
        self.consumed = False

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _TAPES.pop()
        assert popped is self


_TAPES: list[Tape] = [Tape()]
_GRAD_DISABLED = 0


def active_tape() -> Tape:
    return _TAPES[-1]


def reset_tape() -> None:
    """Clear the active tape (mainly for module-scope use in tests)."""
    _TAPES[-1].reset()


@contextmanager
def no_grad():
    """Disable tape recording; outputs inside do not require grad."""
    global _GRAD_DISABLED
    _GRAD_DISABLED += 1
    try:
        yield
    finally:
        _GRAD_DISABLED -= 1


def _check_finite(arr: np.ndarray, op: str) -> None:
    # a single reduction: any NaN/Inf makes the sum non-finite (values are
    # desk-scale, so a finite sum cannot overflow)
    if not np.isfinite(arr.sum()):
        raise NumericError(f"non-finite values produced by {op}")


def _coerce(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if isinstance(x, (int, float, np.floating, np.integer)):
        return Tensor(np.asarray(x, dtype=np.float64))
    raise ShapeError(f"expected Tensor or scalar, got {type(x).__name__}")


def _record(inputs: Sequence[Tensor], out_data: np.ndarray, op: str,
            backward_fn: Callable[[np.ndarray], tuple]) -> Tensor:
    _check_finite(out_data, op)
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    out.requires_grad = False
    if _GRAD_DISABLED == 0 and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _TAPES[-1].nodes.append(_Node(tuple(inputs), out, backward_fn))
    return out


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(t) into t.grad for every reachable requires_grad tensor."""
    if root.data.ndim != 0 and root.data.size != 1:
        raise ContractError(f"backward root must be scalar, got shape {root.shape}")
    tape = _TAPES[-1]
    if tape.consumed:
        raise ContractError("backward already ran on this tape; reset or open a new one")
    tape.consumed = True
    if not root.requires_grad:
        return
    root.grad = np.ones_like(root.data)
    for node in reversed(tape.nodes):
        g_out = node.output.grad
        if g_out is None:
            continue
        for t, g in zip(node.inputs, node.backward_fn(g_out)):
            if g is None or not t.requires_grad:
                continue
            if t.grad is None:
                # copy: backward rules may hand the same array to two inputs
                t.grad = np.array(g)
            else:
                t.grad += g


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


def _scalar_or_same(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape != b.data.shape and a.data.ndim != 0 and b.data.ndim != 0:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are neither equal nor scalar")


def _unbroadcast(g: np.ndarray, t: Tensor) -> np.ndarray:
    # scalar operand of a scalar-with-tensor op collects the full gradient sum
    if t.data.ndim == 0 and g.ndim != 0:
        return np.asarray(g.sum())
    return g


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product; backward dA = G.B^T, dB = A^T.G."""
    a, b = _coerce(a), _coerce(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    out = a.data @ b.data

    def bw(g):
        return g @ b.data.T, a.data.T @ g

    return _record((a, b), out, "matmul", bw)


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeError(f"transpose expects 2-D, got {x.shape}")
    return _record((x,), x.data.T.copy(), "transpose", lambda g: (g.T,))


def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _scalar_or_same(a, b, "add")
    return _record((a, b), a.data + b.data, "add",
                   lambda g: (_unbroadcast(g, a), _unbroadcast(g, b)))


def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _scalar_or_same(a, b, "sub")
    return _record((a, b), a.data - b.data, "sub",
                   lambda g: (_unbroadcast(g, a), _unbroadcast(-g, b)))


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _scalar_or_same(a, b, "mul")
    return _record((a, b), a.data * b.data, "mul",
                   lambda g: (_unbroadcast(g * b.data, a), _unbroadcast(g * a.data, b)))


def neg(x: Tensor) -> Tensor:
    x = _coerce(x)
    return _record((x,), -x.data, "neg", lambda g: (-g,))


_KINK_WATCH: list | None = None


@contextmanager
def watch_kinks():
    """Collect |input| margins at relu kinks, for finite-difference validity."""
    global _KINK_WATCH
    prev, _KINK_WATCH = _KINK_WATCH, []
    try:
        yield _KINK_WATCH
    finally:
        _KINK_WATCH = prev


def relu(x: Tensor) -> Tensor:
    x = _coerce(x)
    if _KINK_WATCH is not None and x.data.size:
        _KINK_WATCH.append(float(np.abs(x.data).min()))
    mask = x.data > 0
    return _record((x,), np.where(mask, x.data, 0.0), "relu", lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    x = _coerce(x)
    d = x.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(d))
    y = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _record((x,), y, "sigmoid", lambda g: (g * y * (1.0 - y),))


def tanh(x: Tensor) -> Tensor:
    x = _coerce(x)
    y = np.tanh(x.data)
    return _record((x,), y, "tanh", lambda g: (g * (1.0 - y * y),))


def log(x: Tensor) -> Tensor:
    x = _coerce(x)
    if np.any(x.data <= 0):
        raise DomainError("log requires strictly positive input")
    return _record((x,), np.log(x.data), "log", lambda g: (g / x.data,))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-subtracted softmax over the last axis of a 1-D or 2-D tensor."""
    x = _coerce(x)
    if x.data.ndim not in (1, 2) or x.data.shape[-1] == 0:
        raise ShapeError(f"softmax expects nonempty 1-D or 2-D input, got {x.shape}")
    if axis not in (-1, x.data.ndim - 1):
        raise ShapeError("softmax supports the last axis only")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return ((g - dot) * y,)

    return _record((x,), y, "softmax", bw)


def tsum(x: Tensor) -> Tensor:
    x = _coerce(x)
    return _record((x,), np.asarray(x.data.sum()), "sum",
                   lambda g: (np.broadcast_to(g, x.data.shape).copy(),))


def tmean(x: Tensor) -> Tensor:
    x = _coerce(x)
    n = x.data.size
    if n == 0:
        raise ShapeError("mean of empty tensor")
    return _record((x,), np.asarray(x.data.mean()), "mean",
                   lambda g: (np.broadcast_to(g / n, x.data.shape).copy(),))


def concat(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate along the last axis (1-D with 1-D, or 2-D with equal rows)."""
    a, b = _coerce(a), _coerce(b)
    if a.data.ndim != b.data.ndim or a.data.ndim not in (1, 2):
        raise ShapeError(f"concat expects matching 1-D or 2-D operands, got {a.shape}, {b.shape}")
    if a.data.ndim == 2 and a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat row counts disagree: {a.shape} vs {b.shape}")
    na = a.data.shape[-1]
    out = np.concatenate([a.data, b.data], axis=-1)
    return _record((a, b), out, "concat",
                   lambda g: (g[..., :na].copy(), g[..., na:].copy()))


def gather_rows(table: Tensor, indices) -> Tensor:
    """Select rows of a 2-D table; backward scatter-adds (repeats accumulate)."""
    table = _coerce(table)
    if table.data.ndim != 2:
        raise ShapeError(f"gather_rows expects a 2-D table, got {table.shape}")
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1 or idx.size == 0:
        raise ShapeError("gather_rows expects a nonempty 1-D index list")
    if idx.min() < 0 or idx.max() >= table.shape[0]:
        raise ShapeError("gather_rows index out of range")
    out = table.data[idx].copy()

    def bw(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return (gt,)

    return _record((table,), out, "gather_rows", bw)


def gather_by_distance(p: Tensor) -> Tensor:
    """Map per-distance scores to attention layout: out[i, j] = p[i, i - j].

    `p[i, d]` scores query position i against the key d steps behind it;
    entries with j > i (negative distance) are zero and are expected to be
    masked out by the caller's causal mask.
    """
    p = _coerce(p)
    if p.data.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ShapeError(f"gather_by_distance expects square 2-D, got {p.shape}")
    t = p.shape[0]
    rows = np.arange(t)[:, None]
    dist = rows - np.arange(t)[None, :]
    valid = dist >= 0
    out = np.where(valid, p.data[rows, np.clip(dist, 0, t - 1)], 0.0)

    def bw(g):
        gp = np.zeros_like(p.data)
        np.add.at(gp, (rows.repeat(t, 1)[valid], dist[valid]), g[valid])
        return (gp,)

    return _record((p,), out, "gather_by_distance", bw)


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous row slice of a 2-D tensor."""
    x = _coerce(x)
    if x.data.ndim != 2:
        raise ShapeError(f"slice_rows expects 2-D, got {x.shape}")
    if not 0 <= start < stop <= x.shape[0]:
        raise ShapeError(f"rows [{start}, {stop}) out of range for shape {x.shape}")

    def bw(g):
        gx = np.zeros_like(x.data)
        gx[start:stop] = g
        return (gx,)

    return _record((x,), x.data[start:stop].copy(), "slice_rows", bw)


def take_row(x: Tensor, i: int) -> Tensor:
    x = _coerce(x)
    if x.data.ndim != 2:
        raise ShapeError(f"take_row expects 2-D, got {x.shape}")
    if not 0 <= i < x.shape[0]:
        raise ShapeError(f"row {i} out of range for shape {x.shape}")

    def bw(g):
        gx = np.zeros_like(x.data)
        gx[i] = g
        return (gx,)

    return _record((x,), x.data[i].copy(), "take_row", bw)


def as_row(x: Tensor) -> Tensor:
    """View a length-n vector as a 1 x n matrix."""
    x = _coerce(x)
    if x.data.ndim != 1:
        raise ShapeError(f"as_row expects 1-D, got {x.shape}")
    return _record((x,), x.data[None, :].copy(), "as_row", lambda g: (g[0],))


def add_rows(x: Tensor, v: Tensor) -> Tensor:
    """Add a length-d row vector to every row of a (t, d) matrix."""
    x, v = _coerce(x), _coerce(v)
    if x.data.ndim != 2 or v.data.ndim != 1 or x.shape[1] != v.shape[0]:
        raise ShapeError(f"add_rows expects (t,d) and (d,), got {x.shape} and {v.shape}")
    return _record((x, v), x.data + v.data[None, :], "add_rows",
                   lambda g: (g, g.sum(axis=0)))


def layernorm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-6) -> Tensor:
    """Per-row layer normalization with learnable gain and bias."""
    x, gain, bias = _coerce(x), _coerce(gain), _coerce(bias)
    if x.data.ndim not in (1, 2):
        raise ShapeError(f"layernorm expects 1-D or 2-D input, got {x.shape}")
    d = x.data.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError("layernorm gain/bias must match the feature dimension")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = xhat * gain.data + bias.data

    def bw(g):
        dg = (g * xhat).sum(axis=0) if x.data.ndim == 2 else g * xhat
        db = g.sum(axis=0) if x.data.ndim == 2 else g.copy()
        gx = g * gain.data
        dx = inv * (gx - gx.mean(axis=-1, keepdims=True)
                    - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
        return dx, dg, db

    return _record((x, gain, bias), out, "layernorm", bw)
