"""Dense float64 tensors with a reverse-mode differentiation tape.

Scope is deliberately small: exactly the operations the affinity model
composes, each with a hand-written backward rule.  A Tape records ops in
execution order while active (``with Tape() as tape``), and backward()
replays it once in reverse.  Tapes are per-forward-pass and single-threaded;
tensors created with no active tape never record anything, which is the
evaluation path.

Hot kernels (dilated convolution, embedding scatter-add, columnwise max)
dispatch to ``dtadyn.kernels`` — compiled extension when built, numpy
fallback otherwise.
"""

from __future__ import annotations

import threading

import numpy as np

from . import kernels


class ShapeMismatch(ValueError):
    pass


class SequenceTooShort(ValueError):
    pass


class IndexOutOfRange(IndexError):
    pass


class EmptyInput(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class NotScalar(ValueError):
    pass


class DetachedTensor(ValueError):
    pass


class Tensor:
    """Row-major float64 array with optional gradient accumulation."""

    __slots__ = ("array", "requires_grad", "grad", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        self.array = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._tape: Tape | None = None

    @classmethod
    def _wrap(cls, array: np.ndarray, requires_grad: bool) -> "Tensor":
        t = cls.__new__(cls)
        t.array = array
        t.requires_grad = requires_grad
        t.grad = None
        t._tape = None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.array.shape

    @property
    def size(self) -> int:
        return self.array.size

    def item(self) -> float:
        if self.array.size != 1:
            raise NotScalar(f"item() on tensor of shape {self.shape}")
        return float(self.array.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class _TapeEntry:
    __slots__ = ("out", "inputs", "rule")

    def __init__(self, out, inputs, rule):
        self.out = out
        self.inputs = inputs
        self.rule = rule


class Tape:
    """Ordered record of one forward pass, replayed in reverse by backward().

    Entries are appended in execution order, so inputs of every entry precede
    it; a single reverse sweep therefore delivers each node's gradient from
    all of its consumers before the node's own rule runs.
    """

    def __init__(self):
        self.entries: list[_TapeEntry] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        _STATE.stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _STATE.stack.pop()
        assert popped is self, "tapes must unwind in LIFO order"


class _ThreadState(threading.local):
    def __init__(self):
        self.stack: list[Tape] = []


_STATE = _ThreadState()


def active_tape() -> Tape | None:
    return _STATE.stack[-1] if _STATE.stack else None


def _record(out: Tensor, inputs: tuple[Tensor, ...], rule) -> Tensor:
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._tape = tape
        tape.entries.append(_TapeEntry(out, inputs, rule))
    if __debug__:
        if not np.all(np.isfinite(out.array)):
            raise FloatingPointError("non-finite value produced by forward op")
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.array)
    t.grad += g


def backward(loss: Tensor) -> None:
    """Populate .grad on every requires_grad tensor reachable from loss.

    The loss must be a scalar; its own gradient seeds to 1.  The tape that
    recorded it is replayed once in reverse and then marked consumed.
    """
    if loss.size != 1:
        raise NotScalar(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise DetachedTensor("loss does not require grad (no tape was active?)")
    tape = loss._tape
    if tape is not None and tape.consumed:
        raise DetachedTensor("tape already replayed; build a new forward pass")
    _accum(loss, np.ones_like(loss.array))
    if tape is None:
        return  # leaf loss: seeding is the whole job
    for entry in reversed(tape.entries):
        if entry.out.grad is None:
            continue
        entry.rule(entry.out.grad)
    tape.consumed = True
    tape.entries.clear()


# ---------------------------------------------------------------------------
# ops


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.array.ndim != 2 or b.array.ndim != 2:
        raise ShapeMismatch(f"matmul needs 2-D tensors, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"inner extents differ: {a.shape} @ {b.shape}")
    out = Tensor._wrap(a.array @ b.array, False)

    def rule(g):
        _accum(a, g @ b.array.T)
        _accum(b, a.array.T @ g)

    return _record(out, (a, b), rule)


def add(a: Tensor, b) -> Tensor:
    """a + b where b is a Tensor of the same shape, a (1, n) row against
    a's (m, n), or a plain float."""
    if isinstance(b, (int, float)):
        out = Tensor._wrap(a.array + float(b), False)

        def rule(g):
            _accum(a, g)

        return _record(out, (a,), rule)

    if a.shape == b.shape:
        out = Tensor._wrap(a.array + b.array, False)

        def rule(g):
            _accum(a, g)
            _accum(b, g)

    elif (
        a.array.ndim == 2
        and b.array.ndim == 2
        and b.shape == (1, a.shape[1])
    ):
        out = Tensor._wrap(a.array + b.array, False)

        def rule(g):
            _accum(a, g)
            _accum(b, g.sum(axis=0, keepdims=True))

    else:
        raise ShapeMismatch(f"cannot add {a.shape} and {b.shape}")
    return _record(out, (a, b), rule)


def mul(a: Tensor, b) -> Tensor:
    """Elementwise product; b may be a same-shape Tensor or a float."""
    if isinstance(b, (int, float)):
        c = float(b)
        out = Tensor._wrap(a.array * c, False)

        def rule(g):
            _accum(a, g * c)

        return _record(out, (a,), rule)

    if a.shape != b.shape:
        raise ShapeMismatch(f"cannot multiply {a.shape} and {b.shape}")
    out = Tensor._wrap(a.array * b.array, False)

    def rule(g):
        _accum(a, g * b.array)
        _accum(b, g * a.array)

    return _record(out, (a, b), rule)


def relu(x: Tensor) -> Tensor:
    out = Tensor._wrap(np.maximum(x.array, 0.0), False)
    mask = x.array > 0.0  # gradient 0 at exactly 0

    def rule(g):
        _accum(x, g * mask)

    return _record(out, (x,), rule)


def softmax_last(x: Tensor) -> Tensor:
    """Softmax over the trailing dimension, stabilized by max subtraction."""
    if x.shape[-1] < 1:
        raise EmptyInput("softmax over an empty trailing dimension")
    shifted = x.array - x.array.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)
    out = Tensor._wrap(s, False)

    def rule(g):
        dot = (g * s).sum(axis=-1, keepdims=True)
        _accum(x, (g - dot) * s)

    return _record(out, (x,), rule)


def transpose(x: Tensor) -> Tensor:
    if x.array.ndim != 2:
        raise ShapeMismatch(f"transpose needs a 2-D tensor, got {x.shape}")
    out = Tensor._wrap(np.ascontiguousarray(x.array.T), False)

    def rule(g):
        _accum(x, g.T)

    return _record(out, (x,), rule)


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor._wrap(x.array.reshape(shape), False)
    orig = x.shape

    def rule(g):
        _accum(x, g.reshape(orig))

    return _record(out, (x,), rule)


def concat(parts: list[Tensor]) -> Tensor:
    """Concatenate rank-1 tensors."""
    if not parts:
        raise EmptyInput("concat of no tensors")
    for p in parts:
        if p.array.ndim != 1:
            raise ShapeMismatch(f"concat needs rank-1 tensors, got {p.shape}")
    out = Tensor._wrap(np.concatenate([p.array for p in parts]), False)
    sizes = [p.size for p in parts]

    def rule(g):
        start = 0
        for p, n in zip(parts, sizes):
            _accum(p, g[start : start + n])
            start += n

    return _record(out, tuple(parts), rule)


def sum_all(x: Tensor) -> Tensor:
    out = Tensor._wrap(np.asarray(x.array.sum()), False)

    def rule(g):
        _accum(x, np.broadcast_to(g, x.shape).astype(np.float64))

    return _record(out, (x,), rule)


def conv1d_dilated(seq: Tensor, weights: Tensor, bias: Tensor, dilation: int) -> Tensor:
    """Valid (unpadded) dilated 1-D convolution; activation is the caller's.

    seq: (C_in, N); weights: (C_out, C_in, K); bias: (C_out,).
    Output length is N - (K-1)*dilation.
    """
    if dilation < 1:
        raise ValueError(f"dilation must be positive, got {dilation}")
    if seq.array.ndim != 2 or weights.array.ndim != 3 or bias.array.ndim != 1:
        raise ShapeMismatch(
            f"conv1d_dilated shapes: seq {seq.shape}, weights {weights.shape}, "
            f"bias {bias.shape}"
        )
    c_out, c_in, k = weights.shape
    if seq.shape[0] != c_in or bias.shape[0] != c_out:
        raise ShapeMismatch(
            f"channel mismatch: seq {seq.shape}, weights {weights.shape}, "
            f"bias {bias.shape}"
        )
    n = seq.shape[1]
    if n < (k - 1) * dilation + 1:
        raise SequenceTooShort(
            f"sequence length {n} < (K-1)*dilation + 1 = {(k - 1) * dilation + 1}"
        )
    out_arr = kernels.conv1d_dilated_forward(seq.array, weights.array, bias.array, dilation)
    out = Tensor._wrap(out_arr, False)

    def rule(g):
        g = np.ascontiguousarray(g)
        gs, gw, gb = kernels.conv1d_dilated_backward(seq.array, weights.array, dilation, g)
        _accum(seq, gs)
        _accum(weights, gw)
        _accum(bias, gb)

    return _record(out, (seq, weights, bias), rule)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Gather table rows; backward scatter-adds into the gathered rows."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ShapeMismatch(f"ids must be a flat sequence, got shape {ids.shape}")
    v = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= v):
        bad = ids[(ids < 0) | (ids >= v)][0]
        raise IndexOutOfRange(f"id {bad} outside [0, {v})")
    out = Tensor._wrap(table.array[ids], False)

    def rule(g):
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.array)
            kernels.scatter_add_rows(table.grad, ids, np.ascontiguousarray(g))

    return _record(out, (table,), rule)


def global_max_pool(x: Tensor) -> Tensor:
    """Columnwise max of (N, d) -> (d,); ties route gradient to the lowest row."""
    if x.array.ndim != 2:
        raise ShapeMismatch(f"global_max_pool needs (N, d), got {x.shape}")
    if x.shape[0] < 1:
        raise EmptyInput("global_max_pool over zero rows")
    vals, idx = kernels.column_max(np.ascontiguousarray(x.array))
    out = Tensor._wrap(vals, False)
    cols = np.arange(x.shape[1])

    def rule(g):
        gx = np.zeros_like(x.array)
        gx[idx, cols] = g
        _accum(x, gx)

    return _record(out, (x,), rule)


def outer_product3(a: Tensor, b: Tensor, c: Tensor) -> Tensor:
    """Flattened triple outer product: entry (i,j,k) = a[i]*b[j]*c[k].

    Row-major flatten: index of a slowest, index of c fastest.
    """
    for t in (a, b, c):
        if t.array.ndim != 1:
            raise ShapeMismatch(f"outer_product3 needs rank-1 inputs, got {t.shape}")
    cube = np.einsum("i,j,k->ijk", a.array, b.array, c.array)
    out = Tensor._wrap(cube.ravel(), False)
    p, q, r = a.size, b.size, c.size

    def rule(g):
        gc = g.reshape(p, q, r)
        _accum(a, np.einsum("ijk,j,k->i", gc, b.array, c.array))
        _accum(b, np.einsum("ijk,i,k->j", gc, a.array, c.array))
        _accum(c, np.einsum("ijk,i,j->k", gc, a.array, b.array))

    return _record(out, (a, b, c), rule)


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: survivors scaled by 1/(1-p) at train time, identity
    in evaluation."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    keep = rng.random(x.shape) >= p
    factor = keep / (1.0 - p)
    out = Tensor._wrap(x.array * factor, False)

    def rule(g):
        _accum(x, g * factor)

    return _record(out, (x,), rule)


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    if pred.array.ndim != 1 or target.array.ndim != 1:
        raise ShapeMismatch("mse_loss expects rank-1 tensors")
    if pred.shape != target.shape:
        raise LengthMismatch(f"lengths differ: {pred.shape} vs {target.shape}")
    m = pred.size
    if m < 1:
        raise EmptyInput("mse_loss over zero samples")
    diff = pred.array - target.array
    out = Tensor._wrap(np.asarray((diff @ diff) / m), False)

    def rule(g):
        scaled = (2.0 / m) * diff * g
        _accum(pred, scaled)
        _accum(target, -scaled)

    return _record(out, (pred, target), rule)
