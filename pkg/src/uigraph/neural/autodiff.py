"""Minimal reverse-mode autodiff over dense float64 arrays.

Operations executed under an active AutodiffTape append their local
gradient rules in execution order; backward() replays the tape exactly
once in reverse, accumulating gradients additively. Without an active
tape, ops run as plain numpy math (inference mode).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError, NumericError, ShapeError

_STATE = threading.local()


def _active_tape() -> "AutodiffTape | None":
    return getattr(_STATE, "tape", None)


class Tensor:
    """Dense row-major float64 array, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, _check: bool = True):
        self.data = np.asarray(data, dtype=np.float64)
        if _check and not np.all(np.isfinite(self.data)):
            raise NumericError("tensor holds non-finite values")
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent: float):
        return power(self, exponent)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False, _check=False)


@dataclass
class TapeEntry:
    output: Tensor
    inputs: tuple[Tensor, ...]
    backward: object  # callable(out_grad) applying local rules


class AutodiffTape:
    """Execution-ordered op record for one forward pass.

    Use as a context manager; tapes are thread-local and must not be
    shared across concurrent forward passes.
    """

    def __init__(self):
        self.entries: list[TapeEntry] = []

    def __enter__(self) -> "AutodiffTape":
        if _active_tape() is not None:
            raise InvalidInputError("nested autodiff tapes are not supported")
        _STATE.tape = self
        return self

    def __exit__(self, *exc) -> None:
        _STATE.tape = None

    def backward(self, loss: Tensor) -> None:
        """Seed d(loss)/d(loss)=1 and replay entries in reverse order."""
        if loss.data.size != 1:
            raise InvalidInputError("backward() needs a scalar loss")
        loss.accumulate(np.ones_like(loss.data))
        for entry in reversed(self.entries):
            if entry.output.grad is None:
                continue
            entry.backward(entry.output.grad)


def _record(output: Tensor, inputs: tuple[Tensor, ...], backward) -> Tensor:
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        output.requires_grad = True
        tape.entries.append(TapeEntry(output, inputs, backward))
    return output


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(np.asarray(x, dtype=np.float64))


# --- primitive ops ---


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data + b.data, _check=False)

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g, b.data.shape))

    return _record(out, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data - b.data, _check=False)

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(-g, b.data.shape))

    return _record(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data * b.data, _check=False)

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _record(out, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shapes do not chain: {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data, _check=False)

    def backward(g):
        if a.requires_grad:
            a.accumulate(g @ b.data.T)
        if b.requires_grad:
            b.accumulate(a.data.T @ g)

    return _record(out, (a, b), backward)


def power(a: Tensor, exponent: float) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(a.data**exponent, _check=False)

    def backward(g):
        if a.requires_grad:
            a.accumulate(g * exponent * a.data ** (exponent - 1))

    return _record(out, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    y = np.tanh(a.data)
    out = Tensor(y, _check=False)

    def backward(g):
        if a.requires_grad:
            a.accumulate(g * (1.0 - y * y))

    return _record(out, (a,), backward)


def relu(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(np.maximum(a.data, 0.0), _check=False)

    def backward(g):
        if a.requires_grad:
            a.accumulate(g * (a.data > 0.0))

    return _record(out, (a,), backward)


def exp(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    y = np.exp(a.data)
    out = Tensor(y, _check=False)

    def backward(g):
        if a.requires_grad:
            a.accumulate(g * y)

    return _record(out, (a,), backward)


def log(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(np.log(a.data), _check=False)

    def backward(g):
        if a.requires_grad:
            a.accumulate(g / a.data)

    return _record(out, (a,), backward)


def sum_all(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(a.data.sum(), _check=False)

    def backward(g):
        if a.requires_grad:
            a.accumulate(np.broadcast_to(g, a.data.shape).copy())

    return _record(out, (a,), backward)


def mean_axis(a: Tensor, axis: int, keepdims: bool = True) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(a.data.mean(axis=axis, keepdims=keepdims), _check=False)
    count = a.data.shape[axis]

    def backward(g):
        if a.requires_grad:
            gg = g if keepdims else np.expand_dims(g, axis)
            a.accumulate(np.broadcast_to(gg / count, a.data.shape).copy())

    return _record(out, (a,), backward)


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax over the last axis; rows of the output sum to 1."""
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y, _check=False)

    def backward(g):
        if a.requires_grad:
            dot = (g * y).sum(axis=-1, keepdims=True)
            a.accumulate(y * (g - dot))

    return _record(out, (a,), backward)


def concat_rows(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[1]:
        raise ShapeError(f"cannot stack rows of {a.data.shape} and {b.data.shape}")
    out = Tensor(np.concatenate([a.data, b.data], axis=0), _check=False)
    split = a.data.shape[0]

    def backward(g):
        if a.requires_grad:
            a.accumulate(g[:split])
        if b.requires_grad:
            b.accumulate(g[split:])

    return _record(out, (a, b), backward)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous column slice of a 2-d tensor."""
    a = _as_tensor(a)
    if a.data.ndim != 2 or not 0 <= start < stop <= a.data.shape[1]:
        raise ShapeError(f"bad column slice [{start}:{stop}] of {a.data.shape}")
    out = Tensor(a.data[:, start:stop].copy(), _check=False)

    def backward(g):
        if a.requires_grad:
            acc = np.zeros_like(a.data)
            acc[:, start:stop] = g
            a.accumulate(acc)

    return _record(out, (a,), backward)


def concat_cols(parts: list[Tensor]) -> Tensor:
    """Join 2-d tensors side by side."""
    parts = [_as_tensor(p) for p in parts]
    if not parts or any(p.data.ndim != 2 for p in parts):
        raise ShapeError("concat_cols needs 2-d tensors")
    rows = {p.data.shape[0] for p in parts}
    if len(rows) != 1:
        raise ShapeError(f"row counts differ: {sorted(rows)}")
    out = Tensor(np.concatenate([p.data for p in parts], axis=1), _check=False)
    widths = [p.data.shape[1] for p in parts]

    def backward(g):
        offset = 0
        for p, w in zip(parts, widths):
            if p.requires_grad:
                p.accumulate(g[:, offset : offset + w])
            offset += w

    return _record(out, tuple(parts), backward)


def gather_rows(a: Tensor, indices) -> Tensor:
    """Select rows by integer index (embedding lookup)."""
    a = _as_tensor(a)
    idx = np.asarray(indices, dtype=np.int64)
    out = Tensor(a.data[idx], _check=False)

    def backward(g):
        if a.requires_grad:
            acc = np.zeros_like(a.data)
            np.add.at(acc, idx, g)
            a.accumulate(acc)

    return _record(out, (a,), backward)


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log-likelihood of integer targets under row softmax."""
    logits = _as_tensor(logits)
    idx = np.asarray(targets, dtype=np.int64)
    if logits.data.ndim != 2 or idx.ndim != 1 or idx.shape[0] != logits.data.shape[0]:
        raise ShapeError(
            f"cross_entropy shapes: logits {logits.data.shape}, targets {idx.shape}"
        )
    if idx.min() < 0 or idx.max() >= logits.data.shape[1]:
        raise InvalidInputError("cross_entropy target id out of range")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(idx.shape[0])
    nll = log_z - shifted[rows, idx]
    out = Tensor(nll.mean(), _check=False)

    def backward(g):
        if logits.requires_grad:
            probs = np.exp(shifted)
            probs /= probs.sum(axis=1, keepdims=True)
            probs[rows, idx] -= 1.0
            logits.accumulate(g * probs / idx.shape[0])

    return _record(out, (logits,), backward)


# --- finite-difference verification ---


def grad_check(f, inputs: list[Tensor], eps: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central finite differences.

    f maps the input tensors to a tensor; a scalar objective is formed by
    summing its entries. The relative error denominator is
    max(|analytic|, |numeric|, 1e-8) per coordinate.
    """

    def objective() -> float:
        out = f(*inputs)
        return float(out.data.sum())

    for t in inputs:
        t.zero_grad()
    with AutodiffTape() as tape:
        out = f(*inputs)
        loss = sum_all(out)
    tape.backward(loss)
    if not np.isfinite(loss.data).all():
        raise NumericError("non-finite objective in grad_check")

    max_rel = 0.0
    for t in inputs:
        if not t.requires_grad:
            continue
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = objective()
            flat[i] = orig - eps
            f_minus = objective()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2 * eps)
            a = analytic.reshape(-1)[i]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            max_rel = max(max_rel, rel)
    return max_rel
