"""Dense real tensors plus a reverse-mode autodiff tape.

Activations use (N, C, H, W) layout, row-major with the last axis fastest.
Kernels are precision generic: float32 is the working precision for training
and inference, while the gradient-check tests run the same code at float64.
"""
from __future__ import annotations

import math
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import ContractError, InvalidShapeError

MAX_RANK = 4

_REAL_DTYPES = (np.float32, np.float64)


def _checked_shape(shape: Sequence[int]) -> tuple:
    shape = tuple(int(e) for e in shape)
    if not 1 <= len(shape) <= MAX_RANK:
        raise InvalidShapeError(f"tensor rank must be 1..{MAX_RANK}, got {len(shape)}")
    if any(e < 1 for e in shape):
        raise InvalidShapeError(f"tensor extents must be positive, got {shape}")
    return shape


class Tensor:
    """A dense array with an optional same-shape gradient buffer.

    The gradient buffer is allocated lazily during backward; it is only ever
    populated on tensors with ``requires_grad`` set.
    """

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in _REAL_DTYPES:
            arr = arr.astype(np.float32)
        _checked_shape(arr.shape)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def tensor_new(
    shape: Sequence[int],
    fill: Union[float, str] = 0.0,
    *,
    rng: Optional[np.random.Generator] = None,
    dtype=np.float32,
    requires_grad: bool = False,
) -> Tensor:
    """Allocate a tensor filled with a constant or by a named init rule.

    Supported init rules: ``"glorot_uniform"`` (uniform in +-sqrt(6 / (fan_in
    + fan_out)), which needs ``rng``). Constant fills take any real number.
    """
    shape = _checked_shape(shape)
    if isinstance(fill, str):
        if fill == "glorot_uniform":
            if rng is None:
                raise ContractError("glorot_uniform init needs an rng")
            fan_in, fan_out = _fans(shape)
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            data = rng.uniform(-limit, limit, size=shape).astype(dtype)
        else:
            raise ContractError(f"unknown init rule {fill!r}")
    else:
        data = np.full(shape, float(fill), dtype=dtype)
    return Tensor(data, requires_grad=requires_grad)


def _fans(shape: tuple) -> tuple:
    if len(shape) == 4:  # conv weight (out_ch, in_ch, kh, kw)
        rf = shape[2] * shape[3]
        return shape[1] * rf, shape[0] * rf
    if len(shape) == 2:
        return shape[1], shape[0]
    return shape[0], shape[0]


# --- recording tape ---------------------------------------------------------

_TAPE_STACK: list = []


def active_tape() -> Optional["Tape"]:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tape:
    """Ordered record of primitive ops for one forward pass.

    Ops executed inside a ``with Tape() as tape:`` block append
    ``(output, pull)`` nodes in execution order, which is a topological order
    by construction. ``backward`` replays them exactly once, in reverse.
    """

    def __init__(self):
        self.nodes: list = []
        self._produced: set = set()

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def record(self, out: Tensor, pull: Callable[[np.ndarray], None]):
        self.nodes.append((out, pull))
        self._produced.add(id(out))

    def backward(self, loss: Tensor):
        """Seed d(loss)/d(loss)=1 and accumulate gradients into every leaf."""
        if loss.size != 1:
            raise ContractError(f"loss must be scalar, got shape {loss.shape}")
        if id(loss) not in self._produced:
            raise ContractError("loss was not produced by this tape")
        loss.grad = np.ones_like(loss.data)
        for out, pull in reversed(self.nodes):
            if out.grad is not None:
                pull(out.grad)


def backward(tape: Tape, loss: Tensor):
    tape.backward(loss)


def accumulate_grad(t: Tensor, g: np.ndarray, own: bool = False):
    """Additively accumulate into ``t.grad`` (sum over all use sites).

    ``own`` marks ``g`` as a freshly allocated array of the right dtype that
    the tensor may adopt directly instead of copying. Callers must never pass
    ``own=True`` for views or buffers they will reuse.
    """
    if t.grad is None:
        if own and g.dtype == t.data.dtype:
            t.grad = g
        else:
            t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def _unary_result(x: Tensor, data: np.ndarray, pull) -> Tensor:
    out = Tensor(data, requires_grad=x.requires_grad)
    tape = active_tape()
    if tape is not None and out.requires_grad:
        tape.record(out, pull(out))
    return out


def _nary_result(inputs: Sequence[Tensor], data: np.ndarray, pull) -> Tensor:
    out = Tensor(data, requires_grad=any(i.requires_grad for i in inputs))
    tape = active_tape()
    if tape is not None and out.requires_grad:
        tape.record(out, pull(out))
    return out


# --- primitive ops ----------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two same-shape tensors (no broadcasting)."""
    if a.shape != b.shape:
        raise InvalidShapeError(f"add shape mismatch: {a.shape} vs {b.shape}")

    def pull(out):
        def fn(g):
            if a.requires_grad:
                accumulate_grad(a, g)
            if b.requires_grad:
                accumulate_grad(b, g)

        return fn

    return _nary_result((a, b), a.data + b.data, pull)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of two same-shape tensors."""
    if a.shape != b.shape:
        raise InvalidShapeError(f"mul shape mismatch: {a.shape} vs {b.shape}")

    def pull(out):
        def fn(g):
            if a.requires_grad:
                accumulate_grad(a, g * b.data)
            if b.requires_grad:
                accumulate_grad(b, g * a.data)

        return fn

    return _nary_result((a, b), a.data * b.data, pull)


def scale(x: Tensor, c: float) -> Tensor:
    """Multiply by a python constant."""

    def pull(out):
        def fn(g):
            if x.requires_grad:
                accumulate_grad(x, g * c)

        return fn

    return _unary_result(x, x.data * c, pull)


def tsum(x: Tensor) -> Tensor:
    """Sum all elements into a shape-(1,) scalar."""

    def pull(out):
        def fn(g):
            if x.requires_grad:
                accumulate_grad(x, np.full(x.shape, g.reshape(())[()], dtype=x.dtype))

        return fn

    return _unary_result(x, x.data.sum(dtype=x.dtype).reshape(1), pull)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Rank-2 matrix product (M,K) x (K,N) -> (M,N)."""
    if len(a.shape) != 2 or len(b.shape) != 2:
        raise InvalidShapeError(
            f"matmul needs rank-2 operands, got {a.shape} and {b.shape}"
        )
    if a.shape[1] != b.shape[0]:
        raise InvalidShapeError(
            f"matmul inner extents differ: {a.shape} vs {b.shape}"
        )

    def pull(out):
        def fn(g):
            if a.requires_grad:
                accumulate_grad(a, g @ b.data.T)
            if b.requires_grad:
                accumulate_grad(b, a.data.T @ g)

        return fn

    return _nary_result((a, b), a.data @ b.data, pull)
