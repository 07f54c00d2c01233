"""Neural-network layer primitives with forward and backward rules.

Convolution is im2col + GEMM (with a cheap path for 1x1/stride-1 kernels),
max pooling routes gradients to the first maximum in row-major window scan,
and batch normalization keeps per-channel running statistics for inference.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, InvalidShapeError
from .tensor import Tensor, accumulate_grad, active_tape, tensor_new

LEAKY_SLOPE = 0.3  # negative-side slope used throughout the network


@dataclass
class Conv2dParams:
    """Square-kernel 2d convolution parameters.

    weight has shape (out_ch, in_ch, k, k); padding is symmetric.
    """

    weight: Tensor
    bias: Tensor
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if len(self.weight.shape) != 4:
            raise InvalidShapeError(f"conv weight must be rank 4, got {self.weight.shape}")
        if self.weight.shape[2] != self.weight.shape[3]:
            raise InvalidShapeError(f"conv kernels must be square, got {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[0],):
            raise InvalidShapeError(
                f"bias shape {self.bias.shape} does not match {self.weight.shape[0]} filters"
            )
        if self.stride < 1 or self.padding < 0:
            raise ContractError("stride must be >= 1 and padding >= 0")

    @property
    def out_ch(self) -> int:
        return self.weight.shape[0]

    @property
    def in_ch(self) -> int:
        return self.weight.shape[1]

    @property
    def kernel(self) -> int:
        return self.weight.shape[2]

    @property
    def param_count(self) -> int:
        return self.weight.size + self.bias.size


@dataclass
class BatchNormParams:
    """Per-channel affine batch normalization with running statistics.

    For parameter accounting each normalized channel contributes 4 values:
    scale, shift, running mean, running variance.
    """

    scale: Tensor
    shift: Tensor
    running_mean: Tensor
    running_var: Tensor
    momentum: float = 0.9
    epsilon: float = 1e-5
    # Running buffers of a freshly built layer hold placeholder values; the
    # first train-mode batch defines them, later batches follow the momentum
    # recurrence. Kept out of checkpoints: loaded stats are already defined.
    stats_initialized: bool = False

    def __post_init__(self):
        c = self.scale.shape
        if not (self.shift.shape == c and self.running_mean.shape == c
                and self.running_var.shape == c and len(c) == 1):
            raise InvalidShapeError("batch-norm buffers must share one channel extent")
        if not 0.0 < self.momentum < 1.0:
            raise ContractError(f"momentum must be in (0,1), got {self.momentum}")
        if self.epsilon <= 0.0:
            raise ContractError("epsilon must be positive")
        if np.any(self.running_var.data < 0):
            raise ContractError("running variance must be >= 0")

    @property
    def channels(self) -> int:
        return self.scale.shape[0]

    @property
    def param_count(self) -> int:
        return 4 * self.channels


def conv2d_params(in_ch: int, out_ch: int, kernel: int, stride: int = 1,
                  padding: int = 0, *, rng: np.random.Generator,
                  dtype=np.float32) -> Conv2dParams:
    """Glorot-uniform weights, zero biases."""
    weight = tensor_new((out_ch, in_ch, kernel, kernel), "glorot_uniform",
                        rng=rng, dtype=dtype, requires_grad=True)
    bias = tensor_new((out_ch,), 0.0, dtype=dtype, requires_grad=True)
    return Conv2dParams(weight, bias, stride=stride, padding=padding)


def batch_norm_params(channels: int, momentum: float = 0.9, epsilon: float = 1e-5,
                      dtype=np.float32) -> BatchNormParams:
    """Scale 1, shift 0, running mean 0, running variance 1."""
    return BatchNormParams(
        scale=tensor_new((channels,), 1.0, dtype=dtype, requires_grad=True),
        shift=tensor_new((channels,), 0.0, dtype=dtype, requires_grad=True),
        running_mean=tensor_new((channels,), 0.0, dtype=dtype),
        running_var=tensor_new((channels,), 1.0, dtype=dtype),
        momentum=momentum,
        epsilon=epsilon,
    )


def conv_out_extent(extent: int, kernel: int, stride: int, padding: int) -> int:
    return (extent + 2 * padding - kernel) // stride + 1


def _require_nchw(x: Tensor, op: str):
    if len(x.shape) != 4:
        raise InvalidShapeError(f"{op} expects an NCHW tensor, got shape {x.shape}")


def conv2d(x: Tensor, p: Conv2dParams) -> Tensor:
    """Cross-correlation of an NCHW tensor with square filters."""
    _require_nchw(x, "conv2d")
    n, c, h, w = x.shape
    if c != p.in_ch:
        raise InvalidShapeError(f"conv2d expects {p.in_ch} input channels, got {c}")
    k, s, pad = p.kernel, p.stride, p.padding
    oh = conv_out_extent(h, k, s, pad)
    ow = conv_out_extent(w, k, s, pad)
    if oh < 1 or ow < 1:
        raise InvalidShapeError(
            f"conv2d output extent would be {oh}x{ow} for input {h}x{w} "
            f"(kernel {k}, stride {s}, pad {pad})"
        )
    if k == 1 and s == 1 and pad == 0:
        return _conv1x1(x, p, n, c, h, w)
    return _conv_im2col(x, p, n, c, h, w, oh, ow)


def _conv1x1(x: Tensor, p: Conv2dParams, n, c, h, w) -> Tensor:
    o = p.out_ch
    w2 = p.weight.data.reshape(o, c)
    x3 = x.data.reshape(n, c, h * w)
    y = np.matmul(w2, x3) + p.bias.data[:, None]
    out = Tensor(y.reshape(n, o, h, w),
                 requires_grad=x.requires_grad or p.weight.requires_grad
                 or p.bias.requires_grad)
    tape = active_tape()
    if tape is not None and out.requires_grad:
        def pull(g):
            g3 = np.ascontiguousarray(g).reshape(n, o, h * w)
            if p.bias.requires_grad:
                accumulate_grad(p.bias, g3.sum(axis=(0, 2)))
            if p.weight.requires_grad:
                dw = np.matmul(g3, x3.transpose(0, 2, 1)).sum(axis=0)
                accumulate_grad(p.weight, dw.reshape(p.weight.shape))
            if x.requires_grad:
                dx = np.matmul(w2.T, g3)
                accumulate_grad(x, dx.reshape(x.shape), own=True)

        tape.record(out, pull)
    return out


def _im2col(xp: np.ndarray, k: int, s: int, oh: int, ow: int) -> np.ndarray:
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
    col = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5))
    return col.reshape(xp.shape[0] * oh * ow, -1)


def _conv_im2col(x: Tensor, p: Conv2dParams, n, c, h, w, oh, ow) -> Tensor:
    k, s, pad = p.kernel, p.stride, p.padding
    o = p.out_ch
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    col = _im2col(xp, k, s, oh, ow)  # (n*oh*ow, c*k*k)
    w2 = p.weight.data.reshape(o, -1)
    y = col @ w2.T + p.bias.data
    out = Tensor(y.reshape(n, oh, ow, o).transpose(0, 3, 1, 2),
                 requires_grad=x.requires_grad or p.weight.requires_grad
                 or p.bias.requires_grad)
    tape = active_tape()
    if tape is not None and out.requires_grad:
        def pull(g):
            gm = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, o)
            if p.bias.requires_grad:
                accumulate_grad(p.bias, gm.sum(axis=0))
            if p.weight.requires_grad:
                accumulate_grad(p.weight, (gm.T @ col).reshape(p.weight.shape))
            if x.requires_grad:
                dcol = (gm @ w2).reshape(n, oh, ow, c, k, k)
                dxp = np.zeros_like(xp)
                for di in range(k):
                    for dj in range(k):
                        dxp[:, :, di:di + s * oh:s, dj:dj + s * ow:s] += \
                            dcol[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
                if pad:
                    dx = np.ascontiguousarray(dxp[:, :, pad:pad + h, pad:pad + w])
                else:
                    dx = dxp
                accumulate_grad(x, dx, own=True)

        tape.record(out, pull)
    return out


def maxpool2d(x: Tensor, window: int = 3, stride: int = 2) -> Tensor:
    """Valid max pooling; gradient routes to the first max per window."""
    _require_nchw(x, "maxpool2d")
    n, c, h, w = x.shape
    if h < window or w < window:
        raise InvalidShapeError(
            f"maxpool2d needs spatial extents >= {window}, got {h}x{w}"
        )
    oh = (h - window) // stride + 1
    ow = (w - window) // stride + 1

    def offset_slice(arr, di, dj):
        return arr[:, :, di:di + stride * (oh - 1) + 1:stride,
                   dj:dj + stride * (ow - 1) + 1:stride]

    recording = active_tape() is not None and x.requires_grad
    acc = offset_slice(x.data, 0, 0).copy()
    idx = np.zeros(acc.shape, dtype=np.int8) if recording else None
    for j in range(1, window * window):
        sl = offset_slice(x.data, *divmod(j, window))
        if recording:
            # strict > keeps the first occurrence in row-major window scan
            np.copyto(idx, j, where=sl > acc)
        np.maximum(acc, sl, out=acc)
    out = Tensor(acc, requires_grad=x.requires_grad)
    if recording:
        def pull(g):
            dx = np.zeros_like(x.data)
            for j in range(window * window):
                target = offset_slice(dx, *divmod(j, window))
                target += g * (idx == j)
            accumulate_grad(x, dx, own=True)

        active_tape().record(out, pull)
    return out


def global_avg_pool(x: Tensor) -> Tensor:
    """Per-channel spatial mean, collapsing NCHW to (N, C)."""
    _require_nchw(x, "global_avg_pool")
    n, c, h, w = x.shape
    out = Tensor(x.data.mean(axis=(2, 3)), requires_grad=x.requires_grad)
    tape = active_tape()
    if tape is not None and out.requires_grad:
        def pull(g):
            accumulate_grad(x, np.broadcast_to(
                (g / (h * w))[:, :, None, None], x.shape))

        tape.record(out, pull)
    return out


def _check_mode(mode: str):
    if mode not in ("train", "infer"):
        raise ContractError(f"mode must be 'train' or 'infer', got {mode!r}")


def batch_norm(x: Tensor, p: BatchNormParams, mode: str) -> Tensor:
    """Normalize per channel over (N, H, W), then apply scale and shift.

    Train mode uses batch statistics and updates the running buffers as
    running <- momentum * running + (1 - momentum) * batch; infer mode
    normalizes with the stored running statistics.
    """
    _require_nchw(x, "batch_norm")
    _check_mode(mode)
    n, c, h, w = x.shape
    if c != p.channels:
        raise InvalidShapeError(f"batch_norm expects {p.channels} channels, got {c}")
    if mode == "train" and n * h * w < 2:
        raise ContractError("batch_norm train mode needs >= 2 elements per channel")

    count = n * h * w
    sc = p.scale.data[None, :, None, None]
    sh = p.shift.data[None, :, None, None]
    if mode == "train":
        m = x.data.mean(axis=(0, 2, 3))
        xhat = x.data - m[None, :, None, None]
        flat = xhat.reshape(n, c, h * w)
        v = np.einsum("ncx,ncx->c", flat, flat) / count
        if p.stats_initialized:
            p.running_mean.data[...] = p.momentum * p.running_mean.data + (1 - p.momentum) * m
            p.running_var.data[...] = p.momentum * p.running_var.data + (1 - p.momentum) * v
        else:
            p.running_mean.data[...] = m
            p.running_var.data[...] = v
            p.stats_initialized = True
        inv_std = 1.0 / np.sqrt(v + p.epsilon)
        xhat *= inv_std[None, :, None, None]
    else:
        m = p.running_mean.data
        v = p.running_var.data
        inv_std = 1.0 / np.sqrt(v + p.epsilon)
        xhat = (x.data - m[None, :, None, None]) * inv_std[None, :, None, None]
    out_data = xhat * sc
    out_data += sh
    out = Tensor(out_data,
                 requires_grad=x.requires_grad or p.scale.requires_grad
                 or p.shift.requires_grad)
    tape = active_tape()
    if tape is not None and out.requires_grad:
        def pull(g):
            # per-channel reductions of g and g*xhat serve both the affine
            # gradients and (scaled by `scale`) the batch-statistics terms
            dshift = g.sum(axis=(0, 2, 3))
            dscale = np.einsum("ncx,ncx->c", g.reshape(n, c, h * w),
                               xhat.reshape(n, c, h * w))
            if p.shift.requires_grad:
                accumulate_grad(p.shift, dshift)
            if p.scale.requires_grad:
                accumulate_grad(p.scale, dscale)
            if x.requires_grad:
                gx = np.multiply(g, sc)
                if mode == "train":
                    # differentiate through the batch statistics
                    gx -= ((p.scale.data * dshift) / count)[None, :, None, None]
                    gx -= xhat * ((p.scale.data * dscale) / count)[None, :, None, None]
                    gx *= inv_std[None, :, None, None]
                else:
                    gx *= inv_std[None, :, None, None]
                accumulate_grad(x, gx, own=True)

        tape.record(out, pull)
    return out


def leaky_relu(x: Tensor, a: float = LEAKY_SLOPE) -> Tensor:
    """max(x, a*x); the subgradient at exactly 0 uses slope 1."""
    if not 0.0 <= a < 1.0:
        raise ContractError(f"leaky slope must be in [0,1), got {a}")
    data = x.data * a
    np.maximum(data, x.data, out=data)
    out = Tensor(data, requires_grad=x.requires_grad)
    tape = active_tape()
    if tape is not None and out.requires_grad:
        def pull(g):
            dx = np.where(x.data >= 0, x.dtype.type(1), x.dtype.type(a))
            np.multiply(g, dx, out=dx)
            accumulate_grad(x, dx, own=True)

        tape.record(out, pull)
    return out


def tanh_act(x: Tensor) -> Tensor:
    data = np.tanh(x.data)
    out = Tensor(data, requires_grad=x.requires_grad)
    tape = active_tape()
    if tape is not None and out.requires_grad:
        def pull(g):
            dx = 1 - data * data
            np.multiply(g, dx, out=dx)
            accumulate_grad(x, dx, own=True)

        tape.record(out, pull)
    return out


def concat_channels(xs: Sequence[Tensor]) -> Tensor:
    """Stack NCHW tensors along the channel axis, preserving order."""
    if not xs:
        raise ContractError("concat_channels needs at least one input")
    for t in xs:
        _require_nchw(t, "concat_channels")
    ref = xs[0].shape
    for t in xs[1:]:
        if t.shape[0] != ref[0] or t.shape[2:] != ref[2:]:
            raise InvalidShapeError(
                f"concat_channels batch/spatial mismatch: {ref} vs {t.shape}"
            )
    out = Tensor(np.concatenate([t.data for t in xs], axis=1),
                 requires_grad=any(t.requires_grad for t in xs))
    tape = active_tape()
    if tape is not None and out.requires_grad:
        splits = np.cumsum([t.shape[1] for t in xs])[:-1]

        def pull(g):
            for t, gpart in zip(xs, np.split(g, splits, axis=1)):
                if t.requires_grad:
                    accumulate_grad(t, gpart)

        tape.record(out, pull)
    return out


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log softmax probability of the true class.

    Labels are class indices (0 = live, 1 = fake). Stabilized with the
    log-sum-exp shift so saturated logits cannot overflow.
    """
    if len(logits.shape) != 2:
        raise InvalidShapeError(f"logits must be (N, classes), got {logits.shape}")
    n, ncls = logits.shape
    lab = np.asarray(labels)
    if lab.shape != (n,):
        raise ContractError(f"need one label per sample, got {lab.shape} for {n}")
    if lab.dtype.kind not in "iu":
        raise ContractError("labels must be integer class indices")
    if lab.min() < 0 or lab.max() >= ncls:
        raise ContractError(f"labels must lie in [0, {ncls}), got {lab.min()}..{lab.max()}")

    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    sez = ez.sum(axis=1, keepdims=True)
    logp = (z - zmax) - np.log(sez)
    loss = Tensor((-logp[np.arange(n), lab].mean(dtype=z.dtype)).reshape(1),
                  requires_grad=logits.requires_grad)
    tape = active_tape()
    if tape is not None and loss.requires_grad:
        def pull(g):
            probs = ez / sez
            probs[np.arange(n), lab] -= 1
            accumulate_grad(logits, probs * (g.reshape(())[()] / n))

        tape.record(loss, pull)
    return loss


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a raw logit array (no autodiff)."""
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=1, keepdims=True)
