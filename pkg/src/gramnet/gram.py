"""Texture extraction via channel gram matrices.

The raw gram layer turns an (N, C, H, W) tensor into an (N, 1, C, C) map of
channel inner products over all spatial positions, so its output size depends
only on the channel count. The composite module is 1x1 conv -> batch norm ->
tanh -> gram, yielding a fixed k x k map from any input size.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidShapeError
from .ops import (BatchNormParams, Conv2dParams, batch_norm, batch_norm_params,
                  conv2d, conv2d_params, tanh_act)
from .tensor import Tensor, accumulate_grad, active_tape


def gram_matrix(x: Tensor, normalize: bool = False) -> Tensor:
    """Per-sample channel inner-product matrix, laid out as N x 1 x C x C.

    G[i, j] = sum over all H*W positions of channel_i * channel_j. The upper
    triangle is mirrored so the output is symmetric bit-exactly. With
    ``normalize`` the entries are divided by H*W.
    """
    if len(x.shape) != 4:
        raise InvalidShapeError(f"gram_matrix expects NCHW, got {x.shape}")
    n, c, h, w = x.shape
    area = h * w
    f = x.data.reshape(n, c, area)
    g = f @ np.swapaxes(f, 1, 2)
    upper = np.triu(g)
    g = upper + np.swapaxes(np.triu(g, 1), 1, 2)
    if normalize:
        g = g / area
    out = Tensor(g.reshape(n, 1, c, c), requires_grad=x.requires_grad)
    tape = active_tape()
    if tape is not None and out.requires_grad:
        def pull(grad):
            dg = grad.reshape(n, c, c)
            dsym = dg + np.swapaxes(dg, 1, 2)
            if normalize:
                dsym = dsym / area
            accumulate_grad(x, (dsym @ f).reshape(x.shape), own=True)

        tape.record(out, pull)
    return out


@dataclass
class GramModuleSpec:
    """Gram module with k 1x1 filters: conv -> batch norm -> tanh -> gram."""

    in_ch: int
    k: int
    conv: Conv2dParams
    bn: BatchNormParams
    normalize: bool = False

    def __post_init__(self):
        if self.conv.weight.shape != (self.k, self.in_ch, 1, 1):
            raise InvalidShapeError(
                f"gram conv weight must be ({self.k}, {self.in_ch}, 1, 1), "
                f"got {self.conv.weight.shape}"
            )
        if self.bn.channels != self.k:
            raise InvalidShapeError(
                f"gram batch norm must cover {self.k} channels, got {self.bn.channels}"
            )

    @property
    def param_count(self) -> int:
        """Conv weights and biases only; batch norm is accounted separately."""
        return self.in_ch * self.k + self.k

    @property
    def bn_param_count(self) -> int:
        return self.bn.param_count


def gram_module_spec(in_ch: int, k: int, *, rng: np.random.Generator,
                     normalize: bool = False, bn_momentum: float = 0.9,
                     bn_eps: float = 1e-5, dtype=np.float32) -> GramModuleSpec:
    return GramModuleSpec(
        in_ch=in_ch,
        k=k,
        conv=conv2d_params(in_ch, k, 1, rng=rng, dtype=dtype),
        bn=batch_norm_params(k, momentum=bn_momentum, epsilon=bn_eps, dtype=dtype),
        normalize=normalize,
    )


def gram_module_forward(x: Tensor, spec: GramModuleSpec, mode: str) -> Tensor:
    """Fixed k x k output regardless of the input's spatial extents."""
    if len(x.shape) != 4 or x.shape[1] != spec.in_ch:
        raise InvalidShapeError(
            f"gram module expects {spec.in_ch} channels, got shape {x.shape}"
        )
    t = conv2d(x, spec.conv)
    t = batch_norm(t, spec.bn, mode)
    t = tanh_act(t)
    return gram_matrix(t, normalize=spec.normalize)
