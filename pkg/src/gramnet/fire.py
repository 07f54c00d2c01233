"""SqueezeNet-style fire module.

A squeeze layer of s 1x1 filters feeds two parallel expand branches (e/2 1x1
filters and e/2 3x3 filters, pad 1) whose outputs are concatenated on the
channel axis. The squeeze count is fixed at one eighth of the expand total.
Every conv is followed by batch norm and the leaky activation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, InvalidShapeError
from .ops import (BatchNormParams, Conv2dParams, batch_norm, batch_norm_params,
                  concat_channels, conv2d, conv2d_params, leaky_relu)
from .tensor import Tensor

SQUEEZE_RATIO = 8  # squeeze filters = expand filters / 8


@dataclass
class FireSpec:
    in_ch: int
    e: int  # total expand filters (output channels)
    s: int  # squeeze filters, e // 8
    squeeze: Conv2dParams
    expand1: Conv2dParams
    expand3: Conv2dParams
    bn_squeeze: BatchNormParams
    bn_expand1: BatchNormParams
    bn_expand3: BatchNormParams

    def __post_init__(self):
        if self.e % SQUEEZE_RATIO != 0 or self.s * SQUEEZE_RATIO != self.e:
            raise ContractError(
                f"squeeze count must be expand/{SQUEEZE_RATIO} exactly, "
                f"got s={self.s}, e={self.e}"
            )
        half = self.e // 2
        if self.squeeze.weight.shape != (self.s, self.in_ch, 1, 1):
            raise InvalidShapeError("squeeze conv shape mismatch")
        if self.expand1.weight.shape != (half, self.s, 1, 1):
            raise InvalidShapeError("expand1 conv shape mismatch")
        if self.expand3.weight.shape != (half, self.s, 3, 3) or self.expand3.padding != 1:
            raise InvalidShapeError("expand3 must be 3x3 with pad 1")

    @property
    def param_count(self) -> int:
        return (self.squeeze.param_count + self.expand1.param_count
                + self.expand3.param_count)

    @property
    def bn_param_count(self) -> int:
        return (self.bn_squeeze.param_count + self.bn_expand1.param_count
                + self.bn_expand3.param_count)


def fire_spec(in_ch: int, e: int, *, rng: np.random.Generator,
              bn_momentum: float = 0.9, bn_eps: float = 1e-5,
              dtype=np.float32) -> FireSpec:
    if e % SQUEEZE_RATIO != 0:
        raise ContractError(f"expand filter total must be divisible by {SQUEEZE_RATIO}, got {e}")
    s = e // SQUEEZE_RATIO
    half = e // 2
    return FireSpec(
        in_ch=in_ch, e=e, s=s,
        squeeze=conv2d_params(in_ch, s, 1, rng=rng, dtype=dtype),
        expand1=conv2d_params(s, half, 1, rng=rng, dtype=dtype),
        expand3=conv2d_params(s, half, 3, padding=1, rng=rng, dtype=dtype),
        bn_squeeze=batch_norm_params(s, momentum=bn_momentum, epsilon=bn_eps, dtype=dtype),
        bn_expand1=batch_norm_params(half, momentum=bn_momentum, epsilon=bn_eps, dtype=dtype),
        bn_expand3=batch_norm_params(half, momentum=bn_momentum, epsilon=bn_eps, dtype=dtype),
    )


def fire_forward(x: Tensor, spec: FireSpec, mode: str) -> Tensor:
    """Spatial size is preserved; output has spec.e channels."""
    if len(x.shape) != 4 or x.shape[1] != spec.in_ch:
        raise InvalidShapeError(
            f"fire module expects {spec.in_ch} channels, got shape {x.shape}"
        )
    z = leaky_relu(batch_norm(conv2d(x, spec.squeeze), spec.bn_squeeze, mode))
    y1 = leaky_relu(batch_norm(conv2d(z, spec.expand1), spec.bn_expand1, mode))
    y3 = leaky_relu(batch_norm(conv2d(z, spec.expand3), spec.bn_expand3, mode))
    return concat_channels([y1, y3])


def fire_param_count(spec: FireSpec) -> int:
    """Conv weights and biases only, matching the architecture table."""
    return spec.param_count
