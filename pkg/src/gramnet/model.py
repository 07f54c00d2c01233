"""The full liveness network: gram modules tapped off a fire-module trunk.

Wiring: conv1 -> maxpool1 -> fire2 -> maxpool2 -> fire3 -> maxpool3 -> fire4,
with gram1 on the maxpool1 output (96 ch), gram2 on the maxpool2 output
(128 ch) and gram3 on the fire4 output (384 ch). The three 128x128 gram maps
are stacked into an N x 3 x 128 x 128 tensor that feeds the classification
head: fire5 -> maxpool5 -> fire6 -> maxpool6 -> conv10 -> global average
pool -> 2 logits. Because the gram maps have a fixed size, the network
accepts any input above the minimum and never resizes.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import TrainConfig
from .errors import InvalidShapeError
from .fire import SQUEEZE_RATIO, FireSpec, fire_forward, fire_spec
from .gram import GramModuleSpec, gram_module_forward, gram_module_spec
from .ops import (BatchNormParams, Conv2dParams, batch_norm, batch_norm_params,
                  concat_channels, conv2d, conv2d_params, conv_out_extent,
                  global_avg_pool, leaky_relu, maxpool2d, softmax_probs)
from .tensor import Tensor

GRAM_K = 128
POOL_WINDOW = 3
POOL_STRIDE = 2

# (name, expand_total) for the trunk and head fire modules, in forward order.
_TRUNK_FIRES = (("fire2", 96, 128), ("fire3", 128, 256), ("fire4", 256, 384))
_HEAD_FIRES = (("fire5", 3, 128), ("fire6", 128, 256))


@dataclass
class GramNet:
    conv1: Conv2dParams
    bn1: BatchNormParams
    gram1: GramModuleSpec
    fire2: FireSpec
    gram2: GramModuleSpec
    fire3: FireSpec
    fire4: FireSpec
    gram3: GramModuleSpec
    fire5: FireSpec
    fire6: FireSpec
    conv10: Conv2dParams
    bn10: BatchNormParams
    gram_normalize: bool = False


def build(seed: int, cfg: Optional[TrainConfig] = None, dtype=np.float32) -> GramNet:
    """Deterministically initialize all parameters from one seed."""
    cfg = cfg if cfg is not None else TrainConfig()
    rng = np.random.default_rng([seed, 0])
    bn_kw = dict(momentum=cfg.bn_momentum, epsilon=cfg.bn_eps, dtype=dtype)
    gram_kw = dict(rng=rng, normalize=cfg.gram_normalize,
                   bn_momentum=cfg.bn_momentum, bn_eps=cfg.bn_eps, dtype=dtype)
    fire_kw = dict(rng=rng, bn_momentum=cfg.bn_momentum, bn_eps=cfg.bn_eps, dtype=dtype)
    return GramNet(
        conv1=conv2d_params(1, 96, 7, stride=2, padding=3, rng=rng, dtype=dtype),
        bn1=batch_norm_params(96, **bn_kw),
        gram1=gram_module_spec(96, GRAM_K, **gram_kw),
        fire2=fire_spec(96, 128, **fire_kw),
        gram2=gram_module_spec(128, GRAM_K, **gram_kw),
        fire3=fire_spec(128, 256, **fire_kw),
        fire4=fire_spec(256, 384, **fire_kw),
        gram3=gram_module_spec(384, GRAM_K, **gram_kw),
        fire5=fire_spec(3, 128, **fire_kw),
        fire6=fire_spec(128, 256, **fire_kw),
        conv10=conv2d_params(256, 2, 1, rng=rng, dtype=dtype),
        bn10=batch_norm_params(2, **bn_kw),
        gram_normalize=cfg.gram_normalize,
    )


def _pool_out(extent: int) -> int:
    return (extent - POOL_WINDOW) // POOL_STRIDE + 1


def spatial_trace(h: int, w: int) -> list:
    """(stage, h, w) through the trunk; raises where an extent underflows."""
    trace = [("input", h, w)]
    h = conv_out_extent(h, 7, 2, 3)
    w = conv_out_extent(w, 7, 2, 3)
    trace.append(("conv1", h, w))
    for stage in ("maxpool1", "maxpool2", "maxpool3"):
        if h < POOL_WINDOW or w < POOL_WINDOW:
            raise InvalidShapeError(
                f"input too small: stage {stage} would see a {h}x{w} map "
                f"(needs >= {POOL_WINDOW}x{POOL_WINDOW}); minimum input is "
                f"{min_input_extent()}x{min_input_extent()}"
            )
        h, w = _pool_out(h), _pool_out(w)
        trace.append((stage, h, w))
    return trace


@functools.lru_cache(maxsize=1)
def min_input_extent() -> int:
    """Smallest legal H (= W) for the trunk, computed from the layer specs."""
    h = 1
    while True:
        e = conv_out_extent(h, 7, 2, 3)
        ok = e >= 1
        for _ in range(3):
            if e < POOL_WINDOW:
                ok = False
                break
            e = _pool_out(e)
        if ok:
            return h
        h += 1


def forward(net: GramNet, x: Tensor, mode: str = "infer") -> Tensor:
    """Run the network on an N x 1 x H x W batch, returning (N, 2) logits."""
    if len(x.shape) != 4:
        raise InvalidShapeError(f"input must be N x 1 x H x W, got {x.shape}")
    if x.shape[1] != 1:
        raise InvalidShapeError(f"input must have exactly 1 channel, got {x.shape[1]}")
    spatial_trace(x.shape[2], x.shape[3])  # raises naming the failing stage

    t = leaky_relu(batch_norm(conv2d(x, net.conv1), net.bn1, mode))
    t = maxpool2d(t, POOL_WINDOW, POOL_STRIDE)
    g1 = gram_module_forward(t, net.gram1, mode)
    t = fire_forward(t, net.fire2, mode)
    t = maxpool2d(t, POOL_WINDOW, POOL_STRIDE)
    g2 = gram_module_forward(t, net.gram2, mode)
    t = fire_forward(t, net.fire3, mode)
    t = maxpool2d(t, POOL_WINDOW, POOL_STRIDE)
    t = fire_forward(t, net.fire4, mode)
    g3 = gram_module_forward(t, net.gram3, mode)

    head = concat_channels([g1, g2, g3])  # N x 3 x 128 x 128
    head = fire_forward(head, net.fire5, mode)
    head = maxpool2d(head, POOL_WINDOW, POOL_STRIDE)
    head = fire_forward(head, net.fire6, mode)
    head = maxpool2d(head, POOL_WINDOW, POOL_STRIDE)
    head = batch_norm(conv2d(head, net.conv10), net.bn10, mode)  # no activation
    return global_avg_pool(head)


def fake_probability(net: GramNet, x: Tensor) -> np.ndarray:
    """P(fake) per sample from the softmax of the inference logits."""
    logits = forward(net, x, mode="infer")
    return softmax_probs(logits.data)[:, 1]


# --- parameter accounting ----------------------------------------------------


@dataclass
class LayerRow:
    name: str
    output_shape: str
    filters: str
    params: int
    bn_params: int


@dataclass
class LayerReport:
    rows: list
    total_params: int       # conv weights and biases
    total_bn_params: int    # 4 per normalized channel
    bn_channels: int

    @property
    def total_with_bn(self) -> int:
        return self.total_params + self.total_bn_params

    @property
    def size_bytes(self) -> int:
        return 4 * self.total_with_bn


def _fire_filters(spec: FireSpec) -> str:
    return f"s{spec.s}/e1x1 {spec.e // 2}/e3x3 {spec.e // 2}"


def count_params(net: GramNet) -> LayerReport:
    """Per-layer parameter counts derived from the actual tensors."""
    rows = [
        LayerRow("input", "K x K x 1", "", 0, 0),
        LayerRow("conv1", "K/2 x K/2 x 96", "7x7 / 2 (x96)",
                 net.conv1.param_count, net.bn1.param_count),
        LayerRow("maxpool1", "K/4 x K/4 x 96", "3x3 / 2", 0, 0),
        LayerRow("gram1", "128 x 128 x 1", "1x1 (x128)",
                 net.gram1.conv.param_count, net.gram1.bn.param_count),
        LayerRow("fire2", "K/4 x K/4 x 128", _fire_filters(net.fire2),
                 net.fire2.param_count, net.fire2.bn_param_count),
        LayerRow("maxpool2", "K/8 x K/8 x 128", "3x3 / 2", 0, 0),
        LayerRow("gram2", "128 x 128 x 1", "1x1 (x128)",
                 net.gram2.conv.param_count, net.gram2.bn.param_count),
        LayerRow("fire3", "K/8 x K/8 x 256", _fire_filters(net.fire3),
                 net.fire3.param_count, net.fire3.bn_param_count),
        LayerRow("maxpool3", "K/16 x K/16 x 256", "3x3 / 2", 0, 0),
        LayerRow("fire4", "K/16 x K/16 x 384", _fire_filters(net.fire4),
                 net.fire4.param_count, net.fire4.bn_param_count),
        LayerRow("gram3", "128 x 128 x 1", "1x1 (x128)",
                 net.gram3.conv.param_count, net.gram3.bn.param_count),
        LayerRow("concatenation", "128 x 128 x 3", "", 0, 0),
        LayerRow("fire5", "128 x 128 x 128", _fire_filters(net.fire5),
                 net.fire5.param_count, net.fire5.bn_param_count),
        LayerRow("maxpool5", "63 x 63 x 128", "3x3 / 2", 0, 0),
        LayerRow("fire6", "63 x 63 x 256", _fire_filters(net.fire6),
                 net.fire6.param_count, net.fire6.bn_param_count),
        LayerRow("maxpool6", "31 x 31 x 256", "3x3 / 2", 0, 0),
        LayerRow("conv10", "31 x 31 x 2", "1x1 / 1 (x2)",
                 net.conv10.param_count, net.bn10.param_count),
        LayerRow("avgpool10", "1 x 1 x 2", "global avg", 0, 0),
    ]
    total = sum(r.params for r in rows)
    total_bn = sum(r.bn_params for r in rows)
    return LayerReport(rows=rows, total_params=total, total_bn_params=total_bn,
                       bn_channels=total_bn // 4)


def format_report(report: LayerReport) -> str:
    header = f"{'layer':<14}{'output size':<18}{'filters':<26}{'params':>10}{'bn':>8}"
    lines = [header, "-" * len(header)]
    for r in report.rows:
        lines.append(f"{r.name:<14}{r.output_shape:<18}{r.filters:<26}"
                     f"{r.params:>10,}{r.bn_params:>8,}")
    lines.append("-" * len(header))
    lines.append(f"total parameters (conv + bias): {report.total_params:,}")
    lines.append(f"total including batch normalization: {report.total_with_bn:,} "
                 f"({report.total_bn_params:,} over {report.bn_channels:,} channels)")
    lines.append(f"model size at 4 bytes per parameter: {report.size_bytes:,} bytes "
                 f"(~{report.size_bytes / 2**20:.1f} MB)")
    return "\n".join(lines)


# --- named tensors and the architecture hash ---------------------------------


def _conv_entries(prefix: str, p: Conv2dParams):
    return [(f"{prefix}.weight", p.weight), (f"{prefix}.bias", p.bias)]


def _bn_entries(prefix: str, p: BatchNormParams, with_running: bool = True):
    out = [(f"{prefix}.scale", p.scale), (f"{prefix}.shift", p.shift)]
    if with_running:
        out += [(f"{prefix}.running_mean", p.running_mean),
                (f"{prefix}.running_var", p.running_var)]
    return out


def named_tensors(net: GramNet, with_running: bool = True) -> dict:
    """All nameable state in canonical order (checkpoint and optimizer order)."""
    entries = []
    entries += _conv_entries("conv1", net.conv1)
    entries += _bn_entries("conv1.bn", net.bn1, with_running)
    for name, gm in (("gram1", net.gram1), ("gram2", net.gram2), ("gram3", net.gram3)):
        entries += _conv_entries(f"{name}.conv", gm.conv)
        entries += _bn_entries(f"{name}.bn", gm.bn, with_running)
    for name in ("fire2", "fire3", "fire4", "fire5", "fire6"):
        f: FireSpec = getattr(net, name)
        for branch, conv, bn in (("squeeze", f.squeeze, f.bn_squeeze),
                                 ("expand1", f.expand1, f.bn_expand1),
                                 ("expand3", f.expand3, f.bn_expand3)):
            entries += _conv_entries(f"{name}.{branch}", conv)
            entries += _bn_entries(f"{name}.{branch}.bn", bn, with_running)
    entries += _conv_entries("conv10", net.conv10)
    entries += _bn_entries("conv10.bn", net.bn10, with_running)
    return dict(entries)


def trainable_tensors(net: GramNet) -> dict:
    """Weights, biases and batch-norm affine terms; no running statistics."""
    return named_tensors(net, with_running=False)


def batch_norm_layers(net: GramNet) -> list:
    layers = [net.bn1, net.gram1.bn, net.gram2.bn, net.gram3.bn]
    for name in ("fire2", "fire3", "fire4", "fire5", "fire6"):
        f: FireSpec = getattr(net, name)
        layers += [f.bn_squeeze, f.bn_expand1, f.bn_expand3]
    layers.append(net.bn10)
    return layers


def arch_descriptors(gram_normalize: bool) -> list:
    """Ordered layer descriptor strings; the identity the hash protects."""
    norm = int(bool(gram_normalize))
    desc = ["conv1:conv2d(in=1,out=96,k=7,stride=2,pad=3)", "conv1.bn:bn(c=96)"]
    for name, in_ch in (("gram1", 96), ("gram2", 128), ("gram3", 384)):
        desc.append(f"{name}:gram(in={in_ch},k={GRAM_K},normalize={norm})")
    for name, in_ch, e in _TRUNK_FIRES + _HEAD_FIRES:
        desc.append(f"{name}:fire(in={in_ch},e={e},s={e // SQUEEZE_RATIO})")
    desc.append("conv10:conv2d(in=256,out=2,k=1,stride=1,pad=0)")
    desc.append("conv10.bn:bn(c=2)")
    return desc


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a."""
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def arch_hash(net: GramNet) -> int:
    return fnv1a64("\n".join(arch_descriptors(net.gram_normalize)).encode("utf-8"))
