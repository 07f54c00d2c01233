"""Bit-exact binary checkpoints for network parameters and optimizer state.

Layout (all integers little-endian):

    magic "GRMN" | u32 version (=1) | u64 architecture hash | u32 record count
    record*      : u16 name length | name utf-8 | u8 dtype tag (0 = float32)
                   | u8 rank | rank x u32 extents | raw little-endian values
    optional     : marker "OPT0" | u32 record count | record*   (optimizer)
"""
from __future__ import annotations

import struct
from typing import Optional, Tuple

import numpy as np

from .errors import CheckpointFormatError, IncompatibleCheckpointError
from .model import (GramNet, arch_descriptors, arch_hash, batch_norm_layers,
                    build, fnv1a64, named_tensors)

MAGIC = b"GRMN"
OPT_MARKER = b"OPT0"
VERSION = 1
DTYPE_F32 = 0


def _pack_record(name: str, arr: np.ndarray) -> bytes:
    nb = name.encode("utf-8")
    if len(nb) > 0xFFFF:
        raise CheckpointFormatError(f"record name too long: {name!r}")
    if arr.ndim < 1 or arr.ndim > 255:
        raise CheckpointFormatError(f"cannot serialize rank-{arr.ndim} tensor {name!r}")
    out = [struct.pack("<H", len(nb)), nb,
           struct.pack("<BB", DTYPE_F32, arr.ndim)]
    out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
    out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointFormatError(
                f"truncated checkpoint: wanted {n} bytes at offset {self.pos}, "
                f"file has {len(self.blob)}"
            )
        piece = self.blob[self.pos:self.pos + n]
        self.pos += n
        return piece

    @property
    def exhausted(self) -> bool:
        return self.pos == len(self.blob)


def _read_record(r: _Reader) -> Tuple[str, np.ndarray]:
    (nlen,) = struct.unpack("<H", r.take(2))
    try:
        name = r.take(nlen).decode("utf-8")
    except UnicodeDecodeError as e:
        raise CheckpointFormatError(f"record name is not valid utf-8: {e}") from None
    dtype_tag, rank = struct.unpack("<BB", r.take(2))
    if dtype_tag != DTYPE_F32:
        raise CheckpointFormatError(f"unknown dtype tag {dtype_tag} for {name!r}")
    if rank < 1:
        raise CheckpointFormatError(f"record {name!r} has rank 0")
    extents = struct.unpack(f"<{rank}I", r.take(4 * rank))
    if any(e < 1 for e in extents):
        raise CheckpointFormatError(f"record {name!r} has a zero extent")
    count = int(np.prod(extents))
    raw = r.take(4 * count)
    arr = np.frombuffer(raw, dtype="<f4").reshape(extents).astype(np.float32)
    return name, arr


def save(net: GramNet, path, opt_records: Optional[dict] = None):
    """Write all parameters and running statistics; optionally optimizer state."""
    tensors = named_tensors(net)
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<Q", arch_hash(net)),
             struct.pack("<I", len(tensors))]
    for name, t in tensors.items():
        parts.append(_pack_record(name, t.data))
    if opt_records is not None:
        parts.append(OPT_MARKER)
        parts.append(struct.pack("<I", len(opt_records)))
        for name, arr in opt_records.items():
            parts.append(_pack_record(name, np.asarray(arr, dtype=np.float32)))
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load(path, with_optimizer: bool = False):
    """Rebuild the network from a checkpoint.

    Returns the net, or ``(net, opt_records_or_None)`` with ``with_optimizer``.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    r = _Reader(blob)
    if r.take(4) != MAGIC:
        raise CheckpointFormatError("bad magic bytes: not a GRMN checkpoint")
    (version,) = struct.unpack("<I", r.take(4))
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    (file_hash,) = struct.unpack("<Q", r.take(8))
    (count,) = struct.unpack("<I", r.take(4))
    records = dict(_read_record(r) for _ in range(count))

    opt_records = None
    if not r.exhausted:
        if r.take(4) != OPT_MARKER:
            raise CheckpointFormatError("trailing bytes are not an optimizer section")
        (ocount,) = struct.unpack("<I", r.take(4))
        opt_records = dict(_read_record(r) for _ in range(ocount))
        if not r.exhausted:
            raise CheckpointFormatError("unexpected bytes after optimizer section")

    net = _net_for_hash(file_hash)
    tensors = named_tensors(net)
    if set(records) != set(tensors):
        missing = sorted(set(tensors) - set(records))[:3]
        extra = sorted(set(records) - set(tensors))[:3]
        raise CheckpointFormatError(
            f"record names do not match the architecture "
            f"(missing {missing}, extra {extra})"
        )
    for name, t in tensors.items():
        arr = records[name]
        if arr.shape != t.shape:
            raise CheckpointFormatError(
                f"record {name!r} has shape {arr.shape}, expected {t.shape}"
            )
        t.data[...] = arr
    for bn in batch_norm_layers(net):
        bn.stats_initialized = True
    if with_optimizer:
        return net, opt_records
    return net


def _net_for_hash(file_hash: int) -> GramNet:
    from .config import TrainConfig

    for normalize in (False, True):
        want = fnv1a64("\n".join(arch_descriptors(normalize)).encode("utf-8"))
        if want == file_hash:
            cfg = TrainConfig(gram_normalize=normalize)
            return build(0, cfg)
    raise IncompatibleCheckpointError(
        f"checkpoint architecture hash {file_hash:#018x} does not match this network"
    )
