"""Training loop: shuffled mini-batches, Adamax, plateau halving, flips.

Mini-batches keep the configured sample count even when images differ in
size: a batch is processed as same-size sub-groups whose gradients accumulate
before the single optimizer step, so no image is ever resized.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import checkpoint
from .config import TrainConfig
from .data import Sample
from .errors import ContractError, InvalidShapeError
from .model import (GramNet, forward, min_input_extent, named_tensors,
                    trainable_tensors)
from .ops import softmax_cross_entropy, softmax_probs
from .optim import adamax_step, init_adamax, plateau_schedule, zero_grads
from .tensor import Tape, Tensor, scale

LOG_HEADER = "epoch,train_loss,val_loss,lr,seconds"


@dataclass
class EpochEvent:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    seconds: float

    def csv_row(self) -> str:
        return (f"{self.epoch},{self.train_loss:.9g},{self.val_loss:.9g},"
                f"{self.lr:.9g},{self.seconds:.3f}")


def augment(batch: Sequence[np.ndarray], cfg: TrainConfig,
            rng: np.random.Generator) -> List[np.ndarray]:
    """Independently flip each image with probability 0.5 per enabled axis."""
    out = []
    for img in batch:
        if cfg.augment_hflip and rng.random() < 0.5:
            img = img[:, :, ::-1]
        if cfg.augment_vflip and rng.random() < 0.5:
            img = img[:, ::-1, :]
        out.append(np.ascontiguousarray(img))
    return out


def _size_groups(indices: Sequence[int], samples: Sequence[Sample]):
    """Group indices by image size, preserving first-seen order."""
    groups: dict = {}
    for i in indices:
        groups.setdefault(samples[i].image.shape, []).append(i)
    return list(groups.values())


def evaluate(net: GramNet, samples: Sequence[Sample], batch_size: int = 8):
    """Inference-mode mean loss, accuracy, and P(fake) scores."""
    if not samples:
        raise ContractError("cannot evaluate an empty sample list")
    losses = np.zeros(len(samples))
    scores = np.zeros(len(samples))
    for group in _size_groups(range(len(samples)), samples):
        for start in range(0, len(group), batch_size):
            idx = group[start:start + batch_size]
            x = Tensor(np.stack([samples[i].image for i in idx]))
            labels = np.array([samples[i].label for i in idx])
            logits = forward(net, x, mode="infer")
            probs = softmax_probs(logits.data)
            ll = -np.log(np.maximum(probs[np.arange(len(idx)), labels], 1e-38))
            for j, i in enumerate(idx):
                losses[i] = ll[j]
                scores[i] = probs[j, 1]
    labels = np.array([s.label for s in samples])
    accuracy = float(np.mean((scores >= 0.5) == (labels == 1)))
    return float(losses.mean()), accuracy, scores


def _snapshot(net: GramNet) -> dict:
    return {k: t.data.copy() for k, t in named_tensors(net).items()}


def _restore(net: GramNet, snap: dict):
    for k, t in named_tensors(net).items():
        t.data[...] = snap[k]


def fit(net: GramNet, train_set: Sequence[Sample], val_set: Sequence[Sample],
        cfg: TrainConfig, sink: Optional[Callable[[EpochEvent], None]] = None,
        out_dir=None):
    """Train for cfg.epochs epochs and return (best_net, events).

    The parameters (and running statistics) of the best-validation-loss epoch
    are retained and restored into the returned network. With ``out_dir`` the
    best and last checkpoints plus a CSV training log are written there.
    """
    cfg.validate()
    train_set = list(train_set)
    if not train_set or not val_set:
        raise ContractError("train and validation sets must be non-empty")
    min_hw = min_input_extent()
    for s in train_set + list(val_set):
        if s.image.ndim != 3 or s.image.shape[0] != 1:
            raise ContractError("samples must be (1, H, W) grayscale images")
        if s.image.shape[1] < min_hw or s.image.shape[2] < min_hw:
            raise InvalidShapeError(
                f"image {s.source_path or '<in-memory sample>'} is "
                f"{s.image.shape[1]}x{s.image.shape[2]}, below the minimum "
                f"input size {min_hw}x{min_hw}"
            )

    rng = np.random.default_rng([cfg.seed, 1])
    params = trainable_tensors(net)
    state = init_adamax(params)
    lr = cfg.lr
    events: List[EpochEvent] = []
    history: List[float] = []
    best_val = float("inf")
    best_snap = _snapshot(net)

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = [int(i) for i in rng.permutation(len(train_set))]
        loss_sum = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch_idx = order[start:start + cfg.batch_size]
            images = augment([train_set[i].image for i in batch_idx], cfg, rng)
            labels = [train_set[i].label for i in batch_idx]
            zero_grads(params)
            by_size: dict = {}
            for img, lab in zip(images, labels):
                by_size.setdefault(img.shape, []).append((img, lab))
            for group in by_size.values():
                x = Tensor(np.stack([img for img, _ in group]))
                y = np.array([lab for _, lab in group])
                try:
                    with Tape() as tape:
                        logits = forward(net, x, mode="train")
                        loss = softmax_cross_entropy(logits, y)
                        weighted = scale(loss, len(group) / len(batch_idx))
                except ContractError as e:
                    raise ContractError(
                        f"{e} (size group of {len(group)} image(s) of shape "
                        f"{x.shape[2]}x{x.shape[3]}; small images need "
                        f"sub-batches of at least 2 same-size samples in "
                        f"train mode)"
                    ) from None
                tape.backward(weighted)
                loss_sum += float(loss.data[0]) * len(group)
            adamax_step(params, state, lr, cfg.beta1, cfg.beta2, cfg.adamax_eps)
        train_loss = loss_sum / len(order)
        val_loss, _, _ = evaluate(net, val_set, cfg.batch_size)
        seconds = time.perf_counter() - t0

        if val_loss < best_val:
            best_val = val_loss
            best_snap = _snapshot(net)
        event = EpochEvent(epoch, train_loss, val_loss, lr, seconds)
        events.append(event)
        if sink is not None:
            sink(event)
        history.append(val_loss)
        lr = plateau_schedule(history, cfg.plateau_patience, cfg.lr_factor, lr)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        opt_records = adamax_records(state)
        checkpoint.save(net, out / "last.grmn", opt_records)
        _restore(net, best_snap)
        checkpoint.save(net, out / "best.grmn")
        write_log(events, out / "train_log.csv")
    else:
        _restore(net, best_snap)
    return net, events


def adamax_records(state) -> dict:
    """Flatten optimizer state into named float32 records for checkpointing."""
    records = {"opt.step": np.array([state.t], dtype=np.float32)}
    for name, arr in state.m.items():
        records[f"opt.m.{name}"] = arr
    for name, arr in state.u.items():
        records[f"opt.u.{name}"] = arr
    return records


def write_log(events: Sequence[EpochEvent], path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(LOG_HEADER + "\n")
        for e in events:
            fh.write(e.csv_row() + "\n")
