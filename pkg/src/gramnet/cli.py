"""Command-line interface: train / eval / predict / inspect / det / synth.

Exit codes: 0 success, 1 runtime or data error, 2 usage error. Diagnostics go
to stderr; machine-readable output goes to files or stdout. The environment
variable GRAMNET_THREADS caps the numeric kernels' internal parallelism (it
must be set before numpy is first imported, which the entry point ensures).
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path


def _apply_thread_cap():
    cap = os.environ.get("GRAMNET_THREADS")
    if cap:
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, cap)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gramnet",
        description="Texture-based fake-fingerprint detector: training, "
                    "evaluation, and architecture inspection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on a dataset directory")
    p.add_argument("--data", required=True, help="dataset root (train/live, train/fake)")
    p.add_argument("--out", required=True, help="output directory for checkpoints and logs")
    p.add_argument("--config", help="config file of `key = value` lines")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--lr", type=float, help="override the learning rate")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--epochs", type=int)
    p.add_argument("--val-fraction", type=float, dest="val_fraction")
    p.add_argument("--no-hflip", action="store_true", help="disable horizontal flips")
    p.add_argument("--vflip", action="store_true", help="enable vertical flips")
    p.add_argument("--gram-normalize", action="store_true",
                   help="divide gram entries by the spatial area")

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--materials", help="comma-separated material filter")
    p.add_argument("--out", default=".", help="where to write scores.csv and det.csv")

    p = sub.add_parser("predict", help="classify one image")
    p.add_argument("--image", required=True)
    p.add_argument("--ckpt", required=True)

    p = sub.add_parser("inspect", help="print the layer/parameter table")
    p.add_argument("--ckpt", help="optionally verify and report a checkpoint")

    p = sub.add_parser("det", help="render a DET curve from a score file")
    p.add_argument("--scores", required=True)
    p.add_argument("--out", required=True, help="output prefix for .csv and .svg")

    p = sub.add_parser("synth", help="generate a synthetic texture dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True, help="training images per class")
    p.add_argument("--size", default="64x64", help="HxW, e.g. 64x64")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _parse_size(text: str):
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise SystemExit(2)


def _resolved_config(args):
    from .config import TrainConfig, config_from_text

    cfg = TrainConfig()
    if args.config:
        cfg = config_from_text(Path(args.config).read_text(encoding="utf-8"), cfg)
    overrides = {}
    for name in ("seed", "lr", "batch_size", "epochs", "val_fraction"):
        v = getattr(args, name, None)
        if v is not None:
            overrides[name] = v
    if args.no_hflip:
        overrides["augment_hflip"] = False
    if args.vflip:
        overrides["augment_vflip"] = True
    if args.gram_normalize:
        overrides["gram_normalize"] = True
    return dataclasses.replace(cfg, **overrides)


def cmd_train(args) -> int:
    from .config import config_to_text
    from .data import load_dataset, load_sample, split_validation
    from .model import build
    from .train import fit

    cfg = _resolved_config(args)
    manifest = load_dataset(args.data)
    train_entries, val_entries = split_validation(manifest.train, cfg.val_fraction, cfg.seed)
    if not train_entries or not val_entries:
        print(f"error: split left an empty train or validation set "
              f"({len(train_entries)}/{len(val_entries)})", file=sys.stderr)
        return 1
    train_set = [load_sample(e) for e in train_entries]
    val_set = [load_sample(e) for e in val_entries]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config_used.txt").write_text(config_to_text(cfg), encoding="utf-8")

    net = build(cfg.seed, cfg)

    def sink(ev):
        print(f"epoch {ev.epoch:3d}  train {ev.train_loss:.4f}  "
              f"val {ev.val_loss:.4f}  lr {ev.lr:.6g}  {ev.seconds:.1f}s",
              file=sys.stderr)

    fit(net, train_set, val_set, cfg, sink=sink, out_dir=out)
    return 0


def cmd_eval(args) -> int:
    from . import checkpoint
    from .data import load_dataset, load_sample
    from .metrics import (ScoreRecord, ScoreSet, ace, det_curve, detection_rate,
                          error_rates, write_det_csv, write_scores)
    from .model import fake_probability
    from .tensor import Tensor

    net = checkpoint.load(args.ckpt)
    manifest = load_dataset(args.data)
    if not manifest.test:
        print(f"error: {args.data} has no test split", file=sys.stderr)
        return 1
    records = []
    for entry in manifest.test:
        sample = load_sample(entry)
        score = float(fake_probability(net, Tensor(sample.image[None]))[0])
        records.append(ScoreRecord(score=score, label=entry.label,
                                   material=entry.material, path=str(entry.path)))
    scores = ScoreSet(records=records)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_scores(scores, out / "scores.csv")
    write_det_csv(det_curve(scores), out / "det.csv")

    fl, ff = error_rates(scores, args.threshold)
    print(f"Ferrlive: {fl:.2f}%")
    print(f"Ferrfake: {ff:.2f}%")
    print(f"ACE: {ace(fl, ff):.2f}%")
    materials = ([m.strip() for m in args.materials.split(",") if m.strip()]
                 if args.materials else scores.materials())
    for material in materials:
        rate = detection_rate(scores, {material}, args.threshold)
        print(f"detection rate [{material}]: {rate:.2f}%")
    return 0


def cmd_predict(args) -> int:
    from . import checkpoint
    from .data import load_image
    from .model import fake_probability
    from .tensor import Tensor

    net = checkpoint.load(args.ckpt)
    img = load_image(args.image)
    p = float(fake_probability(net, Tensor(img[None]))[0])
    label = "fake" if p >= 0.5 else "live"
    print(f"label={label} p_fake={p:.6f}")
    return 0


def cmd_inspect(args) -> int:
    from . import checkpoint
    from .model import build, count_params, format_report

    net = checkpoint.load(args.ckpt) if args.ckpt else build(0)
    print(format_report(count_params(net)))
    return 0


def cmd_det(args) -> int:
    from .metrics import det_curve, read_scores, write_det_csv, write_det_svg

    curve = det_curve(read_scores(args.scores))
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    write_det_csv(curve, prefix.with_suffix(".csv"))
    write_det_svg(curve, prefix.with_suffix(".svg"))
    return 0


def cmd_synth(args) -> int:
    from .data import write_synth_dataset

    if args.n < 1:
        print("error: --n must be >= 1", file=sys.stderr)
        return 2
    write_synth_dataset(args.out, args.n, _parse_size(args.size), args.seed)
    return 0


_COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "inspect": cmd_inspect,
    "det": cmd_det,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    _apply_thread_cap()
    args = _build_parser().parse_args(argv)
    from .errors import GramnetError

    try:
        return _COMMANDS[args.command](args)
    except GramnetError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
