"""Dataset ingestion, subject-aware validation splitting, synthetic textures.

Directory layout: ``root/train/{live,fake}`` and optionally
``root/test/{live,fake}``, holding 8-bit grayscale PNG or PGM files. The
optional filename convention ``<subject>_<anything>[__<material>].png``
carries subject and spoof-material metadata; absent tags become material
"unknown". Pixels are scaled by 1/255 into [0, 1]; images are never resized.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy.ndimage import gaussian_filter

from .errors import ContractError, DatasetLayoutError, ImageDecodeError
from .model import min_input_extent

log = logging.getLogger(__name__)

LIVE, FAKE = 0, 1
LABEL_NAMES = {LIVE: "live", FAKE: "fake"}
_EXTENSIONS = (".png", ".pgm")
_SYNTH_MATERIALS = ("gelatin", "silicone", "latex", "woodglue")


@dataclass
class Sample:
    """One labeled image held in memory, pixels in [0, 1], shape (1, H, W)."""

    image: np.ndarray
    label: int
    material: str = "unknown"
    subject: Optional[str] = None
    source_path: Optional[str] = None


@dataclass
class Entry:
    """Manifest record: metadata only, pixels stay on disk until needed."""

    path: Path
    label: int
    subject: Optional[str]
    material: str
    size: Tuple[int, int]  # (H, W)


@dataclass
class DatasetManifest:
    root: Path
    train: List[Entry] = field(default_factory=list)
    test: List[Entry] = field(default_factory=list)

    def counts(self, split: str = "train") -> Tuple[int, int]:
        entries = self.train if split == "train" else self.test
        return (sum(1 for e in entries if e.label == LIVE),
                sum(1 for e in entries if e.label == FAKE))

    def size_histogram(self) -> Counter:
        return Counter(e.size for e in self.train + self.test)


def parse_name(filename: str) -> Tuple[Optional[str], str]:
    """Extract (subject, material) from the filename convention."""
    stem = Path(filename).stem
    material = "unknown"
    if "__" in stem:
        stem, material = stem.rsplit("__", 1)
    subject = stem.split("_", 1)[0] if "_" in stem else None
    return subject, material


def _probe_size(path: Path) -> Tuple[int, int]:
    try:
        with Image.open(path) as im:
            w, h = im.size
        return h, w
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        raise ImageDecodeError(f"cannot decode image {path}: {e}") from None


def load_image(path) -> np.ndarray:
    """Decode to a (1, H, W) float32 array of k/255 values."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.mode != "L":
                if im.mode in ("I", "I;16", "I;16B", "F"):
                    raise ImageDecodeError(
                        f"{path}: only 8-bit grayscale images are supported (mode {im.mode})"
                    )
                log.warning("converting color image %s to luminance", path)
                im = im.convert("L")
            arr = np.asarray(im, dtype=np.float32) / 255.0
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        raise ImageDecodeError(f"cannot decode image {path}: {e}") from None
    if arr.ndim != 2:
        raise ImageDecodeError(f"{path}: expected a single-channel image")
    return arr[None, :, :]


def save_image(path, image: np.ndarray):
    """Write a (1, H, W) float array in [0, 1] as an 8-bit grayscale PNG."""
    arr = np.asarray(image)
    if arr.ndim == 3:
        arr = arr[0]
    data = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path, format="PNG")


def _scan_class_dir(root: Path, split: str, label: int) -> List[Entry]:
    d = root / split / LABEL_NAMES[label]
    if not d.is_dir():
        raise DatasetLayoutError(f"missing class directory {d}")
    files = sorted(p for p in d.iterdir()
                   if p.is_file() and p.suffix.lower() in _EXTENSIONS)
    if not files:
        raise DatasetLayoutError(f"class directory {d} contains no images")
    entries = []
    for p in files:
        subject, material = parse_name(p.name)
        entries.append(Entry(path=p, label=label, subject=subject,
                             material=material, size=_probe_size(p)))
    return entries


def load_dataset(root) -> DatasetManifest:
    """Scan the directory tree into a manifest; pixel data stays lazy."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetLayoutError(f"dataset root {root} is not a directory")
    manifest = DatasetManifest(root=root)
    for label in (LIVE, FAKE):
        manifest.train += _scan_class_dir(root, "train", label)
    if (root / "test").is_dir():
        for label in (LIVE, FAKE):
            manifest.test += _scan_class_dir(root, "test", label)
    return manifest


def load_sample(entry: Entry) -> Sample:
    return Sample(image=load_image(entry.path), label=entry.label,
                  material=entry.material, subject=entry.subject,
                  source_path=str(entry.path))


def export_manifest(manifest: DatasetManifest, path):
    """Write `path,label,subject,material` lines for every entry."""
    with open(path, "w", encoding="utf-8") as fh:
        for e in manifest.train + manifest.test:
            subject = e.subject or ""
            fh.write(f"{e.path},{LABEL_NAMES[e.label]},{subject},{e.material}\n")


# --- validation splitting -----------------------------------------------------


def _stratified_split(entries: Sequence, val_fraction: float,
                      rng: np.random.Generator):
    train, val = [], []
    for label in (LIVE, FAKE):
        cls = [e for e in entries if e.label == label]
        target = int(round(val_fraction * len(cls)))
        order = rng.permutation(len(cls))
        picked = {int(i) for i in order[:target]}
        for i, e in enumerate(cls):
            (val if i in picked else train).append(e)
    return train, val


def _subject_split(entries: Sequence, val_fraction: float,
                   rng: np.random.Generator):
    """Greedy subject-disjoint split; None when no assignment lands within
    one sample of the per-class targets."""
    subjects = sorted({e.subject for e in entries})
    by_subject = {s: [e for e in entries if e.subject == s] for s in subjects}
    targets = {label: int(round(val_fraction * sum(1 for e in entries if e.label == label)))
               for label in (LIVE, FAKE)}
    counts = {LIVE: 0, FAKE: 0}
    chosen = set()
    for si in rng.permutation(len(subjects)):
        s = subjects[int(si)]
        add = Counter(e.label for e in by_subject[s])
        if any(counts[l] + add.get(l, 0) > targets[l] + 1 for l in (LIVE, FAKE)):
            continue
        if all(counts[l] >= targets[l] for l in (LIVE, FAKE)):
            break
        chosen.add(s)
        for l in (LIVE, FAKE):
            counts[l] += add.get(l, 0)
    if any(abs(counts[l] - targets[l]) > 1 for l in (LIVE, FAKE)):
        return None
    train = [e for e in entries if e.subject not in chosen]
    val = [e for e in entries if e.subject in chosen]
    return train, val


def split_validation(entries: Sequence, val_fraction: float, seed: int):
    """Deterministic stratified split, subject-disjoint whenever possible.

    Accepts manifest entries or samples (anything with label and subject).
    Falls back to a per-image stratified split, with a logged warning, when
    subjects are missing or subject groups cannot hit the per-class targets.
    """
    if not 0 < val_fraction < 1:
        raise ContractError(f"val_fraction must be in (0,1), got {val_fraction}")
    entries = list(entries)
    rng = np.random.default_rng([seed, 3])
    if all(e.subject is not None for e in entries) and entries:
        result = _subject_split(entries, val_fraction, rng)
        if result is not None:
            return result
        log.warning("subject-disjoint split cannot match the requested "
                    "fraction; falling back to per-image stratified split")
    return _stratified_split(entries, val_fraction, rng)


# --- synthetic texture generator ----------------------------------------------


def synth_textures(n_per_class: int, size: Tuple[int, int], seed: int,
                   subject_prefix: str = "s") -> List[Sample]:
    """Deterministic two-class texture set that stands in for sensor data.

    "live" images are oriented sinusoidal ridge fields plus strong
    high-frequency speckle; "fake" images are the same ridge construction
    low-pass blurred with most of the speckle removed, mimicking the
    smoothing of spoof materials. Pixels are quantized to the 8-bit grid so
    in-memory samples match their PNG round trip exactly.
    """
    h, w = int(size[0]), int(size[1])
    min_hw = min_input_extent()
    if h < min_hw or w < min_hw:
        raise ContractError(f"size must be at least {min_hw}x{min_hw}, got {h}x{w}")
    if n_per_class < 1:
        raise ContractError("n_per_class must be >= 1")
    rng = np.random.default_rng([seed, 2])
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float32)
    samples = []
    for label in (LIVE, FAKE):
        for i in range(n_per_class):
            theta = rng.uniform(0.0, np.pi)
            period = rng.uniform(6.0, 12.0)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            ridge = 0.5 + 0.35 * np.sin(
                (2.0 * np.pi / period) * (xs * np.cos(theta) + ys * np.sin(theta))
                + phase
            )
            if label == LIVE:
                img = ridge + 0.18 * rng.standard_normal((h, w))
                material = "unknown"
            else:
                sigma = rng.uniform(1.5, 2.5)
                img = gaussian_filter(ridge, sigma) + 0.05 * rng.standard_normal((h, w))
                material = _SYNTH_MATERIALS[i % len(_SYNTH_MATERIALS)]
            img = np.clip(img, 0.0, 1.0).astype(np.float32)
            img = np.rint(img * 255.0) / np.float32(255.0)
            samples.append(Sample(
                image=img[None, :, :].astype(np.float32),
                label=label,
                material=material,
                subject=f"{subject_prefix}{i:03d}",
            ))
    return samples


def sample_filename(sample: Sample, index: int) -> str:
    """Filename carrying the subject and material metadata of a sample."""
    base = f"{sample.subject}_{index:04d}"
    if sample.label == FAKE and sample.material != "unknown":
        base += f"__{sample.material}"
    return base + ".png"


def write_synth_dataset(out_dir, n_per_class: int, size: Tuple[int, int], seed: int):
    """Materialize a synthetic train + test tree usable by the trainer.

    train/ gets n_per_class images per class, test/ gets half that (at least
    one), drawn with disjoint subjects and an independent seed stream.
    """
    out = Path(out_dir)
    train = synth_textures(n_per_class, size, seed, subject_prefix="s")
    test = synth_textures(max(1, n_per_class // 2), size, seed + 1, subject_prefix="t")
    for split, samples in (("train", train), ("test", test)):
        for label in (LIVE, FAKE):
            (out / split / LABEL_NAMES[label]).mkdir(parents=True, exist_ok=True)
        for i, s in enumerate(samples):
            path = out / split / LABEL_NAMES[s.label] / sample_filename(s, i)
            save_image(path, s.image)
    return out
