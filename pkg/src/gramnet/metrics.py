"""Biometric evaluation: Ferrlive, Ferrfake, ACE, DET curves, detection rate.

Score convention: score = P(fake); a sample is classified fake when its score
is at or above the threshold. Ferrlive is the percentage of live samples
classified fake, Ferrfake the percentage of fake samples classified live,
and ACE their arithmetic mean. All percentages are reported to 2 decimals.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Set, Tuple

import numpy as np

from .errors import ContractError

LIVE, FAKE = 0, 1
_LABEL_BY_NAME = {"live": LIVE, "fake": FAKE, "0": LIVE, "1": FAKE}


@dataclass
class ScoreRecord:
    score: float
    label: int
    material: str = "unknown"
    path: str = ""


@dataclass
class ScoreSet:
    records: List[ScoreRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def scores(self, label: Optional[int] = None) -> np.ndarray:
        return np.array([r.score for r in self.records
                         if label is None or r.label == label])

    def materials(self) -> List[str]:
        seen = []
        for r in self.records:
            if r.label == FAKE and r.material not in seen:
                seen.append(r.material)
        return sorted(seen)


@dataclass
class DetCurve:
    """(threshold, ferrlive %, ferrfake %) triples, ascending in threshold."""

    points: List[Tuple[float, float, float]]


def _require_both_classes(s: ScoreSet):
    labels = {r.label for r in s.records}
    if labels != {LIVE, FAKE}:
        raise ContractError("score set must contain both live and fake samples")


def error_rates(s: ScoreSet, threshold: float) -> Tuple[float, float]:
    """(Ferrlive %, Ferrfake %) under `classify fake iff score >= threshold`."""
    _require_both_classes(s)
    live = s.scores(LIVE)
    fake = s.scores(FAKE)
    ferrlive = 100.0 * np.count_nonzero(live >= threshold) / live.size
    ferrfake = 100.0 * np.count_nonzero(fake < threshold) / fake.size
    return float(ferrlive), float(ferrfake)


def ace(ferrlive: float, ferrfake: float) -> float:
    """Average classification error: the mean of the two error percentages."""
    for v in (ferrlive, ferrfake):
        if not 0.0 <= v <= 100.0:
            raise ContractError(f"error rates are percentages in [0,100], got {v}")
    return (ferrlive + ferrfake) / 2.0


def det_curve(s: ScoreSet) -> DetCurve:
    """Sweep the distinct scores plus sentinels below the min and above the max.

    The sentinels contribute the (100, 0) and (0, 100) corner points; with n
    distinct scores the curve has n + 2 points.
    """
    _require_both_classes(s)
    distinct = sorted(set(r.score for r in s.records))
    thresholds = [distinct[0] - 1.0] + distinct + [distinct[-1] + 1.0]
    return DetCurve(points=[(t, *error_rates(s, t)) for t in thresholds])


def detection_rate(s: ScoreSet, materials: Optional[Set[str]] = None,
                   threshold: float = 0.5) -> float:
    """Percentage of (material-filtered) fake samples classified fake."""
    fakes = [r for r in s.records if r.label == FAKE
             and (materials is None or r.material in materials)]
    if not fakes:
        raise ContractError(
            f"no fake samples match materials {sorted(materials or [])}"
        )
    hit = sum(1 for r in fakes if r.score >= threshold)
    return 100.0 * hit / len(fakes)


# --- score file and DET export -------------------------------------------------


def write_scores(s: ScoreSet, path):
    """Text lines `path,label,material,score`."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in s.records:
            label = "live" if r.label == LIVE else "fake"
            fh.write(f"{r.path},{label},{r.material},{r.score:.9g}\n")


def read_scores(path) -> ScoreSet:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("path,"):
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ContractError(f"{path}:{lineno}: expected path,label,material,score")
            p, label, material, score = parts
            if label not in _LABEL_BY_NAME:
                raise ContractError(f"{path}:{lineno}: unknown label {label!r}")
            records.append(ScoreRecord(score=float(score),
                                       label=_LABEL_BY_NAME[label],
                                       material=material, path=p))
    return ScoreSet(records=records)


def write_det_csv(curve: DetCurve, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("threshold,ferrlive,ferrfake\n")
        for t, fl, ff in curve.points:
            fh.write(f"{t:.9g},{fl:.2f},{ff:.2f}\n")


def _svg_panel(curve: DetCurve, limit: float, ox: float, title: str) -> List[str]:
    size, pad = 340.0, 45.0
    span = size - 2 * pad

    def sx(v):
        return ox + pad + span * min(v, limit) / limit

    def sy(v):
        return pad + span * (1.0 - min(v, limit) / limit)

    parts = [f'<g font-family="sans-serif" font-size="11">']
    parts.append(f'<rect x="{ox + pad}" y="{pad}" width="{span}" height="{span}" '
                 f'fill="none" stroke="black"/>')
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        v = frac * limit
        parts.append(f'<text x="{sx(v):.1f}" y="{pad + span + 14:.1f}" '
                     f'text-anchor="middle">{v:g}</text>')
        parts.append(f'<text x="{ox + pad - 6:.1f}" y="{sy(v) + 4:.1f}" '
                     f'text-anchor="end">{v:g}</text>')
    pts = " ".join(f"{sx(ff):.2f},{sy(fl):.2f}" for _, fl, ff in curve.points)
    parts.append(f'<polyline points="{pts}" fill="none" stroke="crimson" '
                 f'stroke-width="1.5"/>')
    parts.append(f'<text x="{ox + pad + span / 2:.1f}" y="{pad + span + 30:.1f}" '
                 f'text-anchor="middle">Ferrfake (%)</text>')
    parts.append(f'<text x="{ox + 12:.1f}" y="{pad + span / 2:.1f}" text-anchor="middle" '
                 f'transform="rotate(-90 {ox + 12:.1f} {pad + span / 2:.1f})">Ferrlive (%)</text>')
    parts.append(f'<text x="{ox + pad + span / 2:.1f}" y="{pad - 10:.1f}" '
                 f'text-anchor="middle">{title}</text>')
    parts.append("</g>")
    return parts


def write_det_svg(curve: DetCurve, path):
    """Two linear-axis views of the tradeoff: 0-100% and a 0-20% zoom."""
    width, height = 700, 360
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" viewBox="0 0 {width} {height}">',
             '<rect width="100%" height="100%" fill="white"/>']
    parts += _svg_panel(curve, 100.0, 0.0, "error range 0-100%")
    parts += _svg_panel(curve, 20.0, 350.0, "error range 0-20%")
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
