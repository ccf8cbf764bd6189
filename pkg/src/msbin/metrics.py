"""Contest-grade binarization metrics and the ratio-to-best ranking score.

All metrics are reported on the percent scale used by binarization
contests (an F-measure of 81.3 is the number 81.3).  Undefined
configurations (empty ground-truth class, uniform ground truth for DRD)
raise UndefinedMetricError so reports can exclude and annotate them
instead of propagating sentinel values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .imgcore import BinaryImage

METRIC_DIRECTIONS = {"fm": "higher", "nrm": "lower", "drd": "lower", "kappa": "higher"}

DRD_RADIUS = 2
DRD_BLOCK = 8


class UndefinedMetricError(ValueError):
    """Raised when a metric has no defined value for the given inputs."""


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class ImageScores:
    name: str
    fm: float
    nrm: float
    drd: float
    kappa: float


@dataclass
class ScoreReport:
    per_image: list[ImageScores]
    aggregates: dict[str, Optional[float]]


def confusion(b: BinaryImage, gt: BinaryImage) -> ConfusionCounts:
    """Pixel confusion counts of a mask against ground truth (True = ink)."""
    if b.mask.shape != gt.mask.shape:
        raise ValueError(f"mask shape {b.mask.shape} != GT shape {gt.mask.shape}")
    tp = int(np.count_nonzero(b.mask & gt.mask))
    fp = int(np.count_nonzero(b.mask & ~gt.mask))
    fn = int(np.count_nonzero(~b.mask & gt.mask))
    tn = b.mask.size - tp - fp - fn
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def f_measure(c: ConfusionCounts) -> float:
    """Harmonic mean of recall and precision, in percent."""
    if c.tp + c.fn == 0:
        raise UndefinedMetricError("F-measure undefined: ground truth has no ink")
    if c.tp == 0:
        return 0.0
    recall = c.tp / (c.tp + c.fn)
    precision = c.tp / (c.tp + c.fp)
    return 200.0 * recall * precision / (recall + precision)


def nrm(c: ConfusionCounts) -> float:
    """Mean of false-negative and false-positive rates, in percent."""
    if c.tp + c.fn == 0:
        raise UndefinedMetricError("NRM undefined: ground truth has no ink")
    if c.fp + c.tn == 0:
        raise UndefinedMetricError("NRM undefined: ground truth has no background")
    return 50.0 * (c.fn / (c.tp + c.fn) + c.fp / (c.fp + c.tn))


def kappa(c: ConfusionCounts) -> float:
    """Chance-corrected agreement between mask and ground truth, in percent."""
    n = c.total
    n_o = c.tp + c.tn
    n_e = ((c.tp + c.fn) * (c.tp + c.fp) + (c.tn + c.fp) * (c.tn + c.fn)) / n
    if n == n_e:
        raise UndefinedMetricError("kappa undefined: no chance-corrected margin")
    return 100.0 * (n_o - n_e) / (n - n_e)


def _drd_weights() -> list[tuple[int, int, float]]:
    """Inverse-distance 5x5 weights in row-major offset order, center zero."""
    weights = []
    for di in range(-DRD_RADIUS, DRD_RADIUS + 1):
        for dj in range(-DRD_RADIUS, DRD_RADIUS + 1):
            w = 0.0 if (di == 0 and dj == 0) else 1.0 / math.hypot(di, dj)
            weights.append((di, dj, w))
    return weights


_DRD_OFFSETS = _drd_weights()
_DRD_WEIGHT_SUM = math.fsum(w for _, _, w in _DRD_OFFSETS)


def nubn(gt: BinaryImage) -> int:
    """Count non-uniform 8x8 ground-truth blocks (complete blocks only)."""
    h8 = gt.height // DRD_BLOCK
    w8 = gt.width // DRD_BLOCK
    if h8 == 0 or w8 == 0:
        return 0
    blocks = gt.mask[: h8 * DRD_BLOCK, : w8 * DRD_BLOCK]
    blocks = blocks.reshape(h8, DRD_BLOCK, w8, DRD_BLOCK)
    any_ink = blocks.any(axis=(1, 3))
    all_ink = blocks.all(axis=(1, 3))
    return int(np.count_nonzero(any_ink & ~all_ink))


def drd(b: BinaryImage, gt: BinaryImage) -> float:
    """Distance-reciprocal distortion of a mask against ground truth.

    Every mismatching pixel contributes the weighted count of 5x5
    ground-truth neighbors that disagree with the mask's value there
    (weights normalized to sum 1; neighbors outside the image agree by
    convention), and the total is divided by the number of non-uniform
    8x8 ground-truth blocks.
    """
    if b.mask.shape != gt.mask.shape:
        raise ValueError(f"mask shape {b.mask.shape} != GT shape {gt.mask.shape}")
    blocks = nubn(gt)
    if blocks == 0:
        raise UndefinedMetricError("DRD undefined: ground truth has no non-uniform block")

    mismatch = b.mask != gt.mask
    ys, xs = np.nonzero(mismatch)
    if ys.size == 0:
        return 0.0
    h, w = gt.mask.shape
    gtf = gt.mask.astype(np.float64)
    b_vals = b.mask[ys, xs].astype(np.float64)

    terms = np.zeros((ys.size, len(_DRD_OFFSETS)))
    for idx, (di, dj, weight) in enumerate(_DRD_OFFSETS):
        yy = ys + di
        xx = xs + dj
        inside = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        vals = np.zeros(ys.size)
        vals[inside] = np.abs(gtf[yy[inside], xx[inside]] - b_vals[inside])
        terms[:, idx] = weight * vals

    # fsum keeps per-pixel and total sums exactly rounded, so results are
    # independent of pixel visit order
    per_pixel = [math.fsum(row) / _DRD_WEIGHT_SUM for row in terms.tolist()]
    return math.fsum(per_pixel) / blocks


def score_image(name: str, b: BinaryImage, gt: BinaryImage) -> ImageScores:
    c = confusion(b, gt)
    return ImageScores(name=name, fm=f_measure(c), nrm=nrm(c), drd=drd(b, gt),
                       kappa=kappa(c))


def aggregate(per_image: Sequence[ImageScores]) -> dict[str, Optional[float]]:
    """Average and population std per metric, with and without the worst image.

    The "_1" variants drop the single lowest-FM image from all four
    metrics; they are None when fewer than two images are present.
    """
    if not per_image:
        raise ValueError("aggregate requires at least one image")
    out: dict[str, Optional[float]] = {}
    keep: Optional[list[int]] = None
    if len(per_image) >= 2:
        worst = min(range(len(per_image)), key=lambda i: (per_image[i].fm, i))
        keep = [i for i in range(len(per_image)) if i != worst]
    for metric in ("fm", "nrm", "drd", "kappa"):
        values = np.array([getattr(s, metric) for s in per_image])
        out[f"{metric}_avg"] = float(values.mean())
        out[f"{metric}_std"] = float(values.std())
        if keep is None:
            out[f"{metric}_avg_1"] = None
            out[f"{metric}_std_1"] = None
        else:
            out[f"{metric}_avg_1"] = float(values[keep].mean())
            out[f"{metric}_std_1"] = float(values[keep].std())
    return out


def build_report(per_image: Sequence[ImageScores]) -> ScoreReport:
    return ScoreReport(per_image=list(per_image), aggregates=aggregate(per_image))


def ranking_scores(
    values: Mapping[str, Mapping[str, Mapping[str, float]]],
    directions: Mapping[str, str] = METRIC_DIRECTIONS,
) -> tuple[dict[str, float], list[tuple[str, str, str]]]:
    """Ratio-to-best score S per method over shared images and metrics.

    ``values[method][image][metric]`` holds that method's result.  Per
    image and metric the best value across methods contributes 1 to its
    owner; others get best/value (lower-better metrics) or value/best
    (higher-better).  A zero divisor yields a flagged 0 contribution.
    Returns (method -> S, flagged (method, image, metric) triples).
    """
    methods = sorted(values)
    if not methods:
        raise ValueError("ranking requires at least one method")
    images = sorted(values[methods[0]])
    metrics = sorted(directions)
    for m in methods:
        if sorted(values[m]) != images:
            raise ValueError(f"method {m!r} covers a different image set")
        for img in images:
            missing = [x for x in metrics if x not in values[m][img]]
            if missing:
                raise ValueError(f"method {m!r}, image {img!r} lacks metrics {missing}")

    scores = {m: 0.0 for m in methods}
    flagged: list[tuple[str, str, str]] = []
    for img in images:
        for metric in metrics:
            col = [values[m][img][metric] for m in methods]
            best = max(col) if directions[metric] == "higher" else min(col)
            for m, v in zip(methods, col):
                divisor = best if directions[metric] == "higher" else v
                if divisor == 0.0:
                    flagged.append((m, img, metric))
                    continue
                scores[m] += v / best if directions[metric] == "higher" else best / v
    return scores, flagged
