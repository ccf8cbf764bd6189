"""Pluggable gray-level binarization kernels.

Every kernel consumes a BW10 gray image (larger = darker) and produces an
ink mask; thresholds therefore select the high side.  Window statistics
use integral images (sum and sum of squares) with windows clamped to the
image, so each pixel's window mean/std costs O(1).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .imgcore import BinaryImage, GrayImage, MsImage, flip_protocol

HIST_BINS = 256


class UnsupportedKernelError(ValueError):
    """Raised when a kernel's requirements are not met by the input."""


@dataclass(frozen=True)
class KernelSpec:
    """Kernel selection plus parameters; bg_suppressed wraps an inner kernel."""

    kind: str = "sauvola"
    window_radius: int = 15
    k: float = 0.34
    sauvola_R: float = 0.5
    bg_weight: float = 0.5
    inner: Optional["KernelSpec"] = None

    KINDS = ("otsu", "niblack", "sauvola", "bg_suppressed")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.window_radius < 1:
            raise ValueError("window_radius must be >= 1")
        if not 0.0 <= self.bg_weight <= 1.0:
            raise ValueError("bg_weight must lie in [0,1]")
        if self.kind == "bg_suppressed" and self.inner is None:
            raise ValueError("bg_suppressed requires an inner kernel")

    @classmethod
    def niblack(cls, window_radius: int = 15, k: float = -0.2) -> "KernelSpec":
        return cls(kind="niblack", window_radius=window_radius, k=k)

    @classmethod
    def otsu(cls) -> "KernelSpec":
        return cls(kind="otsu")

    @classmethod
    def sauvola(cls, window_radius: int = 15, k: float = 0.34, R: float = 0.5) -> "KernelSpec":
        return cls(kind="sauvola", window_radius=window_radius, k=k, sauvola_R=R)

    @classmethod
    def bg_suppressed(cls, inner: "KernelSpec", bg_weight: float = 0.5) -> "KernelSpec":
        return cls(kind="bg_suppressed", bg_weight=bg_weight, inner=inner)

    def to_dict(self) -> dict:
        if self.kind == "otsu":
            return {"kind": "otsu"}
        if self.kind == "niblack":
            return {"kind": "niblack", "window_radius": self.window_radius, "k": self.k}
        if self.kind == "sauvola":
            return {"kind": "sauvola", "window_radius": self.window_radius,
                    "k": self.k, "R": self.sauvola_R}
        return {"kind": "bg_suppressed", "bg_weight": self.bg_weight,
                "inner": self.inner.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        kind = d.get("kind")
        if kind == "otsu":
            allowed = {"kind"}
        elif kind == "niblack":
            allowed = {"kind", "window_radius", "k"}
        elif kind == "sauvola":
            allowed = {"kind", "window_radius", "k", "R"}
        elif kind == "bg_suppressed":
            allowed = {"kind", "bg_weight", "inner"}
        else:
            raise ValueError(f"unknown kernel kind {kind!r}")
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown kernel fields for {kind}: {sorted(unknown)}")
        if kind == "otsu":
            return cls.otsu()
        if kind == "niblack":
            return cls.niblack(window_radius=int(d.get("window_radius", 15)),
                               k=float(d.get("k", -0.2)))
        if kind == "sauvola":
            return cls.sauvola(window_radius=int(d.get("window_radius", 15)),
                               k=float(d.get("k", 0.34)),
                               R=float(d.get("R", 0.5)))
        return cls.bg_suppressed(inner=cls.from_dict(d["inner"]),
                                 bg_weight=float(d.get("bg_weight", 0.5)))


def intensity_bins(plane: np.ndarray) -> np.ndarray:
    """Quantize [0,1] intensities onto the 256-bin histogram grid."""
    return np.minimum((plane * HIST_BINS).astype(np.int64), HIST_BINS - 1)


def otsu_threshold_bin(plane: np.ndarray) -> Optional[int]:
    """Between-class-variance-maximizing split bin, or None when degenerate.

    The returned bin t is the last background bin: ink is every pixel whose
    bin exceeds t.  Ties take the first maximizing bin.
    """
    hist = np.bincount(intensity_bins(plane).ravel(), minlength=HIST_BINS).astype(np.float64)
    total = hist.sum()
    levels = np.arange(HIST_BINS, dtype=np.float64)
    c0 = np.cumsum(hist)
    s0 = np.cumsum(hist * levels)
    c1 = total - c0
    s1 = s0[-1] - s0
    valid = (c0 > 0) & (c1 > 0)
    if not valid.any():
        return None
    w0 = c0 / total
    w1 = c1 / total
    mu0 = np.divide(s0, c0, out=np.zeros_like(s0), where=c0 > 0)
    mu1 = np.divide(s1, c1, out=np.zeros_like(s1), where=c1 > 0)
    crit = np.where(valid, w0 * w1 * (mu0 - mu1) ** 2, -np.inf)
    return int(np.argmax(crit))


def window_mean_std(plane: np.ndarray, radius: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean and std over (2r+1)^2 windows clamped to the image borders."""
    h, w = plane.shape
    integral = np.zeros((h + 1, w + 1))
    integral[1:, 1:] = plane.cumsum(axis=0).cumsum(axis=1)
    integral_sq = np.zeros((h + 1, w + 1))
    integral_sq[1:, 1:] = (plane * plane).cumsum(axis=0).cumsum(axis=1)

    rows = np.arange(h)
    cols = np.arange(w)
    r0 = np.maximum(rows - radius, 0)
    r1 = np.minimum(rows + radius + 1, h)
    c0 = np.maximum(cols - radius, 0)
    c1 = np.minimum(cols + radius + 1, w)

    def box(table: np.ndarray) -> np.ndarray:
        return (table[np.ix_(r1, c1)] - table[np.ix_(r0, c1)]
                - table[np.ix_(r1, c0)] + table[np.ix_(r0, c0)])

    counts = np.outer(r1 - r0, c1 - c0).astype(np.float64)
    mean = box(integral) / counts
    var = np.maximum(box(integral_sq) / counts - mean * mean, 0.0)
    return mean, np.sqrt(var)


def sauvola_threshold(mu: np.ndarray, sigma: np.ndarray, k: float, R: float) -> np.ndarray:
    """Sauvola local threshold expressed in the ink-high protocol.

    This is the classic ink-low rule m*(1 + k*(s/R - 1)) mapped through
    v -> 1-v, so the threshold rises above the window mean in flat
    regions instead of flooding them; it reduces to mu when sigma
    equals R.
    """
    return mu + k * (1.0 - mu) * (1.0 - sigma / R)


def niblack_threshold(mu: np.ndarray, sigma: np.ndarray, k: float) -> np.ndarray:
    """Niblack local threshold in the ink-high protocol (classic m + k*s
    mapped through v -> 1-v; the conventional k = -0.2 lands 0.2 sigma
    above the window mean)."""
    return mu - k * sigma


def histogram_match(source: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Remap source intensities so their 256-bin CDF follows the reference.

    Each source pixel is sent through its bin's cumulative frequency and
    inverted on the reference CDF with linear interpolation over occupied
    bins (bin value = index/255).
    """
    src_bins = intensity_bins(source)
    src_hist = np.bincount(src_bins.ravel(), minlength=HIST_BINS)
    src_cdf = np.cumsum(src_hist) / source.size

    ref_hist = np.bincount(intensity_bins(reference).ravel(), minlength=HIST_BINS)
    occupied = np.flatnonzero(ref_hist)
    ref_cdf = np.cumsum(ref_hist) / reference.size
    ref_values = occupied / (HIST_BINS - 1.0)

    quantiles = src_cdf[src_bins]
    return np.interp(quantiles, ref_cdf[occupied], ref_values)


def suppress_background(u: MsImage, g: GrayImage, bg_weight: float) -> GrayImage:
    """Subtract the IR-derived background plane from a gray image.

    The background is the pixel-wise mean of bands 7 and 8 flipped to
    BW10 and histogram-matched to ``g``; the weighted match is removed
    and the result clamped to [0,1].
    """
    if u.n_band < 8:
        raise UnsupportedKernelError(
            f"background suppression needs bands 7 and 8; image has {u.n_band}"
        )
    bg = flip_protocol((u.band(7) + u.band(8)) / 2.0)
    matched = histogram_match(bg, g.plane)
    return GrayImage(plane=np.clip(g.plane - bg_weight * matched, 0.0, 1.0))


def binarize(g: GrayImage, spec: KernelSpec, ms: Optional[MsImage] = None) -> BinaryImage:
    """Run a kernel on a BW10 gray image; constant images yield no ink.

    ``ms`` supplies the multispectral context that background-suppressed
    kernels need; plain kernels ignore it.
    """
    plane = g.plane
    if spec.kind == "bg_suppressed":
        if ms is None:
            raise UnsupportedKernelError(
                "bg_suppressed kernel needs the source multispectral image"
            )
        return binarize(suppress_background(ms, g, spec.bg_weight), spec.inner, ms=ms)

    if float(plane.min()) == float(plane.max()):
        return BinaryImage(mask=np.zeros(plane.shape, dtype=bool))

    if spec.kind == "otsu":
        t = otsu_threshold_bin(plane)
        if t is None:
            return BinaryImage(mask=np.zeros(plane.shape, dtype=bool))
        return BinaryImage(mask=intensity_bins(plane) > t)

    mu, sigma = window_mean_std(plane, spec.window_radius)
    if spec.kind == "niblack":
        threshold = niblack_threshold(mu, sigma, spec.k)
    else:
        threshold = sauvola_threshold(mu, sigma, spec.k, spec.sauvola_R)
    return BinaryImage(mask=plane >= threshold)
