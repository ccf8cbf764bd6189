"""Binarization wrapper around a gray-level kernel.

The wrapper blurs each selected band to damp inter-band misregistration,
sharpens it back with an unsharp mask, converts the band triple to gray,
runs the kernel, and checks the mask for singular outcomes (almost no
ink, mostly ink, or ink trapped in a tiny region).  A failed check
triggers inpainting of extreme-dark outliers and a kernel re-run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

import numpy as np
from scipy import ndimage

from .imgcore import BinaryImage, GrayImage, MsImage
from .kernels import KernelSpec, binarize
from .spectral import ToGrayMethod, to_gray_planes

if TYPE_CHECKING:
    from .bandopt import BandTriple


@dataclass(frozen=True)
class WrapperConfig:
    blur_sigma: float = 0.5
    blur_radius: int = 5
    deblur_sigma: float = 5.0
    deblur_radius: int = 5
    deblur_amount: float = 1.0
    blur_enabled: bool = True
    togray: ToGrayMethod = ToGrayMethod.LUMINANCE
    ratio_min: float = 0.001
    ratio_max: float = 0.60
    bbox_min_frac: float = 0.05
    inpaint_percentile: float = 0.5
    max_retries: int = 1

    def __post_init__(self) -> None:
        if not 0.0 <= self.ratio_min < self.ratio_max <= 1.0:
            raise ValueError("require 0 <= ratio_min < ratio_max <= 1")
        if self.blur_sigma <= 0 or self.deblur_sigma <= 0:
            raise ValueError("sigmas must be positive")
        if not 0.0 < self.inpaint_percentile < 100.0:
            raise ValueError("inpaint_percentile must lie in (0,100)")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    def to_dict(self) -> dict:
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d["togray"] = self.togray.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WrapperConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown wrapper fields: {sorted(unknown)}")
        d = dict(d)
        if "togray" in d:
            d["togray"] = ToGrayMethod(d["togray"])
        return cls(**d)


@dataclass
class SingularityReport:
    passed: bool
    rho: float
    bbox: Optional[tuple[int, int, int, int]]  # (row0, col0, row1, col1) inclusive
    bbox_area_frac: float


@dataclass
class WrapStats:
    """Mutable run diagnostics; pass one in to observe kernel invocations."""

    kernel_invocations: int = 0
    retries: int = 0
    reports: list[SingularityReport] = field(default_factory=list)


def _gaussian(plane: np.ndarray, sigma: float, radius: int) -> np.ndarray:
    return ndimage.gaussian_filter(plane, sigma=sigma, truncate=radius / sigma,
                                   mode="nearest")


def process_band(band: np.ndarray, cfg: WrapperConfig) -> np.ndarray:
    """Blur then unsharp-sharpen one band, clamped to [0,1]."""
    out = band
    if cfg.blur_enabled:
        out = _gaussian(out, cfg.blur_sigma, cfg.blur_radius)
    if cfg.deblur_amount != 0.0:
        low = _gaussian(out, cfg.deblur_sigma, cfg.deblur_radius)
        out = out + cfg.deblur_amount * (out - low)
    return np.clip(out, 0.0, 1.0)


def prepare_bands(
    u: MsImage, cfg: WrapperConfig, bands: Optional[set[int]] = None
) -> dict[int, np.ndarray]:
    """Blur/deblur the requested 1-based bands once, for reuse across triples."""
    indices = sorted(bands) if bands is not None else range(1, u.n_band + 1)
    return {i: process_band(u.band(i), cfg) for i in indices}


def singularity_test(b: BinaryImage, cfg: WrapperConfig) -> SingularityReport:
    """Flag masks whose ink ratio or spread indicates a trapped kernel.

    Fails when the foreground ratio falls outside [ratio_min, ratio_max],
    or when ink exists but its bounding box covers less than
    ``bbox_min_frac`` of the image area.
    """
    total = b.mask.size
    ink = b.ink_count
    rho = ink / total
    bbox = None
    bbox_frac = 0.0
    if ink > 0:
        rows = np.flatnonzero(b.mask.any(axis=1))
        cols = np.flatnonzero(b.mask.any(axis=0))
        bbox = (int(rows[0]), int(cols[0]), int(rows[-1]), int(cols[-1]))
        bbox_frac = ((bbox[2] - bbox[0] + 1) * (bbox[3] - bbox[1] + 1)) / total
    passed = (cfg.ratio_min <= rho <= cfg.ratio_max
              and not (ink > 0 and bbox_frac < cfg.bbox_min_frac))
    return SingularityReport(passed=passed, rho=rho, bbox=bbox, bbox_area_frac=bbox_frac)


def inpaint_outliers(g: GrayImage, percentile: float) -> GrayImage:
    """Replace the darkest ``percentile`` percent of pixels by local context.

    Outliers (strictly above the 100-percentile darkness cut) take the
    Gaussian-weighted (sigma=5, radius=5) mean of surrounding non-outlier
    pixels; everything else is untouched.
    """
    if not 0.0 < percentile < 100.0:
        raise ValueError("percentile must lie in (0,100)")
    plane = g.plane
    cutoff = float(np.percentile(plane, 100.0 - percentile))
    outliers = plane > cutoff
    if not outliers.any():
        return g

    radius, sigma = 5, 5.0
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel_1d = np.exp(-(offsets**2) / (2.0 * sigma**2))
    kernel = np.outer(kernel_1d, kernel_1d)

    valid = (~outliers).astype(np.float64)
    num = ndimage.convolve(plane * valid, kernel, mode="constant", cval=0.0)
    den = ndimage.convolve(valid, kernel, mode="constant", cval=0.0)

    out = plane.copy()
    fixable = outliers & (den > 0.0)
    out[fixable] = num[fixable] / den[fixable]
    return GrayImage(plane=np.clip(out, 0.0, 1.0))


def gray_from_prepared(
    prepared: dict[int, np.ndarray], triple: "BandTriple", cfg: WrapperConfig
) -> GrayImage:
    r, g, b = (prepared[i] for i in triple)
    return GrayImage(plane=np.clip(to_gray_planes(r, g, b, cfg.togray), 0.0, 1.0))


def wrap_binarize_prepared(
    prepared: dict[int, np.ndarray],
    u: MsImage,
    triple: "BandTriple",
    spec: KernelSpec,
    cfg: WrapperConfig,
    stats: Optional[WrapStats] = None,
) -> BinaryImage:
    """Wrapper core over already blur/deblurred bands (see wrap_binarize)."""
    gray = gray_from_prepared(prepared, triple, cfg)
    mask = binarize(gray, spec, ms=u)
    if stats is not None:
        stats.kernel_invocations += 1
    report = singularity_test(mask, cfg)
    if stats is not None:
        stats.reports.append(report)
    retries = 0
    while not report.passed and retries < cfg.max_retries:
        gray = inpaint_outliers(gray, cfg.inpaint_percentile)
        mask = binarize(gray, spec, ms=u)
        retries += 1
        if stats is not None:
            stats.kernel_invocations += 1
            stats.retries += 1
        report = singularity_test(mask, cfg)
        if stats is not None:
            stats.reports.append(report)
    return mask


def wrap_binarize(
    u: MsImage,
    triple: "BandTriple",
    spec: KernelSpec,
    cfg: WrapperConfig,
    stats: Optional[WrapStats] = None,
) -> BinaryImage:
    """Binarize a band triple of ``u`` through the full wrapper pipeline.

    The last mask is returned even if the singularity test still fails
    after ``max_retries`` inpainting attempts.
    """
    prepared = prepare_bands(u, cfg, bands=set(triple))
    return wrap_binarize_prepared(prepared, u, triple, spec, cfg, stats=stats)
