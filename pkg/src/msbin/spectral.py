"""Per-band contrast enhancement and multi-band to gray conversion.

Enhancement is a robust percentile stretch with optional gamma applied
independently to each band.  Gray conversion selects an ordered band
triple playing the (R, G, B) roles and emits a BW10 gray image.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np

from .imgcore import GrayImage, MsImage

if TYPE_CHECKING:
    from .bandopt import BandTriple

LUMINANCE_WEIGHTS = (0.27, 0.67, 0.06)


class ToGrayMethod(enum.Enum):
    LUMINANCE = "luminance"
    GREEN = "green"
    AVERAGE = "average"
    MIN_AVERAGE = "min_average"


@dataclass(frozen=True)
class PreprocessConfig:
    """Percentile-stretch settings applied per band before binarization."""

    p_low: float = 1.0
    p_high: float = 99.0
    gamma: float = 1.0
    enabled: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_low < self.p_high <= 100.0:
            raise ValueError("require 0 <= p_low < p_high <= 100")
        if self.gamma <= 0.0:
            raise ValueError("gamma must be positive")

    def to_dict(self) -> dict:
        return {"p_low": self.p_low, "p_high": self.p_high,
                "gamma": self.gamma, "enabled": self.enabled}

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessConfig":
        unknown = set(d) - {"p_low", "p_high", "gamma", "enabled"}
        if unknown:
            raise ValueError(f"unknown preprocess fields: {sorted(unknown)}")
        return cls(**d)


def enhance_band(band: np.ndarray, cfg: PreprocessConfig) -> np.ndarray:
    """Stretch a band so the p_low..p_high percentile range spans [0,1].

    Values at or below the low percentile map to 0, at or above the high
    percentile to 1, linearly in between, then raised to ``gamma``.  A
    degenerate percentile range (e.g. a constant band) maps to all-0.5,
    signalling absence of contrast.
    """
    lo = float(np.percentile(band, cfg.p_low))
    hi = float(np.percentile(band, cfg.p_high))
    if hi <= lo:
        return np.full_like(band, 0.5)
    stretched = np.clip((band - lo) / (hi - lo), 0.0, 1.0)
    if cfg.gamma != 1.0:
        stretched = stretched**cfg.gamma
    return stretched


def enhance_ms(u: MsImage, cfg: PreprocessConfig) -> MsImage:
    """Apply enhance_band to every band; identity when cfg.enabled is off."""
    if not cfg.enabled:
        return u
    return replace(u, bands=[enhance_band(b, cfg) for b in u.bands])


def to_gray_planes(
    r: np.ndarray, g: np.ndarray, b: np.ndarray, method: ToGrayMethod
) -> np.ndarray:
    """Combine three BW01 planes in (R, G, B) roles into a BW10 plane."""
    if method is ToGrayMethod.LUMINANCE:
        wr, wg, wb = LUMINANCE_WEIGHTS
        return 1.0 - (wr * r + wg * g + wb * b)
    if method is ToGrayMethod.GREEN:
        return 1.0 - g
    if method is ToGrayMethod.AVERAGE:
        return 1.0 - (r + g + b) / 3.0
    if method is ToGrayMethod.MIN_AVERAGE:
        avg = (r + g + b) / 3.0
        return 1.0 - 0.5 * (avg + np.minimum(np.minimum(r, g), b))
    raise ValueError(f"unknown to-gray method {method}")


def to_gray(u: MsImage, triple: "BandTriple", method: ToGrayMethod) -> GrayImage:
    """Convert the ordered band selection (b_R, b_G, b_B) to a gray image."""
    r, g, b = (u.band(i) for i in triple)
    plane = np.clip(to_gray_planes(r, g, b, method), 0.0, 1.0)
    return GrayImage(plane=plane)
