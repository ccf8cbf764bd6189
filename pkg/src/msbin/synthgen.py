"""Seeded synthetic multispectral manuscript generator.

Pages are random stroke text over a smooth stained background; each band
darkens the text by a band-dependent absorption, adds verso bleed-through
in the visible bands, band-dependent noise that grows toward the IR end,
and a sub-pixel misregistration shift.  Band-dependent absorption is what
makes band-triple selection non-trivial: some bands carry the text, some
mostly noise.

All randomness derives from counter-based seeds (seed, stream, band), so
outputs are bit-identical regardless of generation order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from PIL import Image
from scipy import ndimage

from .imgcore import BandMeta, BinaryImage, DatasetManifest, MsImage, load_dataset_manifest

_ABSORPTION_8 = [0.80, 0.85, 0.80, 0.70, 0.50, 0.35, 0.22, 0.12]
_NOISE_8 = [0.010, 0.010, 0.012, 0.015, 0.025, 0.035, 0.045, 0.060]
_BLEED_8 = [0.03, 0.15, 0.15, 0.15, 0.15, 0.03, 0.03, 0.03]
_WAVELENGTH_8 = [340.0, 450.0, 550.0, 650.0, 800.0, 900.0, 1000.0, 1100.0]


def _profile(template: Sequence[float], n: int) -> list[float]:
    if n == len(template):
        return list(template)
    grid = np.linspace(0.0, 1.0, len(template))
    return list(np.interp(np.linspace(0.0, 1.0, n), grid, template))


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    width: int = 256
    height: int = 256
    n_band: int = 8
    text_density: float = 0.05
    text_contrast_profile: Optional[tuple[float, ...]] = None
    bleedthrough_strength: Optional[tuple[float, ...]] = None
    noise_sigma_profile: Optional[tuple[float, ...]] = None
    misregistration_px: float = 0.5

    def __post_init__(self) -> None:
        if self.n_band < 3:
            raise ValueError("n_band must be >= 3")
        if not 0.0 <= self.text_density <= 1.0:
            raise ValueError("text_density must lie in [0,1]")
        for prof in (self.text_contrast_profile, self.bleedthrough_strength):
            if prof is not None and any(not 0.0 <= v <= 1.0 for v in prof):
                raise ValueError("profile values must lie in [0,1]")

    def absorption(self) -> list[float]:
        if self.text_contrast_profile is not None:
            self._check_len(self.text_contrast_profile)
            return list(self.text_contrast_profile)
        return _profile(_ABSORPTION_8, self.n_band)

    def bleed(self) -> list[float]:
        if self.bleedthrough_strength is not None:
            self._check_len(self.bleedthrough_strength)
            return list(self.bleedthrough_strength)
        return _profile(_BLEED_8, self.n_band)

    def noise(self) -> list[float]:
        if self.noise_sigma_profile is not None:
            self._check_len(self.noise_sigma_profile)
            return list(self.noise_sigma_profile)
        return _profile(_NOISE_8, self.n_band)

    def _check_len(self, prof: Sequence[float]) -> None:
        if len(prof) != self.n_band:
            raise ValueError(f"profile length {len(prof)} != n_band {self.n_band}")

    def to_dict(self) -> dict:
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        for key in ("text_contrast_profile", "bleedthrough_strength", "noise_sigma_profile"):
            if d[key] is not None:
                d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown synth fields: {sorted(unknown)}")
        d = dict(d)
        for key in ("text_contrast_profile", "bleedthrough_strength", "noise_sigma_profile"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


def _stroke_mask(rng: np.random.Generator, h: int, w: int, density: float) -> np.ndarray:
    """Random-walk stroke mask with roughly the requested ink fraction."""
    mask = np.zeros((h, w), dtype=bool)
    if density <= 0.0:
        return mask
    target = int(round(density * h * w))
    for _ in range(20_000):
        if mask.sum() >= target:
            break
        y = rng.uniform(2, h - 2)
        x = rng.uniform(2, w - 2)
        angle = rng.uniform(0.0, 2.0 * np.pi)
        steps = int(rng.integers(10, 40))
        brush = int(rng.integers(1, 3))
        for _ in range(steps):
            yi, xi = int(y), int(x)
            if not (0 <= yi < h - brush and 0 <= xi < w - brush):
                break
            mask[yi : yi + brush, xi : xi + brush] = True
            angle += rng.normal(0.0, 0.35)
            y += np.sin(angle)
            x += np.cos(angle)
    return mask


def band_wavelengths(n_band: int) -> list[BandMeta]:
    lams = _profile(_WAVELENGTH_8, n_band)
    return [BandMeta(lam, 80.0 if lam < 700.0 else 50.0) for lam in lams]


def generate(cfg: SynthConfig, name: str = "synth") -> tuple[MsImage, BinaryImage]:
    """Render one multispectral page and its ground-truth text mask."""
    h, w = cfg.height, cfg.width
    gt_rng = np.random.default_rng([cfg.seed, 0])
    layout_rng = np.random.default_rng([cfg.seed, 1])

    gt = _stroke_mask(gt_rng, h, w, cfg.text_density)
    hidden = np.fliplr(_stroke_mask(np.random.default_rng([cfg.seed, 4]), h, w,
                                    cfg.text_density * 0.6))
    ink_soft = ndimage.gaussian_filter(gt.astype(np.float64), sigma=0.6)
    hidden_soft = ndimage.gaussian_filter(hidden.astype(np.float64), sigma=1.0)

    yy, xx = np.mgrid[0:h, 0:w]
    angle = layout_rng.uniform(0.0, 2.0 * np.pi)
    grad = (np.cos(angle) * xx / max(w - 1, 1) + np.sin(angle) * yy / max(h - 1, 1))
    grad = (grad - grad.min()) / max(grad.max() - grad.min(), 1e-12)
    stains = np.zeros((h, w))
    for _ in range(int(layout_rng.integers(2, 5))):
        cy = layout_rng.uniform(0, h)
        cx = layout_rng.uniform(0, w)
        s = layout_rng.uniform(min(h, w) / 10.0, min(h, w) / 4.0)
        amp = layout_rng.uniform(0.03, 0.10)
        stains += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * s * s))

    absorption = cfg.absorption()
    bleed = cfg.bleed()
    noise = cfg.noise()
    bands = []
    for b in range(cfg.n_band):
        brng = np.random.default_rng([cfg.seed, 2, b])
        base = brng.uniform(0.80, 0.92)
        plane = (base - 0.06 * grad - stains
                 - absorption[b] * ink_soft - bleed[b] * hidden_soft)
        plane = plane + brng.normal(0.0, noise[b], size=(h, w))
        if cfg.misregistration_px > 0.0:
            srng = np.random.default_rng([cfg.seed, 3, b])
            dy, dx = srng.uniform(-cfg.misregistration_px, cfg.misregistration_px, size=2)
            plane = ndimage.shift(plane, (dy, dx), order=1, mode="nearest")
        bands.append(np.clip(plane, 0.0, 1.0))

    ms = MsImage(bands=bands, band_meta=band_wavelengths(cfg.n_band), name=name)
    return ms, BinaryImage(mask=gt)


def derive_config(cfg: SynthConfig, base_seed: int, index: int) -> SynthConfig:
    """Per-image config whose seed folds the dataset seed and image index."""
    mixed = int(np.random.SeedSequence([base_seed, index]).generate_state(1)[0])
    return SynthConfig(**{**cfg.to_dict(), "seed": mixed})


def generate_dataset(
    n: int,
    base_seed: int,
    out_dir: Union[str, Path],
    cfg: Optional[SynthConfig] = None,
    name: Optional[str] = None,
) -> DatasetManifest:
    """Write n synthetic images in the standard dataset layout.

    Each image directory holds 16-bit band rasters F1..Fk, an 8-bit
    ground-truth raster (ink = 0), and the per-image manifest; a
    dataset-level manifest is written at the root and reloaded as the
    return value.
    """
    cfg = cfg or SynthConfig()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    items = []
    for i in range(n):
        img_name = f"img_{i:03d}"
        img_dir = out_dir / img_name
        img_dir.mkdir(exist_ok=True)
        ms, gt = generate(derive_config(cfg, base_seed, i), name=img_name)

        bands_meta = []
        for b in range(ms.n_band):
            fname = f"F{b + 1}.png"
            raw = np.round(ms.bands[b] * 65535.0).astype(np.uint16)
            Image.fromarray(raw).save(img_dir / fname)
            bands_meta.append({"file": fname,
                               "wavelength_nm": ms.band_meta[b].wavelength_nm,
                               "fwhm_nm": ms.band_meta[b].fwhm_nm})
        gt_raw = np.where(gt.mask, 0, 255).astype(np.uint8)
        Image.fromarray(gt_raw).save(img_dir / "gt.png")

        manifest = {"name": img_name, "protocol": "BW01",
                    "bands": bands_meta, "gt": "gt.png"}
        (img_dir / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        items.append({"ms_dir": img_name})

    ds_name = name if name is not None else out_dir.name
    (out_dir / "manifest.json").write_text(
        json.dumps({"name": ds_name, "items": items}, indent=2, sort_keys=True) + "\n")
    return load_dataset_manifest(out_dir / "manifest.json")
