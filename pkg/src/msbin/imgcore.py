"""Core image types, intensity protocols, and file I/O.

Multispectral images are stored in the BW01 protocol (0 = black,
1 = white); gray-level working images use BW10 (1 = ink, 0 = background).
Band files are individual 8- or 16-bit grayscale rasters listed in a
per-image JSON manifest; a dataset is a JSON manifest of such image
directories.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Union

import numpy as np
from PIL import Image


class LoadError(Exception):
    """Raised when a manifest or raster cannot be loaded as described."""


class BandMeta(NamedTuple):
    wavelength_nm: float
    fwhm_nm: float


@dataclass(eq=False)
class MsImage:
    """An N-band multispectral image in BW01, bands indexed 1-based."""

    bands: list[np.ndarray]
    band_meta: list[BandMeta]
    name: str = ""

    def __post_init__(self) -> None:
        if len(self.bands) < 1:
            raise ValueError("MsImage requires at least one band")
        shape = self.bands[0].shape
        for i, b in enumerate(self.bands):
            if b.ndim != 2 or b.shape != shape:
                raise ValueError(f"band {i + 1} shape {b.shape} != {shape}")
            lo, hi = float(b.min()), float(b.max())
            if lo < 0.0 or hi > 1.0:
                raise ValueError(f"band {i + 1} intensities outside [0,1]: [{lo}, {hi}]")
        if len(self.band_meta) != len(self.bands):
            raise ValueError("band_meta length must match number of bands")

    @property
    def n_band(self) -> int:
        return len(self.bands)

    @property
    def height(self) -> int:
        return self.bands[0].shape[0]

    @property
    def width(self) -> int:
        return self.bands[0].shape[1]

    def band(self, index: int) -> np.ndarray:
        """Return band plane by 1-based index."""
        if not 1 <= index <= self.n_band:
            raise IndexError(f"band index {index} outside [1, {self.n_band}]")
        return self.bands[index - 1]


@dataclass(eq=False)
class GrayImage:
    """A single-plane image in BW10 (1 = ink, 0 = background)."""

    plane: np.ndarray

    def __post_init__(self) -> None:
        if self.plane.ndim != 2:
            raise ValueError("gray plane must be 2-D")
        lo, hi = float(self.plane.min()), float(self.plane.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"gray intensities outside [0,1]: [{lo}, {hi}]")

    @property
    def height(self) -> int:
        return self.plane.shape[0]

    @property
    def width(self) -> int:
        return self.plane.shape[1]


@dataclass(eq=False)
class BinaryImage:
    """A per-pixel text mask; True marks ink."""

    mask: np.ndarray

    def __post_init__(self) -> None:
        if self.mask.ndim != 2:
            raise ValueError("mask must be 2-D")
        if self.mask.dtype != np.bool_:
            raise ValueError("mask dtype must be bool")

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def ink_count(self) -> int:
        return int(self.mask.sum())


@dataclass
class DatasetItem:
    ms_dir: Path
    gt_path: Optional[Path] = None


@dataclass
class DatasetManifest:
    name: str
    items: list[DatasetItem] = field(default_factory=list)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise LoadError(msg)


def _read_gray_raster(path: Path) -> np.ndarray:
    """Read an 8- or 16-bit grayscale raster, scaled linearly to [0,1]."""
    _require(path.is_file(), f"raster file not found: {path}")
    try:
        img = Image.open(path)
        arr = np.asarray(img)
    except Exception as exc:
        raise LoadError(f"cannot read raster {path}: {exc}") from exc
    _require(arr.ndim == 2, f"raster {path} is not single-channel grayscale")
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    if arr.dtype in (np.uint16, np.int32):
        # PIL yields int32 for mode "I"; treat as 16-bit data
        _require(int(arr.min()) >= 0 and int(arr.max()) <= 65535,
                 f"raster {path} exceeds 16-bit range")
        return arr.astype(np.float64) / 65535.0
    raise LoadError(f"raster {path} has unsupported dtype {arr.dtype} (need 8- or 16-bit)")


def load_ms(manifest_path: Union[str, Path]) -> MsImage:
    """Load a multispectral image from its per-image JSON manifest.

    The manifest lists band files in order (ascending wavelength by
    convention) with their wavelength/FWHM metadata; band rasters must be
    equal-size 8- or 16-bit grayscale files relative to the manifest
    directory.
    """
    manifest_path = Path(manifest_path)
    _require(manifest_path.is_file(), f"manifest not found: {manifest_path}")
    try:
        spec = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise LoadError(f"malformed JSON in {manifest_path}: {exc}") from exc

    name = spec.get("name")
    bands_spec = spec.get("bands")
    _require(isinstance(name, str) and name != "", f"{manifest_path}: missing 'name'")
    _require(isinstance(bands_spec, list) and len(bands_spec) >= 1,
             f"{manifest_path}: 'bands' must be a non-empty list")
    protocol = spec.get("protocol", "BW01")
    _require(protocol == "BW01", f"{manifest_path}: unsupported protocol {protocol!r}")

    root = manifest_path.parent
    planes: list[np.ndarray] = []
    metas: list[BandMeta] = []
    for i, bspec in enumerate(bands_spec):
        _require(isinstance(bspec, dict) and "file" in bspec,
                 f"{manifest_path}: band {i + 1} entry needs a 'file' field")
        plane = _read_gray_raster(root / bspec["file"])
        if planes and plane.shape != planes[0].shape:
            raise LoadError(
                f"{manifest_path}: band {i + 1} size {plane.shape[::-1]} "
                f"differs from band 1 size {planes[0].shape[::-1]}"
            )
        planes.append(plane)
        metas.append(BandMeta(float(bspec.get("wavelength_nm", 0.0)),
                              float(bspec.get("fwhm_nm", 0.0))))
    return MsImage(bands=planes, band_meta=metas, name=name)


def ms_gt_path(manifest_path: Union[str, Path]) -> Optional[Path]:
    """Return the ground-truth raster path declared in a per-image manifest."""
    manifest_path = Path(manifest_path)
    spec = json.loads(manifest_path.read_text())
    gt = spec.get("gt")
    return manifest_path.parent / gt if gt else None


def flip_protocol(image: Union[GrayImage, np.ndarray]) -> Union[GrayImage, np.ndarray]:
    """Swap BW01 and BW10 by mapping every intensity v to 1 - v (involution)."""
    if isinstance(image, GrayImage):
        return GrayImage(plane=1.0 - image.plane)
    return 1.0 - image


def save_binary(b: BinaryImage, path: Union[str, Path]) -> None:
    """Write a mask as an 8-bit raster with ink black (0) on white (255)."""
    out = np.where(b.mask, 0, 255).astype(np.uint8)
    Image.fromarray(out).save(Path(path))


def load_binary(path: Union[str, Path]) -> BinaryImage:
    """Read a binary mask raster; pixels darker than mid-gray count as ink."""
    path = Path(path)
    _require(path.is_file(), f"binary raster not found: {path}")
    arr = np.asarray(Image.open(path).convert("L"))
    return BinaryImage(mask=arr < 128)


def load_dataset_manifest(path: Union[str, Path]) -> DatasetManifest:
    """Parse a dataset-level manifest listing per-image directories."""
    path = Path(path)
    _require(path.is_file(), f"dataset manifest not found: {path}")
    try:
        spec = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise LoadError(f"malformed JSON in {path}: {exc}") from exc
    _require(isinstance(spec.get("items"), list), f"{path}: missing 'items' list")
    root = path.parent
    items = []
    for entry in spec["items"]:
        _require(isinstance(entry, dict) and "ms_dir" in entry,
                 f"{path}: every item needs an 'ms_dir' field")
        gt = entry.get("gt_path")
        items.append(DatasetItem(ms_dir=root / entry["ms_dir"],
                                 gt_path=root / gt if gt else None))
    return DatasetManifest(name=str(spec.get("name", path.stem)), items=items)


def load_dataset(
    manifest: Union[str, Path, DatasetManifest],
) -> list[tuple[str, MsImage, Optional[BinaryImage]]]:
    """Load every dataset item as (name, MsImage, ground truth or None).

    Ground truth defaults to the per-image manifest's 'gt' entry and may
    be overridden per item; GT dimensions must match the MS image.
    """
    if not isinstance(manifest, DatasetManifest):
        manifest = load_dataset_manifest(manifest)
    loaded = []
    for item in manifest.items:
        per_image = item.ms_dir / "manifest.json"
        u = load_ms(per_image)
        gt_file = item.gt_path if item.gt_path is not None else ms_gt_path(per_image)
        gt = None
        if gt_file is not None:
            gt = load_binary(gt_file)
            if (gt.height, gt.width) != (u.height, u.width):
                raise LoadError(
                    f"{gt_file}: GT size {gt.width}x{gt.height} does not match "
                    f"MS size {u.width}x{u.height}"
                )
        loaded.append((u.name, u, gt))
    return loaded
