from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from msbin.imgcore import (
    BinaryImage,
    GrayImage,
    LoadError,
    MsImage,
    flip_protocol,
    load_binary,
    load_dataset,
    load_dataset_manifest,
    load_ms,
    save_binary,
)


def write_image_dir(tmp_path, name="p012", n_band=8, size=(12, 10), bit16=True,
                    bad_band=None, with_gt=True):
    d = tmp_path / name
    d.mkdir()
    rng = np.random.default_rng(5)
    bands = []
    for i in range(n_band):
        shape = size if i != bad_band else (size[0] + 2, size[1])
        if bit16:
            arr = rng.integers(0, 65536, size=shape, dtype=np.uint16)
        else:
            arr = rng.integers(0, 256, size=shape, dtype=np.uint8)
        Image.fromarray(arr).save(d / f"F{i + 1}.png")
        bands.append({"file": f"F{i + 1}.png", "wavelength_nm": 340 + 100 * i,
                      "fwhm_nm": 80})
    manifest = {"name": name, "protocol": "BW01", "bands": bands}
    if with_gt:
        gt = np.full(size, 255, dtype=np.uint8)
        gt[2:5, 3:6] = 0
        Image.fromarray(gt).save(d / "gt.png")
        manifest["gt"] = "gt.png"
    (d / "manifest.json").write_text(json.dumps(manifest))
    return d


def test_load_ms_eight_16bit_bands(tmp_path):
    d = write_image_dir(tmp_path, n_band=8)
    u = load_ms(d / "manifest.json")
    assert u.n_band == 8
    assert (u.height, u.width) == (12, 10)
    assert u.name == "p012"
    assert all(b.min() >= 0.0 and b.max() <= 1.0 for b in u.bands)
    assert u.band_meta[0].wavelength_nm == 340


def test_load_ms_dimension_mismatch(tmp_path):
    d = write_image_dir(tmp_path, bad_band=3)
    with pytest.raises(LoadError, match="band 4"):
        load_ms(d / "manifest.json")


def test_load_ms_8bit_scale_identity(tmp_path):
    d = tmp_path / "img"
    d.mkdir()
    arr = np.array([[0, 128, 255]], dtype=np.uint8)
    Image.fromarray(arr).save(d / "F1.png")
    (d / "manifest.json").write_text(json.dumps(
        {"name": "x", "protocol": "BW01", "bands": [{"file": "F1.png"}]}))
    u = load_ms(d / "manifest.json")
    assert u.band(1)[0, 2] == 1.0
    assert u.band(1)[0, 0] == 0.0


def test_load_ms_missing_file(tmp_path):
    (tmp_path / "manifest.json").write_text(json.dumps(
        {"name": "x", "protocol": "BW01", "bands": [{"file": "nope.png"}]}))
    with pytest.raises(LoadError, match="nope.png"):
        load_ms(tmp_path / "manifest.json")


def test_load_ms_bad_manifest_field(tmp_path):
    (tmp_path / "manifest.json").write_text(json.dumps({"name": "x", "bands": []}))
    with pytest.raises(LoadError, match="bands"):
        load_ms(tmp_path / "manifest.json")


def test_band_indices_are_one_based(small_page):
    u, _ = small_page
    assert u.band(1) is u.bands[0]
    assert u.band(u.n_band) is u.bands[-1]
    with pytest.raises(IndexError):
        u.band(0)
    with pytest.raises(IndexError):
        u.band(u.n_band + 1)


def test_msimage_rejects_out_of_range():
    with pytest.raises(ValueError, match=r"\[0,1\]"):
        MsImage(bands=[np.full((4, 4), 1.5)], band_meta=[(500, 80)])


def test_flip_protocol_values():
    g = GrayImage(plane=np.array([[0.0, 0.25], [1.0, 0.5]]))
    f = flip_protocol(g)
    assert f.plane[0, 0] == 1.0
    assert f.plane[0, 1] == 0.75


@given(st.integers(min_value=1, max_value=16))
@settings(max_examples=20)
def test_flip_protocol_involution_at_stored_precision(bits):
    # exact once requantized at the raster bit depth; float64 1-x can
    # drift below any storage quantum (~1e-16) in between
    levels = 2**bits - 1
    plane = (np.arange(levels + 1) / levels).reshape(1, -1)
    back = flip_protocol(flip_protocol(plane))
    assert np.array_equal(np.round(back * levels), np.round(plane * levels))
    assert np.abs(back - plane).max() < 1e-15


def test_flip_protocol_involution_exact_on_dyadic_values():
    plane = np.array([[0.0, 0.25, 0.5, 0.75, 1.0]])
    assert np.array_equal(flip_protocol(flip_protocol(plane)), plane)


@pytest.mark.parametrize("shape", [(1, 1), (7, 13), (64, 64)])
def test_binary_roundtrip(tmp_path, shape, rng):
    mask = rng.random(shape) < 0.4
    b = BinaryImage(mask=mask)
    path = tmp_path / "m.png"
    save_binary(b, path)
    assert np.array_equal(load_binary(path).mask, mask)


def test_binary_roundtrip_large(tmp_path):
    rng = np.random.default_rng(99)
    mask = rng.random((4096, 4096)) < 0.2
    path = tmp_path / "big.png"
    save_binary(BinaryImage(mask=mask), path)
    assert np.array_equal(load_binary(path).mask, mask)


def test_binary_on_disk_convention(tmp_path):
    mask = np.zeros((3, 3), dtype=bool)
    save_binary(BinaryImage(mask=mask), tmp_path / "bg.png")
    assert (np.asarray(Image.open(tmp_path / "bg.png")) == 255).all()

    mask[0, 0] = True
    save_binary(BinaryImage(mask=mask), tmp_path / "one.png")
    arr = np.asarray(Image.open(tmp_path / "one.png"))
    assert arr[0, 0] == 0
    assert (arr == 0).sum() == 1


def test_load_dataset_roundtrip(tmp_path):
    d1 = write_image_dir(tmp_path, name="a")
    d2 = write_image_dir(tmp_path, name="b")
    (tmp_path / "manifest.json").write_text(json.dumps(
        {"name": "ds", "items": [{"ms_dir": "a"}, {"ms_dir": "b"}]}))
    manifest = load_dataset_manifest(tmp_path / "manifest.json")
    assert manifest.name == "ds"
    items = load_dataset(manifest)
    assert [n for n, _, _ in items] == ["a", "b"]
    assert all(gt is not None and gt.ink_count == 9 for _, _, gt in items)
    assert d1.exists() and d2.exists()


def test_load_dataset_gt_size_mismatch(tmp_path):
    d = write_image_dir(tmp_path, name="a")
    bad = np.full((5, 5), 255, dtype=np.uint8)
    Image.fromarray(bad).save(d / "gt.png")
    (tmp_path / "manifest.json").write_text(json.dumps(
        {"name": "ds", "items": [{"ms_dir": "a"}]}))
    with pytest.raises(LoadError, match="does not match"):
        load_dataset(tmp_path / "manifest.json")
