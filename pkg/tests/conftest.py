from __future__ import annotations

import numpy as np
import pytest

from msbin.bandopt import exhaustive_best
from msbin.kernels import KernelSpec
from msbin.spectral import PreprocessConfig, enhance_ms
from msbin.synthgen import SynthConfig, derive_config, generate
from msbin.wrapper import WrapperConfig

_IMAGE_MEMO: dict = {}


def synth_images(n: int, base_seed: int, size: int = 64, n_band: int = 8):
    """Memoized in-memory dataset: name -> (MsImage, BinaryImage)."""
    key = (n, base_seed, size, n_band)
    if key not in _IMAGE_MEMO:
        cfg = SynthConfig(seed=0, width=size, height=size, n_band=n_band)
        images = {}
        for i in range(n):
            name = f"img_{i:03d}"
            ms, gt = generate(derive_config(cfg, base_seed, i), name=name)
            images[name] = (ms, gt)
        _IMAGE_MEMO[key] = images
    return _IMAGE_MEMO[key]


_RANKED_MEMO: dict = {}


def ranked_for(images, kernel: KernelSpec, wrapper_cfg: WrapperConfig,
               preprocess: PreprocessConfig | None = None, tail: int = 3):
    """Memoized exhaustive ranked triples for an image dict."""
    key = (id(images), kernel, wrapper_cfg, preprocess, tail)
    if key not in _RANKED_MEMO:
        ranked = {}
        for name in sorted(images):
            u, gt = images[name]
            if preprocess is not None:
                u = enhance_ms(u, preprocess)
            ranked[name] = exhaustive_best(u, gt, kernel, wrapper_cfg, tail_count=tail)
        _RANKED_MEMO[key] = ranked
    return _RANKED_MEMO[key]


@pytest.fixture(scope="session")
def small_page():
    """One 64x64 8-band page with ground truth."""
    return generate(SynthConfig(seed=11, width=64, height=64))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
