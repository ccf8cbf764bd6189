"""Rare-or-frequent expert selection and majority-vote combination.

Every image's ranked triples receive descending integer weights starting
at 0; tallies are summed across images.  Rare triples (total exactly 0,
i.e. only ever top-ranked) and up to five most frequent triples (most
negative totals) form the expert set, adjusted to odd size so the
pixel-wise vote never ties.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .bandopt import BandTriple, RankedTriples
from .imgcore import BinaryImage, MsImage
from .kernels import KernelSpec
from .spectral import PreprocessConfig, enhance_ms
from .wrapper import WrapperConfig, prepare_bands, wrap_binarize_prepared


@dataclass
class ExpertEnsemble:
    """The deployable binarizer: expert triples plus every pipeline config."""

    experts: list[BandTriple]
    kernel: KernelSpec
    wrapper: WrapperConfig
    preprocess: PreprocessConfig
    training_images: list[str] = field(default_factory=list)
    cvs_value: Optional[float] = None

    def __post_init__(self) -> None:
        if len(self.experts) < 1 or len(self.experts) % 2 == 0:
            raise ValueError("ensemble size must be odd and >= 1")
        if len(set(self.experts)) != len(self.experts):
            raise ValueError("expert triples must be unique")

    def to_dict(self) -> dict:
        return {
            "experts": [list(t) for t in self.experts],
            "kernel": self.kernel.to_dict(),
            "wrapper": self.wrapper.to_dict(),
            "preprocess": self.preprocess.to_dict(),
            "provenance": {"training_images": self.training_images,
                           "cvs_value": self.cvs_value},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExpertEnsemble":
        unknown = set(d) - {"experts", "kernel", "wrapper", "preprocess", "provenance"}
        if unknown:
            raise ValueError(f"unknown ensemble fields: {sorted(unknown)}")
        prov = d.get("provenance", {})
        return cls(
            experts=[BandTriple(*map(int, t)) for t in d["experts"]],
            kernel=KernelSpec.from_dict(d["kernel"]),
            wrapper=WrapperConfig.from_dict(d["wrapper"]),
            preprocess=PreprocessConfig.from_dict(d["preprocess"]),
            training_images=list(prov.get("training_images", [])),
            cvs_value=prov.get("cvs_value"),
        )

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ExpertEnsemble":
        return cls.from_dict(json.loads(Path(path).read_text()))


def weighted_tally(ranked: Mapping[str, RankedTriples]) -> dict[BandTriple, int]:
    """Sum of per-image rank weights (0, -1, -2, ...) for every triple."""
    tally: dict[BandTriple, int] = {}
    for name in sorted(ranked):
        for rank, entry in enumerate(ranked[name].entries):
            tally[entry.triple] = tally.get(entry.triple, 0) - rank
    return tally


def select_experts(
    ranked: Mapping[str, RankedTriples], max_frequent: int = 5
) -> list[BandTriple]:
    """Odd-sized union of rare and most-frequent triples across images.

    When the union is even-sized, the weakest frequent member (least
    negative tally, lexicographically largest on ties) is dropped; if no
    frequent member exists, the lexicographically largest rare triple is
    dropped instead.  Output order is deterministic: rare triples first,
    then frequent by descending strength.
    """
    if not ranked:
        raise ValueError("select_experts requires at least one ranked list")
    for name, r in ranked.items():
        if not r.entries:
            raise ValueError(f"ranked list for {name!r} is empty")

    tally = weighted_tally(ranked)
    rare = sorted(t for t, total in tally.items() if total == 0)
    frequent = sorted((t for t, total in tally.items() if total < 0),
                      key=lambda t: (tally[t], t))[:max_frequent]

    experts = rare + frequent
    if len(experts) % 2 == 0:
        if frequent:
            experts = rare + frequent[:-1]
        else:
            experts = rare[:-1]
    return experts


def combine_masks(masks: Sequence[BinaryImage]) -> BinaryImage:
    """Pixel-wise strict-majority vote of an odd number of masks."""
    if len(masks) % 2 == 0:
        raise ValueError("vote requires an odd number of masks")
    votes = np.zeros(masks[0].mask.shape, dtype=np.int32)
    for m in masks:
        votes += m.mask
    return BinaryImage(mask=2 * votes > len(masks))


def combine(u: MsImage, ens: ExpertEnsemble) -> BinaryImage:
    """Binarize an image with every expert and vote the results.

    The ensemble's own preprocessing is applied first, so the call is
    self-contained on a freshly loaded image.
    """
    enhanced = enhance_ms(u, ens.preprocess)
    needed = set()
    for t in ens.experts:
        needed.update(t)
    prepared = prepare_bands(enhanced, ens.wrapper, bands=needed)
    masks = [
        wrap_binarize_prepared(prepared, enhanced, t, ens.kernel, ens.wrapper)
        for t in ens.experts
    ]
    return combine_masks(masks)
