"""p-holdout cross-validation and the cross-validation search.

Each iteration splits the dataset into training and validation subsets,
builds the expert ensemble from the training images' ranked triples, and
scores three experts on the validation subset: the fixed "typical" RGB
triple, each image's own individual-best triple, and the ensemble.  The
CVS measure 2*FM_mul - FM_typ - FM_bes rewards beating the typical
expert while staying close to the per-image upper bound; the search
maximizes it over partitions to pick the training subset used for
unseen data.
"""

from __future__ import annotations

import itertools
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np

from .bandopt import RGB_TRIPLE, BandTriple, RankedTriples
from .ensemble import ExpertEnsemble, combine_masks, select_experts
from .imgcore import BinaryImage, MsImage
from .kernels import KernelSpec
from .metrics import confusion, f_measure
from .spectral import PreprocessConfig, enhance_ms
from .wrapper import WrapperConfig, prepare_bands, wrap_binarize_prepared


@dataclass(frozen=True)
class Partition:
    training: tuple[str, ...]
    validation: tuple[str, ...]


@dataclass
class CvsRecord:
    k: int
    fm_typ: float
    fm_bes: float
    fm_mul: float
    cvs: float
    partition: Partition


@dataclass(frozen=True)
class TrainSetup:
    """Everything an iteration needs besides the data itself."""

    kernel: KernelSpec
    wrapper: WrapperConfig
    preprocess: PreprocessConfig
    typical: BandTriple = RGB_TRIPLE
    max_frequent: int = 5


def holdout_sizes(n: int, p: float) -> tuple[int, int]:
    """(training size, validation size) for a p-holdout split of n images.

    Training size is the ceiling of (1-p)*n, guarded against float
    misrounding and clamped to [1, n].
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 <= p < 1.0:
        raise ValueError("p must lie in [0, 1)")
    train = math.ceil((1.0 - p) * n - 1e-9)
    train = max(1, min(n, train))
    return train, n - train


def cvs_measure(fm_typ: float, fm_bes: float, fm_mul: float) -> float:
    """Advantage over the typical expert minus the gap to the best expert."""
    return 2.0 * fm_mul - fm_typ - fm_bes


class Evaluator:
    """Caches per-image expert masks and F-measures for repeated partitions.

    Images are enhanced once with the setup's preprocessing; blur/deblur
    band planes are prepared lazily per image.  Single-expert F-measures
    are cached without bound, masks in a small LRU (votes re-derive them
    cheaply on miss).
    """

    def __init__(
        self,
        images: Mapping[str, tuple[MsImage, BinaryImage]],
        setup: TrainSetup,
        mask_cache_size: int = 1024,
    ) -> None:
        self.setup = setup
        self._raw = dict(images)
        self._enhanced: dict[str, MsImage] = {}
        self._prepared: dict[str, dict[int, np.ndarray]] = {}
        self._fm: dict[tuple[str, BandTriple], float] = {}
        self._masks: OrderedDict[tuple[str, BandTriple], BinaryImage] = OrderedDict()
        self._mask_cache_size = mask_cache_size

    @property
    def names(self) -> list[str]:
        return sorted(self._raw)

    def gt(self, name: str) -> BinaryImage:
        return self._raw[name][1]

    def _image(self, name: str) -> MsImage:
        if name not in self._enhanced:
            self._enhanced[name] = enhance_ms(self._raw[name][0], self.setup.preprocess)
        return self._enhanced[name]

    def _bands(self, name: str) -> dict[int, np.ndarray]:
        if name not in self._prepared:
            self._prepared[name] = prepare_bands(self._image(name), self.setup.wrapper)
        return self._prepared[name]

    def mask(self, name: str, triple: BandTriple) -> BinaryImage:
        key = (name, triple)
        if key in self._masks:
            self._masks.move_to_end(key)
            return self._masks[key]
        m = wrap_binarize_prepared(self._bands(name), self._image(name), triple,
                                   self.setup.kernel, self.setup.wrapper)
        self._masks[key] = m
        if len(self._masks) > self._mask_cache_size:
            self._masks.popitem(last=False)
        return m

    def fm(self, name: str, triple: BandTriple) -> float:
        key = (name, triple)
        if key not in self._fm:
            self._fm[key] = f_measure(confusion(self.mask(name, triple), self.gt(name)))
        return self._fm[key]

    def ensemble_mask(self, name: str, experts: Iterable[BandTriple]) -> BinaryImage:
        return combine_masks([self.mask(name, t) for t in experts])

    def ensemble_fm(self, name: str, experts: Iterable[BandTriple]) -> float:
        return f_measure(confusion(self.ensemble_mask(name, experts), self.gt(name)))


def build_ensemble(
    ranked: Mapping[str, RankedTriples],
    training: Iterable[str],
    setup: TrainSetup,
    cvs_value: Optional[float] = None,
) -> ExpertEnsemble:
    """Select experts from the training images' ranked lists."""
    training = sorted(training)
    subset = {name: ranked[name] for name in training}
    return ExpertEnsemble(
        experts=select_experts(subset, max_frequent=setup.max_frequent),
        kernel=setup.kernel,
        wrapper=setup.wrapper,
        preprocess=setup.preprocess,
        training_images=training,
        cvs_value=cvs_value,
    )


def evaluate_partition(
    k: int,
    partition: Partition,
    ranked: Mapping[str, RankedTriples],
    evaluator: Evaluator,
) -> CvsRecord:
    """Score one training/validation split (means over the validation set)."""
    setup = evaluator.setup
    ensemble = build_ensemble(ranked, partition.training, setup)
    val = list(partition.validation)
    fm_mul = float(np.mean([evaluator.ensemble_fm(n, ensemble.experts) for n in val]))
    fm_typ = float(np.mean([evaluator.fm(n, setup.typical) for n in val]))
    fm_bes = float(np.mean([ranked[n].best.fm for n in val]))
    return CvsRecord(k=k, fm_typ=fm_typ, fm_bes=fm_bes, fm_mul=fm_mul,
                     cvs=cvs_measure(fm_typ, fm_bes, fm_mul), partition=partition)


def all_partitions(names: list[str], train_count: int) -> Iterable[Partition]:
    names = sorted(names)
    for combo in itertools.combinations(names, train_count):
        train = set(combo)
        yield Partition(training=tuple(combo),
                        validation=tuple(n for n in names if n not in train))


def cv_iterate(
    images: Mapping[str, tuple[MsImage, BinaryImage]],
    ranked: Mapping[str, RankedTriples],
    setup: TrainSetup,
    p: float,
    n_cv: int = 50,
    seed: int = 0,
    exhaustive: bool = False,
    evaluator: Optional[Evaluator] = None,
) -> tuple[list[CvsRecord], dict[str, float]]:
    """Uniform-random p-holdout iterations (or all partitions when exhaustive).

    Returns the per-iteration records plus mean/std aggregates of the
    ensemble's validation F-measure and of the CVS measure.
    """
    evaluator = evaluator or Evaluator(images, setup)
    names = evaluator.names
    train_count, val_count = holdout_sizes(len(names), p)
    if val_count == 0:
        raise ValueError(f"p={p} leaves no validation images; CVS undefined")

    records = []
    if exhaustive:
        for k, partition in enumerate(all_partitions(names, train_count), start=1):
            records.append(evaluate_partition(k, partition, ranked, evaluator))
    else:
        for k in range(1, n_cv + 1):
            rng = np.random.default_rng([seed, k])
            picks = rng.choice(len(names), size=train_count, replace=False)
            train = tuple(names[i] for i in sorted(picks))
            val = tuple(n for n in names if n not in set(train))
            partition = Partition(training=train, validation=val)
            records.append(evaluate_partition(k, partition, ranked, evaluator))

    fm_mul = np.array([r.fm_mul for r in records])
    cvs_vals = np.array([r.cvs for r in records])
    stats = {"fm_mul_mean": float(fm_mul.mean()), "fm_mul_std": float(fm_mul.std()),
             "cvs_mean": float(cvs_vals.mean()), "cvs_std": float(cvs_vals.std())}
    return records, stats


@dataclass
class SearchResult:
    partition: Partition
    ensemble: ExpertEnsemble
    cvs_value: float
    record: CvsRecord
    evaluations: int = 0
    records: list[CvsRecord] = field(default_factory=list)


def cvs_search(
    images: Mapping[str, tuple[MsImage, BinaryImage]],
    ranked: Mapping[str, RankedTriples],
    setup: TrainSetup,
    p: float,
    budget: int = 100,
    seed: int = 0,
    criterion: str = "cvs",
    evaluator: Optional[Evaluator] = None,
) -> SearchResult:
    """Search partitions for the best training subset within a budget.

    Random restarts plus single-swap hill climbing (swap one training
    member with one validation member, accept improvements).  Partition
    scores are cached, and restarts prefer unvisited partitions, so a
    budget of at least C(n, train_count) evaluates every partition and
    returns the exact argmax.  The criterion is either "cvs" (maximize
    the CVS measure) or "minstd" (minimize the std of per-validation-
    image ensemble F-measures).
    """
    if criterion not in ("cvs", "minstd"):
        raise ValueError(f"unknown search criterion {criterion!r}")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    evaluator = evaluator or Evaluator(images, setup)
    names = evaluator.names
    train_count, val_count = holdout_sizes(len(names), p)
    if val_count == 0:
        raise ValueError(f"p={p} leaves no validation images; CVS undefined")

    rng = np.random.default_rng([seed])
    total = math.comb(len(names), train_count)
    visited: dict[tuple[str, ...], CvsRecord] = {}
    spent = 0

    def score(rec: CvsRecord) -> float:
        if criterion == "cvs":
            return rec.cvs
        ens = build_ensemble(ranked, rec.partition.training, setup)
        per_image = [evaluator.ensemble_fm(n, ens.experts) for n in rec.partition.validation]
        return -float(np.std(per_image))

    def evaluate(train: tuple[str, ...]) -> Optional[CvsRecord]:
        nonlocal spent
        if train in visited:
            return visited[train]
        if spent >= budget:
            return None
        partition = Partition(training=train,
                              validation=tuple(n for n in names if n not in set(train)))
        rec = evaluate_partition(len(visited) + 1, partition, ranked, evaluator)
        visited[train] = rec
        spent += 1
        return rec

    def random_unvisited() -> Optional[tuple[str, ...]]:
        if len(visited) >= total:
            return None
        for _ in range(64):
            picks = rng.choice(len(names), size=train_count, replace=False)
            train = tuple(names[i] for i in sorted(picks))
            if train not in visited:
                return train
        for combo in itertools.combinations(names, train_count):
            if combo not in visited:
                return combo
        return None

    best: Optional[CvsRecord] = None
    best_score = -np.inf
    while spent < budget:
        start = random_unvisited()
        if start is None:
            break
        current = evaluate(start)
        if current is None:
            break
        current_score = score(current)
        improved = True
        while improved and spent < budget:
            improved = False
            train_set = list(current.partition.training)
            val_set = list(current.partition.validation)
            moves = [(t, v) for t in train_set for v in val_set]
            for idx in rng.permutation(len(moves)):
                t_out, v_in = moves[int(idx)]
                neighbor = tuple(sorted(set(train_set) - {t_out} | {v_in}))
                rec = evaluate(neighbor)
                if rec is None:
                    break
                rec_score = score(rec)
                if rec_score > current_score:
                    current, current_score = rec, rec_score
                    improved = True
                    break
        if best is None or current_score > best_score or (
            current_score == best_score and current.partition.training < best.partition.training
        ):
            best, best_score = current, current_score

    assert best is not None
    ensemble = build_ensemble(ranked, best.partition.training, setup, cvs_value=best.cvs)
    ordered = sorted(visited.values(), key=lambda r: r.k)
    return SearchResult(partition=best.partition, ensemble=ensemble,
                        cvs_value=best.cvs, record=best, evaluations=spent,
                        records=ordered)
