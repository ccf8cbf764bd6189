"""Search over ordered 3-band subspaces.

The search space for an N-band image is the N^3 ordered triples
(repetition allowed, order matters because the luminance weights are
asymmetric).  An exhaustive scan serves as the oracle; the evolutionary
path exists for larger band counts and is validated against the oracle.
Both return the best triple plus the top "tailing" suboptimal triples,
keeping one representative (the lexicographically smallest triple) per
distinct fitness value.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Union

import numpy as np

from .imgcore import BinaryImage, DatasetManifest, MsImage, load_dataset
from .kernels import KernelSpec
from .metrics import UndefinedMetricError, confusion, f_measure
from .spectral import PreprocessConfig, enhance_ms
from .wrapper import WrapperConfig, prepare_bands, wrap_binarize_prepared


class BandTriple(NamedTuple):
    """Ordered 1-based band selection playing the (R, G, B) roles."""

    r: int
    g: int
    b: int


RGB_TRIPLE = BandTriple(4, 3, 2)

FitnessFn = Callable[[BandTriple], float]


class TripleScore(NamedTuple):
    triple: BandTriple
    fm: float


@dataclass
class RankedTriples:
    """Distinct-fitness triples in strictly descending F-measure order."""

    entries: list[TripleScore]

    @property
    def best(self) -> TripleScore:
        return self.entries[0]

    def __post_init__(self) -> None:
        if not self.entries:
            raise ValueError("RankedTriples requires at least one entry")
        fms = [e.fm for e in self.entries]
        if any(a <= b for a, b in zip(fms, fms[1:])):
            raise ValueError("entries must be strictly descending in fm")


@dataclass(frozen=True)
class OptimizerConfig:
    mode: str = "evolutionary"
    population: int = 24
    generations: int = 30
    mutation_rate: float = 0.3
    tail_count: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("exhaustive", "evolutionary"):
            raise ValueError(f"unknown optimizer mode {self.mode!r}")
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if self.tail_count < 0:
            raise ValueError("tail_count must be >= 0")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation_rate must lie in [0,1]")

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown optimizer fields: {sorted(unknown)}")
        return cls(**d)


def bound_fitness(
    u: MsImage, gt: BinaryImage, spec: KernelSpec, cfg: WrapperConfig
) -> FitnessFn:
    """Close the wrapper+metric pipeline over one image, preparing bands once."""
    prepared = prepare_bands(u, cfg)

    def fn(triple: BandTriple) -> float:
        mask = wrap_binarize_prepared(prepared, u, triple, spec, cfg)
        return f_measure(confusion(mask, gt))

    return fn


def fitness(
    u: MsImage,
    gt: BinaryImage,
    triple: BandTriple,
    spec: KernelSpec,
    cfg: WrapperConfig,
) -> float:
    """F-measure of the wrapped binarization of one band triple against GT."""
    return bound_fitness(u, gt, spec, cfg)(triple)


def ranked_from_archive(
    archive: dict[BandTriple, float], tail_count: int
) -> RankedTriples:
    """Top (1 + tail_count) distinct-fitness entries, best first.

    Equal-fitness triples collapse to the lexicographically smallest one.
    """
    ordered = sorted(archive.items(), key=lambda kv: (-kv[1], kv[0]))
    entries: list[TripleScore] = []
    last_fm: Optional[float] = None
    for triple, fm in ordered:
        if last_fm is not None and fm == last_fm:
            continue
        entries.append(TripleScore(triple, fm))
        last_fm = fm
        if len(entries) == 1 + tail_count:
            break
    return RankedTriples(entries=entries)


def all_triples(n_band: int) -> list[BandTriple]:
    return [BandTriple(*t) for t in itertools.product(range(1, n_band + 1), repeat=3)]


def exhaustive_search(
    n_band: int, fitness_fn: FitnessFn, tail_count: int
) -> RankedTriples:
    """Evaluate every ordered triple; the oracle path."""
    archive = {t: fitness_fn(t) for t in all_triples(n_band)}
    return ranked_from_archive(archive, tail_count)


def evolve_search(
    n_band: int, fitness_fn: FitnessFn, cfg: OptimizerConfig
) -> tuple[RankedTriples, dict[BandTriple, float]]:
    """Generational GA over triples; returns the ranked top plus its archive.

    Every candidate is forced to an unseen triple before evaluation, so
    the evaluation budget (population x generations) counts unique
    fitness calls and a budget of at least n_band^3 covers the whole
    space.  Deterministic given the seed.
    """
    rng = np.random.default_rng(cfg.seed)
    space = n_band**3
    budget = min(cfg.population * cfg.generations, space)
    archive: dict[BandTriple, float] = {}

    def random_triple() -> BandTriple:
        return BandTriple(*(int(v) for v in rng.integers(1, n_band + 1, size=3)))

    def force_novel(t: BandTriple) -> BandTriple:
        if t not in archive:
            return t
        for _ in range(32):
            slot = int(rng.integers(3))
            cand = list(t)
            cand[slot] = int(rng.integers(1, n_band + 1))
            cand_t = BandTriple(*cand)
            if cand_t not in archive:
                return cand_t
        remaining = [c for c in all_triples(n_band) if c not in archive]
        return remaining[int(rng.integers(len(remaining)))]

    def evaluate(t: BandTriple) -> BandTriple:
        archive[t] = fitness_fn(t)
        return t

    def tournament(pop: list[BandTriple]) -> BandTriple:
        a = pop[int(rng.integers(len(pop)))]
        b = pop[int(rng.integers(len(pop)))]
        if archive[a] != archive[b]:
            return a if archive[a] > archive[b] else b
        return min(a, b)

    def archive_best() -> BandTriple:
        return min(archive.items(), key=lambda kv: (-kv[1], kv[0]))[0]

    population = []
    while len(population) < cfg.population and len(archive) < budget:
        population.append(evaluate(force_novel(random_triple())))

    while len(archive) < budget:
        children: list[BandTriple] = []
        parents = population + [archive_best()]
        while len(children) < cfg.population and len(archive) < budget:
            p1, p2 = tournament(parents), tournament(parents)
            point = int(rng.integers(1, 3))
            child = list(p1[:point] + p2[point:])
            for slot in range(3):
                if rng.random() < cfg.mutation_rate:
                    child[slot] = int(rng.integers(1, n_band + 1))
            children.append(evaluate(force_novel(BandTriple(*child))))
        population = children

    return ranked_from_archive(archive, cfg.tail_count), archive


def exhaustive_best(
    u: MsImage,
    gt: BinaryImage,
    spec: KernelSpec,
    cfg: WrapperConfig,
    tail_count: int = 3,
) -> RankedTriples:
    return exhaustive_search(u.n_band, bound_fitness(u, gt, spec, cfg), tail_count)


def evolve_best(
    u: MsImage,
    gt: BinaryImage,
    spec: KernelSpec,
    cfg: OptimizerConfig,
    wrapper_cfg: WrapperConfig,
) -> RankedTriples:
    ranked, _ = evolve_search(u.n_band, bound_fitness(u, gt, spec, wrapper_cfg), cfg)
    return ranked


def dataset_best(
    dataset: Union[DatasetManifest, list[tuple[str, MsImage, Optional[BinaryImage]]]],
    spec: KernelSpec,
    cfg: OptimizerConfig,
    wrapper_cfg: WrapperConfig,
    preprocess: Optional[PreprocessConfig] = None,
    threads: int = 1,
) -> tuple[dict[str, RankedTriples], dict[str, str]]:
    """Per-image ranked triples for a whole dataset.

    Returns (name -> RankedTriples, name -> error message); images
    without ground truth land in the error map.  The same optimizer seed
    is used for every image, so identical images yield identical results.
    """
    items = dataset if isinstance(dataset, list) else load_dataset(dataset)
    ranked: dict[str, RankedTriples] = {}
    errors: dict[str, str] = {}

    def solve(item: tuple[str, MsImage, Optional[BinaryImage]]):
        name, u, gt = item
        if gt is None:
            return name, None, "missing ground truth"
        if preprocess is not None:
            u = enhance_ms(u, preprocess)
        try:
            if cfg.mode == "exhaustive":
                return name, exhaustive_best(u, gt, spec, wrapper_cfg,
                                             cfg.tail_count), None
            return name, evolve_best(u, gt, spec, cfg, wrapper_cfg), None
        except UndefinedMetricError as exc:
            return name, None, str(exc)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(solve, items))
    else:
        results = [solve(item) for item in items]
    for name, res, err in results:
        if err is not None:
            errors[name] = err
        else:
            ranked[name] = res
    return ranked, errors
