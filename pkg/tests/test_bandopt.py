from __future__ import annotations

import numpy as np
import pytest

from msbin.bandopt import (
    BandTriple,
    OptimizerConfig,
    RankedTriples,
    TripleScore,
    all_triples,
    dataset_best,
    evolve_search,
    exhaustive_best,
    exhaustive_search,
    fitness,
    ranked_from_archive,
)
from msbin.imgcore import MsImage
from msbin.kernels import KernelSpec
from msbin.synthgen import SynthConfig, band_wavelengths, generate
from msbin.wrapper import WrapperConfig

SAUVOLA = KernelSpec.sauvola()
WCFG = WrapperConfig()


def toy_fitness(t: BandTriple) -> float:
    """Deterministic landscape with a unique optimum at (5, 2, 7)."""
    return -((t.r - 5) ** 2 + 2 * (t.g - 2) ** 2 + 3 * (t.b - 7) ** 2) \
        + t.r * 1e-4 + t.g * 1e-5 + t.b * 1e-6


# ------------------------------------------------------------- exhaustive


def test_exhaustive_visits_exactly_n_cubed():
    calls = []

    def fn(t):
        calls.append(t)
        return toy_fitness(t)

    exhaustive_search(2, fn, tail_count=3)
    assert len(calls) == 8
    assert len(set(calls)) == 8


def test_exhaustive_best_dominates_all():
    ranked = exhaustive_search(8, toy_fitness, tail_count=3)
    assert ranked.best.triple == BandTriple(5, 2, 7)
    assert all(ranked.best.fm >= toy_fitness(t) for t in all_triples(8))


def test_exhaustive_result_independent_of_evaluation_order():
    a = exhaustive_search(4, toy_fitness, tail_count=2)
    b = exhaustive_search(4, toy_fitness, tail_count=2)
    assert a.entries == b.entries


# -------------------------------------------------------- ranked archive


def test_ranked_archive_distinct_fitness_lex_ties():
    archive = {BandTriple(1, 1, 2): 5.0, BandTriple(1, 1, 1): 5.0,
               BandTriple(2, 2, 2): 4.0, BandTriple(3, 3, 3): 4.0}
    ranked = ranked_from_archive(archive, tail_count=5)
    assert ranked.entries == [TripleScore(BandTriple(1, 1, 1), 5.0),
                              TripleScore(BandTriple(2, 2, 2), 4.0)]


def test_ranked_triples_rejects_non_descending():
    with pytest.raises(ValueError):
        RankedTriples(entries=[TripleScore(BandTriple(1, 1, 1), 5.0),
                               TripleScore(BandTriple(2, 2, 2), 5.0)])


def test_ranked_truncates_to_tail_count():
    ranked = exhaustive_search(8, toy_fitness, tail_count=3)
    assert len(ranked.entries) == 4


# ------------------------------------------------------------------ evolve


def test_evolve_full_budget_matches_exhaustive():
    cfg = OptimizerConfig(population=32, generations=16, seed=3)  # 512 = space
    ranked, archive = evolve_search(8, toy_fitness, cfg)
    assert len(archive) == 512
    oracle = exhaustive_search(8, toy_fitness, tail_count=cfg.tail_count)
    assert ranked.entries == oracle.entries


def test_evolve_partial_budget_never_beats_oracle():
    cfg = OptimizerConfig(population=8, generations=4, seed=1)  # 32 of 512
    ranked, archive = evolve_search(8, toy_fitness, cfg)
    assert len(archive) == 32
    oracle = exhaustive_search(8, toy_fitness, tail_count=0)
    assert ranked.best.fm <= oracle.best.fm


def test_evolve_deterministic_given_seed():
    cfg = OptimizerConfig(population=8, generations=4, seed=9)
    a, arch_a = evolve_search(8, toy_fitness, cfg)
    b, arch_b = evolve_search(8, toy_fitness, cfg)
    assert a.entries == b.entries
    assert arch_a == arch_b


def test_evolve_reports_only_archived_triples_with_true_fitness():
    cfg = OptimizerConfig(population=8, generations=6, seed=5)
    ranked, archive = evolve_search(8, toy_fitness, cfg)
    for entry in ranked.entries:
        assert entry.triple in archive
        assert entry.fm == toy_fitness(entry.triple)


def test_evolve_counts_unique_evaluations():
    calls = []

    def fn(t):
        calls.append(t)
        return toy_fitness(t)

    cfg = OptimizerConfig(population=10, generations=5, seed=2)
    evolve_search(8, fn, cfg)
    assert len(calls) == 50
    assert len(set(calls)) == 50


# ------------------------------------------------------------- image-level


def test_fitness_hundred_when_gray_equals_gt():
    rng = np.random.default_rng(3)
    gt_mask = rng.random((32, 32)) < 0.3
    band = 1.0 - gt_mask.astype(np.float64)  # BW01: ink black
    u = MsImage(bands=[band] * 3, band_meta=band_wavelengths(3), name="t")
    from msbin.imgcore import BinaryImage

    cfg = WrapperConfig(blur_enabled=False, deblur_amount=0.0, max_retries=0)
    fm = fitness(u, BinaryImage(mask=gt_mask), BandTriple(1, 1, 1),
                 KernelSpec.otsu(), cfg)
    assert fm == 100.0


def test_fitness_is_repeatable(small_page):
    u, gt = small_page
    a = fitness(u, gt, BandTriple(8, 1, 2), SAUVOLA, WCFG)
    b = fitness(u, gt, BandTriple(8, 1, 2), SAUVOLA, WCFG)
    assert a == b


def test_evolve_best_matches_exhaustive_on_image(small_page):
    u, gt = small_page
    oracle = exhaustive_best(u, gt, SAUVOLA, WCFG, tail_count=3)
    from msbin.bandopt import evolve_best

    cfg = OptimizerConfig(population=32, generations=16, seed=0)
    ranked = evolve_best(u, gt, SAUVOLA, cfg, WCFG)
    assert ranked.entries == oracle.entries


# ------------------------------------------------------------ dataset_best


def make_items(n, with_gt=True, size=48):
    items = []
    for i in range(n):
        ms, gt = generate(SynthConfig(seed=100 + i, width=size, height=size),
                          name=f"img_{i:03d}")
        items.append((f"img_{i:03d}", ms, gt if with_gt else None))
    return items


def test_dataset_best_shape_matches_tailing_table():
    items = make_items(1, size=48)
    cfg = OptimizerConfig(mode="exhaustive", tail_count=3)
    ranked, errors = dataset_best(items, SAUVOLA, cfg, WCFG)
    assert errors == {}
    entries = ranked["img_000"].entries
    assert len(entries) == 4  # best plus three tailing rows
    assert all(1 <= v <= 8 for e in entries for v in e.triple)
    fms = [e.fm for e in entries]
    assert fms == sorted(fms, reverse=True)


def test_dataset_best_single_image():
    items = make_items(1)
    ranked, _ = dataset_best(items, SAUVOLA,
                             OptimizerConfig(mode="exhaustive", tail_count=1), WCFG)
    assert set(ranked) == {"img_000"}


def test_dataset_best_empty_gt_is_error_entry():
    items = make_items(1)
    ms, _ = generate(SynthConfig(seed=200, width=48, height=48, text_density=0.0),
                     name="img_blank")
    from msbin.imgcore import BinaryImage

    items.append(("img_blank", ms, BinaryImage(mask=np.zeros((48, 48), dtype=bool))))
    ranked, errors = dataset_best(items, SAUVOLA,
                                  OptimizerConfig(mode="exhaustive", tail_count=1),
                                  WCFG)
    assert "img_000" in ranked
    assert "img_blank" in errors
    assert "no ink" in errors["img_blank"]


def test_dataset_best_missing_gt_is_error_entry():
    items = make_items(1) + [(n, u, None) for n, u, _ in make_items(1)]
    items[1] = ("img_nogt", items[1][1], None)
    ranked, errors = dataset_best(items, SAUVOLA,
                                  OptimizerConfig(mode="exhaustive", tail_count=1),
                                  WCFG)
    assert "img_000" in ranked
    assert errors == {"img_nogt": "missing ground truth"}


def test_dataset_best_identical_images_identical_results():
    name, ms, gt = make_items(1)[0]
    items = [("a", ms, gt), ("b", ms, gt)]
    cfg = OptimizerConfig(mode="evolutionary", population=8, generations=4, seed=7)
    ranked, _ = dataset_best(items, SAUVOLA, cfg, WCFG)
    assert ranked["a"].entries == ranked["b"].entries


def test_dataset_best_threads_do_not_change_results():
    items = make_items(2)
    cfg = OptimizerConfig(mode="exhaustive", tail_count=2)
    r1, _ = dataset_best(items, SAUVOLA, cfg, WCFG, threads=1)
    r2, _ = dataset_best(items, SAUVOLA, cfg, WCFG, threads=3)
    assert {k: v.entries for k, v in r1.items()} == {k: v.entries for k, v in r2.items()}


def test_optimizer_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(mode="annealing")
    with pytest.raises(ValueError):
        OptimizerConfig(population=1)
    with pytest.raises(ValueError):
        OptimizerConfig(tail_count=-1)
