"""Report writers: delimited score tables, JSON twins, and figures.

Every report path emits the machine-readable CSV/JSON pair and a PNG
figure next to it.  Output is byte-deterministic for fixed inputs.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .cvs import CvsRecord
from .metrics import ScoreReport

METRICS = ("fm", "nrm", "drd", "kappa")


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.4f}"


def write_report_csv(report: ScoreReport, path: Union[str, Path]) -> None:
    """Per-image metric rows plus an aggregates footer."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image", *METRICS])
        for s in report.per_image:
            writer.writerow([s.name, *(_fmt(getattr(s, m)) for m in METRICS)])
        for suffix in ("avg", "std", "avg_1", "std_1"):
            writer.writerow([suffix, *(_fmt(report.aggregates[f"{m}_{suffix}"])
                                       for m in METRICS)])


def write_report_json(report: ScoreReport, path: Union[str, Path]) -> None:
    payload = {
        "per_image": [{"image": s.name, **{m: getattr(s, m) for m in METRICS}}
                      for s in report.per_image],
        "aggregates": report.aggregates,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_report_json(path: Union[str, Path]) -> dict:
    return json.loads(Path(path).read_text())


def render_report_figure(report: ScoreReport, path: Union[str, Path]) -> None:
    """2x2 bar panel, one subplot per metric, with the dataset average."""
    names = [s.name for s in report.per_image]
    fig, axes = plt.subplots(2, 2, figsize=(max(6.0, 0.5 * len(names) + 3), 6.5))
    for ax, metric in zip(axes.ravel(), METRICS):
        values = [getattr(s, metric) for s in report.per_image]
        ax.bar(range(len(values)), values, color="#4878a8")
        avg = report.aggregates[f"{metric}_avg"]
        ax.axhline(avg, color="#a83838", linewidth=1.0, label=f"avg {avg:.2f}")
        ax.set_title(metric.upper())
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=90, fontsize=6)
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_cvs_records_csv(records: Sequence[CvsRecord], path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "fm_typ", "fm_bes", "fm_mul", "cvs", "training_ids"])
        for r in records:
            writer.writerow([r.k, _fmt(r.fm_typ), _fmt(r.fm_bes), _fmt(r.fm_mul),
                             _fmt(r.cvs), ";".join(r.partition.training)])


def render_cvs_figure(records: Sequence[CvsRecord], path: Union[str, Path],
                      chosen_k: Optional[int] = None) -> None:
    """Validation F-measures per iteration with the CVS measure overlaid."""
    ks = [r.k for r in records]
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    ax.plot(ks, [r.fm_bes for r in records], "o-", ms=3, label="individual best")
    ax.plot(ks, [r.fm_mul for r in records], "s-", ms=3, label="ensemble")
    ax.plot(ks, [r.fm_typ for r in records], "^-", ms=3, label="typical (RGB)")
    ax.set_xlabel("iteration k")
    ax.set_ylabel("validation FM")
    ax2 = ax.twinx()
    ax2.plot(ks, [r.cvs for r in records], "--", color="#555555", label="CVS")
    ax2.set_ylabel("CVS")
    if chosen_k is not None:
        ax.axvline(chosen_k, color="#a83838", linewidth=1.0)
    lines, labels = ax.get_legend_handles_labels()
    lines2, labels2 = ax2.get_legend_handles_labels()
    ax.legend(lines + lines2, labels + labels2, fontsize=7, loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_ranking_csv(scores: Mapping[str, float], path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "s"])
        for method in sorted(scores, key=lambda m: (-scores[m], m)):
            writer.writerow([method, _fmt(scores[method])])


def render_ranking_figure(scores: Mapping[str, float], path: Union[str, Path]) -> None:
    methods = sorted(scores, key=lambda m: (-scores[m], m))
    fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(methods)), 4.0))
    ax.bar(range(len(methods)), [scores[m] for m in methods], color="#4878a8")
    ax.set_xticks(range(len(methods)))
    ax.set_xticklabels(methods, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("ranking score S")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
