from __future__ import annotations

import csv
import json

from msbin.cvs import CvsRecord, Partition
from msbin.metrics import ImageScores, build_report
from msbin.report import (
    render_cvs_figure,
    render_ranking_figure,
    render_report_figure,
    write_cvs_records_csv,
    write_ranking_csv,
    write_report_csv,
    write_report_json,
)


def sample_report():
    return build_report([
        ImageScores(name="img_000", fm=81.25, nrm=4.5, drd=1.75, kappa=80.0),
        ImageScores(name="img_001", fm=64.0, nrm=9.0, drd=3.5, kappa=62.0),
    ])


def test_report_csv_rows_and_footer(tmp_path):
    path = tmp_path / "report.csv"
    write_report_csv(sample_report(), path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["image", "fm", "nrm", "drd", "kappa"]
    assert rows[1][0] == "img_000"
    assert rows[1][1] == "81.2500"
    assert [r[0] for r in rows[3:]] == ["avg", "std", "avg_1", "std_1"]
    assert rows[3][1] == f"{(81.25 + 64.0) / 2:.4f}"
    assert rows[5][1] == "81.2500"  # avg_1 drops the worst-FM image


def test_report_json_twin_matches(tmp_path):
    path = tmp_path / "report.json"
    rep = sample_report()
    write_report_json(rep, path)
    data = json.loads(path.read_text())
    assert [r["image"] for r in data["per_image"]] == ["img_000", "img_001"]
    assert data["per_image"][0]["fm"] == 81.25
    assert data["aggregates"]["fm_avg_1"] == 81.25


def test_report_figure_written_and_deterministic(tmp_path):
    rep = sample_report()
    render_report_figure(rep, tmp_path / "a.png")
    render_report_figure(rep, tmp_path / "b.png")
    a = (tmp_path / "a.png").read_bytes()
    assert a[:8] == b"\x89PNG\r\n\x1a\n"
    assert a == (tmp_path / "b.png").read_bytes()


def sample_records():
    return [
        CvsRecord(k=1, fm_typ=60.0, fm_bes=80.0, fm_mul=71.0, cvs=2.0,
                  partition=Partition(("a", "b"), ("c",))),
        CvsRecord(k=2, fm_typ=62.0, fm_bes=79.0, fm_mul=70.0, cvs=-1.0,
                  partition=Partition(("a", "c"), ("b",))),
    ]


def test_cvs_records_csv(tmp_path):
    path = tmp_path / "records.csv"
    write_cvs_records_csv(sample_records(), path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["k", "fm_typ", "fm_bes", "fm_mul", "cvs", "training_ids"]
    assert rows[1] == ["1", "60.0000", "80.0000", "71.0000", "2.0000", "a;b"]


def test_cvs_figure(tmp_path):
    render_cvs_figure(sample_records(), tmp_path / "cvs.png", chosen_k=1)
    assert (tmp_path / "cvs.png").stat().st_size > 0


def test_ranking_outputs(tmp_path):
    scores = {"method_b": 3.5, "method_a": 4.0}
    write_ranking_csv(scores, tmp_path / "rank.csv")
    rows = list(csv.reader((tmp_path / "rank.csv").open()))
    assert rows[0] == ["method", "s"]
    assert rows[1] == ["method_a", "4.0000"]  # sorted by descending S
    render_ranking_figure(scores, tmp_path / "rank.png")
    assert (tmp_path / "rank.png").stat().st_size > 0
