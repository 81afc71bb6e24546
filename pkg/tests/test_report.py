import csv
import io
import json
import os
import re

import numpy as np
import pytest

from chipqa.errors import IoError, ShapeError
from chipqa.ingest import ChipSet
from chipqa.pipeline import run_pipeline
from chipqa.report import (
    PALETTE,
    SCORE_COLUMNS,
    RunReport,
    box_stats,
    boxplot_series,
    emit_report,
    format_number,
)
from chipqa.synthgen import SynthSpec, generate


def boxes(svg):
    text = svg.decode()
    return [dict(re.findall(r'data-([a-z0-9-]+)="([^"]*)"', m)) for m in re.findall(r'<g class="box"[^>]*>', text)]


@pytest.fixture(scope="module")
def small_run():
    cs, _ = generate(SynthSpec(seed=5, n_probesets=80, probes_per_set=6, n_chips=6))
    labels = {c: ("A" if i < 3 else "B") for i, c in enumerate(cs.chip_names)}
    return run_pipeline(ChipSet(cs.layout, cs.raw, labels))


def test_box_stats_hand_values():
    s = box_stats([1, 2, 3, 4, 5])
    assert (s.median, s.q1, s.q3, s.whisker_low, s.whisker_high, s.outliers) == (3, 2, 4, 1, 5, ())
    s = box_stats([1, 2, 3, 4, 100])
    assert s.outliers == (100.0,) and s.whisker_high == 4
    with pytest.raises(ShapeError):
        box_stats([])


def test_constant_column_box():
    svg = boxplot_series(np.full((5, 1), 2.5), ["a"])
    (b,) = boxes(svg)
    assert b["median"] == b["q1"] == b["q3"] == "2.5"
    assert re.search(r'<rect x="[^"]+" y="[^"]+" width="[^"]+" height="0.00"', svg.decode())


def test_group_colors():
    m = np.arange(10.0).reshape(5, 2)
    svg = boxplot_series(m, ["a", "b"], {"a": "g1", "b": "g2"}).decode()
    fills = re.findall(r'<g class="box".*?fill="(#[0-9a-f]{6})"', svg, flags=re.S)
    assert fills[:2] == [PALETTE[0], PALETTE[1]]
    same = boxplot_series(m, ["a", "b"], {"a": "g", "b": "g"}).decode()
    assert len(set(re.findall(r'<g class="box".*?fill="(#[0-9a-f]{6})"', same, flags=re.S))) == 1


def test_boxplot_errors():
    with pytest.raises(ShapeError):
        boxplot_series(np.zeros((0, 2)), ["a", "b"])
    with pytest.raises(ShapeError):
        boxplot_series(np.zeros((3, 2)), ["a"])


def test_format_number():
    assert format_number(0.1) == "0.1"
    assert format_number(float("nan")) == ""
    assert float(format_number(1 / 3)) == 1 / 3


def test_emit_report_files(tmp_path, small_run):
    rep = emit_report(small_run, tmp_path, formats=("csv", "json", "svg", "tsv", "png"), landscapes=("weights", "signed"))
    for rel in rep.files:
        assert (tmp_path / rel).is_file()
    names = set(rep.files)
    assert {"scores.csv", "scores.json", "rsf.csv", "report.json", "boxplot_pm.svg", "boxplot_rle.svg",
            "boxplot_nuse.svg", "rsf_boxplot.svg", "nuse.tsv", "rle.tsv"} <= names
    assert os.path.join("landscapes", "chip01_weights.png") in names
    rows = list(csv.DictReader(io.StringIO((tmp_path / "scores.csv").read_text())))
    assert len(rows) == 6 and tuple(rows[0]) == SCORE_COLUMNS
    rsf = list(csv.DictReader(io.StringIO((tmp_path / "rsf.csv").read_text())))
    assert [r["batch"] for r in rsf] == ["A", "B"]


def test_csv_json_agree(tmp_path, small_run):
    emit_report(small_run, tmp_path)
    rows = list(csv.DictReader(io.StringIO((tmp_path / "scores.csv").read_text())))
    js = json.loads((tmp_path / "scores.json").read_text())
    for r, j in zip(rows, js):
        for col in SCORE_COLUMNS:
            if col in ("chip", "flags"):
                assert r[col] == j[col]
            elif j[col] is None:
                assert r[col] == ""
            else:
                assert float(r[col]) == j[col]


def test_svg_metadata_matches_summaries(small_run):
    chips = list(small_run.chipset.chip_names)
    rle = boxes(boxplot_series(small_run.qa.rle, chips))
    nuse = boxes(boxplot_series(small_run.qa.nuse, chips))
    pm = boxes(boxplot_series(small_run.log_pm.T, chips))
    for s, r, n, p in zip(small_run.summaries, rle, nuse, pm):
        assert abs(float(r["median"]) - s.med_rle) <= 1e-9
        assert abs(float(r["iqr"]) - s.iqr_rle) <= 1e-9
        assert abs(float(n["median"]) - s.med_nuse) <= 1e-9
        assert abs(float(n["iqr"]) - s.iqr_nuse) <= 1e-9
        assert abs(float(p["median"]) - s.med_pm) <= 1e-9


def test_report_json_round_trip(tmp_path, small_run):
    rep = emit_report(small_run, tmp_path)
    text = (tmp_path / "report.json").read_text()
    again = RunReport.from_json(text)
    assert again == rep
    assert again.to_json() == text
    assert len(again.caveats) >= 2


def test_rerun_byte_identical(tmp_path, small_run):
    emit_report(small_run, tmp_path / "a", formats=("csv", "svg"))
    emit_report(small_run, tmp_path / "b", formats=("csv", "svg"))
    for name in ("scores.csv", "boxplot_pm.svg", "boxplot_rle.svg", "boxplot_nuse.svg", "rsf_boxplot.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_unwritable_dir_cleans_up(tmp_path, small_run):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(IoError):
        emit_report(small_run, blocker / "out")
    # failure in the middle: landscapes dir name taken by a file
    out = tmp_path / "partial"
    out.mkdir()
    (out / "landscapes").write_text("in the way")
    with pytest.raises(IoError):
        emit_report(small_run, out, formats=("csv", "png"), landscapes=("weights",))
    assert sorted(os.listdir(out)) == ["landscapes"]
