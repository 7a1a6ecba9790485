from __future__ import annotations

import importlib.util
import subprocess
import sys

import pytest

from cotreplica.figures import (
    RECORD_COLUMNS,
    SchemaError,
    render_error_curves,
    render_figures,
    render_selection_scatter,
)

RECORD_HEADER = ",".join(RECORD_COLUMNS)

SAMPLE_RECORDS = RECORD_HEADER + "\n" + "\n".join(
    f"scaling,H10-n10,0,10,10,1000,{k},10.0,{10.0 * 0.4 ** k!r},{0.01!r},{10.0 * 0.38 ** k!r},"
    for k in range(5)
) + "\n"

SAMPLE_SELECTION = "task_index,type_label,sigma_min,hardness,pi\n" + "\n".join(
    f"{i},{label},{0.1 / (i + 1)!r},{float(10 * (i + 1))!r},{0.1 + 0.02 * i!r}"
    for i, label in enumerate(["easy-short", "hard-short", "easy-long", "hard-long"])
) + "\n"


def test_render_error_curves(tmp_path):
    csv = tmp_path / "scaling.csv"
    csv.write_text(SAMPLE_RECORDS)
    out = render_error_curves(csv, tmp_path / "scaling.png")
    assert out.is_file() and out.stat().st_size > 0


def test_render_selection_scatter(tmp_path):
    csv = tmp_path / "selection.csv"
    csv.write_text(SAMPLE_SELECTION)
    out = render_selection_scatter(csv, tmp_path / "selection.png")
    assert out.is_file() and out.stat().st_size > 0


def test_render_figures_dispatches_by_header(tmp_path):
    a = tmp_path / "records.csv"
    a.write_text(SAMPLE_RECORDS)
    b = tmp_path / "selection.csv"
    b.write_text(SAMPLE_SELECTION)
    outputs = render_figures([a, b], tmp_path / "figs")
    assert [p.name for p in outputs] == ["records.png", "selection.png"]
    assert all(p.is_file() for p in outputs)


def test_schema_mismatch_names_column(tmp_path):
    csv = tmp_path / "bad.csv"
    csv.write_text("experiment,run_id\nscaling,x\n")
    with pytest.raises(SchemaError, match="test_error_mean"):
        render_error_curves(csv, tmp_path / "bad.png")
    assert not (tmp_path / "bad.png").exists()


def test_empty_csv_rejected(tmp_path):
    csv = tmp_path / "empty.csv"
    csv.write_text(RECORD_HEADER + "\n")
    with pytest.raises(SchemaError, match="no data rows"):
        render_error_curves(csv, tmp_path / "empty.png")
    assert not (tmp_path / "empty.png").exists()


@pytest.mark.skipif(importlib.util.find_spec("cotlab") is None,
                    reason="analytic package not installed alongside")
def test_renders_primary_csv_without_modification(tmp_path):
    # drive the primary CLI end-to-end and feed its artifact straight in
    out_dir = tmp_path / "primary"
    code = subprocess.run(
        [sys.executable, "-m", "cotlab.cli", "scaling", "--seed", "3", "--trials", "12",
         "--m", "400", "--k-max", "3", "--n", "5", "--out", str(out_dir)],
        capture_output=True, text=True,
    ).returncode
    assert code == 0
    outputs = render_figures([out_dir / "scaling.csv"], tmp_path / "figs")
    assert outputs[0].is_file() and outputs[0].stat().st_size > 0
