"""Figure rendering from the shared record CSV schema.

Reads any CSV with the exact header produced by the analytic package (or by
this replica), groups rows by run_id, and renders one image per experiment:
log-error vs CoT depth for the curve experiments, and a pi-vs-hardness
scatter for the selection experiment's per-task CSV.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

RECORD_COLUMNS = [
    "experiment", "run_id", "seed", "d", "n", "m", "k", "hardness",
    "test_error_mean", "test_error_se", "bound_value", "wall_ms",
]
SELECTION_COLUMNS = ["task_index", "type_label", "sigma_min", "hardness", "pi"]


class SchemaError(ValueError):
    """A CSV does not carry the expected columns."""


def _read_rows(path: Path, expected: list[str]) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in expected if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {missing}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def render_error_curves(csv_path: str | Path, out_path: str | Path) -> Path:
    """Log test error vs k, one line per run_id, error bars from the SE column."""
    csv_path = Path(csv_path)
    rows = _read_rows(csv_path, RECORD_COLUMNS)
    by_run: dict[str, list[dict]] = {}
    for row in rows:
        if row["k"] == "" or row["test_error_mean"] == "":
            continue
        by_run.setdefault(row["run_id"], []).append(row)
    if not by_run:
        raise SchemaError(f"{csv_path}: no plottable (k, test_error_mean) rows")

    fig, ax = plt.subplots(figsize=(6, 4))
    for run_id in sorted(by_run):
        runs = sorted(by_run[run_id], key=lambda r: int(r["k"]))
        ks = [int(r["k"]) for r in runs]
        means = [float(r["test_error_mean"]) for r in runs]
        ses = [float(r["test_error_se"]) if r["test_error_se"] else 0.0 for r in runs]
        ax.errorbar(ks, means, yerr=ses, marker="o", markersize=3, capsize=2, label=run_id)
    experiment = rows[0]["experiment"]
    ax.set_yscale("log")
    ax.set_xlabel("CoT steps k")
    ax.set_ylabel("test error")
    ax.set_title(f"{experiment}: test error vs test-time compute")
    ax.legend(fontsize=7)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_selection_scatter(csv_path: str | Path, out_path: str | Path) -> Path:
    """Selection probability vs task hardness, colored per type, with type means."""
    csv_path = Path(csv_path)
    rows = _read_rows(csv_path, SELECTION_COLUMNS)
    fig, ax = plt.subplots(figsize=(6, 4))
    types = sorted({r["type_label"] for r in rows})
    for label in types:
        sub = [r for r in rows if r["type_label"] == label]
        hard = [float(r["hardness"]) for r in sub]
        pi = [float(r["pi"]) for r in sub]
        sc = ax.scatter(hard, pi, s=14, alpha=0.7, label=label)
        mean_pi = sum(pi) / len(pi)
        ax.axhline(mean_pi, color=sc.get_facecolor()[0], linestyle="--", linewidth=1)
    ax.set_xlabel("task hardness tr / lambda_min")
    ax.set_ylabel("selection probability pi")
    ax.set_title("selection probabilities vs task hardness")
    ax.legend(fontsize=7)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_figures(csv_paths: list[str | Path], out_dir: str | Path) -> list[Path]:
    """One image per input CSV; the selection per-task schema is detected by
    its header, everything else must carry the record schema."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    for path in csv_paths:
        path = Path(path)
        with open(path, newline="") as fh:
            header = fh.readline().strip().split(",")
        target = out_dir / (path.stem + ".png")
        if header == SELECTION_COLUMNS:
            outputs.append(render_selection_scatter(path, target))
        else:
            outputs.append(render_error_curves(path, target))
    return outputs
