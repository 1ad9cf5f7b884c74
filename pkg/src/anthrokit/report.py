"""Render evaluation reports as CSV/Markdown tables plus figure files."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import FormatError  # noqa: E402
from .tables import fmt_float, write_csv  # noqa: E402

METRIC_COLUMNS = ("p2p20k_mm", "v2v_mm", "height_mm", "weight_kg",
                  "chest_mm", "waist_mm", "hip_mm")


def load_eval_report(path: str | Path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read eval report: {exc}", path=str(path))
    if "metrics" not in data:
        raise FormatError("eval report missing 'metrics'", path=str(path))
    return data


def _flat_metrics(report: dict) -> dict[str, float | None]:
    m = report["metrics"]
    mae = m.get("measurement_mae") or {}
    return {
        "p2p20k_mm": m.get("p2p20k_mm"),
        "v2v_mm": m.get("v2v_mm"),
        "height_mm": mae.get("height_mm"),
        "weight_kg": mae.get("weight_kg"),
        "chest_mm": mae.get("chest_mm"),
        "waist_mm": mae.get("waist_mm"),
        "hip_mm": mae.get("hip_mm"),
    }


def render_markdown(labels: list[str], reports: list[dict]) -> str:
    header = "| run | " + " | ".join(METRIC_COLUMNS) + " |"
    rule = "|" + " --- |" * (len(METRIC_COLUMNS) + 1)
    lines = [header, rule]
    for label, rep in zip(labels, reports):
        flat = _flat_metrics(rep)
        cells = [fmt_float(flat[c]) if flat[c] is not None else "n/a"
                 for c in METRIC_COLUMNS]
        lines.append("| " + " | ".join([label, *cells]) + " |")
    return "\n".join(lines) + "\n"


def render_figures(labels: list[str], reports: list[dict], outdir: Path) -> list[str]:
    """Bar charts of the error metrics, one PNG per metric family."""
    outdir.mkdir(parents=True, exist_ok=True)
    written = []

    flats = [_flat_metrics(r) for r in reports]
    mm_fields = [c for c in ("height_mm", "chest_mm", "waist_mm", "hip_mm")
                 if any(f[c] is not None for f in flats)]
    if mm_fields:
        fig, ax = plt.subplots(figsize=(6.4, 3.6))
        width = 0.8 / max(len(labels), 1)
        for i, (label, flat) in enumerate(zip(labels, flats)):
            xs = [j + i * width for j in range(len(mm_fields))]
            ys = [flat[c] if flat[c] is not None else 0.0 for c in mm_fields]
            ax.bar(xs, ys, width=width, label=label)
        ax.set_xticks([j + 0.4 - width / 2 for j in range(len(mm_fields))])
        ax.set_xticklabels([c.replace("_mm", "") for c in mm_fields])
        ax.set_ylabel("MAE [mm]")
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = outdir / "measurement_mae.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(str(path))

    dist_fields = [c for c in ("p2p20k_mm", "v2v_mm") if any(f[c] is not None for f in flats)]
    if dist_fields:
        fig, ax = plt.subplots(figsize=(4.8, 3.6))
        width = 0.8 / max(len(labels), 1)
        for i, (label, flat) in enumerate(zip(labels, flats)):
            xs = [j + i * width for j in range(len(dist_fields))]
            ys = [flat[c] if flat[c] is not None else 0.0 for c in dist_fields]
            ax.bar(xs, ys, width=width, label=label)
        ax.set_xticks([j + 0.4 - width / 2 for j in range(len(dist_fields))])
        ax.set_xticklabels([c.replace("_mm", "") for c in dist_fields])
        ax.set_ylabel("mean error [mm]")
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = outdir / "surface_error.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(str(path))
    return written


def write_report(eval_paths: list[str | Path], outdir: str | Path,
                 figures: bool = True) -> dict:
    """Aggregate eval JSONs into report.csv + report.md (+ figures/*.png)."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    labels = [Path(p).stem for p in eval_paths]
    reports = [load_eval_report(p) for p in eval_paths]

    rows = []
    for label, rep in zip(labels, reports):
        flat = _flat_metrics(rep)
        for c in METRIC_COLUMNS:
            rows.append([label, c, fmt_float(flat[c]) if flat[c] is not None else ""])
    write_csv(outdir / "report.csv", ["run", "metric", "value"], rows)
    (outdir / "report.md").write_text(render_markdown(labels, reports))

    figure_paths = render_figures(labels, reports, outdir / "figures") if figures else []
    return {
        "csv": str(outdir / "report.csv"),
        "markdown": str(outdir / "report.md"),
        "figures": figure_paths,
    }
