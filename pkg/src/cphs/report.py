"""Report artifacts: comparison curves, loop history, graphs and the figure."""

from __future__ import annotations

import csv
import io
import os
from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from .errors import ContractError
from .fusion import existing_curve, target_curve
from .ivesim import dataset_csv
from .loop import pilot_graph
from .metrics import Curve, assign_bins

SERIES = (
    ("performance_target", "Performance Target", "s"),
    ("augmented_model", "Augmented Design Model", "^"),
    ("existing_model", "Existing Design Model", "o"),
    ("ive_empirical", "Data from IVE Experiment", "D"),
)
X_RANGE = (200.0, 700.0)
Y_RANGE = (-0.05, 1.05)


def ive_empirical_curve(records, centers) -> Curve:
    """Switch-on rate per illuminance bin over records where switching on was possible."""
    eligible = [r for r in records if not r.context.lights_currently_on]
    if not eligible:
        return Curve(centers, np.full(len(centers), np.nan))
    bins = assign_bins([max(r.context.work_illuminance, 1e-3) for r in eligible], centers)
    on = np.array([r.action == "switch_on" for r in eligible], dtype=float)
    rates = [on[bins == b].mean() if np.any(bins == b) else np.nan for b in range(len(centers))]
    return Curve(centers, rates)


def comparison_curves(result) -> dict[str, Curve]:
    cfg = result.config
    centers = cfg.training.centers
    return {
        "performance_target": target_curve(cfg.target, centers),
        "augmented_model": result.state.best_model.curve,
        "existing_model": existing_curve(cfg.hunt, centers),
        "ive_empirical": ive_empirical_curve(result.state.best_ive_records, centers),
    }


def curves_csv(curves: dict[str, Curve]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["series", "bin_center_lux", "probability"])
    for key, _, _ in SERIES:
        curve = curves[key]
        for x, p in zip(curve.bin_center_lux, curve.probability):
            writer.writerow([key, repr(float(x)), repr(float(p))])
    return buf.getvalue()


def read_curves(path) -> dict[str, Curve]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = {}
    for key in dict.fromkeys(r["series"] for r in rows):
        sel = [r for r in rows if r["series"] == key]
        out[key] = Curve([float(r["bin_center_lux"]) for r in sel], [float(r["probability"]) for r in sel])
    return out


HISTORY_COLUMNS = (
    "iteration",
    "discrepancy",
    "existing_discrepancy",
    "best_discrepancy",
    "graph_distance",
    "epochs",
    "edges_added",
    "variables_removed",
    "variables_added",
)


def history_csv(state) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HISTORY_COLUMNS)
    best = state.best_so_far()
    for i in range(state.iteration):
        plan = state.plans[i]
        writer.writerow(
            [
                i + 1,
                repr(float(state.discrepancy_history[i])),
                repr(float(state.existing_discrepancy_history[i])),
                repr(float(best[i])),
                state.graph_distance_history[i],
                state.epochs_history[i],
                ";".join(f"{u}->{v}" for u, v in plan.edges_added),
                ";".join(plan.variables_to_remove),
                ";".join(plan.variables_to_add),
            ]
        )
    return buf.getvalue()


def read_history(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != HISTORY_COLUMNS:
            raise ContractError(f"{path}: unexpected history header")
        rows = []
        for r in reader:
            rows.append(
                {
                    "iteration": int(r["iteration"]),
                    "discrepancy": float(r["discrepancy"]),
                    "existing_discrepancy": float(r["existing_discrepancy"]),
                    "best_discrepancy": float(r["best_discrepancy"]),
                    "graph_distance": int(r["graph_distance"]),
                    "epochs": int(r["epochs"]),
                    "edges_added": [tuple(e.split("->")) for e in r["edges_added"].split(";") if e],
                    "variables_removed": [v for v in r["variables_removed"].split(";") if v],
                    "variables_added": [v for v in r["variables_added"].split(";") if v],
                }
            )
    return rows


def plot_curves(curves: dict[str, Curve]) -> Figure:
    fig = Figure(figsize=(6.4, 4.4))
    ax = fig.add_subplot()
    for key, label, marker in SERIES:
        c = curves[key]
        ax.plot(c.bin_center_lux, c.probability, linestyle="none", marker=marker, markersize=6, label=label)
    ax.set_xlim(*X_RANGE)
    ax.set_ylim(*Y_RANGE)
    ax.set_xlabel("Work area illuminance (Lux)", fontweight="bold")
    ax.set_ylabel("Probability of switching on", fontweight="bold")
    ax.legend(loc="lower center", bbox_to_anchor=(0.6, 0.15), frameon=False, fontsize=8)
    fig.tight_layout()
    return fig


def figure_svg(fig: Figure) -> bytes:
    """SVG bytes that do not change between runs (no date, fixed id salt)."""
    buf = io.BytesIO()
    with matplotlib.rc_context({"svg.hashsalt": "cphs-report", "svg.fonttype": "path"}):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue()


def _check_writable(out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    if not os.access(out_dir, os.W_OK | os.X_OK):
        raise PermissionError(f"output directory {out_dir} is not writable")


def write_artifacts(out_dir, files: dict[str, bytes]) -> list[tuple[str, int]]:
    """Write all files, then a manifest of (relative path, byte length)."""
    out_dir = Path(out_dir)
    _check_writable(out_dir)
    manifest = []
    for name in sorted(files):
        data = files[name]
        (out_dir / name).write_bytes(data)
        manifest.append((name, len(data)))
    (out_dir / "manifest.txt").write_text("".join(f"{n} {size}\n" for n, size in manifest), encoding="utf-8")
    return manifest


def read_manifest(path) -> list[tuple[str, int]]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        name, size = line.rsplit(" ", 1)
        out.append((name, int(size)))
    return out


def emit_report(result, out_dir) -> list[tuple[str, int]]:
    """Render every loop artifact in memory, then write them under ``out_dir``."""
    out_dir = Path(out_dir)
    _check_writable(out_dir)
    state = result.state
    curves = comparison_curves(result)
    files = {
        "curves.csv": curves_csv(curves).encode(),
        "loop_history.csv": history_csv(state).encode(),
        "ive_dataset.csv": dataset_csv(state.ive_records).encode(),
        "facility_dataset.csv": dataset_csv(state.facility_records).encode(),
        "pilot_graph.txt": pilot_graph(result.config).to_text().encode(),
        "final_graph.txt": state.refined_graph.to_text().encode(),
        "report.svg": figure_svg(plot_curves(curves)),
    }
    if state.test_report is not None:
        files["independence_tests.csv"] = state.test_report.to_csv().encode()
    manifest = write_artifacts(out_dir, files)
    result.manifest = manifest
    return manifest

