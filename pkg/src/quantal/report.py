"""Render anytime partition records to a CSV series and a PNG bound curve.

Headless on purpose: the Agg backend is forced before pyplot loads so the
report command works in containers and CI without a display.
"""

from __future__ import annotations

import json
import math
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .errors import UaiSyntaxError
from .metrics import write_anytime_csv

__all__ = ["load_records", "write_report"]


def load_records(path: str) -> list[dict]:
    """Read a JSON-lines anytime log; 'inf' budgets come back as math.inf."""
    records = []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise UaiSyntaxError(f"{path}:{ln}: bad record: {e}") from e
            if rec.get("k") == "inf":
                rec["k"] = math.inf
            records.append(rec)
    return records


def _plot_bound_curve(records: list[dict], path: str,
                      reference_log10: float | None) -> None:
    pts = [(r["k"], r["log10_Z"]) for r in records
           if r.get("log10_Z") is not None]
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    if pts:
        finite = [(k, z) for k, z in pts if k != math.inf]
        xmax = max((k for k, _ in finite), default=2)
        xs = [k if k != math.inf else xmax * 2 for k, z in pts]
        ys = [z for _, z in pts]
        ax.plot(xs, ys, marker="o", color="#1f6fb2", label="bound")
        ax.set_xscale("log", base=2)
        if any(k == math.inf for k, _ in pts):
            ax.set_xticks(xs)
            ax.set_xticklabels(
                ["inf" if k == math.inf else str(int(k)) for k, _ in pts])
    if reference_log10 is not None:
        ax.axhline(reference_log10, color="#b23a1f", linestyle="--",
                   linewidth=1.0, label="reference")
    ax.set_xlabel("node budget k")
    ax.set_ylabel("log10 Z")
    mode = records[0].get("mode", "?") if records else "?"
    heur = records[0].get("heuristic", "?") if records else "?"
    ax.set_title(f"anytime bound ({mode}, {heur})")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_report(records: list[dict], out_dir: str,
                 reference_log10: float | None = None) -> dict:
    """Write series.csv and bound_curve.png under out_dir; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "series.csv")
    png_path = os.path.join(out_dir, "bound_curve.png")
    with open(csv_path, "w", newline="") as fh:
        rows = write_anytime_csv(records, fh, reference_log10)
    _plot_bound_curve(records, png_path, reference_log10)
    return {"csv": csv_path, "figure": png_path, "records": rows}
