"""SVG rendering of scan results: dt_max and sweep-rate curves over degree.

One polyline per scheme family, degree on the x axis.  Fixed-stage schemes
contribute single markers at their stage count.  Figures carry no timestamp
metadata, so reruns emit identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
# element ids are salted with a random uuid unless pinned
matplotlib.rcParams["svg.hashsalt"] = "expwave"

import matplotlib.pyplot as plt

__all__ = ["plot_degree_curves", "plot_dtmax_curves", "plot_nop_curves"]

_MARKERS = ("o", "s", "D", "^", "v", "P", "X")


def _families(rows: Sequence[tuple[str, int, float]]) -> dict[str, list[tuple[int, float]]]:
    out: dict[str, list[tuple[int, float]]] = {}
    for scheme, degree, value in rows:
        out.setdefault(scheme, []).append((int(degree), float(value)))
    for points in out.values():
        points.sort()
    return out


def plot_degree_curves(
    rows: Sequence[tuple[str, int, float]],
    path: str | Path,
    ylabel: str,
    title: str,
    log_y: bool = False,
) -> None:
    """Render (scheme, degree, value) triples as one curve per scheme."""
    families = _families(rows)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for idx, (scheme, points) in enumerate(families.items()):
        degrees = [d for d, _ in points]
        values = [v for _, v in points]
        ax.plot(
            degrees,
            values,
            marker=_MARKERS[idx % len(_MARKERS)],
            label=scheme,
            linewidth=1.2,
            markersize=5,
        )
    if log_y:
        ax.set_yscale("log")
    ax.set_xlabel("degree / stage count")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_dtmax_curves(rows: Sequence[tuple[str, int, float]], path: str | Path) -> None:
    plot_degree_curves(rows, path, "dt_max (s)", "largest admissible step per degree")


def plot_nop_curves(rows: Sequence[tuple[str, int, float]], path: str | Path) -> None:
    plot_degree_curves(
        rows, path, "N_op (sweeps/s)", "sweep rate at dt_max per degree", log_y=True
    )
