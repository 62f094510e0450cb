"""Phase portraits: streamline field, trajectories, critical points, cycle overlays.

Figures render through matplotlib with timestamps and hash salts pinned so an
SVG written twice from the same inputs is byte-identical.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Optional, Sequence

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
from matplotlib.collections import LineCollection
import numpy as np

from .dynamics import _rk4_step
from .problems import Problem

_SVG_SALT = "minmaxlab"


def _streamline_segments(problem: Problem, box, grid: int, t_seg: float = 0.15,
                         substeps: int = 12) -> list:
    """Short RK4 arcs seeded on a grid; the background flow texture."""
    xmin, xmax, ymin, ymax = box
    segs = []
    h = t_seg / substeps
    for x in np.linspace(xmin, xmax, grid):
        for y in np.linspace(ymin, ymax, grid):
            z = np.array([x, y])
            arc = [z.copy()]
            for _ in range(substeps):
                z = _rk4_step(problem.field, z, h)
                if not np.all(np.isfinite(z)) or np.max(np.abs(z)) > 10 * max(abs(xmax), abs(ymax)) + 10:
                    break
                arc.append(z.copy())
            if len(arc) > 1:
                segs.append(np.array(arc))
    return segs


def draw_panel(ax, problem: Problem, box, grid: int = 20,
               paths: Sequence[tuple] = (), critical_points=(),
               predicted_radius: Optional[float] = None,
               cycle_radius: Optional[float] = None,
               cycle_center=(0.0, 0.0), title: str = ""):
    """One phase-portrait panel.

    paths: sequence of (points array, label, color) polylines.
    predicted_radius draws a dashed circle; cycle_radius a white circle
    (detected non-critical limit sets are shown in white).
    """
    segs = _streamline_segments(problem, box, grid)
    ax.add_collection(LineCollection(segs, colors="0.72", linewidths=0.5, zorder=1))
    theta = np.linspace(0.0, 2.0 * math.pi, 256)
    if predicted_radius is not None:
        ax.plot(predicted_radius * np.cos(theta), predicted_radius * np.sin(theta),
                linestyle="--", color="tab:blue", linewidth=1.2, zorder=3,
                label="predicted cycle")
    if cycle_radius is not None:
        cx, cy = cycle_center
        ax.plot(cx + cycle_radius * np.cos(theta), cy + cycle_radius * np.sin(theta),
                color="white", linewidth=2.0, zorder=4, label="detected cycle")
    for pts, label, color in paths:
        pts = np.asarray(pts)
        ax.plot(pts[:, 0], pts[:, 1], color=color, linewidth=1.0, zorder=5,
                label=label or None)
    for cp in critical_points:
        loc = np.asarray(cp.location if hasattr(cp, "location") else cp)
        marker = {"stable": "o", "unstable": "x"}.get(
            getattr(cp, "classification", ""), "s")
        ax.plot([loc[0]], [loc[1]], marker=marker, color="black", markersize=6,
                zorder=6)
    xmin, xmax, ymin, ymax = box
    ax.set_xlim(xmin, xmax)
    ax.set_ylim(ymin, ymax)
    ax.set_aspect("equal")
    ax.set_facecolor("0.93")
    ax.set_title(title, fontsize=10)
    ax.set_xlabel("x")
    ax.set_ylabel("y")


def render_portrait(panels: Sequence[dict], out_path, figwidth: float = 4.0) -> Path:
    """Render one figure with one axes per panel spec and save deterministic SVG.

    Each panel dict carries the draw_panel keyword arguments plus 'problem'.
    """
    n = max(1, len(panels))
    with plt.rc_context({"svg.hashsalt": _SVG_SALT}):
        fig, axes = plt.subplots(1, n, figsize=(figwidth * n, figwidth))
        if n == 1:
            axes = [axes]
        for ax, spec in zip(axes, panels):
            spec = dict(spec)
            problem = spec.pop("problem")
            draw_panel(ax, problem, **spec)
            if ax.get_legend_handles_labels()[0]:
                ax.legend(fontsize=7, loc="upper right")
        fig.tight_layout()
        out_path = Path(out_path)
        fig.savefig(out_path, format=out_path.suffix.lstrip(".") or "svg",
                    metadata={"Date": None})
        plt.close(fig)
    return Path(out_path)


def render_radius_plot(series: Sequence[tuple], out_path) -> Path:
    """Radius-versus-time report figure: series of (times, radii, label)."""
    with plt.rc_context({"svg.hashsalt": _SVG_SALT}):
        fig, ax = plt.subplots(figsize=(6.0, 3.5))
        for times, radii, label in series:
            ax.plot(times, radii, linewidth=1.0, label=label)
        ax.set_xlabel("effective time")
        ax.set_ylabel("||z||")
        if any(label for _, _, label in series):
            ax.legend(fontsize=8)
        fig.tight_layout()
        out_path = Path(out_path)
        fig.savefig(out_path, format=out_path.suffix.lstrip(".") or "svg",
                    metadata={"Date": None})
        plt.close(fig)
    return Path(out_path)
