#!/usr/bin/env python3
"""
SVG figures for conebook results

Figures are byte-stable: the SVG hash salt is fixed and no date is written,
so the same result always renders to the same file.

Usage:
    python3 src/plot_results.py results/reach_endpoints.csv [theta] [t]
"""

import os
import sys
import tempfile
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns
from matplotlib.patches import Circle

# Set style for all figures
plt.style.use('seaborn-v0_8-darkgrid')
sns.set_palette("husl")
plt.rcParams['svg.hashsalt'] = 'conebook'


def _save_svg(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".svg.tmp")
    os.close(fd)
    try:
        fig.savefig(tmp, format="svg", bbox_inches="tight", metadata={"Date": None})
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)
        plt.close(fig)
    return path


def emit_svg(points, disks, curves, path, title=""):
    """
    Draw a planar figure and write it as SVG.

    Args:
        points: (n, 2) array or None, drawn as a scatter
        disks: list of (center_x, center_y, radius, label)
        curves: list of (xs, ys, label)
    """
    fig, ax = plt.subplots(figsize=(7, 7))
    if points is not None and len(points):
        pts = np.asarray(points)
        ax.scatter(pts[:, 0], pts[:, 1], s=2, alpha=0.35, edgecolors='none', label='endpoints')
    palette = sns.color_palette("husl", max(1, len(disks)))
    for (cx, cy, radius, label), color in zip(disks, palette):
        ax.add_patch(Circle((cx, cy), radius, fill=False, linewidth=2, linestyle='--',
                            edgecolor=color, label=label))
    for xs, ys, label in curves:
        ax.plot(xs, ys, marker='o', linewidth=2, label=label)
    if disks and not curves:
        extent = max(abs(cx) + r for cx, cy, r, _ in disks)
        extent = max(extent, max(abs(cy) + r for cx, cy, r, _ in disks), 1e-3) * 1.1
        ax.set_xlim(-extent, extent)
        ax.set_ylim(-extent, extent)
        ax.set_aspect('equal')
    ax.set_title(title, fontsize=14, fontweight='bold')
    if disks or curves or points is not None:
        ax.legend(loc='upper right', fontsize=10, framealpha=0.95)
    plt.tight_layout()
    return _save_svg(fig, path)


def plot_reach(reach, path):
    """Half-space endpoint scatter with both candidate reach disks"""
    disks = [(0.0, 0.0, reach.flat_radius, f"t·tan(θ/2) = {reach.flat_radius:.4f}")]
    if np.isfinite(reach.tan_full_radius) and reach.tan_full_radius < 4 * max(reach.flat_radius, 1e-12):
        disks.append((0.0, 0.0, reach.tan_full_radius, f"t·tan(θ) = {reach.tan_full_radius:.4f}"))
    title = f"Reach at t = {reach.t:g}, θ = {reach.theta:.4f}\nmax radius {reach.max_radius:.4f}"
    return emit_svg(reach.endpoints[:, :2], disks, [], path, title)


def plot_recurrence(table: pd.DataFrame, path, mode=""):
    curves = [(table['horizon'].to_numpy(), table['hit_fraction'].to_numpy(), "hit fraction")]
    return emit_svg(None, [], curves, path, f"Recurrence hit fraction vs horizon ({mode})")


def plot_growth(growth: pd.DataFrame, path):
    curves = [(growth['n'].to_numpy(), growth['cal_n_over_n'].to_numpy(), "CAL^n / n")]
    return emit_svg(None, [], curves, path, "Calabi growth per return")


def main():
    if len(sys.argv) < 2:
        print(__doc__)
        sys.exit(1)
    endpoints = pd.read_csv(sys.argv[1])[['x', 'y']].to_numpy()
    theta = float(sys.argv[2]) if len(sys.argv) > 2 else np.pi / 2
    t = float(sys.argv[3]) if len(sys.argv) > 3 else 1.0
    radius = t * np.tan(theta / 2)
    out = emit_svg(endpoints, [(0.0, 0.0, radius, "t·tan(θ/2)")], [],
                   Path(sys.argv[1]).with_suffix(".svg"), "Endpoint scatter")
    print(f"✅ Saved: {out}")


if __name__ == "__main__":
    main()
