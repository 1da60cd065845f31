"""Figure rendering from pipeline CSV/container outputs.

Three kinds:

* trajectories -- 2-D sample paths from an integration CSV, with start/end
  markers and the sqrt(d) reference circle.
* normcurves   -- mean trajectory norm against integration step per class,
  from a norm-table CSV.
* heatmap      -- one anomaly map from a maps container, optionally overlaid
  on the source image.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .ftc import read_ftc


class RenderError(ValueError):
    pass


def _read_csv_rows(path) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise RenderError(f"no data rows in {path}")
    return rows


def render_trajectories(csv_path, out_path) -> Path:
    """2-D trajectory plot from (sample_id, step, t, norm, x_0, x_1, ...) rows."""
    rows = _read_csv_rows(csv_path)
    if "x_0" not in rows[0] or "x_1" not in rows[0]:
        raise RenderError("trajectory CSV must carry at least x_0 and x_1 columns")
    dim = sum(1 for k in rows[0] if k.startswith("x_"))

    by_sample: dict[int, list[tuple[int, float, float]]] = {}
    for row in rows:
        by_sample.setdefault(int(row["sample_id"]), []).append(
            (int(row["step"]), float(row["x_0"]), float(row["x_1"])))

    fig, ax = plt.subplots(figsize=(6, 6))
    for pts in by_sample.values():
        pts.sort()
        xs = [p[1] for p in pts]
        ys = [p[2] for p in pts]
        ax.plot(xs, ys, lw=0.7, color="tab:blue", alpha=0.6)
        ax.plot(xs[0], ys[0], "k.", ms=4)
        ax.plot(xs[-1], ys[-1], "r.", ms=4)
    radius = math.sqrt(dim)
    theta = np.linspace(0.0, 2.0 * math.pi, 256)
    ax.plot(radius * np.cos(theta), radius * np.sin(theta), "k-", lw=1.2,
            label=f"radius sqrt({dim})")
    ax.set_aspect("equal")
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title("integration trajectories")
    return _save(fig, out_path)


def render_normcurves(csv_path, out_path) -> Path:
    """Mean norm against step for each class row of a norm-table CSV."""
    rows = _read_csv_rows(csv_path)
    step_cols = [k for k in rows[0] if k.startswith("step_")]
    if not step_cols:
        raise RenderError("norm-table CSV must carry step_* columns")
    steps = sorted(int(k.split("_", 1)[1]) for k in step_cols)

    fig, ax = plt.subplots(figsize=(6, 4))
    for row in rows:
        values = [float(row[f"step_{s}"]) for s in steps]
        ax.plot(steps, values, marker="o", ms=3, label=row.get("class", "all"))
        arg = int(np.argmin(values))
        ax.plot(steps[arg], values[arg], "k*", ms=10)
    ax.set_xlabel("integration step")
    ax.set_ylabel("mean trajectory norm")
    ax.legend(fontsize=8)
    return _save(fig, out_path)


def render_heatmap(maps_path, out_path, index: int = 0,
                   image_path=None) -> Path:
    """Anomaly heatmap for one image of an (N, H, W) maps container."""
    maps = read_ftc(maps_path)
    if maps.ndim == 2:
        maps = maps[None, :, :]
    if maps.ndim != 3:
        raise RenderError(f"expected an (N, H, W) maps container, got {maps.shape}")
    if not 0 <= index < maps.shape[0]:
        raise RenderError(f"map index {index} out of range")
    amap = np.asarray(maps[index], dtype=np.float64)

    fig, ax = plt.subplots(figsize=(5, 5))
    if image_path is not None:
        from PIL import Image

        with Image.open(image_path) as img:
            ax.imshow(img.convert("RGB"), extent=(0, 1, 1, 0))
        ax.imshow(amap, cmap="jet", alpha=0.45, extent=(0, 1, 1, 0))
        ax.set_xlim(0, 1)
        ax.set_ylim(1, 0)
    else:
        im = ax.imshow(amap, cmap="jet")
        fig.colorbar(im, ax=ax, shrink=0.8)
    ax.set_title(f"anomaly map #{index}")
    ax.set_xticks([])
    ax.set_yticks([])
    return _save(fig, out_path)


def _save(fig, out_path) -> Path:
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return out
