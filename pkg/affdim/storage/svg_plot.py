"""Fixed-size SVG scatter plots of point clouds.

Output is reproducible: the Agg backend, a fixed hash salt for element ids
and no date in the SVG metadata.
"""
from pathlib import Path
from typing import Dict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from affdim import config  # noqa: E402
from affdim.attractor import PointCloud  # noqa: E402


def subsample_indices(count: int, limit: int) -> np.ndarray:
    """Evenly strided indices, at most ``limit`` of them."""
    if count <= limit:
        return np.arange(count)
    return np.linspace(0, count - 1, limit).astype(np.int64)


def write_scatter_svg(cloud: PointCloud, path, max_points: int = config.SVG_MAX_POINTS) -> Dict:
    """
    Scatter of the first two coordinates over the cloud's bounding box.

    Returns:
        Plot metadata (projection used, points drawn, viewport)
    """
    path = Path(path)
    pts = cloud.points
    if cloud.dim == 1:
        pts = np.column_stack([pts[:, 0], np.zeros(len(pts))])
    xy = pts[subsample_indices(len(pts), max_points), :2]
    lo, hi = (xy.min(axis=0), xy.max(axis=0)) if len(xy) else (np.zeros(2), np.ones(2))
    pad = np.where(hi - lo > 0, 0.02 * (hi - lo), 0.5)
    lo, hi = lo - pad, hi + pad

    size_in = config.SVG_SIZE / 72.0
    with plt.rc_context({"svg.hashsalt": "affdim", "svg.fonttype": "none"}):
        fig = plt.figure(figsize=(size_in, size_in), dpi=72)
        ax = fig.add_axes([0, 0, 1, 1])
        ax.set_axis_off()
        ax.scatter(xy[:, 0], xy[:, 1], s=(2 * config.SVG_POINT_RADIUS) ** 2, c="black",
                   marker="o", linewidths=0)
        ax.set_xlim(lo[0], hi[0])
        ax.set_ylim(lo[1], hi[1])
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return {
        "projection": "x1,x2" if cloud.dim >= 2 else "x1",
        "points_drawn": int(len(xy)),
        "viewport": [float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])],
        "size": config.SVG_SIZE,
    }
