"""
Heat-map Module
SVG maps of the most likely stage over a contour grid
"""

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.colors import BoundaryNorm, ListedColormap  # noqa: E402
from matplotlib.patches import Patch  # noqa: E402

from ..core.predict import ContourGrid  # noqa: E402

# precontemplation, contemplation, preparation, action/maintenance
PALETTE = ("#d7191c", "#fdae61", "#a6d96a", "#1a9641")
# only used by merge maps that keep more than four stages
EXTRA_COLORS = ("#2b83ba", "#5e3c99")


def _colors(n_stages: int):
    colors = list(PALETTE) + list(EXTRA_COLORS)
    if n_stages > len(colors):
        raise ValueError(f"cannot colour {n_stages} stages, at most {len(colors)} are supported")
    return colors[:n_stages]


def render_argmax_svg(grid: ContourGrid, equation: int, n_stages: int) -> bytes:
    """Flat cells coloured by the argmax stage of one equation"""
    colors = _colors(n_stages)
    cmap = ListedColormap(colors)
    norm = BoundaryNorm([s - 0.5 for s in range(n_stages + 1)], n_stages)
    req = grid.request

    with plt.rc_context({"svg.hashsalt": "mvoprobit", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 5))
        try:
            ax.pcolormesh(grid.axis_a, grid.axis_b, grid.argmax[equation].T,
                          cmap=cmap, norm=norm, shading="nearest")
            ax.set_xlabel(req.var_a)
            ax.set_ylabel(req.var_b)
            ax.set_title(f"{grid.equations[equation]}: most likely stage")
            handles = [Patch(color=c, label=f"stage {s}") for s, c in enumerate(colors)]
            ax.legend(handles=handles, loc="upper left", bbox_to_anchor=(1.02, 1.0), frameon=False)
            fig.tight_layout()
            buffer = io.BytesIO()
            fig.savefig(buffer, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
    return buffer.getvalue()
