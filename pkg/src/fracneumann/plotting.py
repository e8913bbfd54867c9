"""PNG rendering of the two-column plot-data files (Agg backend, no display needed)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .io import read_plot_data  # noqa: E402

STYLE = {
    "figure.figsize": (4.5, 3.2),
    "figure.dpi": 100,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
}

# file stem -> (x label, y label, log-x, log-y, marker)
LAYOUT = {
    "profile": ("x", "u", False, False, ""),
    "radial_profile": ("|x - centroid|", "u", False, False, "."),
    "energy_history": ("iteration", "energy", False, False, ""),
    "residual_history": ("iteration", "residual", False, True, ""),
    "scaling": ("eps", "c_eps", True, True, "o"),
    "norm_scaling": ("eps", "||u||^2 eps^-n", True, False, "o"),
    "green_residual": ("pair", "relative residual", False, True, "o"),
    "l1_truncation": ("R_ext", "weighted L1", True, False, "o"),
    "collar_slack": ("field", "slack", False, False, "o"),
}


def render(data_path: Path, title: str | None = None) -> Path:
    """Render ``<stem>.dat`` to ``<stem>.png`` next to it."""
    data_path = Path(data_path)
    x, y = read_plot_data(data_path)
    stem = data_path.stem
    key = next((k for k in LAYOUT if stem.startswith(k)), None)
    xl, yl, logx, logy, marker = LAYOUT.get(key, ("x", "y", False, False, ""))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(x, y, marker=marker, color="#2b5d8a")
        if logx and len(x) and (x > 0).all():
            ax.set_xscale("log")
        if logy and len(y) and (y > 0).all():
            ax.set_yscale("log")
        ax.set_xlabel(xl)
        ax.set_ylabel(yl)
        ax.set_title(title or stem.replace("_", " "))
        fig.tight_layout()
        out = data_path.with_suffix(".png")
        fig.savefig(out, metadata={"Software": None})
        plt.close(fig)
    return out
