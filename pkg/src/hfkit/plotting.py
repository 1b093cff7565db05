"""Static SVG profile charts (rho against a tabulated quantity).

The SVG backend is pinned to a fixed hash salt and no date metadata so the
same table always renders to the same bytes.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {"svg.hashsalt": "hfkit", "svg.fonttype": "none", "path.simplify": False}


def profile_svg(path, rho, series: dict, title="", ylabel="", logy=None):
    """One chart with a line per entry of ``series`` (name -> values)."""
    rho = np.asarray(rho, float)
    with matplotlib.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.0, 3.5))
        positive = True
        for name, vals in series.items():
            v = np.asarray(vals, float)
            ok = np.isfinite(v)
            positive &= bool(np.all(v[ok] > 0))
            ax.plot(rho[ok], v[ok], marker=".", lw=1.0, label=name)
        ax.set_xscale("log")
        if logy is None:
            logy = positive
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel("rho")
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(series) > 1:
            ax.legend(fontsize=8)
        ax.grid(True, which="both", lw=0.3, alpha=0.5)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
