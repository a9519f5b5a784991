import logging
import os
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import numpy.typing as npt  # noqa: E402

from .structs import InclusionCurve  # noqa: E402

logger = logging.getLogger()

# stable element ids so re-rendering the same curve gives the same bytes
plt.rcParams["svg.hashsalt"] = "attribution-leakage"
plt.rcParams["svg.fonttype"] = "none"
plt.rcParams["figure.figsize"] = (5.0, 3.5)
plt.rcParams["axes.linewidth"] = 0.6


def plot_curves(
    path: str,
    curves: dict[str, InclusionCurve],
    ci: Optional[dict[str, tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]]] = None,
    title: str = "",
) -> None:
    """Inclusion curves with the full-feature log-likelihood as a dotted line."""
    if not curves:
        raise ValueError("nothing to plot")
    fig, ax = plt.subplots()
    try:
        for method, curve in curves.items():
            (line,) = ax.plot(curve.grid, curve.mean_loglik, marker="o", ms=3, label=method)
            if ci and method in ci:
                low, high = ci[method]
                ax.fill_between(curve.grid, low, high, color=line.get_color(), alpha=0.2, lw=0)
        full = next(iter(curves.values())).full_feature_loglik
        ax.axhline(full, color="black", linestyle=":", linewidth=1.0, label="full features")
        ax.set_xlim(0, 100)
        ax.set_xlabel("features retained (%)")
        ax.set_ylabel("mean log-likelihood")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False, fontsize=8)
        fig.tight_layout()
        folder = os.path.dirname(path)
        if folder:
            os.makedirs(folder, exist_ok=True)
        fig.savefig(path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    logger.debug(f"wrote plot of {len(curves)} curve(s) to {path}")


def plot_curve(
    path: str,
    method: str,
    curve: InclusionCurve,
    ci: Optional[tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]] = None,
) -> None:
    plot_curves(path, {method: curve}, {method: ci} if ci is not None else None, title=method)
