# spde/plotting.py
"""Static log-log plots of moment tables with their fitted power law."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from spde.regularity import ExponentFit, MomentTable  # noqa: E402

# fixed ids and no date stamp, so reruns write identical bytes
plt.rcParams["svg.hashsalt"] = "rspde"


def plot_moment_fit(table: MomentTable, fit: ExponentFit, path: Path,
                    target: float | None = None) -> Path:
    h = table.lags
    m = table.moments
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    ax.errorbar(h, m, yerr=1.96 * table.stderrs, fmt="o", ms=4, capsize=2, label="Monte Carlo")

    grid = np.geomspace(h.min(), h.max(), 64)
    anchor = np.exp(fit.intercept)
    ax.plot(grid, anchor * grid ** fit.slope, "-",
            label=f"fit: exponent {fit.exponent:.3f}")
    # band spanned by the ci95 exponents, pinned at the geometric mid lag
    mid = np.sqrt(h.min() * h.max())
    level = anchor * mid ** fit.slope
    low = level * (grid / mid) ** (table.p * fit.ci95[0])
    high = level * (grid / mid) ** (table.p * fit.ci95[1])
    ax.fill_between(grid, np.minimum(low, high), np.maximum(low, high), alpha=0.2,
                    label="ci95")
    if target is not None:
        ax.plot(grid, level * (grid / mid) ** (table.p * target), "--",
                label=f"target {target:.3f}")

    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("lag h")
    ax.set_ylabel(f"E|Δu|^{table.p:g}")
    ax.set_title(f"{table.kind} {table.direction} increments, p={table.p:g}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
