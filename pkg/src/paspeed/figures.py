"""Figure rendering for reconstruction reports and stability sweeps.

PNG companions to the delimited outputs; never load-bearing for any test or
contract, and skippable with --no-figures.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_reconstruction(report, path):
    """Recovered mass locations in two projections plus speeds."""
    fig, axes = plt.subplots(1, 3, figsize=(12, 4))
    pos = np.atleast_2d(report.positions) if len(report.positions) else np.zeros((0, 3))
    masses = report.masses
    for ax, (i, j, name) in zip(
        axes[:2], [(0, 1, "x1 / x2"), (0, 2, "x1 / x3")]
    ):
        if len(pos):
            colors = np.where(masses > 0, "tab:red", "tab:blue")
            sizes = 40 + 2000 * np.abs(masses) / max(np.max(np.abs(masses)), 1e-12)
            ax.scatter(pos[:, i], pos[:, j], s=sizes, c=colors, alpha=0.7)
        if report.matching:
            ax.set_title(f"{name} (matched {len(report.matching)})")
        else:
            ax.set_title(name)
        ax.set_aspect("equal")
        ax.grid(alpha=0.3)
        ax.set_xlim(-1, 1)
        ax.set_ylim(-1, 1)
    ax = axes[2]
    if len(report.speeds):
        ax.bar(np.arange(len(report.speeds)), report.speeds, color="tab:green")
        ax.set_ylabel("recovered speed")
        ax.set_xlabel("inclusion")
    ax.set_title(f"B = {report.B:.4g}, N = {report.n_recovered}")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_curve(curve, path):
    """Log-log error-vs-discrepancy panels with fitted slopes."""
    metrics = ["center_error", "speed_error"]
    metrics += [f"lq_error_q{q:g}" for q in curve.q_values]
    metrics += ["f_hat_error"]
    ncols = 3
    nrows = int(np.ceil(len(metrics) / ncols))
    fig, axes = plt.subplots(nrows, ncols, figsize=(4 * ncols, 3.2 * nrows))
    axes = np.atleast_1d(axes).ravel()
    for ax, metric in zip(axes, metrics):
        xs = np.array([r["discrepancy"] for r in curve.rows if r["noise"] > 0])
        ys = np.array([r[metric] for r in curve.rows if r["noise"] > 0])
        ok = (xs > 0) & (ys > 0) & np.isfinite(ys)
        ax.loglog(xs[ok], ys[ok], "o", alpha=0.6, ms=4)
        fit = curve.slopes.get(metric, {})
        slope = fit.get("slope")
        if slope is not None and np.isfinite(slope) and np.any(ok):
            xx = np.array([xs[ok].min(), xs[ok].max()])
            anchor = np.median(ys[ok]) / np.median(xs[ok]) ** slope
            ax.loglog(xx, anchor * xx**slope, "-", color="tab:red", lw=1)
            ax.set_title(f"{metric}: slope {slope:.2f}")
        else:
            ax.set_title(metric)
        ax.set_xlabel("data discrepancy")
        ax.grid(alpha=0.3, which="both")
    for ax in axes[len(metrics):]:
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
