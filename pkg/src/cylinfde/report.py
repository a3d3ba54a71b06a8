"""Figure rendering for command outputs.

Every command writes its CSV tables first; these helpers render the matching
figures next to them when the output.figures toggle is on.  All rendering is
headless (Agg) and file-based.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 110,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _new_axes(nrows=1, ncols=1, **kw):
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(nrows, ncols, **kw)
    return fig, axes


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_convergence(degrees, errors, path, title="Truncation-degree convergence"):
    fig, ax = _new_axes()
    ax.loglog(degrees, errors, "o-")
    ax.set_xlabel("degree m")
    ax.set_ylabel("mean L1 relative error")
    ax.set_title(title)
    _save(fig, path)


def plot_history(history, path, title="Training history"):
    fig, (ax1, ax2) = _new_axes(2, 1, sharex=True, figsize=(6.0, 6.0))
    it = history.iteration
    ax1.semilogy(it, history.total_loss, label="total", lw=0.8)
    ax1.semilogy(it, history.residual_loss, label="residual", lw=0.6, alpha=0.7)
    ax1.semilogy(it, history.boundary_loss, label="boundary", lw=0.6, alpha=0.7)
    ax1.set_ylabel("loss")
    ax1.legend(loc="upper right")
    ax1.set_title(title)
    mask = np.isfinite(history.val_rel_error)
    if mask.any():
        ax2.semilogy(it[mask], history.val_rel_error[mask], "o-", ms=2, label="val rel error")
    ax2.semilogy(it, history.lr, lw=0.6, alpha=0.7, label="lr")
    ax2.set_xlabel("iteration")
    ax2.legend(loc="upper right")
    _save(fig, path)


def plot_error_histogram(abs_err, rel_err, path, title="Test-set error"):
    fig, (ax1, ax2) = _new_axes(1, 2, figsize=(8.0, 3.5))
    for ax, err, name in ((ax1, abs_err, "absolute"), (ax2, rel_err, "relative")):
        err = np.asarray(err)
        err = err[np.isfinite(err) & (err > 0)]
        if err.size:
            bins = np.logspace(np.log10(err.min()), np.log10(err.max()), 40)
            ax.hist(err, bins=bins)
            ax.set_xscale("log")
        ax.set_xlabel(f"{name} error")
    ax1.set_ylabel("count")
    fig.suptitle(title)
    _save(fig, path)


def plot_derivative_error(x, abs_err, rel_err, path, title="Derivative error at the zero function"):
    fig, (ax1, ax2) = _new_axes(1, 2, figsize=(8.0, 3.5))
    ax1.semilogy(x, np.maximum(abs_err, 1e-18))
    ax1.set_xlabel("x")
    ax1.set_ylabel("absolute error")
    ax2.semilogy(x, np.maximum(rel_err, 1e-18))
    ax2.set_xlabel("x")
    ax2.set_ylabel("relative error")
    fig.suptitle(title)
    _save(fig, path)


def plot_kernel_heatmap(x, y, err, path, title="Second-derivative kernel error"):
    fig, ax = _new_axes(figsize=(5.0, 4.2))
    im = ax.pcolormesh(x, y, err.T, shading="auto")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(title)
    fig.colorbar(im, ax=ax)
    _save(fig, path)
