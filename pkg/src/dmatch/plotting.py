"""Report figures rendered to files with the Agg backend."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_convergence", "plot_field"]

_META = {"Software": None}


def plot_convergence(rows, path, title=None):
    """Lower bounds (dashed) and best primal energies (solid) per solver.

    ``rows`` are ``(solver, iter, lower_bound, primal_energy, millis)``.
    """
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    solvers = []
    for r in rows:
        if r[0] not in solvers:
            solvers.append(r[0])
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for k, name in enumerate(solvers):
        sel = [r for r in rows if r[0] == name]
        it = np.array([r[1] for r in sel])
        lb = np.array([r[2] for r in sel], dtype=float)
        pe = np.array([r[3] for r in sel], dtype=float)
        c = colors[k % len(colors)]
        if np.any(np.isfinite(lb)):
            ax.plot(it, lb, "--", color=c, label=f"{name} bound")
        ax.plot(it, pe, "-", color=c, label=f"{name} energy")
    ax.set_xlabel("iteration")
    ax.set_ylabel("energy")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)


def plot_field(field, path, vmin=None, vmax=None, title=None, cmap="gray"):
    """Scalar field (disparity) with a colorbar; non-finite pixels blank."""
    f = np.ma.masked_invalid(np.asarray(field, dtype=float))
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    im = ax.imshow(f, cmap=cmap, vmin=vmin, vmax=vmax, interpolation="nearest")
    fig.colorbar(im, ax=ax)
    ax.set_axis_off()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
