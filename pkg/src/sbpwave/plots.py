"""Matplotlib figure rendering for convergence studies and simulations.

Figures are written straight to files (Agg backend); nothing here opens a
window.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["convergence_figure", "snapshot_figure", "energy_figure"]


def convergence_figure(rows, path):
    """Log-log error versus degrees of freedom, one marker per level."""
    n = np.array([r.n_dofs for r in rows], dtype=float)
    err = np.array([r.l2_error for r in rows], dtype=float)
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    ax.loglog(np.sqrt(n), err, "o-", color="tab:blue", label=f"p = {rows[0].p}")
    for r in rows[1:]:
        if np.isfinite(r.rate_q):
            ax.annotate(f"q = {r.rate_q:.2f}", (np.sqrt(r.n_dofs), r.l2_error),
                        textcoords="offset points", xytext=(6, 4), fontsize=8)
    ax.set_xlabel(r"$\sqrt{N_{\mathrm{dofs}}}$")
    ax.set_ylabel(r"$L_2$ error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def snapshot_figure(gops, values_full, t, path):
    """Render a non-reduced solution snapshot, one pcolormesh per block."""
    n = gops.op.n
    vmax = float(np.abs(values_full).max()) or 1.0
    fig, ax = plt.subplots(figsize=(5.0, 4.6))
    for k in range(len(gops.block_ops)):
        sl = slice(k * n * n, (k + 1) * n * n)
        x = gops.block_ops[k].x.reshape(n, n)
        y = gops.block_ops[k].y.reshape(n, n)
        v = values_full[sl].reshape(n, n)
        mesh = ax.pcolormesh(x, y, v, cmap="RdBu_r", vmin=-vmax, vmax=vmax, shading="gouraud")
    fig.colorbar(mesh, ax=ax, label="v")
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(f"t = {t:.4f}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def energy_figure(times, energies, path, t_marker=None):
    """Discrete energy history on a linear time axis."""
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.plot(times, energies, color="tab:green")
    if t_marker is not None:
        ax.axvline(t_marker, color="gray", linestyle="--", linewidth=0.8, label="source off")
        ax.legend()
    ax.set_xlabel("t")
    ax.set_ylabel("discrete energy")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
