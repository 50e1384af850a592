"""Matplotlib figures for snapshots and diagnostics (rendered off-screen)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _cell_velocity(V):
    """Average face velocities onto cell centres."""
    return 0.5 * (V.vx[1:] + V.vx[:-1]), 0.5 * (V.vy[:, 1:] + V.vy[:, :-1])


def _quiver(ax, grid, ux, uy, color, every=None):
    m, n = grid.shape
    every = every or max(1, max(m, n) // 16)
    X, Y = grid.centers()
    sl = (slice(every // 2, None, every), slice(every // 2, None, every))
    ux, uy = ux[sl], uy[sl]
    if not np.any(np.hypot(ux, uy) > 0):
        return
    ax.quiver(X[sl], Y[sl], ux, uy, color=color, angles="xy", pivot="mid")


def _image(ax, grid, field, title, vmax=1.0):
    extent = (0.0, grid.m * grid.h, 0.0, grid.n * grid.h)
    im = ax.imshow(np.asarray(field).T, origin="lower", extent=extent, vmin=0.0, vmax=vmax,
                   cmap="viridis", interpolation="nearest")
    ax.set_title(title)
    ax.set_xticks([])
    ax.set_yticks([])
    return im


def plot_snapshot(path, grid, rho1, rho2, flux, velocity=None, t=0.0):
    """Three panels: rho2 with its decongestion flux, rho1 with its velocity, and the total."""
    fig, axes = plt.subplots(1, 3, figsize=(12, 4), constrained_layout=True)
    _image(axes[0], grid, rho2, "rho2")
    _quiver(axes[0], grid, flux[0], flux[1], "red")
    _image(axes[1], grid, rho1, "rho1")
    if velocity is not None:
        ux, uy = _cell_velocity(velocity)
        _quiver(axes[1], grid, ux, uy, "white")
    im = _image(axes[2], grid, rho1 + rho2, "rho1 + rho2")
    fig.colorbar(im, ax=axes, shrink=0.8)
    fig.suptitle(f"t = {t:.4g}")
    fig.savefig(path, dpi=90)
    plt.close(fig)
    return path


def plot_diagnostics(path, diags):
    t = np.array([d.t for d in diags])
    fig, axes = plt.subplots(2, 2, figsize=(10, 7), constrained_layout=True)
    ax = axes[0, 0]
    ax.plot(t, [d.mass1 for d in diags], label="mass1")
    ax.plot(t, [d.mass2 for d in diags], label="mass2")
    ax.plot(t, [d.mass1 + d.outflux_cum for d in diags], "--", label="mass1 + outflux")
    ax.set_xlabel("t")
    ax.legend()
    ax = axes[0, 1]
    ax.plot(t, [d.max_total_density for d in diags])
    ax.axhline(1.0, color="k", lw=0.5)
    ax.set_title("max rho1 + rho2")
    ax = axes[1, 0]
    ax.plot(t, [d.pd_iters for d in diags], ".")
    ax.set_title("projection iterations")
    ax = axes[1, 1]
    ax.plot(t, [d.pd_cost for d in diags])
    ax.set_title("transport cost per step")
    for ax in axes[1]:
        ax.set_xlabel("t")
    fig.savefig(path, dpi=90)
    plt.close(fig)
    return path
