"""Figures for the command-line reports, rendered off-screen to PNG files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import LogNorm  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_cooling(traj, path):
    """Total populations and mixing angle against dimensionless time."""
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(6, 5))
    t = traj.times
    ax1.plot(t, traj.observables["n_m"], label=r"$n_m$")
    ax1.plot(t, traj.observables["n_c"], label=r"$n_c$")
    ax1.set_ylabel("population")
    ax1.legend()
    ax2.plot(t, traj.observables["theta"], color="k")
    ax2.set_ylabel(r"$\theta$ (rad)")
    ax2.set_xlabel(r"$\tilde t$")
    return _save(fig, path)


def plot_variance(traj, path, target=None):
    """Correlation variance with the entanglement threshold."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(traj.times, traj.observables["delta12sq"], label=r"$\Delta_{12}^2$")
    ax.axhline(1.0, color="k", ls="--", lw=0.8, label="entanglement threshold")
    if target is not None and target < 1:
        ax.axhline(target, color="r", ls=":", lw=0.8, label="target")
    ax.set_xlabel(r"$\tilde t$")
    ax.set_ylabel(r"$\Delta_{12}^2$")
    ax.set_yscale("log")
    ax.legend()
    return _save(fig, path)


def plot_heatmap(zeta_grid, g_grid, temps, path):
    """Effective mechanical temperature on a logarithmic colour scale."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    data = np.ma.masked_invalid(temps)
    positive = data[data > 0]
    norm = LogNorm(vmin=positive.min(), vmax=positive.max()) if positive.size else None
    mesh = ax.pcolormesh(np.arange(len(g_grid)), np.arange(len(zeta_grid)), data, norm=norm, shading="auto")
    ax.set_xticks(np.arange(len(g_grid)), [f"{g:g}" for g in g_grid], rotation=45)
    ax.set_yticks(np.arange(len(zeta_grid)), [f"{z:g}" for z in zeta_grid])
    ax.set_xlabel(r"$g_r$")
    ax.set_ylabel(r"$\zeta$")
    fig.colorbar(mesh, ax=ax, label=r"$T_{eff}$ (K)")
    return _save(fig, path)


def plot_optimum(results, path):
    """Time below target against blue strength, one curve per target."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for r in results:
        ax.plot(r["scan_g"], r["scan_tau"], "o-", ms=3, label=rf"$\Delta_t^2$={r['target']:g}")
        ax.plot([r["g_opt"]], [r["tau_max"]], "k*")
    ax.set_xscale("log")
    ax.set_xlabel(r"$g_b$")
    ax.set_ylabel(r"$\tilde\tau$")
    ax.legend()
    return _save(fig, path)
