"""Matplotlib renderings of the report tables, written straight to files."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

_DPI = 150


def render_probe_layout(amplitudes, true_grid, marked, path) -> None:
    """Probe amplitudes scattered over the true Wigner density."""
    fig, ax = plt.subplots(figsize=(4.2, 4.0))
    span = np.abs(true_grid.values).max()
    mesh = ax.pcolormesh(
        true_grid.re_values, true_grid.im_values, true_grid.values,
        cmap="RdBu_r", vmin=-span, vmax=span, shading="auto",
    )
    fig.colorbar(mesh, ax=ax, label=r"$W(\alpha)$")
    ax.plot(amplitudes.real, amplitudes.imag, "k.", ms=3)
    marked = [n for n in marked if n <= len(amplitudes)]
    if marked:
        pts = amplitudes[np.array(marked) - 1]
        ax.plot(pts.real, pts.imag, "ko", mfc="none", ms=8)
        for n, a in zip(marked, pts):
            ax.annotate(str(n), (a.real, a.imag), textcoords="offset points",
                        xytext=(4, 4), fontsize=7)
    lim = 1.1 * np.abs(amplitudes).max()
    ax.set_xlim(-lim, lim)
    ax.set_ylim(-lim, lim)
    ax.set_xlabel(r"$\mathrm{Re}\,\alpha$")
    ax.set_ylabel(r"$\mathrm{Im}\,\alpha$")
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def render_wigner_comparison(true_grid, recon_grids: dict, path) -> None:
    """True Wigner function next to the reconstructions, shared color scale."""
    panels = [("true", true_grid)] + [
        (f"{n} probes", g) for n, g in sorted(recon_grids.items())
    ]
    cols = min(3, len(panels))
    rows = (len(panels) + cols - 1) // cols
    span = max(np.abs(g.values).max() for _, g in panels)
    fig, axes = plt.subplots(rows, cols, figsize=(3.0 * cols, 2.8 * rows),
                             squeeze=False, sharex=True, sharey=True)
    for ax in axes.ravel()[len(panels):]:
        ax.set_axis_off()
    for (label, grid), ax in zip(panels, axes.ravel()):
        mesh = ax.pcolormesh(grid.re_values, grid.im_values, grid.values,
                             cmap="RdBu_r", vmin=-span, vmax=span, shading="auto")
        ax.set_title(label, fontsize=9)
        ax.set_aspect("equal")
    fig.colorbar(mesh, ax=axes, shrink=0.8, label=r"$W(\alpha)$")
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def render_w0_curve(probe_counts, w0_values, w0_true, path) -> None:
    """Reconstructed W(0) against probe count, with the classical border and
    the true value as horizontal guides."""
    fig, ax = plt.subplots(figsize=(4.4, 3.2))
    ax.plot(probe_counts, w0_values, "o-", ms=5)
    ax.axhline(0.0, color="gray", lw=0.8)
    ax.axhline(w0_true, color="crimson", lw=0.8, ls="--",
               label=f"true W(0) = {w0_true:.2f}")
    ax.set_xlabel("probes")
    ax.set_ylabel("W(0)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def render_convergence(traces: dict, path) -> None:
    """Objective gap and minimal eigenvalue across iterations (decimal logs).

    The gap is measured against the final objective of each trace; the
    eigenvalue axis shows the run with the most probes.
    """
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    for n, trace in sorted(traces.items()):
        f = trace.column("objective")
        if len(f) == 0:
            continue
        gap = np.maximum(f - f[-1], 1e-300)
        ax.plot(trace.column("iteration"), np.log10(gap), ".-", ms=3,
                label=f"{n} probes")
    ax.set_xlabel("iteration k")
    ax.set_ylabel(r"$\log_{10}(F_k - F_\ast)$")
    largest = max(traces)
    eig = traces[largest].column("min_eigenvalue")
    if len(eig):
        twin = ax.twinx()
        twin.plot(traces[largest].column("iteration"),
                  np.log10(np.maximum(eig, 1e-300)),
                  "x--", color="gray", ms=3)
        twin.set_ylabel(rf"$\log_{{10}}\Lambda_k$ ({largest} probes)", color="gray")
    ax.legend(fontsize=8, loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def render_purity_sweep(purities, mean_fidelities, std_fidelities, path) -> None:
    """Mean reconstruction fidelity (with spread) against true-state purity."""
    fig, ax = plt.subplots(figsize=(4.4, 3.2))
    ax.errorbar(purities, mean_fidelities, yerr=std_fidelities,
                fmt="o-", ms=5, capsize=3)
    ax.set_xlabel(r"purity $\mathrm{Tr}(\rho^2)$")
    ax.set_ylabel("mean fidelity")
    ax.set_ylim(min(0.9, min(mean_fidelities) - 0.02), 1.005)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
