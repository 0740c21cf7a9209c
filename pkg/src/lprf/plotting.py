"""Figures for run directories (PNG via the Agg backend)."""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 110,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.bbox": "tight",
}


def _save(fig, path):
    fig.savefig(path)
    plt.close(fig)
    return path


def energy_figure(path, s, energy, title="Galerkin energy over one period"):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(s, energy, lw=1.5)
        ax.set_xlabel("s = log t")
        ax.set_ylabel(r"$|U(s)|^2$")
        ax.set_title(title)
        return _save(fig, path)


def slice_figure(path, grid, fields, labels):
    """Magnitude of each field on the ``y3 = 0`` plane (nearest node)."""
    k = int(np.argmin(np.abs(grid.x)))
    ext = (-grid.L, grid.L, -grid.L, grid.L)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(fields), figsize=(4.0 * len(fields), 3.6))
        axes = np.atleast_1d(axes)
        for ax, f, lab in zip(axes, fields, labels):
            mag = np.sqrt(np.sum(f[:, :, :, k] ** 2, axis=0))
            im = ax.imshow(mag.T, origin="lower", extent=ext, cmap="viridis")
            ax.set_title(lab)
            ax.set_xlabel("y1")
            ax.set_ylabel("y2")
            ax.grid(False)
            fig.colorbar(im, ax=ax, shrink=0.8)
        return _save(fig, path)


def slack_figure(path, names, slack, tol):
    """Local energy slack in units of the quadrature tolerance; the red line is the -10 threshold."""
    ratio = np.asarray(slack) / np.maximum(np.asarray(tol), 1e-300)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(7.0, 3.6))
        colors = ["tab:blue" if r >= -10 else "tab:red" for r in ratio]
        ax.bar(range(len(names)), ratio, color=colors)
        ax.axhline(-10.0, color="tab:red", lw=1, ls="--")
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=90, fontsize=7)
        ax.set_ylabel("slack / tol")
        ax.set_title("local energy battery")
        return _save(fig, path)


def sweep_figure(path, axis, values, norms, cauchy):
    with plt.rc_context(STYLE):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(9.0, 3.6))
        a1.plot(values, norms, "o-")
        a1.set_xlabel(axis)
        a1.set_ylabel("energy norm")
        good = np.isfinite(np.asarray(cauchy, dtype=float))
        if np.any(good):
            a2.semilogy(np.asarray(values)[good], np.asarray(cauchy, dtype=float)[good], "s-")
        a2.set_xlabel(axis)
        a2.set_ylabel("Cauchy difference")
        if axis in ("k", "grid"):
            a1.set_xscale("log", base=2)
            a2.set_xscale("log", base=2)
        return _save(fig, path)


def solve_figures(out, bundle, chk, extras):
    """Every figure of a solve run; returns the written paths."""
    paths = []
    state = extras.get("state")
    if state is not None:
        paths.append(energy_figure(os.path.join(out, "energy.png"), state.s, state.energy))
    n = 0
    paths.append(
        slice_figure(
            os.path.join(out, "slices.png"),
            bundle.grid,
            [bundle.A[n] + bundle.B[n], bundle.W[n], bundle.A[n] - bundle.W[n]],
            ["|u|", "|W|", "|U|"],
        )
    )
    le = chk.get("local_energy")
    if le:
        names = [k for k in le if isinstance(le[k], dict)]
        paths.append(
            slack_figure(
                os.path.join(out, "local_energy.png"), names, [le[k]["slack"] for k in names], [le[k]["tol"] for k in names]
            )
        )
    return paths
