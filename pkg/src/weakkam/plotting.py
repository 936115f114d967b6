"""Figure rendering for the report path; every figure is a deterministic SVG.

matplotlib runs on the Agg backend with a fixed hash salt and the Date
metadata stripped, so rerunning a command reproduces the same bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "weakkam"

import matplotlib.pyplot as plt  # noqa: E402


def save_figure(fig, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_potential(coords, values, path, title="weak KAM potential") -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    if coords.shape[1] == 1:
        order = coords[:, 0].argsort()
        ax.plot(coords[order, 0], values[order], lw=1.2)
        ax.set_xlabel("x")
        ax.set_ylabel("u")
    else:
        n = int(round(coords.shape[0] ** 0.5))
        grid = values.reshape(n, n)
        image = ax.imshow(grid.T, origin="lower", extent=(0, 1, 0, 1), aspect="equal")
        fig.colorbar(image, ax=ax, label="u")
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
    ax.set_title(title)
    save_figure(fig, path)


def plot_phase_sets(labelled_sets, path, title="phase sets") -> None:
    """Scatter one or more phase sets; 1d plots x against v."""
    fig, ax = plt.subplots(figsize=(6, 4))
    markers = ["o", "s", "^", "x"]
    for k, (label, phase) in enumerate(labelled_sets):
        if phase.n_points == 0:
            continue
        if phase.positions.shape[1] == 1:
            ax.scatter(
                phase.positions[:, 0],
                phase.velocities[:, 0],
                s=22,
                marker=markers[k % len(markers)],
                label=label,
                alpha=0.8,
            )
            ax.set_xlabel("x")
            ax.set_ylabel("v")
        else:
            speeds = (phase.velocities**2).sum(axis=1) ** 0.5
            sc = ax.scatter(
                phase.positions[:, 0],
                phase.positions[:, 1],
                c=speeds,
                s=22,
                marker=markers[k % len(markers)],
                label=label,
            )
            fig.colorbar(sc, ax=ax, label="|v|")
            ax.set_xlabel("x1")
            ax.set_ylabel("x2")
    ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    save_figure(fig, path)


def plot_orbit(positions, velocities, path, title="orbit") -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    if positions.shape[1] == 1:
        ax.scatter(positions[:, 0], velocities[:, 0], s=8, c=range(len(positions)))
        ax.set_xlabel("x")
        ax.set_ylabel("v")
    else:
        ax.scatter(positions[:, 0], positions[:, 1], s=8, c=range(len(positions)))
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
    ax.set_title(title)
    save_figure(fig, path)


def plot_edge_measure(graph, measure, path, title="edge measure") -> None:
    import numpy as np

    xs, js = np.nonzero(measure.weights > 0)
    fig, ax = plt.subplots(figsize=(6, 4))
    coords = graph.grid.coordinates(xs)
    vels = graph.velocities[js]
    weights = measure.weights[xs, js]
    if coords.shape[1] == 1:
        sc = ax.scatter(coords[:, 0], vels[:, 0], s=200 * weights + 8, c=weights)
        ax.set_xlabel("x")
        ax.set_ylabel("v")
    else:
        sc = ax.scatter(coords[:, 0], coords[:, 1], s=200 * weights + 8, c=weights)
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
    fig.colorbar(sc, ax=ax, label="weight")
    ax.set_title(title)
    save_figure(fig, path)


def plot_sweep_trends(report, path) -> None:
    """Log-log excess trends and the ergodic-rate error over the sweep."""
    rows = report.valid_rows()
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    taus = [row.tau for row in rows]
    for name, style in (
        ("e_aubry_to_ref", "o-"),
        ("e_ref_to_aubry", "s--"),
        ("e_mather_to_ref", "^-"),
        ("e_ref_to_mather", "x--"),
    ):
        values = [max(getattr(row, name), 1e-16) for row in rows]
        ax1.loglog(taus, values, style, label=name, ms=4)
    ax1.set_xlabel("tau")
    ax1.set_ylabel("one-sided excess")
    ax1.legend(fontsize=7)
    ax1.set_title("set convergence")
    rate_err = [max(row.rate_error, 1e-18) for row in rows]
    ax2.loglog(taus, rate_err, "o-", ms=4)
    ax2.set_xlabel("tau")
    ax2.set_ylabel("|rate + alpha|")
    ax2.set_title("ergodic rate error")
    fig.tight_layout()
    save_figure(fig, path)
