"""Static figure rendering for closed-loop runs (Agg backend, file output).

CSV files are the authoritative artifacts; these figures are the human view:
a phase-plane overlay of the stored data and the simulated runs, and a
per-step value-decrease panel.  Written as vector PDF with the creation
timestamp stripped so repeated renders of the same data stay comparable.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from safeq.policy import SimulationReport
from safeq.store import SafeSetStore

_PDF_METADATA = {"CreationDate": None}


def _save(fig, path: str | os.PathLike) -> None:
    if str(path).lower().endswith(".pdf"):
        fig.savefig(path, metadata=_PDF_METADATA)
    else:
        fig.savefig(path)
    plt.close(fig)


def save_phase_plane(
    store: SafeSetStore,
    reports: list[SimulationReport],
    path: str | os.PathLike,
    title: str = "Closed-loop runs over the stored safe set",
) -> None:
    """Plot stored states, closed-loop paths, and the state box."""
    if store.state_dim != 2:
        raise ValueError("phase-plane plot requires a 2-dimensional state")
    fig, ax = plt.subplots(figsize=(6.4, 5.2))

    lo, hi = store.system.state_lower, store.system.state_upper
    box_x = [lo[0], hi[0], hi[0], lo[0], lo[0]]
    box_y = [lo[1], lo[1], hi[1], hi[1], lo[1]]
    ax.plot(box_x, box_y, color="0.4", linestyle="--", linewidth=1.0,
            label="state constraints")

    for j, t in enumerate(store.trajectories):
        ax.plot(t.states[:, 0], t.states[:, 1], marker="o", markersize=2.5,
                linewidth=0.8, color="0.65",
                label="stored data" if j == 0 else None)

    if store.terminal_set is not None:
        hull = store.terminal_set.vertices
        centroid = hull.mean(axis=0)
        order = np.argsort(np.arctan2(hull[:, 1] - centroid[1], hull[:, 0] - centroid[0]))
        ring = np.vstack([hull[order], hull[order][:1]])
        ax.plot(ring[:, 0], ring[:, 1], color="tab:green", linewidth=1.4,
                label="goal region")

    cmap = plt.get_cmap("viridis")
    for i, report in enumerate(reports):
        if not report.steps:  # nothing was simulated (e.g. infeasible start)
            continue
        states = np.vstack([r.state for r in report.steps])
        color = cmap(0.15 + 0.7 * i / max(1, len(reports) - 1))
        ax.plot(states[:, 0], states[:, 1], linewidth=1.3, color=color)
        ax.plot(states[0, 0], states[0, 1], marker="s", markersize=5, color=color)

    ax.set_xlabel("position")
    ax.set_ylabel("velocity")
    ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.25)
    fig.tight_layout()
    _save(fig, path)


def save_value_decrease(
    reports: list[SimulationReport],
    path: str | os.PathLike,
    title: str = "Interpolated value along the closed loop",
) -> None:
    """Plot the per-step interpolated value of each run (log scale)."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    cmap = plt.get_cmap("viridis")
    for i, report in enumerate(reports):
        values = [r.q_value for r in report.steps]
        color = cmap(0.15 + 0.7 * i / max(1, len(reports) - 1))
        ax.semilogy(range(len(values)), np.maximum(values, 1e-16), linewidth=1.2,
                    color=color)
    ax.set_xlabel("step")
    ax.set_ylabel("value (log scale)")
    ax.set_title(title)
    ax.grid(alpha=0.25, which="both")
    fig.tight_layout()
    _save(fig, path)
