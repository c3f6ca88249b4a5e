"""Matplotlib summary figure of a run (rendered off-screen to PNG)."""

from __future__ import annotations

import os

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .harness import RunReport


def plot_run(report: RunReport, path: str | os.PathLike) -> None:
    """Trajectory overlay on the left, desired vs true x, y and heading on the right."""
    fig = Figure(figsize=(11, 6), dpi=100)
    FigureCanvasAgg(fig)
    grid = fig.add_gridspec(3, 2, width_ratios=(1.2, 1.0))
    ax = fig.add_subplot(grid[:, 0])
    if report.world is not None:
        for k, lane in enumerate(report.world.lanes):
            c = np.asarray(lane.color) / 255.0
            ax.plot(*lane.centerline.T, color=c, lw=4, alpha=0.5,
                    label="lane" if k == 0 else None)
    for k, arc in enumerate(report.arcs):
        ax.plot(*arc.T, color="tab:green", lw=1, ls="--", label="virtual arc" if k == 0 else None)
    rec = report.records
    if rec:
        t = np.array([r.t for r in rec])
        true = np.array([(r.true_x, r.true_y, r.true_psi) for r in rec])
        est = np.array([(r.est_x, r.est_y, r.est_psi) for r in rec])
        tgt = np.array([(r.target_x, r.target_y, r.psi2) for r in rec])
        ax.plot(true[:, 0], true[:, 1], color="k", lw=1.2, label="true")
        ax.plot(est[:, 0], est[:, 1], color="tab:orange", lw=1, label="estimated")
        ax.plot(tgt[:, 0], tgt[:, 1], ".", color="tab:blue", ms=3, label="target")
        for row, (name, col) in enumerate((("x [m]", 0), ("y [m]", 1), ("psi [rad]", 2))):
            a = fig.add_subplot(grid[row, 1])
            a.plot(t, tgt[:, col], color="tab:blue", lw=1, drawstyle="steps-post", label="desired")
            a.plot(t, true[:, col], color="k", lw=1, label="true")
            a.set_ylabel(name)
            if row == 0:
                a.legend(loc="best", fontsize=8)
            if row == 2:
                a.set_xlabel("t [s]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.legend(loc="best", fontsize=8)
    ax.set_title(report.status)
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})
