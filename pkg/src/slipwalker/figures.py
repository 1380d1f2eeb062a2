"""Report figures rendered to SVG files.

Four standard views of a discrete walker trajectory: the tracked
horizontal coordinate, the leg angle, the planar hip/foot picture and the
control history.  All rendering goes through the non-interactive Agg
backend so the functions are safe in headless runs.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .model import WalkerParams, reference_eval

__all__ = ["render_figures", "FIGURE_NAMES"]

FIGURE_NAMES = ("fig_x.svg", "fig_theta.svg", "fig_xy.svg", "fig_controls.svg")


def _reference_curves(reference, times):
    if reference is None:
        return None
    rows = np.array([reference_eval(reference, float(t)) for t in times])
    return rows  # columns: x_r, theta_r, xdot_r, thetadot_r


def render_figures(
    out_dir: str,
    params: WalkerParams,
    path,
    reference=None,
    baseline=None,
) -> list[str]:
    """Write the four trajectory figures into ``out_dir``.

    ``path`` is a DiscretePath; ``reference`` an optional
    ReferenceTrajectory evaluated on a dense time grid; ``baseline`` an
    optional second DiscretePath drawn for comparison (e.g. the
    uncontrolled run).  Returns the list of files written.
    """
    times = np.asarray(path.times, dtype=float)
    q = np.asarray(path.configs, dtype=float)
    t_dense = np.linspace(times[0], times[-1], max(200, 4 * len(times)))
    ref = _reference_curves(reference, t_dense)
    written = []

    def save(fig, name):
        target = os.path.join(out_dir, name)
        fig.savefig(target, format="svg")
        plt.close(fig)
        written.append(target)

    impact_times = [path.times[rec.index + 1] for rec in path.impacts]

    # fig_x: tracked horizontal coordinate against time
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.plot(times, q[:, 0], "k.-", ms=3, lw=1, label="trajectory")
    if baseline is not None:
        ax.plot(baseline.times, baseline.configs[:, 0], "b--", lw=0.9, label="uncontrolled")
    if ref is not None:
        ax.plot(t_dense, ref[:, 0], "r-", lw=0.9, label="reference")
    for ti in impact_times:
        ax.axvline(ti, color="0.8", lw=0.7, zorder=0)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("x [m]")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    save(fig, "fig_x.svg")

    # fig_theta: leg angle against time with the switching level
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.plot(times, q[:, 1], "k.-", ms=3, lw=1, label="trajectory")
    if baseline is not None:
        ax.plot(baseline.times, baseline.configs[:, 1], "b--", lw=0.9, label="uncontrolled")
    if ref is not None:
        ax.plot(t_dense, ref[:, 1], "r-", lw=0.9, label="reference")
    ax.axhline(-params.a, color="0.6", lw=0.7, ls=":")
    ax.axhline(params.a, color="0.6", lw=0.7, ls=":")
    for ti in impact_times:
        ax.axvline(ti, color="0.8", lw=0.7, zorder=0)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("theta [rad]")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    save(fig, "fig_theta.svg")

    # fig_xy: planar picture, hip height r*cos(theta) over x; foot on the floor
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    y = params.r * np.cos(q[:, 1])
    xbar = q[:, 0] - params.r * np.sin(q[:, 1])
    ax.plot(q[:, 0], y, "k.-", ms=3, lw=1, label="hip")
    ax.plot(xbar, np.zeros_like(xbar), "b.", ms=2, label="foot")
    if ref is not None:
        ax.plot(ref[:, 0], params.r * np.cos(ref[:, 1]), "r-", lw=0.9, label="reference")
    ax.axhline(0.0, color="0.6", lw=0.7)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    save(fig, "fig_xy.svg")

    # fig_controls: per-interval control inputs (piecewise constant)
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    if path.controls is not None and len(path.controls):
        u = np.asarray(path.controls, dtype=float)
        ax.step(times[:-1], u[:, 0], where="post", label="u_x")
        ax.step(times[:-1], u[:, 1], where="post", label="u_theta")
    for ti in impact_times:
        ax.axvline(ti, color="0.8", lw=0.7, zorder=0)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("control")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    save(fig, "fig_controls.svg")

    return written
