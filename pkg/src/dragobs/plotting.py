"""Post-hoc figures of a finished run, written to PNG files.

Uses the non-interactive Agg backend; nothing is ever shown on screen.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from dragobs.observer import angles_from_eta  # noqa: E402

RAD = 180.0 / math.pi
COLORS = {"truth": "tab:blue", "observer": "tab:red", "ekf": "tab:green"}


def _estimate_vs_truth(rec, name, truth, estimates, unit):
    fig, (top, bottom) = plt.subplots(2, 1, sharex=True, figsize=(7, 5))
    top.plot(rec.t, truth, color=COLORS["truth"], label="true", zorder=3)
    for est_name, values in estimates.items():
        top.plot(rec.t, values, color=COLORS.get(est_name), lw=0.8, label=est_name)
        bottom.plot(rec.t, values - truth, color=COLORS.get(est_name), lw=0.8, label=est_name)
    top.set_ylabel(f"{name} ({unit})")
    bottom.set_ylabel(f"error ({unit})")
    bottom.set_xlabel("t (s)")
    top.legend(loc="upper right", fontsize="small")
    for ax in (top, bottom):
        ax.grid(alpha=0.3)
    return fig


def _single(rec, ylabel, series):
    fig, ax = plt.subplots(figsize=(7, 3.2))
    for label, values in series.items():
        ax.plot(rec.t, values, lw=0.8, label=label, color=COLORS.get(label))
    ax.set_xlabel("t (s)")
    ax.set_ylabel(ylabel)
    if len(series) > 1:
        ax.legend(loc="upper right", fontsize="small")
    ax.grid(alpha=0.3)
    return fig


def figures(rec) -> dict:
    """Figure name -> matplotlib figure for a :class:`~dragobs.runner.RunRecord`."""
    phi, theta = angles_from_eta(rec.truth[:, 3:6])
    angles = {name: angles_from_eta(est[:, 2:5]) for name, est in rec.estimates.items()}
    out = {
        "u": _estimate_vs_truth(rec, "u", rec.truth[:, 0], {n: e[:, 0] for n, e in rec.estimates.items()}, "m/s"),
        "v": _estimate_vs_truth(rec, "v", rec.truth[:, 1], {n: e[:, 1] for n, e in rec.estimates.items()}, "m/s"),
        "phi": _estimate_vs_truth(rec, "phi", phi * RAD, {n: a[0] * RAD for n, a in angles.items()}, "deg"),
        "theta": _estimate_vs_truth(rec, "theta", theta * RAD, {n: a[1] * RAD for n, a in angles.items()}, "deg"),
        "error_eta": _single(
            rec,
            "|eta_hat - eta|",
            {n: np.linalg.norm(e[:, 2:5] - rec.truth[:, 3:6], axis=1) for n, e in rec.estimates.items()},
        ),
        "normC": _single(rec, "Coriolis norm (m/s^2)", {"coriolis": rec.coriolis_norm}),
        "Wi": _single(rec, "motor speed (rad/s)", {f"omega{i + 1}": rec.motor_speeds[:, i] for i in range(4)}),
        "c": _single(rec, "c(t) (1/s)", {"c": rec.c}),
    }
    for name, fig in out.items():
        fig.suptitle(f"{rec.scenario.name}: {name}", fontsize="medium")
        fig.tight_layout()
    return out


def save_figures(rec, out_dir, fmt: str = "png") -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, fig in figures(rec).items():
        path = out_dir / f"{name}.{fmt}"
        fig.savefig(path, dpi=110)
        plt.close(fig)
        paths.append(path)
    return paths
