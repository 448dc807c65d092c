"""Matplotlib figures written next to the CSV outputs.

PNG metadata is pinned (no software/version stamp) so figures are
byte-reproducible; the config digest and seed go into the Description field.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
    "savefig.dpi": 120,
}

COLORS = {"gft": "tab:blue", "lqr": "tab:orange"}


def save(fig, path, provenance: dict) -> None:
    desc = " ".join(f"{k}={provenance[k]}" for k in sorted(provenance))
    fig.savefig(path, metadata={"Software": None, "Description": desc})
    plt.close(fig)


def history_figure(history):
    """Best and mean cost per generation."""
    h = np.asarray(history, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        ax.plot(h[:, 0], h[:, 1], label="best")
        ax.plot(h[:, 0], h[:, 2], alpha=0.6, label="population mean")
        ax.axhline(1.0, color="k", lw=0.8, ls="--", label="static LQR")
        ax.set_xlabel("generation")
        ax.set_ylabel("mean relative cost")
        ax.set_yscale("log")
        ax.legend()
        fig.tight_layout()
    return fig


def trajectory_figure(runs: dict, target):
    """State and torque histories; ``runs`` maps a label to (t, states, torques)."""
    labels = ("theta1 [deg]", "theta2 [deg]", "omega1 [deg/s]", "omega2 [deg/s]", "tau1 [N m]", "tau2 [N m]")
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, 3, figsize=(9.0, 5.0), sharex=True)
        for name, (t, x, tau) in runs.items():
            color = COLORS.get(name)
            cols = [np.degrees(x[:, i]) for i in range(4)]
            tt = t[: len(tau)]
            for i, ax in enumerate(axes.flat):
                if i < 4:
                    ax.plot(t, cols[i], color=color, label=name)
                else:
                    ax.step(tt, tau[:, i - 4], where="post", color=color, label=name)
        for i, ax in enumerate(axes.flat):
            ax.set_ylabel(labels[i])
            if i < 2:
                ax.axhline(math.degrees(target[i]), color="k", lw=0.7, ls="--")
        for ax in axes[1]:
            ax.set_xlabel("t [s]")
        axes[0, 0].legend()
        fig.tight_layout()
    return fig


def surface_figure(grid, values, name: str):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.6))
        ax.grid(False)
        mesh = ax.pcolormesh(grid, grid, values.T, shading="auto", cmap="viridis")
        fig.colorbar(mesh, ax=ax, label=name)
        ax.set_xlabel("input 1")
        ax.set_ylabel("input 2")
        ax.set_title(name)
        fig.tight_layout()
    return fig


def robustness_figure(report):
    """Settling time, IAC and control variance over mutually successful draws."""
    metrics = (("settle_time", "settling time [s]"), ("iac", "IAC1 + IAC2 [N m s]"),
               ("var", "var(tau1) + var(tau2) [N^2 m^2]"))
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 3, figsize=(10.0, 3.2))
        for ax, (key, label) in zip(axes, metrics):
            for w, name in enumerate(report.names):
                if key == "settle_time":
                    v = report.metric(w, "settle_time")
                else:
                    v = report.metric(w, key + "1") + report.metric(w, key + "2")
                if len(v):
                    ax.hist(v, bins=30, alpha=0.6, color=COLORS.get(name),
                            label=f"{name} ({100 * report.success_rate(w):.1f}% settled)")
            ax.set_xlabel(label)
            ax.set_ylabel("draws")
        axes[0].legend()
        fig.tight_layout()
    return fig


def baseline_figure(case_ids, costs):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(7.0, 3.0))
        ax.bar(np.arange(len(costs)), costs, color=COLORS["lqr"])
        step = max(1, len(case_ids) // 22)
        ax.set_xticks(np.arange(len(costs))[::step])
        ax.set_xticklabels([str(c) for c in case_ids][::step])
        ax.set_xlabel("case id")
        ax.set_ylabel("optimal static LQR cost")
        fig.tight_layout()
    return fig
