"""File-writing figures for simulation, training, and validation output.

Every function renders straight to a file via the Agg backend (no
display server needed) and puts nothing time- or host-dependent into
the image, so repeated runs produce identical reports.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

_DPI = 120


def save_traces_figure(path, traces: dict):
    """Current and terminal voltage of one or more named traces."""
    fig, (ax_i, ax_v) = plt.subplots(2, 1, figsize=(9, 6), sharex=True)
    for name, tr in traces.items():
        ax_i.plot(tr.times, tr.currents, lw=0.8, label=name)
        ax_v.plot(tr.times, tr.voltages, lw=0.8, label=name)
    ax_i.set_ylabel("current [A]")
    ax_v.set_ylabel("voltage [V]")
    ax_v.set_xlabel("time [s]")
    ax_i.legend(loc="best", fontsize=8)
    for ax in (ax_i, ax_v):
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def _param_axes(ax, epochs, r0, r1, c, true_params=None, suffix=""):
    ax.plot(epochs, r0, label=f"r0{suffix} [ohm]")
    ax.plot(epochs, r1, label=f"r1{suffix} [ohm]")
    axc = ax.twinx()
    axc.plot(epochs, c, color="tab:green", label=f"c{suffix} [F]")
    if true_params is not None:
        ax.axhline(true_params.r0, color="tab:blue", ls=":", lw=0.8)
        ax.axhline(true_params.r1, color="tab:orange", ls=":", lw=0.8)
        axc.axhline(true_params.c, color="tab:green", ls=":", lw=0.8)
    ax.set_ylabel("resistance [ohm]")
    axc.set_ylabel("capacitance [F]")
    lines, labels = ax.get_legend_handles_labels()
    lines2, labels2 = axc.get_legend_handles_labels()
    ax.legend(lines + lines2, labels + labels2, loc="best", fontsize=8)


def save_history_figure(path, records, true_params=None):
    """Loss curve (log scale) and identified-parameter trajectories."""
    epochs = np.array([r.epoch for r in records])
    loss = np.array([r.loss for r in records])
    fig, (ax_l, ax_p) = plt.subplots(2, 1, figsize=(9, 7), sharex=True)
    ax_l.semilogy(epochs, loss, lw=0.9)
    ax_l.set_ylabel("training loss")
    ax_l.grid(alpha=0.3)
    _param_axes(
        ax_p,
        epochs,
        [r.r0 for r in records],
        [r.r1 for r in records],
        [r.c for r in records],
        true_params,
    )
    ax_p.set_xlabel("epoch")
    ax_p.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_validation_figure(path, trace, est):
    """True vs estimated SoC, capacitor voltage, and terminal voltage."""
    t = trace.times[est.offset :]
    fig, axes = plt.subplots(3, 1, figsize=(9, 8), sharex=True)
    panels = (
        ("SoC [-]", np.asarray(trace.soc)[est.offset :], est.z),
        ("vc [V]", np.asarray(trace.vc)[est.offset :], est.vc),
        ("voltage [V]", np.asarray(trace.voltages)[est.offset :], est.v),
    )
    for ax, (label, truth, hat) in zip(axes, panels):
        ax.plot(t, truth, lw=0.9, label="true")
        ax.plot(t, hat, lw=0.9, ls="--", label="estimated")
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
        ax.legend(loc="best", fontsize=8)
    axes[-1].set_xlabel("time [s]")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_compare_figure(path, histories: dict, true_params=None):
    """Loss and parameter trajectories of several training runs side by
    side (histories: name -> list of epoch records)."""
    fig, (ax_l, ax_p) = plt.subplots(2, 1, figsize=(9, 7), sharex=True)
    for name, records in histories.items():
        epochs = [r.epoch for r in records]
        ax_l.semilogy(epochs, [r.loss for r in records], lw=0.9, label=name)
        ax_p.plot(epochs, [r.r0 for r in records], lw=0.9, label=f"r0 ({name})")
        ax_p.plot(epochs, [r.r1 for r in records], lw=0.9, label=f"r1 ({name})")
    if true_params is not None:
        ax_p.axhline(true_params.r0, color="k", ls=":", lw=0.8)
        ax_p.axhline(true_params.r1, color="k", ls=":", lw=0.8)
    ax_l.set_ylabel("training loss")
    ax_p.set_ylabel("resistance [ohm]")
    ax_p.set_xlabel("epoch")
    for ax in (ax_l, ax_p):
        ax.grid(alpha=0.3)
        ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
