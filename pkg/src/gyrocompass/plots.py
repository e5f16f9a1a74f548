"""SVG chart emission for evaluation reports.

Output is deterministic: a fixed SVG hash salt and no embedded creation
date, so identical reports give byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "gyrocompass"

_SAVE_KW = {"format": "svg", "metadata": {"Date": None}}


def _save(fig, path):
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def comparison_figure(report, path) -> None:
    """Classical CRMSE vs duration, with learned methods as horizontal lines."""
    classical = sorted(
        ((r.duration_s, r.crmse_deg) for r in report.rows if r.method == "classical"),
        key=lambda p: p[0],
    )
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    if classical:
        ax.plot(*zip(*classical), marker="o", label="model-based")
    for method, style, label in (
        ("baseline", "--", "learned baseline (100 s)"),
        ("denoiser_aided", "-.", "denoiser-aided (100 s)"),
    ):
        rows = [r.crmse_deg for r in report.rows if r.method == method]
        if rows:
            ax.axhline(rows[0], linestyle=style, color="C1" if method == "baseline" else "C2", label=label)
    ax.set_xlabel("averaging duration [s]")
    ax.set_ylabel("CRMSE [deg]")
    ax.legend()
    ax.grid(True, alpha=0.3)
    _save(fig, path)


def tback_figure(report, path) -> None:
    """Validation CRMSE as a function of the reverse-process stopping step."""
    points = sorted(
        ((r.t_back, r.crmse_deg) for r in report.rows if r.t_back is not None),
        key=lambda p: p[0],
    )
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    if points:
        ax.plot(*zip(*points), marker="s")
    ax.set_xlabel("reverse stopping step")
    ax.set_ylabel("CRMSE [deg]")
    ax.grid(True, alpha=0.3)
    _save(fig, path)


def ablation_figure(report, path) -> None:
    """Train/val CRMSE bars per normalization scope."""
    scopes = sorted({r.scope for r in report.rows if r.scope})
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    width = 0.35
    for offset, method in ((-width / 2, "train"), (width / 2, "val")):
        values = []
        for scope in scopes:
            rows = [r.crmse_deg for r in report.rows if r.method == method and r.scope == scope]
            values.append(rows[0] if rows else 0.0)
        ax.bar([i + offset for i in range(len(scopes))], values, width, label=method)
    ax.set_xticks(range(len(scopes)))
    ax.set_xticklabels(scopes)
    ax.set_ylabel("CRMSE [deg]")
    ax.legend()
    ax.grid(True, axis="y", alpha=0.3)
    _save(fig, path)


def training_curve_figure(history_rows, path, ylabel: str = "loss") -> None:
    """Train/validation curve from (epoch, train, val) rows."""
    rows = list(history_rows)
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    if rows:
        epochs, train, val = zip(*rows)
        ax.plot(epochs, train, label="train")
        ax.plot(epochs, val, label="validation")
        ax.legend()
    ax.set_xlabel("epoch")
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    _save(fig, path)
