"""Render simulation-report figures to PNG files.

Figures are a side channel: every number they show is also present in the
delimited report output.  The Agg backend keeps rendering headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .sim_harness import SimulationReport

FIGURE_NAMES = (
    "selection_probability.png",
    "signal_classification.png",
    "interval_coverage.png",
    "interval_width.png",
)


def render_report_figures(report: SimulationReport, outdir: str | Path) -> list[Path]:
    """Write the four report figures into ``outdir`` and return their paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    p = report.beta_true.size
    coords = np.arange(1, p + 1)
    written: list[Path] = []

    fig, ax = plt.subplots(figsize=(max(6.0, 0.35 * p), 4.0))
    ax.bar(coords, report.selection_freq, color="#4878d0")
    ax.set_xlabel("coordinate")
    ax.set_ylabel("selection frequency")
    ax.set_ylim(0.0, 1.05)
    ax.set_title("Selection frequency per coordinate")
    path = outdir / "selection_probability.png"
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(max(6.0, 0.35 * p), 4.0))
    bottom = np.zeros(p)
    for k, (label, color) in enumerate(
        (("strong", "#2f7d31"), ("weak", "#e0a426"), ("noise", "#b5bac1"))
    ):
        vals = report.class_freq[:, k]
        ax.bar(coords, vals, bottom=bottom, label=label, color=color)
        bottom += np.where(np.isnan(vals), 0.0, vals)
    ax.set_xlabel("coordinate")
    ax.set_ylabel("classification frequency")
    ax.set_ylim(0.0, 1.05)
    ax.set_title("Signal classification per coordinate")
    ax.legend(loc="upper right", fontsize=8)
    path = outdir / "signal_classification.png"
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(max(6.0, 0.35 * p), 4.0))
    for name, cov in report.coverage.items():
        ax.plot(coords, cov, marker="o", markersize=3, label=name)
    alpha = report.config.get("alpha", 0.05)
    ax.axhline(1.0 - alpha, color="black", linestyle=":", linewidth=1)
    ax.set_xlabel("coordinate")
    ax.set_ylabel("coverage")
    ax.set_ylim(0.0, 1.05)
    ax.set_title("Interval coverage per method")
    ax.legend(loc="lower right", fontsize=8)
    path = outdir / "interval_coverage.png"
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(max(6.0, 0.35 * p), 4.0))
    for name, width in report.mean_width.items():
        ax.plot(coords, width, marker="o", markersize=3, label=name)
    ax.set_xlabel("coordinate")
    ax.set_ylabel("mean interval width")
    ax.set_title("Interval width per method")
    ax.legend(loc="upper right", fontsize=8)
    path = outdir / "interval_width.png"
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    return written
