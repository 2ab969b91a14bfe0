"""Figure rendering for correlation reports and score distributions.

matplotlib is imported lazily and pinned to the Agg backend so headless
runs and tests never touch a display server.
"""

from __future__ import annotations

from collections.abc import Sequence
from pathlib import Path

from .core import IdiomForgeError
from .stats import COEFFICIENTS, CorrelationReport, ScoreSummary


class FigureError(IdiomForgeError):
    pass


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


_BAR_COLORS = ("#4878cf", "#6acc65", "#d65f5f")


def render_correlation_figure(
    reports: Sequence[CorrelationReport], path: str | Path
) -> Path:
    """One grouped bar chart: coefficient bars per (language pair, metric).

    Undefined coefficients are drawn at zero height with a hatch so they
    read as absent rather than as genuinely zero correlation.
    """
    if not reports:
        raise FigureError("no reports to plot")
    plt = _pyplot()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    groups: list[tuple[str, list[float | None]]] = []
    for report in reports:
        for metric in report.metrics:
            label = f"{report.language_pair}\n{metric.metric} (n={metric.n})"
            groups.append((label, [getattr(metric, c) for c in COEFFICIENTS]))

    width = 0.25
    fig, ax = plt.subplots(figsize=(max(4.0, 1.8 * len(groups) + 1.5), 3.6), dpi=100)
    for offset, (name, color) in enumerate(zip(COEFFICIENTS, _BAR_COLORS)):
        xs = [i + (offset - 1) * width for i in range(len(groups))]
        heights = [values[offset] or 0.0 for _, values in groups]
        hatches = ["//" if values[offset] is None else "" for _, values in groups]
        bars = ax.bar(xs, heights, width=width, label=name, color=color)
        for bar, hatch in zip(bars, hatches):
            bar.set_hatch(hatch)
    ax.set_xticks(range(len(groups)))
    ax.set_xticklabels([label for label, _ in groups], fontsize=8)
    ax.set_ylim(-1.0, 1.0)
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_ylabel("correlation with human scores")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return path


def render_score_histogram(
    summary: ScoreSummary, path: str | Path, title: str = "judge scores"
) -> Path:
    """Bar chart over the 1..3 rubric points with the mean marked."""
    plt = _pyplot()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    points = sorted(summary.histogram)
    fig, ax = plt.subplots(figsize=(4.0, 3.2), dpi=100)
    ax.bar(points, [summary.histogram[p] for p in points], color="#4878cf")
    ax.set_xticks(points)
    ax.set_xlabel("score")
    ax.set_ylabel("count")
    ax.set_title(f"{title} (mean {summary.mean:.2f}, n={summary.count})")
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return path
