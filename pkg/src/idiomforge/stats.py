"""Correlation statistics, score aggregation, and report rendering."""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from math import fsum
from pathlib import Path

from .core import VALID_SCORES, EvalRecord, IdiomForgeError
from .jsonl import read_jsonl

KENDALL_FOOTNOTE = "Kendall values are tau-b (tie corrections in both variables)."
REPORT_METRICS = ("judge", "bleu_sentence")
COEFFICIENTS = ("pearson_r", "spearman_rho", "kendall_tau")
MISSING_CELL = "—"


class StatsError(IdiomForgeError):
    pass


def _paired(xs: Sequence[float], ys: Sequence[float]) -> tuple[list[float], list[float]]:
    fx = [float(x) for x in xs]
    fy = [float(y) for y in ys]
    if len(fx) != len(fy):
        raise StatsError(f"length mismatch: {len(fx)} vs {len(fy)}")
    if len(fx) < 3:
        raise StatsError(f"need at least 3 paired values, got {len(fx)}")
    return fx, fy


def _clamp(value: float) -> float:
    # float accumulation can leak a hair past the theoretical bounds
    return max(-1.0, min(1.0, value))


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    fx, fy = _paired(xs, ys)
    n = len(fx)
    mean_x = fsum(fx) / n
    mean_y = fsum(fy) / n
    dx = [x - mean_x for x in fx]
    dy = [y - mean_y for y in fy]
    sxx = fsum(d * d for d in dx)
    syy = fsum(d * d for d in dy)
    if sxx == 0.0 or syy == 0.0:
        raise StatsError("undefined correlation (zero variance)")
    sxy = fsum(a * b for a, b in zip(dx, dy))
    return _clamp(sxy / math.sqrt(sxx * syy))


def _mid_ranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        shared = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = shared
        i = j + 1
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    fx, fy = _paired(xs, ys)
    return pearson(_mid_ranks(fx), _mid_ranks(fy))


def _count_inversions(values: list[float]) -> int:
    # merge-sort inversion count; equal neighbours are not inversions
    if len(values) <= 1:
        return 0
    mid = len(values) // 2
    left = values[:mid]
    right = values[mid:]
    inversions = _count_inversions(left) + _count_inversions(right)
    i = j = k = 0
    while i < len(left) and j < len(right):
        if left[i] <= right[j]:
            values[k] = left[i]
            i += 1
        else:
            values[k] = right[j]
            j += 1
            inversions += len(left) - i
        k += 1
    while i < len(left):
        values[k] = left[i]
        i += 1
        k += 1
    while j < len(right):
        values[k] = right[j]
        j += 1
        k += 1
    return inversions


def _tie_pairs(values: Iterable[float]) -> int:
    return sum(t * (t - 1) // 2 for t in Counter(values).values())


def kendall_tau_b(xs: Sequence[float], ys: Sequence[float]) -> float:
    fx, fy = _paired(xs, ys)
    n = len(fx)
    n0 = n * (n - 1) // 2
    n1 = _tie_pairs(fx)
    n2 = _tie_pairs(fy)
    n3 = _tie_pairs(zip(fx, fy))
    denominator = math.sqrt(float(n0 - n1) * float(n0 - n2))
    if denominator == 0.0:
        raise StatsError("undefined correlation (zero variance)")
    # sort by (x, y); y-inversions in that order are exactly the discordant pairs
    ordered_y = [y for _, y in sorted(zip(fx, fy))]
    discordant = _count_inversions(ordered_y)
    concordant = n0 - n1 - n2 + n3 - discordant
    return _clamp((concordant - discordant) / denominator)


@dataclass(frozen=True)
class Annotation:
    """One human score for one record; annotator is optional but disambiguates."""

    record_id: str
    human_score: int
    annotator: str | None = None

    def __post_init__(self) -> None:
        if not self.record_id:
            raise StatsError("annotation record_id must be non-empty")
        if self.human_score not in VALID_SCORES:
            raise StatsError(f"human_score must be in {VALID_SCORES}, got {self.human_score!r}")
        if self.annotator is not None and not self.annotator:
            raise StatsError("annotator must be non-empty when given")

    def to_dict(self) -> dict:
        row: dict = {"record_id": self.record_id, "human_score": self.human_score}
        if self.annotator is not None:
            row["annotator"] = self.annotator
        return row

    @classmethod
    def from_dict(cls, row: dict) -> Annotation:
        return cls(
            record_id=row["record_id"],
            human_score=row["human_score"],
            annotator=row.get("annotator"),
        )


def load_annotations(path: str | Path) -> list[Annotation]:
    annotations = []
    seen: set[tuple[str, str | None]] = set()
    for lineno, row in read_jsonl(path):
        try:
            annotation = Annotation.from_dict(row)
        except (KeyError, StatsError) as exc:
            raise StatsError(f"{path}:{lineno}: bad annotation: {exc}") from exc
        key = (annotation.record_id, annotation.annotator)
        if key in seen:
            raise StatsError(f"{path}:{lineno}: duplicate annotation for {key!r}")
        seen.add(key)
        annotations.append(annotation)
    return annotations


@dataclass(frozen=True)
class MetricCorrelation:
    """Coefficients for one metric against human scores; None marks undefined."""

    metric: str
    n: int
    excluded: int
    pearson_r: float | None
    spearman_rho: float | None
    kendall_tau: float | None

    def __post_init__(self) -> None:
        if self.n < 3:
            raise StatsError(f"reported coefficients need n >= 3, got {self.n}")
        if self.excluded < 0:
            raise StatsError("excluded count must be >= 0")
        for name in COEFFICIENTS:
            value = getattr(self, name)
            if value is not None and not -1.0 <= value <= 1.0:
                raise StatsError(f"{name} out of [-1, 1]: {value!r}")

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "n": self.n,
            "excluded": self.excluded,
            "pearson_r": self.pearson_r,
            "spearman_rho": self.spearman_rho,
            "kendall_tau": self.kendall_tau,
        }

    @classmethod
    def from_dict(cls, row: dict) -> MetricCorrelation:
        return cls(
            metric=row["metric"],
            n=row["n"],
            excluded=row["excluded"],
            pearson_r=row["pearson_r"],
            spearman_rho=row["spearman_rho"],
            kendall_tau=row["kendall_tau"],
        )


@dataclass(frozen=True)
class CorrelationReport:
    language_pair: str
    metrics: tuple[MetricCorrelation, ...]

    def to_dict(self) -> dict:
        return {
            "language_pair": self.language_pair,
            "metrics": [m.to_dict() for m in self.metrics],
        }

    @classmethod
    def from_dict(cls, row: dict) -> CorrelationReport:
        return cls(
            language_pair=row["language_pair"],
            metrics=tuple(MetricCorrelation.from_dict(m) for m in row["metrics"]),
        )


_METRIC_GETTERS = {
    "judge": lambda record: record.judge_score,
    "bleu_sentence": lambda record: record.bleu_sentence,
}


def _maybe(func, xs: list[float], ys: list[float]) -> float | None:
    try:
        return func(xs, ys)
    except StatsError as exc:
        if "zero variance" in str(exc):
            return None
        raise


def correlate(
    evals: Iterable[EvalRecord],
    annotations: Iterable[Annotation],
    language_pair: str,
    metrics: Sequence[str] = REPORT_METRICS,
) -> CorrelationReport:
    """Join metric scores with mean human scores and report all coefficients.

    Records present on only one side, or lacking a metric value, are excluded
    and counted per metric. Zero-variance inputs yield None cells, not errors.
    """
    eval_rows = list(evals)
    grouped: dict[str, list[int]] = {}
    for annotation in annotations:
        grouped.setdefault(annotation.record_id, []).append(annotation.human_score)
    human = {rid: fsum(scores) / len(scores) for rid, scores in grouped.items()}

    rows = []
    for metric in metrics:
        getter = _METRIC_GETTERS.get(metric)
        if getter is None:
            raise StatsError(f"unknown metric {metric!r}; expected one of {REPORT_METRICS}")
        candidate_ids = {record.record_id for record in eval_rows} | set(human)
        xs: list[float] = []
        ys: list[float] = []
        for record in eval_rows:
            value = getter(record)
            if value is None or record.record_id not in human:
                continue
            xs.append(float(value))
            ys.append(human[record.record_id])
        if len(xs) < 3:
            raise StatsError(
                f"insufficient paired data for metric {metric!r}: "
                f"{len(xs)} complete pairs (need 3)"
            )
        rows.append(
            MetricCorrelation(
                metric=metric,
                n=len(xs),
                excluded=len(candidate_ids) - len(xs),
                pearson_r=_maybe(pearson, xs, ys),
                spearman_rho=_maybe(spearman, xs, ys),
                kendall_tau=_maybe(kendall_tau_b, xs, ys),
            )
        )
    return CorrelationReport(language_pair=language_pair, metrics=tuple(rows))


@dataclass(frozen=True)
class ScoreSummary:
    mean: float
    count: int
    histogram: dict[int, int]

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "count": self.count,
            "histogram": {str(point): self.histogram[point] for point in VALID_SCORES},
        }


def aggregate(scores: Iterable[int]) -> ScoreSummary:
    values = list(scores)
    if not values:
        raise StatsError("no scores to aggregate")
    for value in values:
        if value not in VALID_SCORES:
            raise StatsError(f"score must be in {VALID_SCORES}, got {value!r}")
    counts = Counter(values)
    return ScoreSummary(
        mean=fsum(values) / len(values),
        count=len(values),
        histogram={point: counts.get(point, 0) for point in VALID_SCORES},
    )


def _format_cell(value: float | None) -> str:
    return "undefined" if value is None else f"{value:.4f}"


def _render_text_table(reports: Sequence[CorrelationReport]) -> str:
    pairs = [report.language_pair for report in reports]
    by_pair = {report.language_pair: report for report in reports}
    metric_order: list[str] = []
    for report in reports:
        for metric in report.metrics:
            if metric.metric not in metric_order:
                metric_order.append(metric.metric)

    header = ["metric", "coefficient", *pairs]
    rows: list[list[str]] = []
    for metric_name in metric_order:
        for coefficient in COEFFICIENTS:
            cells = []
            for pair in pairs:
                found = next(
                    (m for m in by_pair[pair].metrics if m.metric == metric_name), None
                )
                if found is None:
                    cells.append(MISSING_CELL)
                else:
                    cells.append(_format_cell(getattr(found, coefficient)))
            rows.append([metric_name, coefficient, *cells])
        counts = []
        for pair in pairs:
            found = next((m for m in by_pair[pair].metrics if m.metric == metric_name), None)
            counts.append(MISSING_CELL if found is None else str(found.n))
        rows.append([metric_name, "n", *counts])

    widths = [
        max(len(header[col]), *(len(row[col]) for row in rows)) if rows else len(header[col])
        for col in range(len(header))
    ]
    lines = ["  ".join(header[col].ljust(widths[col]) for col in range(len(header))).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(row[col].ljust(widths[col]) for col in range(len(row))).rstrip())
    lines.append("")
    lines.append(KENDALL_FOOTNOTE)
    return "\n".join(lines) + "\n"


def _render_csv(reports: Sequence[CorrelationReport]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        ["language_pair", "metric", "n", "excluded", "pearson_r", "spearman_rho", "kendall_tau"]
    )
    for report in reports:
        for metric in report.metrics:
            writer.writerow(
                [
                    report.language_pair,
                    metric.metric,
                    metric.n,
                    metric.excluded,
                    "" if metric.pearson_r is None else repr(metric.pearson_r),
                    "" if metric.spearman_rho is None else repr(metric.spearman_rho),
                    "" if metric.kendall_tau is None else repr(metric.kendall_tau),
                ]
            )
    return buffer.getvalue()


def _render_json(reports: Sequence[CorrelationReport]) -> str:
    payload = {
        "kendall_variant": "tau-b",
        "reports": [report.to_dict() for report in reports],
    }
    return json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n"


RENDER_FORMATS = ("text-table", "csv", "json")


def render_report(reports: Sequence[CorrelationReport], fmt: str) -> str:
    if fmt == "text-table":
        return _render_text_table(reports)
    if fmt == "csv":
        return _render_csv(reports)
    if fmt == "json":
        return _render_json(reports)
    raise StatsError(f"unknown report format {fmt!r}; expected one of {RENDER_FORMATS}")


def reports_from_json(text: str) -> list[CorrelationReport]:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise StatsError(f"bad report JSON: {exc}") from exc
    if not isinstance(payload, dict) or "reports" not in payload:
        raise StatsError("bad report JSON: missing 'reports' key")
    return [CorrelationReport.from_dict(row) for row in payload["reports"]]
