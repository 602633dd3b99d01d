"""Summary artifacts: rubric chart data, metric tables, and rating box stats.

The data documents are the contract; rendered images are a convenience on
top. All renderers emit byte-deterministic output for identical inputs, with
strategies always ordered baseline, few_shot, fine_tuned.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

from .metrics import AGGREGATE_KEYS, MetricReport
from .rubric import CRITERIA, RubricSummary

STRATEGY_ORDER = ("baseline", "few_shot", "fine_tuned")
STRATEGY_LABELS = {"baseline": "Baseline", "few_shot": "PE-FewShot", "fine_tuned": "PEFT"}
CRITERION_LABELS = {
    "kma": "KM Accuracy",
    "khh": "KH Helpfulness",
    "ms": "Misleading Suggestions",
    "pa": "Prompt Adherence",
}
LOWER_IS_BETTER = ("ms",)
METRIC_LABELS = {"bleu": "BLEU", "rouge_l_f": "ROUGE-L", "bertscore_f1": "BERTScore-F1"}


class RenderError(ValueError):
    pass


def _strategy_sort_key(name: str) -> tuple[int, str]:
    try:
        return (STRATEGY_ORDER.index(name), name)
    except ValueError:
        return (len(STRATEGY_ORDER), name)


@dataclass
class ChartDocument:
    data: dict
    table: str

    def save(self, path_prefix: str | Path, image: bool = False) -> list[Path]:
        prefix = Path(path_prefix)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        json_path = prefix.with_suffix(".json")
        txt_path = prefix.with_suffix(".txt")
        json_path.write_text(json.dumps(self.data, indent=2) + "\n", encoding="utf-8")
        txt_path.write_text(self.table, encoding="utf-8")
        written = [json_path, txt_path]
        if image:
            written.append(self._render_image(prefix.with_suffix(".png")))
        return written

    def _render_image(self, path: Path) -> Path:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        groups = self.data["groups"]
        series = self.data["series"]
        width = 0.8 / max(len(series), 1)
        fig, ax = plt.subplots(figsize=(8, 4.5))
        for i, entry in enumerate(series):
            xs = [j + i * width for j in range(len(groups))]
            ax.bar(xs, entry["values"], width=width, label=entry["label"])
        ax.set_xticks([j + width * (len(series) - 1) / 2 for j in range(len(groups))])
        ax.set_xticklabels(groups, rotation=30, ha="right")
        ax.set_ylabel(self.data.get("y_label", "Score"))
        ax.legend()
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
        return path


def _text_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(str(row[i])) for row in [headers] + rows) for i in range(len(headers))]
    lines = []
    for row in [headers] + rows:
        lines.append("  ".join(str(cell).ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines) + "\n"


def render_rubric_chart(summaries: Iterable[RubricSummary]) -> ChartDocument:
    """Grouped-bar data for the four rubric criteria across strategies."""
    summaries = sorted(summaries, key=lambda s: _strategy_sort_key(s.strategy))
    if not summaries:
        raise RenderError("need at least one rubric summary")
    groups = [CRITERION_LABELS[c] for c in CRITERIA]
    series = []
    for summary in summaries:
        pcts = summary.criterion_pcts()
        series.append(
            {
                "strategy": summary.strategy,
                "label": STRATEGY_LABELS.get(summary.strategy, summary.strategy),
                "values": [pcts[c] for c in CRITERIA],
                "n": summary.n,
            }
        )
    data = {
        "kind": "rubric_chart",
        "groups": groups,
        "series": series,
        "lower_is_better": [CRITERION_LABELS[c] for c in LOWER_IS_BETTER],
        "y_label": "Score (%)",
    }
    headers = ["Strategy"] + [
        label + (" (lower is better)" if c in LOWER_IS_BETTER else "")
        for c, label in zip(CRITERIA, groups)
    ]
    rows = [
        [entry["label"]] + [_fmt_pct(v) for v in entry["values"]]
        for entry in series
    ]
    return ChartDocument(data=data, table=_text_table(headers, rows))


def _fmt_pct(value: float) -> str:
    return f"{value:.10g}"


def render_metric_table(reports: Iterable[MetricReport]) -> ChartDocument:
    """Six aggregate columns (KM/KH x three metrics) per strategy row."""
    reports = sorted(reports, key=lambda r: _strategy_sort_key(r.strategy))
    if not reports:
        raise RenderError("need at least one metric report")
    headers = ["Strategy"] + [f"{seg.upper()}-{METRIC_LABELS[m]}" for seg in ("km", "kh") for m in AGGREGATE_KEYS]
    rows = []
    series = []
    for report in reports:
        agg = report.aggregates
        values = [agg[seg][m] for seg in ("km", "kh") for m in AGGREGATE_KEYS]
        bad = [v for v in values if not (0.0 <= v <= 1.0)]
        if bad:
            raise RenderError(f"metric values outside [0, 1] for {report.strategy}: {bad}")
        label = STRATEGY_LABELS.get(report.strategy, report.strategy)
        series.append({"strategy": report.strategy, "label": label, "values": values, "n": len(report.samples)})
        rows.append([label] + [f"{v:.10g}" for v in values])
    data = {
        "kind": "metric_table",
        "groups": headers[1:],
        "series": series,
        "y_label": "Score",
    }
    return ChartDocument(data=data, table=_text_table(headers, rows))


class FeedbackCondition(enum.Enum):
    COMPILER_ERROR = "E"
    PROPRIETARY = "C"
    FINE_TUNED = "F"


class RatingFactor(enum.Enum):
    USEFULNESS = "usefulness"
    CLARITY = "clarity"
    STRUCTURE = "structure"


@dataclass(frozen=True)
class LikertRecord:
    participant_id: str
    feedback_type: FeedbackCondition
    factor: RatingFactor
    score: int

    def __post_init__(self) -> None:
        if not (1 <= self.score <= 5):
            raise ValueError(f"score must be 1..5, got {self.score}")


@dataclass(frozen=True)
class BoxStats:
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    n: int

    def to_dict(self) -> dict:
        return {
            "min": self.minimum,
            "q1": self.q1,
            "median": self.median,
            "q3": self.q3,
            "max": self.maximum,
            "n": self.n,
        }


def _median(sorted_values: list[float]) -> float:
    n = len(sorted_values)
    mid = n // 2
    if n % 2:
        return float(sorted_values[mid])
    return (sorted_values[mid - 1] + sorted_values[mid]) / 2.0


def five_number_summary(values: Iterable[float]) -> BoxStats:
    """Median-exclusive quartiles: for odd n the overall median joins neither half."""
    ordered = sorted(values)
    if not ordered:
        raise RenderError("cannot summarize an empty cell")
    n = len(ordered)
    half = n // 2
    median = _median(ordered)
    if half == 0:
        q1 = q3 = median
    else:
        q1 = _median(ordered[:half])
        q3 = _median(ordered[n - half :])
    return BoxStats(float(ordered[0]), q1, median, q3, float(ordered[-1]), n)


def likert_boxstats(records: Iterable[LikertRecord]) -> dict[tuple[str, str], BoxStats]:
    """Five-number summary per (feedback type, factor) cell; empty cells are absent."""
    records = list(records)
    if not records:
        raise RenderError("no rating records")
    cells: dict[tuple[str, str], list[int]] = {}
    for record in records:
        cells.setdefault((record.feedback_type.value, record.factor.value), []).append(record.score)
    return {key: five_number_summary(scores) for key, scores in sorted(cells.items())}


def boxstats_document(stats: dict[tuple[str, str], BoxStats]) -> ChartDocument:
    headers = ["Feedback", "Factor", "min", "q1", "median", "q3", "max", "n"]
    rows = []
    data_rows = []
    for (ftype, factor), box in sorted(stats.items()):
        rows.append([ftype, factor] + [f"{v:g}" for v in (box.minimum, box.q1, box.median, box.q3, box.maximum)] + [str(box.n)])
        data_rows.append({"feedback_type": ftype, "factor": factor, **box.to_dict()})
    return ChartDocument(data={"kind": "likert_boxstats", "cells": data_rows, "groups": [], "series": []}, table=_text_table(headers, rows))


def _fixture_path(name: str) -> Path:
    return Path(str(resources.files("javafb").joinpath(f"data/fixtures/{name}")))


def load_rubric_fixture() -> list[RubricSummary]:
    """The published rubric percentages for the three strategies."""
    doc = json.loads(_fixture_path("figure_rubric_rows.json").read_text(encoding="utf-8"))
    return [RubricSummary.from_dict(row) for row in doc["rows"]]


def load_metric_fixture() -> tuple[list[MetricReport], list[dict]]:
    """Per-sample metric fixtures whose means equal the published aggregates.

    Returns the reports plus the notes list (kept verbatim; it records the
    known narrative-vs-plot disagreement on the baseline embedding score).
    """
    doc = json.loads(_fixture_path("figure_metric_rows.json").read_text(encoding="utf-8"))
    return [MetricReport.from_dict(row) for row in doc["reports"]], doc.get("notes", [])


def load_likert_fixture() -> list[LikertRecord]:
    """Published rating distributions, one record per plotted value."""
    doc = json.loads(_fixture_path("figure_likert_scores.json").read_text(encoding="utf-8"))
    records = []
    for factor, by_type in doc.items():
        for ftype, scores in by_type.items():
            for i, score in enumerate(scores, start=1):
                records.append(
                    LikertRecord(
                        participant_id=f"r{i:02d}",
                        feedback_type=FeedbackCondition(ftype),
                        factor=RatingFactor(factor),
                        score=score,
                    )
                )
    return records
