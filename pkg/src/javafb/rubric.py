"""Binary rubric annotation, aggregation, and cross-annotator agreement.

Four criteria per sample: KMA (addresses the core issue), KHH (meaningful
hint), MS (misleading content present; stored as-is, rendering labels it
lower-is-better), PA (follows the KM/KH structure). The store is append-only;
re-annotation by the same annotator replaces the effective judgment while the
audit trail keeps every write.
"""

from __future__ import annotations

import datetime as _dt
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .taxonomy import TaxonomyRegistry

CRITERIA = ("kma", "khh", "ms", "pa")


class AnnotationError(ValueError):
    pass


class OrphanSampleError(ValueError):
    def __init__(self, sample_ids):
        super().__init__(f"samples with no taxonomy join: {sorted(sample_ids)}")
        self.sample_ids = sorted(sample_ids)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


@dataclass(frozen=True)
class RubricAnnotation:
    sample_id: str
    annotator_id: str
    kma: int
    khh: int
    ms: int
    pa: int
    timestamp: str = field(default_factory=_now)

    def __post_init__(self) -> None:
        for criterion in CRITERIA:
            value = getattr(self, criterion)
            if value not in (0, 1):
                raise AnnotationError(f"{criterion} must be 0 or 1, got {value!r}")

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "annotator_id": self.annotator_id,
            "kma": self.kma,
            "khh": self.khh,
            "ms": self.ms,
            "pa": self.pa,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RubricAnnotation":
        return cls(
            sample_id=d["sample_id"],
            annotator_id=d["annotator_id"],
            kma=int(d["kma"]),
            khh=int(d["khh"]),
            ms=int(d["ms"]),
            pa=int(d["pa"]),
            timestamp=d.get("timestamp", _now()),
        )


class AnnotationStore:
    """Append-only annotation log; latest write per (sample, annotator) wins."""

    def __init__(self, path: str | Path, known_samples: Iterable[str] | None = None):
        self.path = Path(path)
        self.known_samples = set(known_samples) if known_samples is not None else None
        self._lock = threading.Lock()
        self._latest: dict[tuple[str, str], RubricAnnotation] = {}
        self._history: list[RubricAnnotation] = []
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        self._apply(RubricAnnotation.from_dict(json.loads(line)))

    def _apply(self, annotation: RubricAnnotation) -> None:
        self._history.append(annotation)
        self._latest[(annotation.sample_id, annotation.annotator_id)] = annotation

    def record(self, annotation: RubricAnnotation) -> RubricAnnotation:
        if self.known_samples is not None and annotation.sample_id not in self.known_samples:
            raise AnnotationError(f"unknown sample_id {annotation.sample_id!r}")
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(annotation.to_dict()) + "\n")
            self._apply(annotation)
        return annotation

    def annotations(self) -> list[RubricAnnotation]:
        return list(self._latest.values())

    def by_annotator(self, annotator_id: str) -> list[RubricAnnotation]:
        return [a for a in self._latest.values() if a.annotator_id == annotator_id]

    def annotator_ids(self) -> list[str]:
        return sorted({a.annotator_id for a in self._latest.values()})

    def audit_trail(self) -> list[RubricAnnotation]:
        return list(self._history)

    def annotated_samples(self, annotator_id: str) -> set[str]:
        return {a.sample_id for a in self._latest.values() if a.annotator_id == annotator_id}


def _dedupe_by_sample(annotations: Iterable[RubricAnnotation]) -> dict[str, RubricAnnotation]:
    """One judgment per sample: the latest timestamp wins, annotator id breaks ties."""
    chosen: dict[str, RubricAnnotation] = {}
    for ann in annotations:
        current = chosen.get(ann.sample_id)
        if current is None or (ann.timestamp, ann.annotator_id) > (current.timestamp, current.annotator_id):
            chosen[ann.sample_id] = ann
    return chosen


@dataclass
class RubricSummary:
    strategy: str
    n: int
    pct_kma: float
    pct_khh: float
    pct_ms: float
    pct_pa: float
    per_category: dict[str, dict[str, float]] = field(default_factory=dict)

    def criterion_pcts(self) -> dict[str, float]:
        return {"kma": self.pct_kma, "khh": self.pct_khh, "ms": self.pct_ms, "pa": self.pct_pa}

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "n": self.n,
            "pct_kma": self.pct_kma,
            "pct_khh": self.pct_khh,
            "pct_ms": self.pct_ms,
            "pct_pa": self.pct_pa,
            "per_category": self.per_category,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RubricSummary":
        return cls(
            strategy=d["strategy"],
            n=d["n"],
            pct_kma=d["pct_kma"],
            pct_khh=d["pct_khh"],
            pct_ms=d["pct_ms"],
            pct_pa=d["pct_pa"],
            per_category=d.get("per_category", {}),
        )


def _pct(annotations: list[RubricAnnotation], criterion: str) -> float:
    return 100.0 * sum(getattr(a, criterion) for a in annotations) / len(annotations)


def summarize(
    annotations: Iterable[RubricAnnotation],
    sample_bugs: Mapping[str, str] | None = None,
    taxonomy: TaxonomyRegistry | None = None,
    strategy: str = "",
) -> RubricSummary:
    """Per-criterion percentages over the annotated samples (one judgment each).

    With a sample -> bug join and a taxonomy, percentages are also split by
    bug category; categories with no samples are simply absent.
    """
    deduped = list(_dedupe_by_sample(annotations).values())
    if not deduped:
        raise AnnotationError("cannot summarize an empty annotation set")
    summary = RubricSummary(
        strategy=strategy,
        n=len(deduped),
        pct_kma=_pct(deduped, "kma"),
        pct_khh=_pct(deduped, "khh"),
        pct_ms=_pct(deduped, "ms"),
        pct_pa=_pct(deduped, "pa"),
    )
    if sample_bugs is not None and taxonomy is not None:
        by_category: dict[str, list[RubricAnnotation]] = {}
        orphans = [a.sample_id for a in deduped if a.sample_id not in sample_bugs or sample_bugs[a.sample_id] not in taxonomy]
        if orphans:
            raise OrphanSampleError(orphans)
        for ann in deduped:
            category = taxonomy.get(sample_bugs[ann.sample_id]).category.value
            by_category.setdefault(category, []).append(ann)
        summary.per_category = {
            category: {criterion: _pct(group, criterion) for criterion in CRITERIA} | {"n": len(group)}
            for category, group in sorted(by_category.items())
        }
    return summary


def category_breakdown(
    annotations: Iterable[RubricAnnotation],
    sample_bugs: Mapping[str, str],
    taxonomy: TaxonomyRegistry,
) -> dict[str, dict[str, float]]:
    """KMA accuracy within each bug category; absent categories are not reported."""
    deduped = list(_dedupe_by_sample(annotations).values())
    if not deduped:
        raise AnnotationError("cannot break down an empty annotation set")
    orphans = [a.sample_id for a in deduped if a.sample_id not in sample_bugs or sample_bugs[a.sample_id] not in taxonomy]
    if orphans:
        raise OrphanSampleError(orphans)
    by_category: dict[str, list[RubricAnnotation]] = {}
    for ann in deduped:
        category = taxonomy.get(sample_bugs[ann.sample_id]).category.value
        by_category.setdefault(category, []).append(ann)
    return {
        category: {"pct_kma": _pct(group, "kma"), "n": len(group)}
        for category, group in sorted(by_category.items())
    }


def cohen_kappa(a_values: list[int], b_values: list[int]) -> float:
    """Chance-corrected agreement for paired binary labels.

    When expected agreement is 1 (both raters constant and identical), kappa
    is defined as 1.0 for perfect observed agreement, else 0.0.
    """
    if len(a_values) != len(b_values) or not a_values:
        raise AnnotationError("kappa needs two equal-length non-empty label lists")
    n = len(a_values)
    observed = sum(1 for x, y in zip(a_values, b_values) if x == y) / n
    labels = set(a_values) | set(b_values)
    expected = sum(
        (a_values.count(label) / n) * (b_values.count(label) / n) for label in labels
    )
    if expected == 1.0:
        return 1.0 if observed == 1.0 else 0.0
    return (observed - expected) / (1.0 - expected)


@dataclass
class AgreementReport:
    n_overlap: int
    n_only_a: int
    n_only_b: int
    percent_agreement: dict[str, float]
    kappa: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "n_overlap": self.n_overlap,
            "n_only_a": self.n_only_a,
            "n_only_b": self.n_only_b,
            "percent_agreement": self.percent_agreement,
            "kappa": self.kappa,
        }


def agreement(
    annotator_a: Iterable[RubricAnnotation],
    annotator_b: Iterable[RubricAnnotation],
) -> AgreementReport:
    """Raw agreement and kappa per criterion over the jointly annotated samples."""
    a_by_sample = {a.sample_id: a for a in annotator_a}
    b_by_sample = {b.sample_id: b for b in annotator_b}
    overlap = sorted(set(a_by_sample) & set(b_by_sample))
    if not overlap:
        raise AnnotationError("no jointly annotated samples")
    percent: dict[str, float] = {}
    kappa: dict[str, float] = {}
    for criterion in CRITERIA:
        a_vals = [getattr(a_by_sample[s], criterion) for s in overlap]
        b_vals = [getattr(b_by_sample[s], criterion) for s in overlap]
        percent[criterion] = 100.0 * sum(1 for x, y in zip(a_vals, b_vals) if x == y) / len(overlap)
        kappa[criterion] = cohen_kappa(a_vals, b_vals)
    return AgreementReport(
        n_overlap=len(overlap),
        n_only_a=len(set(a_by_sample) - set(b_by_sample)),
        n_only_b=len(set(b_by_sample) - set(a_by_sample)),
        percent_agreement=percent,
        kappa=kappa,
    )


def export_annotations(store: AnnotationStore, path: str | Path) -> int:
    """Write the full audit trail as annotation lines; returns the line count."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    trail = store.audit_trail()
    with open(path, "w", encoding="utf-8") as fh:
        for ann in trail:
            fh.write(json.dumps(ann.to_dict()) + "\n")
    return len(trail)


def import_annotations(path: str | Path, store: AnnotationStore) -> int:
    """Replay exported annotation lines into a store; returns the count imported."""
    count = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                store.record(RubricAnnotation.from_dict(json.loads(line)))
                count += 1
    return count
