"""Automated similarity scoring of generated feedback against ground truth.

Three metrics, reported separately for the KM and KH segments:

* n-gram precision score (orders 1..4, add-one smoothing on every order,
  geometric mean, brevity penalty);
* longest-common-subsequence score (token-level LCS precision/recall/F);
* embedding score (greedy cosine matching both ways, harmonic mean, no
  baseline rescaling, so the identity case is exactly 1.0).

Tokenization is shared by all three: lowercase, split on whitespace and
punctuation boundaries, backtick-quoted code literals kept intact as single
tokens.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

_BACKTICK_RE = re.compile(r"`([^`]+)`")
_WORD_RE = re.compile(r"\w+")


class MetricsError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercased tokens; `backtick spans` survive as single tokens."""
    tokens: list[str] = []
    pos = 0
    for m in _BACKTICK_RE.finditer(text):
        tokens.extend(_WORD_RE.findall(text[pos : m.start()].lower()))
        span = m.group(1).strip().lower()
        if span:
            tokens.append(span)
        pos = m.end()
    tokens.extend(_WORD_RE.findall(text[pos:].lower()))
    return tokens


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: str, reference: str, max_order: int = 4) -> float:
    """Sentence-level n-gram precision score in [0, 1].

    Modified (clipped) n-gram precision for n=1..4 with add-one smoothing on
    numerator and denominator of every order, combined by geometric mean and
    multiplied by the brevity penalty. An order with no candidate n-grams
    contributes a neutral factor. Empty candidate scores 0.
    """
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_order + 1):
        cand_counts = _ngram_counts(cand, n)
        ref_counts = _ngram_counts(ref, n)
        total = sum(cand_counts.values())
        matched = sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
        log_sum += math.log((matched + 1.0) / (total + 1.0))
    geo_mean = math.exp(log_sum / max_order)
    c, r = len(cand), len(ref)
    brevity = 1.0 if c >= r else math.exp(1.0 - r / c)
    return brevity * geo_mean


@dataclass(frozen=True)
class LcsScore:
    precision: float
    recall: float
    f: float


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                curr.append(prev[j - 1] + 1)
            else:
                curr.append(max(prev[j], curr[j - 1]))
        prev = curr
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> LcsScore:
    """Token-level LCS score: precision L/|cand|, recall L/|ref|, F harmonic mean."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand or not ref:
        return LcsScore(0.0, 0.0, 0.0)
    lcs = _lcs_length(cand, ref)
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    f = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return LcsScore(precision, recall, f)


class EmbeddingProvider(Protocol):
    """Produces one vector per token; identical text must embed identically."""

    model_id: str

    def embed(self, tokens: Sequence[str]) -> np.ndarray: ...


def bertscore_f1(candidate: str, reference: str, provider: EmbeddingProvider) -> float:
    """Greedy-matching embedding F1, raw (no baseline rescaling)."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand or not ref:
        return 0.0
    c_vecs = np.asarray(provider.embed(cand), dtype=float)
    r_vecs = np.asarray(provider.embed(ref), dtype=float)
    c_norm = c_vecs / np.maximum(np.linalg.norm(c_vecs, axis=1, keepdims=True), 1e-12)
    r_norm = r_vecs / np.maximum(np.linalg.norm(r_vecs, axis=1, keepdims=True), 1e-12)
    sim = c_norm @ r_norm.T
    precision = float(sim.max(axis=1).mean())
    recall = float(sim.max(axis=0).mean())
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class SegmentScore:
    bleu: float
    rouge_l_precision: float
    rouge_l_recall: float
    rouge_l_f: float
    bertscore_f1: float

    def to_dict(self) -> dict:
        return {
            "bleu": self.bleu,
            "rouge_l_precision": self.rouge_l_precision,
            "rouge_l_recall": self.rouge_l_recall,
            "rouge_l_f": self.rouge_l_f,
            "bertscore_f1": self.bertscore_f1,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SegmentScore":
        return cls(
            bleu=d["bleu"],
            rouge_l_precision=d["rouge_l_precision"],
            rouge_l_recall=d["rouge_l_recall"],
            rouge_l_f=d["rouge_l_f"],
            bertscore_f1=d["bertscore_f1"],
        )


ZERO_SCORE = SegmentScore(0.0, 0.0, 0.0, 0.0, 0.0)


def score_segment(candidate: str, reference: str, provider: EmbeddingProvider) -> SegmentScore:
    if not candidate.strip():
        return ZERO_SCORE
    lcs = rouge_l(candidate, reference)
    return SegmentScore(
        bleu=bleu(candidate, reference),
        rouge_l_precision=lcs.precision,
        rouge_l_recall=lcs.recall,
        rouge_l_f=lcs.f,
        bertscore_f1=bertscore_f1(candidate, reference, provider),
    )


@dataclass(frozen=True)
class SampleScore:
    triplet_id: str
    km: SegmentScore
    kh: SegmentScore


AGGREGATE_KEYS = ("bleu", "rouge_l_f", "bertscore_f1")


@dataclass
class MetricReport:
    """Per-sample scores plus the six headline aggregates (KM/KH x 3 metrics)."""

    strategy: str
    samples: list[SampleScore] = field(default_factory=list)

    @property
    def aggregates(self) -> dict[str, dict[str, float]]:
        out: dict[str, dict[str, float]] = {}
        ordered = sorted(self.samples, key=lambda s: s.triplet_id)
        for segment in ("km", "kh"):
            seg_scores = [getattr(s, segment) for s in ordered]
            out[segment] = {
                key: (sum(getattr(s, key) for s in seg_scores) / len(seg_scores)) if seg_scores else 0.0
                for key in AGGREGATE_KEYS
            }
        return out

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "samples": [
                {"triplet_id": s.triplet_id, "km": s.km.to_dict(), "kh": s.kh.to_dict()}
                for s in self.samples
            ],
            "aggregates": self.aggregates,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(
            strategy=d["strategy"],
            samples=[
                SampleScore(
                    triplet_id=s["triplet_id"],
                    km=SegmentScore.from_dict(s["km"]),
                    kh=SegmentScore.from_dict(s["kh"]),
                )
                for s in d["samples"]
            ],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "MetricReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def evaluate_run(responses: Iterable, ground_truth: Iterable, provider: EmbeddingProvider) -> MetricReport:
    """Score each response against its ground-truth triplet, matched by triplet_id.

    Unparsed segments score 0 on all metrics. Responses and triplets must
    align one-to-one; any mismatch is rejected listing the unmatched ids.
    """
    responses = list(responses)
    truths = {t.triplet_id: t for t in ground_truth}
    response_ids = [r.triplet_id for r in responses]
    if len(set(response_ids)) != len(response_ids):
        dupes = sorted({i for i in response_ids if response_ids.count(i) > 1})
        raise MetricsError(f"duplicate response triplet_ids: {dupes}")
    missing = sorted(set(response_ids) - set(truths))
    extra = sorted(set(truths) - set(response_ids))
    if missing or extra:
        raise MetricsError(
            f"response/ground-truth mismatch: responses without truth {missing}, truth without responses {extra}"
        )
    strategies = {getattr(r, "strategy", None) for r in responses}
    strategy = next(iter(strategies)) if len(strategies) == 1 and None not in strategies else "mixed"
    if hasattr(strategy, "value"):
        strategy = strategy.value
    report = MetricReport(strategy=str(strategy))
    for resp in responses:
        truth = truths[resp.triplet_id]
        report.samples.append(
            SampleScore(
                triplet_id=resp.triplet_id,
                km=score_segment(resp.km_text, truth.km, provider),
                kh=score_segment(resp.kh_text, truth.kh, provider),
            )
        )
    return report
