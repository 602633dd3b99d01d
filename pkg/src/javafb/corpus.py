"""Instruct-format training records and bug-type-partitioned cross-validation.

Partitioning is always by bug type, never by sample: all five triplets of a
bug follow their bug onto one side of every split, so no bug ever leaks from
train to test. Records and plans serialize to line-oriented JSON for
streaming and audit.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import prompts
from .datagen import FeedbackTriplet, TripletStatus
from .taxonomy import BugCategory


class CorpusError(ValueError):
    pass


class FoldError(ValueError):
    pass


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class TrainingRecord:
    bug_id: str
    prompt: str
    response: str

    def __post_init__(self) -> None:
        if not (self.prompt.startswith(prompts.INST_OPEN) and self.prompt.endswith(prompts.INST_CLOSE)):
            raise CorpusError("prompt must be wrapped in the instruction sentinels")
        km_pos = self.response.find("KM:")
        kh_pos = self.response.find("KH:")
        if km_pos < 0 or kh_pos < 0 or kh_pos < km_pos:
            raise CorpusError("response must contain a KM segment followed by a KH segment")

    def to_dict(self) -> dict:
        return {"bug_id": self.bug_id, "prompt": self.prompt, "response": self.response}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingRecord":
        return cls(bug_id=d["bug_id"], prompt=d["prompt"], response=d["response"])


def to_training_record(triplet: FeedbackTriplet) -> TrainingRecord:
    """Wrap an approved triplet in the instruct training format."""
    if triplet.status is not TripletStatus.APPROVED:
        raise CorpusError(f"triplet {triplet.triplet_id} is {triplet.status.value}, not approved")
    return TrainingRecord(
        bug_id=triplet.bug_id,
        prompt=prompts.training_prompt(triplet.code),
        response=prompts.training_response(triplet.km, triplet.kh),
    )


@dataclass(frozen=True)
class FoldPlan:
    fold_index: int
    train_bug_ids: frozenset[str]
    test_bug_ids: frozenset[str]
    seed: int

    def __post_init__(self) -> None:
        overlap = self.train_bug_ids & self.test_bug_ids
        if overlap:
            raise FoldError(f"train/test overlap in fold {self.fold_index}: {sorted(overlap)}")

    def to_dict(self) -> dict:
        return {
            "fold_index": self.fold_index,
            "train_bug_ids": sorted(self.train_bug_ids),
            "test_bug_ids": sorted(self.test_bug_ids),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FoldPlan":
        return cls(
            fold_index=d["fold_index"],
            train_bug_ids=frozenset(d["train_bug_ids"]),
            test_bug_ids=frozenset(d["test_bug_ids"]),
            seed=d["seed"],
        )


def _chunk_sizes(n: int, k: int) -> list[int]:
    base, rem = divmod(n, k)
    return [base + 1 if i < rem else base for i in range(k)]


def make_folds(
    bug_ids: Sequence[str],
    k: int,
    seed: int,
    categories: Mapping[str, BugCategory] | None = None,
) -> list[FoldPlan]:
    """Seeded shuffle of bug ids, split into k near-equal test chunks.

    Fold i tests chunk i and trains on all the others. Passing a category map
    stratifies the shuffle-and-chunk per category (off by default).
    """
    ids = list(bug_ids)
    if len(set(ids)) != len(ids):
        raise FoldError("bug_ids contain duplicates")
    if k < 2:
        raise FoldError(f"k must be >= 2, got {k}")
    if k > len(ids):
        raise FoldError(f"k={k} exceeds the number of bug ids ({len(ids)})")
    buckets: list[list[str]] = [[] for _ in range(k)]
    if categories is None:
        shuffled = ids[:]
        random.Random(seed).shuffle(shuffled)
        start = 0
        for i, size in enumerate(_chunk_sizes(len(shuffled), k)):
            buckets[i] = shuffled[start : start + size]
            start += size
    else:
        missing = sorted(set(ids) - set(categories))
        if missing:
            raise FoldError(f"no category for bug ids: {missing}")
        rng = random.Random(seed)
        by_cat: dict[str, list[str]] = {}
        for bug_id in ids:
            by_cat.setdefault(categories[bug_id].value, []).append(bug_id)
        for offset, cat in enumerate(sorted(by_cat)):
            group = by_cat[cat]
            rng.shuffle(group)
            for j, bug_id in enumerate(group):
                buckets[(j + offset) % k].append(bug_id)
    all_ids = set(ids)
    plans = []
    for i in range(k):
        test = frozenset(buckets[i])
        plans.append(FoldPlan(fold_index=i, train_bug_ids=frozenset(all_ids - test), test_bug_ids=test, seed=seed))
    return plans


def materialize_split(
    plan: FoldPlan, triplets: Iterable[FeedbackTriplet]
) -> tuple[list[TrainingRecord], list[FeedbackTriplet]]:
    """Instantiate one fold: train-side instruct records, test-side raw triplets.

    The plan must cover bug ids that actually exist in the corpus, and the
    no-leakage invariant is re-asserted on every materialization.
    """
    triplets = list(triplets)
    corpus_bugs = {t.bug_id for t in triplets}
    overlap = plan.train_bug_ids & plan.test_bug_ids
    if overlap:
        raise SplitError(f"corrupted plan: bug ids on both sides: {sorted(overlap)}")
    missing = sorted((plan.train_bug_ids | plan.test_bug_ids) - corpus_bugs)
    if missing:
        raise SplitError(f"plan references bug ids absent from corpus: {missing}")
    train = [to_training_record(t) for t in triplets if t.bug_id in plan.train_bug_ids]
    test = [t for t in triplets if t.bug_id in plan.test_bug_ids]
    return train, test


def write_training_records(path: str | Path, records: Iterable[TrainingRecord]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict()) + "\n")


def read_training_records(path: str | Path) -> list[TrainingRecord]:
    with open(path, encoding="utf-8") as fh:
        return [TrainingRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


def write_fold_plans(path: str | Path, plans: Iterable[FoldPlan], k: int) -> None:
    plans = list(plans)
    doc = {"k": k, "seed": plans[0].seed if plans else None, "folds": [p.to_dict() for p in plans]}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def read_fold_plans(path: str | Path) -> list[FoldPlan]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return [FoldPlan.from_dict(d) for d in doc["folds"]]
