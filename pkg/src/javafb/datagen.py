"""Candidate triplet generation and the human validation workflow.

A triplet is (Java code, KM text, KH text) tied to one bug type. Candidates
come back from an external generator model, are persisted immediately, and
only become ground truth once a human reviewer approves them. The store is a
single-writer append log; review decisions are append-logged too, so the full
audit trail survives.
"""

from __future__ import annotations

import datetime as _dt
import enum
import json
import logging
import re
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Protocol

from . import prompts
from .generation import find_km_kh_segments
from .taxonomy import BugType, TaxonomyRegistry

log = logging.getLogger(__name__)

MAX_CANDIDATES_PER_RESPONSE = 5
TARGET_TRIPLETS_PER_BUG = 5


class TripletStatus(enum.Enum):
    CANDIDATE = "candidate"
    APPROVED = "approved"
    REJECTED = "rejected"


class ReviewError(ValueError):
    pass


class ParseError(ValueError):
    """Generator response had no parseable triplet blocks; carries the raw text."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


@dataclass(frozen=True)
class FeedbackTriplet:
    triplet_id: str
    bug_id: str
    code: str
    km: str
    kh: str
    status: TripletStatus = TripletStatus.CANDIDATE
    reviewer: str | None = None
    provenance: str = ""

    def __post_init__(self) -> None:
        if self.status is TripletStatus.APPROVED and not (
            self.code.strip() and self.km.strip() and self.kh.strip()
        ):
            raise ValueError(f"approved triplet {self.triplet_id} must have non-empty code/km/kh")

    def to_dict(self) -> dict:
        return {
            "triplet_id": self.triplet_id,
            "bug_id": self.bug_id,
            "code": self.code,
            "km": self.km,
            "kh": self.kh,
            "status": self.status.value,
            "reviewer": self.reviewer,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeedbackTriplet":
        return cls(
            triplet_id=d["triplet_id"],
            bug_id=d["bug_id"],
            code=d["code"],
            km=d["km"],
            kh=d["kh"],
            status=TripletStatus(d.get("status", "candidate")),
            reviewer=d.get("reviewer"),
            provenance=d.get("provenance", ""),
        )


@dataclass(frozen=True)
class GenerationPrompt:
    system: str
    user: str


def build_generation_prompt(bug_type: BugType) -> GenerationPrompt:
    """Tutor-persona system text plus the user template with the bug description filled in."""
    return GenerationPrompt(
        system=prompts.TRIPLET_SYSTEM_PROMPT,
        user=prompts.triplet_generation_user_prompt(bug_type.description),
    )


_FENCE_RE = re.compile(r"```(?:[a-zA-Z0-9_+-]*)[ \t]*\n(.*?)```", re.DOTALL)


def parse_generation_output(raw: str, bug_id: str, provenance: str = "") -> list[FeedbackTriplet]:
    """Extract up to 5 candidate triplets from a generator response.

    Each candidate is a fenced code block followed by KM and KH segments
    (short or long-form labels, case-insensitive). Blocks missing either
    segment are dropped and logged; zero parseable blocks is an error that
    carries the raw text for audit.
    """
    if not raw.strip():
        raise ParseError("no parseable triplet blocks: empty generator response", raw)
    fences = list(_FENCE_RE.finditer(raw))
    candidates: list[FeedbackTriplet] = []
    for i, fence in enumerate(fences):
        tail_end = fences[i + 1].start() if i + 1 < len(fences) else len(raw)
        trailing = raw[fence.end() : tail_end]
        km, kh = find_km_kh_segments(trailing)
        if not km or not kh:
            log.warning("dropping block %d for %s: missing %s", i, bug_id, "KM" if not km else "KH")
            continue
        if len(candidates) >= MAX_CANDIDATES_PER_RESPONSE:
            log.warning("more than %d blocks for %s; extra dropped", MAX_CANDIDATES_PER_RESPONSE, bug_id)
            break
        ordinal = len(candidates) + 1
        suffix = f"-{provenance}" if provenance else ""
        candidates.append(
            FeedbackTriplet(
                triplet_id=f"{bug_id}{suffix}-{ordinal}",
                bug_id=bug_id,
                code=fence.group(1).strip("\n"),
                km=km,
                kh=kh,
                provenance=provenance,
            )
        )
    if not candidates:
        raise ParseError(f"no parseable triplet blocks in response for {bug_id}", raw)
    return candidates


class TripletStore:
    """Append-only triplet log with replayable review events (single writer)."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._triplets: dict[str, FeedbackTriplet] = {}
        if self.path.exists():
            self._replay()

    def _replay(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                record = json.loads(line)
                if record["type"] == "triplet":
                    triplet = FeedbackTriplet.from_dict(record)
                    self._triplets[triplet.triplet_id] = triplet
                elif record["type"] == "review":
                    self._apply_review(record["triplet_id"], record["decision"], record["reviewer"])

    def _append(self, record: dict) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record) + "\n")

    def _apply_review(self, triplet_id: str, decision: str, reviewer: str) -> FeedbackTriplet:
        triplet = self._triplets[triplet_id]
        status = TripletStatus.APPROVED if decision == "approve" else TripletStatus.REJECTED
        updated = replace(triplet, status=status, reviewer=reviewer)
        self._triplets[triplet_id] = updated
        return updated

    def add_candidates(self, triplets: Iterable[FeedbackTriplet]) -> None:
        with self._lock:
            for triplet in triplets:
                if triplet.triplet_id in self._triplets:
                    raise ValueError(f"duplicate triplet_id {triplet.triplet_id!r}")
                self._triplets[triplet.triplet_id] = triplet
                self._append({"type": "triplet", **triplet.to_dict(), "ts": _now()})

    def review(self, triplet_id: str, decision: str, reviewer: str) -> FeedbackTriplet:
        """Apply an approve/reject decision to a candidate; decisions are audit-logged."""
        if decision not in ("approve", "reject"):
            raise ReviewError(f"unknown decision {decision!r}")
        with self._lock:
            triplet = self._triplets.get(triplet_id)
            if triplet is None:
                raise ReviewError(f"unknown triplet_id {triplet_id!r}")
            if triplet.status is not TripletStatus.CANDIDATE:
                raise ReviewError(f"triplet {triplet_id} already {triplet.status.value}")
            self._append(
                {"type": "review", "triplet_id": triplet_id, "decision": decision, "reviewer": reviewer, "ts": _now()}
            )
            return self._apply_review(triplet_id, decision, reviewer)

    def get(self, triplet_id: str) -> FeedbackTriplet:
        return self._triplets[triplet_id]

    def triplets(self) -> list[FeedbackTriplet]:
        return list(self._triplets.values())

    def approved(self) -> list[FeedbackTriplet]:
        return [t for t in self._triplets.values() if t.status is TripletStatus.APPROVED]

    def candidates(self) -> list[FeedbackTriplet]:
        return [t for t in self._triplets.values() if t.status is TripletStatus.CANDIDATE]


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


@dataclass
class CorpusManifest:
    """Approved-triplet census: per-bug counts plus shortfall/overage flags."""

    total: int
    per_bug: dict[str, int]
    flags: list[dict]
    target_per_bug: int = TARGET_TRIPLETS_PER_BUG

    @property
    def complete(self) -> bool:
        return not self.flags

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "per_bug": self.per_bug,
            "flags": self.flags,
            "target_per_bug": self.target_per_bug,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def assemble_corpus(
    store: TripletStore,
    registry: TaxonomyRegistry | None = None,
    target_per_bug: int = TARGET_TRIPLETS_PER_BUG,
) -> CorpusManifest:
    """Group approved triplets by bug and flag any bug whose count misses the target.

    Shortfalls are reported, never fatal; regeneration is the remedy. With a
    registry, bugs with no approved triplets at all are flagged as missing.
    """
    approved = store.approved()
    per_bug: dict[str, int] = {}
    for triplet in approved:
        per_bug[triplet.bug_id] = per_bug.get(triplet.bug_id, 0) + 1
    flags: list[dict] = []
    for bug_id, count in per_bug.items():
        if count < target_per_bug:
            flags.append({"bug_id": bug_id, "count": count, "kind": "shortfall"})
        elif count > target_per_bug:
            flags.append({"bug_id": bug_id, "count": count, "kind": "overage"})
    if registry is not None:
        for bug in registry:
            if bug.bug_id not in per_bug:
                flags.append({"bug_id": bug.bug_id, "count": 0, "kind": "missing"})
    return CorpusManifest(total=len(approved), per_bug=per_bug, flags=flags, target_per_bug=target_per_bug)


def write_triplets(path: str | Path, triplets: Iterable[FeedbackTriplet]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for triplet in triplets:
            fh.write(json.dumps(triplet.to_dict()) + "\n")


def read_triplets(path: str | Path) -> list[FeedbackTriplet]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(FeedbackTriplet.from_dict(json.loads(line)))
    return out


class GeneratorClient(Protocol):
    """External generator model: one completion per (system, user) prompt pair."""

    model_id: str

    def complete(self, system: str, user: str) -> str: ...


class HttpGeneratorClient:
    """Chat-completions style HTTP client; request construction is deterministic."""

    def __init__(
        self,
        endpoint: str,
        model_id: str,
        timeout: float = 120.0,
        api_key: str | None = None,
        temperature: float = 0.7,
        max_tokens: int = 8192,
        transport: Callable[..., dict] | None = None,
    ):
        self.endpoint = endpoint
        self.model_id = model_id
        self.timeout = timeout
        self.api_key = api_key
        self.temperature = temperature
        self.max_tokens = max_tokens
        self._transport = transport or self._post

    def request_payload(self, system: str, user: str) -> dict:
        return {
            "model": self.model_id,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }

    def _post(self, payload: dict) -> dict:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        resp = requests.post(self.endpoint, json=payload, headers=headers, timeout=self.timeout)
        resp.raise_for_status()
        return resp.json()

    def complete(self, system: str, user: str) -> str:
        data = self._transport(self.request_payload(system, user))
        return data["choices"][0]["message"]["content"]


@dataclass
class GenerationReport:
    generated: dict[str, int] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)


def generate_candidates(
    client: GeneratorClient,
    bug_types: Iterable[BugType],
    store: TripletStore,
    provenance: str = "",
    retries: int = 3,
    backoff: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
) -> GenerationReport:
    """Run the generator for each bug type and persist candidates immediately.

    Each bug type gets up to `retries` attempts with exponential backoff; a
    bug type that still fails is reported, never silently absent.
    """
    report = GenerationReport()
    for bug in bug_types:
        prompt = build_generation_prompt(bug)
        last_error: Exception | None = None
        for attempt in range(retries):
            try:
                raw = client.complete(prompt.system, prompt.user)
                candidates = parse_generation_output(raw, bug.bug_id, provenance=provenance)
                store.add_candidates(candidates)
                report.generated[bug.bug_id] = len(candidates)
                last_error = None
                break
            except Exception as exc:  # noqa: BLE001 - every failure becomes a report entry
                last_error = exc
                if attempt + 1 < retries:
                    sleep(backoff * (2**attempt))
        if last_error is not None:
            log.error("generation failed for %s: %s", bug.bug_id, last_error)
            report.failures[bug.bug_id] = str(last_error)
    return report
