"""Feedback generation under the three strategies, plus completion parsing.

The baseline and fine-tuned strategies share one zero-shot prompt wrapper and
differ only in which model answers; the few-shot strategy embeds exactly three
worked examples. Raw completions are parsed into KM/KH segments with a
tolerant marker grammar (short labels, long labels, markdown decoration);
failure to parse is a status, not an error.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import re
import threading
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Protocol

from . import prompts

log = logging.getLogger(__name__)


class Strategy(enum.Enum):
    BASELINE = "baseline"
    FEW_SHOT = "few_shot"
    FINE_TUNED = "fine_tuned"


class PromptError(ValueError):
    pass


class ContextLengthError(ValueError):
    def __init__(self, measured: int, limit: int):
        super().__init__(f"prompt is {measured} tokens; model context length is {limit}")
        self.measured = measured
        self.limit = limit


class BackendError(RuntimeError):
    pass


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.7
    top_p: float = 0.7
    max_tokens: int = 8192
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not (0 < self.top_p <= 1):
            raise ValueError("top_p must be in (0, 1]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


REFERENCE_PARAMS = GenerationParams(temperature=0.7, top_p=0.7, max_tokens=8192)


class ParseStatus(enum.Enum):
    FULL = "full"
    PARTIAL_KM_ONLY = "partial_km_only"
    PARTIAL_KH_ONLY = "partial_kh_only"
    UNPARSED = "unparsed"


@dataclass(frozen=True)
class FeedbackResponse:
    raw: str
    km_text: str
    kh_text: str
    parse_status: ParseStatus
    strategy: Strategy | None = None
    triplet_id: str = ""

    def to_dict(self) -> dict:
        return {
            "raw": self.raw,
            "km_text": self.km_text,
            "kh_text": self.kh_text,
            "parse_status": self.parse_status.value,
            "strategy": self.strategy.value if self.strategy else None,
            "triplet_id": self.triplet_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeedbackResponse":
        return cls(
            raw=d["raw"],
            km_text=d["km_text"],
            kh_text=d["kh_text"],
            parse_status=ParseStatus(d["parse_status"]),
            strategy=Strategy(d["strategy"]) if d.get("strategy") else None,
            triplet_id=d.get("triplet_id", ""),
        )


def build_eval_prompt(
    code: str,
    strategy: Strategy,
    example_bank: list[tuple[str, str, str]] | None = None,
) -> str:
    """Prompt for one feedback request. Few-shot requires exactly 3 examples."""
    if strategy is Strategy.FEW_SHOT:
        if not example_bank or len(example_bank) != 3:
            raise PromptError(f"few_shot requires exactly 3 examples, got {0 if not example_bank else len(example_bank)}")
        return prompts.few_shot_prompt(code, example_bank)
    if example_bank:
        raise PromptError(f"strategy {strategy.value} takes no examples")
    return prompts.eval_prompt(code)


# Marker grammar: first KM label, then the first KH label after it. Labels may
# be short ("KM") or long ("Knowledge about mistakes (KM)"), any case, wrapped
# in markdown bold/heading decoration, and must be followed by a colon.
_KM_LABEL = r"(?:knowledge\s+about\s+mistakes?\s*(?:\(\s*km\s*\))?|km)"
_KH_LABEL = r"(?:knowledge\s+about\s+how\s+to\s+proceed\s*(?:\(\s*kh\s*\))?|kh)"
_DECOR_PRE = r"[\*_#>\t ]*"
_DECOR_POST = r"[\*_\t ]*"
_KM_MARK = re.compile(rf"{_DECOR_PRE}\b{_KM_LABEL}(?!\w){_DECOR_POST}:", re.IGNORECASE)
_KH_MARK = re.compile(rf"{_DECOR_PRE}\b{_KH_LABEL}(?!\w){_DECOR_POST}:", re.IGNORECASE)


_LEADING_DECOR_RE = re.compile(r"^[\*_]+\s*")


def _clean_segment(segment: str) -> str:
    # "**KM:** text" leaves a bold remnant after the colon; drop it.
    return _LEADING_DECOR_RE.sub("", segment.strip()).strip()


def find_km_kh_segments(text: str) -> tuple[str, str]:
    """Return (km, kh) segment texts, either possibly empty."""
    km_match = _KM_MARK.search(text)
    if km_match is None:
        kh_match = _KH_MARK.search(text)
        if kh_match is None:
            return "", ""
        return "", _clean_segment(text[kh_match.end() :])
    after_km = text[km_match.end() :]
    kh_match = _KH_MARK.search(after_km)
    if kh_match is None:
        return _clean_segment(after_km), ""
    return _clean_segment(after_km[: kh_match.start()]), _clean_segment(after_km[kh_match.end() :])


def parse_feedback(raw: str, strategy: Strategy | None = None, triplet_id: str = "") -> FeedbackResponse:
    """Split a completion into KM and KH segments; text before the KM marker is discarded."""
    km, kh = find_km_kh_segments(raw)
    if km and kh:
        status = ParseStatus.FULL
    elif km:
        status = ParseStatus.PARTIAL_KM_ONLY
    elif kh:
        status = ParseStatus.PARTIAL_KH_ONLY
    else:
        status = ParseStatus.UNPARSED
    return FeedbackResponse(
        raw=raw, km_text=km, kh_text=kh, parse_status=status, strategy=strategy, triplet_id=triplet_id
    )


class ModelBackend(Protocol):
    """A text-completion model behind a uniform surface."""

    context_length: int

    def count_tokens(self, text: str) -> int: ...

    def complete(self, prompt: str, params: GenerationParams) -> str: ...


class RunLog:
    """Append log of completions; one JSON record per line, single writer."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, record: dict) -> None:
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")

    def records(self) -> list[dict]:
        if not self.path.exists():
            return []
        with open(self.path, encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def generate_feedback(
    backend: ModelBackend,
    prompt: str,
    params: GenerationParams,
    run_log: RunLog | None = None,
    retries: int = 3,
    backoff: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
    context: dict | None = None,
) -> str:
    """One completion. Prompts over the context window are rejected up front;
    backend failures are retried, then surfaced."""
    measured = backend.count_tokens(prompt)
    if measured > backend.context_length:
        raise ContextLengthError(measured, backend.context_length)
    last_error: Exception | None = None
    for attempt in range(retries):
        try:
            completion = backend.complete(prompt, params)
            break
        except Exception as exc:  # noqa: BLE001 - retried, then surfaced
            last_error = exc
            if attempt + 1 < retries:
                sleep(backoff * (2**attempt))
    else:
        raise BackendError(f"backend failed after {retries} attempts: {last_error}") from last_error
    if run_log is not None:
        record = {
            "params": params.to_dict(),
            "prompt_digest": prompt_digest(prompt),
            "completion": completion,
        }
        if context:
            record.update(context)
        run_log.append(record)
    return completion


def select_few_shot_examples(train_triplets, seed: int, count: int = 3) -> list[tuple[str, str, str]]:
    """Seeded draw of worked examples from the current fold's train side only."""
    import random

    pool = list(train_triplets)
    if len(pool) < count:
        raise PromptError(f"need at least {count} train triplets for few-shot examples, got {len(pool)}")
    rng = random.Random(seed)
    chosen = rng.sample(pool, count)
    return [(t.code, t.km, t.kh) for t in chosen]
