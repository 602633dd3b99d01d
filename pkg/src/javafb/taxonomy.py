"""Registry of novice Java bug types.

The reference taxonomy ships as a data fixture (``data/bug_taxonomy.tsv``)
with 85 literature-derived entries, each categorized imperative (I) or
object-oriented (O). The registry seeds dataset generation and fold
partitioning; it is immutable after load.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator


class BugCategory(enum.Enum):
    IMPERATIVE = "I"
    OBJECT_ORIENTED = "O"


class TaxonomyError(ValueError):
    """Raised when a taxonomy file violates the format contract."""


@dataclass(frozen=True)
class BugType:
    """One taxonomy entry: a short id, a category, and a description."""

    bug_id: str
    category: BugCategory
    description: str
    source_tags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.bug_id:
            raise TaxonomyError("bug_id must be non-empty")
        if not self.description.strip():
            raise TaxonomyError(f"bug {self.bug_id}: description must be non-empty")


@dataclass
class TaxonomyRegistry:
    """Ordered, immutable-after-load collection of bug types keyed by id."""

    entries: dict[str, BugType] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[BugType]:
        return iter(self.entries.values())

    def __contains__(self, bug_id: str) -> bool:
        return bug_id in self.entries

    def get(self, bug_id: str) -> BugType:
        try:
            return self.entries[bug_id]
        except KeyError:
            raise TaxonomyError(f"unknown bug_id {bug_id!r}") from None

    def bug_ids(self) -> list[str]:
        return list(self.entries)

    def add(self, bug: BugType) -> None:
        if bug.bug_id in self.entries:
            raise TaxonomyError(f"duplicate bug_id {bug.bug_id!r}")
        self.entries[bug.bug_id] = bug


def _parse_line(line: str, lineno: int) -> BugType:
    parts = line.rstrip("\n").split("\t")
    if len(parts) < 3:
        raise TaxonomyError(f"line {lineno}: expected at least 3 tab-separated fields, got {len(parts)}")
    bug_id, category_token, description = parts[0].strip(), parts[1].strip(), parts[2].strip()
    try:
        category = BugCategory(category_token)
    except ValueError:
        raise TaxonomyError(f"line {lineno}: unknown category token {category_token!r}") from None
    tags: tuple[str, ...] = ()
    if len(parts) >= 4 and parts[3].strip():
        tags = tuple(t.strip() for t in parts[3].split(",") if t.strip())
    return BugType(bug_id=bug_id, category=category, description=description, source_tags=tags)


def load_taxonomy(path: str | Path) -> TaxonomyRegistry:
    """Load a taxonomy file: one tab-separated record per line, order preserved.

    Blank lines and lines starting with ``#`` are skipped. Rejects duplicate
    bug ids, unknown category tokens, and files with zero records.
    """
    registry = TaxonomyRegistry()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            registry.add(_parse_line(line, lineno))
    if len(registry) == 0:
        raise TaxonomyError(f"empty taxonomy: {path}")
    return registry


def serialize_taxonomy(registry: TaxonomyRegistry, path: str | Path) -> None:
    """Write the registry back out in the taxonomy file format (round-trips with load)."""
    with open(path, "w", encoding="utf-8") as fh:
        for bug in registry:
            row = [bug.bug_id, bug.category.value, bug.description]
            if bug.source_tags:
                row.append(",".join(bug.source_tags))
            fh.write("\t".join(row) + "\n")


def filter_by_category(registry: TaxonomyRegistry, category: BugCategory) -> list[BugType]:
    """Entries whose category matches, in registry order. Empty result is valid."""
    return [bug for bug in registry if bug.category is category]


def reference_taxonomy_path() -> Path:
    """Path to the shipped 85-entry reference fixture."""
    return Path(str(resources.files("javafb").joinpath("data/bug_taxonomy.tsv")))


def load_reference_taxonomy() -> TaxonomyRegistry:
    return load_taxonomy(reference_taxonomy_path())


def category_of(registry: TaxonomyRegistry, bug_ids: Iterable[str]) -> dict[str, BugCategory]:
    """Map each bug_id to its category; unknown ids raise."""
    return {bug_id: registry.get(bug_id).category for bug_id in bug_ids}
