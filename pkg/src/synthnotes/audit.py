"""Leakage auditing: find injected surrogate values inside synthetic notes.

Matching is case-insensitive and exact. Purely alphabetic surfaces (names,
cities, states, countries) must sit on word boundaries; purely numeric
surfaces (ages, years) must not touch adjacent digits; everything else
(prefixed or hyphenated identifiers) matches as a raw substring because
generated text varies the surrounding punctuation.

A category counts at most once per note no matter how many of its surfaces
reappear. Occurrence rates divide by the SOURCE corpus size, so generation
deficits depress rates. Reports always cover the full 18-identifier HIPAA
taxonomy; categories this pipeline cannot inject are reported as 0.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .reid import InjectedPhi, PhiMapping
from .validation import check_choice, check_positive

AUDIT_MODES = ("per_note", "global")

# The 18 HIPAA identifier categories. The first eight are the ones the tag
# registry can inject; the rest are structurally impossible here but are
# reported (as zero) for schema completeness.
HIPAA_CATEGORIES = (
    "Names",
    "Geographic",
    "All date",
    "Telephone",
    "Fax numbers",
    "Email addresses",
    "SSN",
    "Medical record numbers",
    "Health plan beneficiary numbers",
    "Account numbers",
    "Certificate or license numbers",
    "Vehicle identifiers",
    "Device identifiers",
    "Web URLs",
    "IP addresses",
    "Biometric identifiers",
    "Full-face photographs",
    "Unique identifying number",
)

DEFAULT_EXCLUDED_TAGS = frozenset({"Number"})

_ALPHA_WORDS_RE = re.compile(r"[^\W\d_]+(?:[ '\-][^\W\d_]+)*$", re.UNICODE)
_NUMERIC_RE = re.compile(r"\d+$")


@dataclass(frozen=True)
class LeakMatch:
    category: str
    surface: str
    offset: int


@dataclass(frozen=True)
class LeakRecord:
    source_note_id: str
    categories: frozenset[str]
    matches: tuple[LeakMatch, ...]


@dataclass(frozen=True)
class CategoryCount:
    notes_leaking: int
    rate: float


@dataclass
class OccurrenceReport:
    per_category: dict[str, CategoryCount]
    corpus_size: int


@dataclass
class CooccurrenceTable:
    buckets: dict[int, dict]  # k -> {"count": int, "percent": float}
    corpus_size: int


def surface_pattern(surface: str) -> re.Pattern:
    """Compile the match pattern appropriate for a surface's shape."""
    escaped = re.escape(surface)
    if _ALPHA_WORDS_RE.match(surface):
        return re.compile(rf"\b{escaped}\b", re.IGNORECASE | re.UNICODE)
    if _NUMERIC_RE.match(surface):
        return re.compile(rf"(?<!\d){escaped}(?!\d)")
    return re.compile(escaped, re.IGNORECASE)


def scan_leaks(
    synthetic,
    injected: Sequence[InjectedPhi],
    excluded_tags: frozenset[str] = DEFAULT_EXCLUDED_TAGS,
) -> LeakRecord:
    """Scan one synthetic note for reuse of the given injected surfaces.

    One match is recorded per distinct (category, surface) pair, at its
    first occurrence; audit-excluded tags never contribute.
    """
    matches: list[LeakMatch] = []
    seen: set[tuple[str, str]] = set()
    for phi in injected:
        if phi.tag_name in excluded_tags:
            continue
        key = (phi.hipaa_category, phi.surface.lower())
        if key in seen:
            continue
        m = surface_pattern(phi.surface).search(synthetic.text)
        if m:
            seen.add(key)
            matches.append(LeakMatch(phi.hipaa_category, phi.surface, m.start()))
    categories = frozenset(m.category for m in matches)
    return LeakRecord(synthetic.source_note_id, categories, tuple(matches))


def audit_corpus(
    synthetics: Sequence,
    mapping: PhiMapping,
    mode: str = "per_note",
    excluded_tags: frozenset[str] = DEFAULT_EXCLUDED_TAGS,
) -> list[LeakRecord]:
    """Scan every synthetic note.

    per_note mode checks each note against its own subject's surrogates;
    global mode checks against the whole corpus vocabulary.
    """
    check_choice(mode, "mode", AUDIT_MODES)
    if mode == "global":
        vocabulary = [phi for entries in mapping.notes.values() for phi in entries]
    scans = []
    for synthetic in synthetics:
        if synthetic.source_note_id not in mapping.notes:
            raise KeyError(f"unknown source_note_id {synthetic.source_note_id!r} in mapping")
        injected = mapping.notes[synthetic.source_note_id] if mode == "per_note" else vocabulary
        record = scan_leaks(synthetic, injected, excluded_tags)
        scans.append(record)
    return scans


def occurrence_report(scans: Sequence[LeakRecord], corpus_size: int) -> OccurrenceReport:
    """Per-category count of notes leaking it, over the source corpus size."""
    check_positive(corpus_size, "corpus_size")
    counts = {category: 0 for category in HIPAA_CATEGORIES}
    for scan in scans:
        for category in scan.categories:
            counts[category] = counts.get(category, 0) + 1
    per_category = {
        category: CategoryCount(count, count / corpus_size) for category, count in counts.items()
    }
    return OccurrenceReport(per_category, corpus_size)


def cooccurrence_report(scans: Sequence[LeakRecord], corpus_size: int | None = None) -> CooccurrenceTable:
    """Histogram of notes by number of distinct leaked categories, k >= 2."""
    if corpus_size is None:
        corpus_size = len(scans)
    check_positive(corpus_size, "corpus_size")
    buckets: dict[int, dict] = {}
    for scan in scans:
        k = len(scan.categories)
        if k >= 2:
            bucket = buckets.setdefault(k, {"count": 0, "percent": 0.0})
            bucket["count"] += 1
    for bucket in buckets.values():
        bucket["percent"] = bucket["count"] / corpus_size
    return CooccurrenceTable(dict(sorted(buckets.items())), corpus_size)


def write_audit_report(
    path: str | Path,
    occurrence: OccurrenceReport,
    cooccurrence: CooccurrenceTable,
    mode: str,
) -> None:
    payload = {
        "occurrence": {
            category: {"count": cc.notes_leaking, "rate": cc.rate}
            for category, cc in occurrence.per_category.items()
        },
        "cooccurrence": {
            str(k): {"count": b["count"], "percent": b["percent"]}
            for k, b in cooccurrence.buckets.items()
        },
        "mode": mode,
        "corpus_size": occurrence.corpus_size,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_audit_report(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_occurrence_csv(path: str | Path, report: Mapping) -> None:
    """Flatten an audit report's occurrence section to chart-ready CSV."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["category", "count", "rate"])
        for category in HIPAA_CATEGORIES:
            cell = report["occurrence"][category]
            writer.writerow([category, cell["count"], repr(cell["rate"])])


def write_cooccurrence_csv(path: str | Path, rows: Iterable[tuple[str, str, Mapping]]) -> None:
    """Co-occurrence counts in the (method, backend, k=2..4 columns) table shape."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "backend", "2 PHIs", "3 PHIs", "4 PHIs"])
        for method, backend, report in rows:
            cells = []
            for k in (2, 3, 4):
                bucket = report["cooccurrence"].get(str(k))
                if bucket:
                    cells.append(f"{bucket['count']} ({100 * bucket['percent']:.2f}%)")
                else:
                    cells.append("")
            writer.writerow([method, backend, *cells])
