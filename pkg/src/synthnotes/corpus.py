"""Note corpus records, label sets, and their file formats.

A corpus file is UTF-8 with one JSON record per line:
``{"note_id": str, "text": str, "icd9": str}``. Notes contain internal
newlines, so JSON-escaped line-delimited records keep the format streamable.
A label-set file is a single JSON object:
``{"codes": [{"code": str, "name": str}]}``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import CorpusError

logger = logging.getLogger(__name__)

CORPUS_FORMATS = ("jsonl",)


@dataclass(frozen=True)
class NoteRecord:
    note_id: str
    text: str
    icd9_label: str


@dataclass(frozen=True)
class LabelSet:
    codes: tuple[tuple[str, str], ...]  # (code, human-readable name)

    def __post_init__(self):
        if not self.codes:
            raise CorpusError("label set must be non-empty")
        seen = [c for c, _ in self.codes]
        if len(seen) != len(set(seen)):
            raise CorpusError("label set contains duplicate codes")

    def __contains__(self, code: str) -> bool:
        return any(code == c for c, _ in self.codes)

    def code_list(self) -> list[str]:
        return [c for c, _ in self.codes]


def load_corpus(path: str | Path, format: str = "jsonl") -> list[NoteRecord]:
    """Load a corpus file, preserving record order.

    Raises CorpusError for an unknown format, a malformed line (reported
    with its line number), a duplicate note_id, or an empty file.
    """
    if format not in CORPUS_FORMATS:
        raise CorpusError(f"unknown corpus format {format!r}; supported: {CORPUS_FORMATS}")
    path = Path(path)
    records: list[NoteRecord] = []
    seen_ids: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                record = NoteRecord(str(raw["note_id"]), raw["text"], str(raw["icd9"]))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusError(f"{path}: malformed record on line {lineno}: {exc}") from exc
            if not record.note_id:
                raise CorpusError(f"{path}: empty note_id on line {lineno}")
            if not record.text:
                raise CorpusError(f"{path}: empty text for note {record.note_id!r} on line {lineno}")
            if record.note_id in seen_ids:
                raise CorpusError(f"{path}: duplicate note_id {record.note_id!r} on line {lineno}")
            seen_ids.add(record.note_id)
            records.append(record)
    if not records:
        raise CorpusError(f"{path}: empty corpus")
    return records


def save_corpus(path: str | Path, records: Iterable[NoteRecord]) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(
                json.dumps(
                    {"note_id": record.note_id, "text": record.text, "icd9": record.icd9_label},
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_label_set(path: str | Path) -> LabelSet:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
        codes = tuple((str(c["code"]), str(c.get("name", c["code"]))) for c in raw["codes"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CorpusError(f"{path}: malformed label set: {exc}") from exc
    return LabelSet(codes)


def save_label_set(path: str | Path, labels: LabelSet) -> None:
    Path(path).write_text(
        json.dumps({"codes": [{"code": c, "name": n} for c, n in labels.codes]}, indent=2) + "\n",
        encoding="utf-8",
    )


def filter_to_label_set(records: Sequence[NoteRecord], labels: LabelSet) -> list[NoteRecord]:
    """Keep only records whose label is in the set, preserving order.

    An empty result is permitted but logged as a warning.
    """
    kept = [r for r in records if r.icd9_label in labels]
    if records and not kept:
        logger.warning("label filter removed every record (%d in, 0 out)", len(records))
    return kept
