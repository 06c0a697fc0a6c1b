"""PHI tag scanning and dummy-surrogate repopulation.

De-identified notes carry placeholder tags (``[**First Name**]`` by
default). This module scans them, draws a format-conformant dummy value
for each occurrence, substitutes it into the text, and records the
note -> surrogate mapping that later grounds the leakage audit.

Surrogate surfaces per tag:

=====================  =========================  ==========================================
tag                    HIPAA category             surface grammar
=====================  =========================  ==========================================
Address                Geographic                 "<street>, <city>, <state> <postal>"
Age                    All date                   integer in [52, 99]
Clip number            Unique identifying number  clip_ + 4 digits
Company                Geographic                 "Company_" + note id
Country                Geographic                 one of the bundled 196 countries
Date                   All date                   4-digit year in [1900, 2099]
First name             Names                      one of 300 bundled first names
Full name              Names                      first name + " " + last name
Full name phone        Names                      full name + " " + phone number
Holiday                All date                   "Holiday_" + note id
Hospital               Geographic                 "Hospital_" + note id
Hospital ward          Geographic                 "Hospital Ward_" + note id
Job number             Unique identifying number  jn_ + 5 digits
Last name              Names                      one of 300 bundled last names
Location               Geographic                 city component of a bundled address
MD number              Unique identifying number  MD_ + 2 uppercase letters + _ + 4 digits
Medical record number  Medical record numbers     mrn_ + 6 digits
Name initial           Names                      initials of a composed full name
Number                 Unique identifying number  3-digit integer (excluded from audits)
Numeric identifier     Unique identifying number  ni_ + 6 digits
Pager number           Telephone                  pg_ + integer in [10, 999]
Phone number           Telephone                  ddd-dd-dddd
Serial number          Device identifiers         sn_ + 7 digits
SSN                    SSN                        ddd-dd-dddd
State                  Geographic                 one of the 53 bundled state entries
Unit number            Unique identifying number  un_ + 4 digits
University             Geographic                 "University_" + note id
=====================  =========================  ==========================================

Repopulation is deterministic: every occurrence draws from its own RNG
seeded by hash(corpus seed, note id, occurrence index), so reruns over any
subset of the corpus, in any order, reproduce identical surfaces.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
import string
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

from .corpus import NoteRecord
from .errors import TagScanError

HIPAA_GEOGRAPHIC = "Geographic"
HIPAA_DATE = "All date"
HIPAA_NAMES = "Names"
HIPAA_TELEPHONE = "Telephone"
HIPAA_UNIQUE_ID = "Unique identifying number"
HIPAA_MRN = "Medical record numbers"
HIPAA_DEVICE = "Device identifiers"
HIPAA_SSN = "SSN"

MAPPED_HIPAA_CATEGORIES = (
    HIPAA_GEOGRAPHIC,
    HIPAA_DATE,
    HIPAA_NAMES,
    HIPAA_TELEPHONE,
    HIPAA_UNIQUE_ID,
    HIPAA_MRN,
    HIPAA_DEVICE,
    HIPAA_SSN,
)


@dataclass(frozen=True)
class SurrogateRule:
    """One surface-form grammar. ``kind`` fully determines the output shape."""

    kind: str
    lo: int = 0
    hi: int = 0
    prefix: str = ""
    digits: int = 0
    pattern: str = ""  # formatted-number mini-pattern: d=digit, A=uppercase letter
    list_name: str = ""
    style: str = ""  # composed-name: full | initials | name_phone
    word: str = ""  # note-id-prefixed category word


@dataclass(frozen=True)
class TagEntry:
    tag_name: str
    mimic_category_id: int
    hipaa_category: str
    rule: SurrogateRule
    audit_excluded: bool = False


@dataclass(frozen=True)
class TagSpan:
    tag_name: str
    start: int
    end: int
    occurrence_index: int


@dataclass(frozen=True)
class InjectedPhi:
    tag_name: str
    hipaa_category: str
    surface: str
    occurrence_index: int
    # Offset of the surface in the re-identified text; in-memory only, not
    # part of the mapping file schema.
    start: int | None = None


@dataclass
class PhiMapping:
    seed: int
    notes: dict[str, list[InjectedPhi]] = field(default_factory=dict)


_PHONE_PATTERN = "ddd-dd-dddd"

_TAG_TABLE = [
    # (id, tag, hipaa category, rule, audit_excluded)
    (1, "Address", HIPAA_GEOGRAPHIC, SurrogateRule("address"), False),
    (2, "Age", HIPAA_DATE, SurrogateRule("int-range", lo=52, hi=99), False),
    (3, "Clip number", HIPAA_UNIQUE_ID, SurrogateRule("fixed-digit-prefixed", prefix="clip_", digits=4), False),
    (4, "Company", HIPAA_GEOGRAPHIC, SurrogateRule("note-id-prefixed", word="Company"), False),
    (5, "Country", HIPAA_GEOGRAPHIC, SurrogateRule("country", list_name="countries"), False),
    (6, "Date", HIPAA_DATE, SurrogateRule("year", lo=1900, hi=2099), False),
    (7, "First name", HIPAA_NAMES, SurrogateRule("list-pick", list_name="first_names"), False),
    (8, "Full name", HIPAA_NAMES, SurrogateRule("composed-name", style="full"), False),
    (9, "Full name phone", HIPAA_NAMES, SurrogateRule("composed-name", style="name_phone"), False),
    (10, "Holiday", HIPAA_DATE, SurrogateRule("note-id-prefixed", word="Holiday"), False),
    (11, "Hospital", HIPAA_GEOGRAPHIC, SurrogateRule("note-id-prefixed", word="Hospital"), False),
    (12, "Hospital ward", HIPAA_GEOGRAPHIC, SurrogateRule("note-id-prefixed", word="Hospital Ward"), False),
    (13, "Job number", HIPAA_UNIQUE_ID, SurrogateRule("fixed-digit-prefixed", prefix="jn_", digits=5), False),
    (14, "Last name", HIPAA_NAMES, SurrogateRule("list-pick", list_name="last_names"), False),
    (15, "Location", HIPAA_GEOGRAPHIC, SurrogateRule("city"), False),
    (16, "MD number", HIPAA_UNIQUE_ID, SurrogateRule("formatted-number", pattern="MD_AA_dddd"), False),
    (17, "Medical record number", HIPAA_MRN, SurrogateRule("fixed-digit-prefixed", prefix="mrn_", digits=6), False),
    (18, "Name initial", HIPAA_NAMES, SurrogateRule("composed-name", style="initials"), False),
    (19, "Number", HIPAA_UNIQUE_ID, SurrogateRule("int-range", lo=100, hi=999), True),
    (20, "Numeric identifier", HIPAA_UNIQUE_ID, SurrogateRule("fixed-digit-prefixed", prefix="ni_", digits=6), False),
    (21, "Pager number", HIPAA_TELEPHONE, SurrogateRule("int-range", lo=10, hi=999, prefix="pg_"), False),
    (22, "Phone number", HIPAA_TELEPHONE, SurrogateRule("formatted-number", pattern=_PHONE_PATTERN), False),
    (23, "Serial number", HIPAA_DEVICE, SurrogateRule("fixed-digit-prefixed", prefix="sn_", digits=7), False),
    (24, "SSN", HIPAA_SSN, SurrogateRule("formatted-number", pattern=_PHONE_PATTERN), False),
    (25, "State", HIPAA_GEOGRAPHIC, SurrogateRule("state", list_name="states"), False),
    (26, "Unit number", HIPAA_UNIQUE_ID, SurrogateRule("fixed-digit-prefixed", prefix="un_", digits=4), False),
    (27, "University", HIPAA_GEOGRAPHIC, SurrogateRule("note-id-prefixed", word="University"), False),
]

TAG_NAMES = tuple(row[1] for row in _TAG_TABLE)

# Extra observed tag spellings mapped to canonical names, applied after the
# normalizer strips digits and parenthesized qualifiers.
_BUILTIN_ALIASES = {
    "num": "Number",
    "known firstname": "First name",
    "known lastname": "Last name",
    "name initial": "Name initial",
    "initials": "Name initial",
    "telephone/fax": "Phone number",
    "age over": "Age",
    "month": "Date",
    "year": "Date",
    "day": "Date",
    "date range": "Date",
    "wardname": "Hospital ward",
    "hospital ward name": "Hospital ward",
}

_DATE_VALUE_RE = re.compile(r"\d{4}-\d{1,2}-\d{1,2}|\d{1,2}-\d{1,2}|\d{4}")
_PARENS_RE = re.compile(r"\([^)]*\)")
_DIGITS_RE = re.compile(r"\d+")


def _load_lines(name: str) -> list[str]:
    text = resources.files("synthnotes.data").joinpath(name).read_text(encoding="utf-8")
    return [line for line in text.splitlines() if line.strip()]


@dataclass
class TagRegistry:
    """The tag table plus delimiter syntax, alias table, and bundled lists."""

    entries: dict[str, TagEntry]
    open_delim: str = "[**"
    close_delim: str = "**]"
    aliases: dict[str, str] = field(default_factory=dict)
    lists: dict[str, list[str]] = field(default_factory=dict)
    addresses: list[tuple[str, str, str, str]] = field(default_factory=list)

    def resolve(self, inner: str) -> str | None:
        """Map the raw text between delimiters to a canonical tag name."""
        s = inner.strip().strip("*").strip()
        if _DATE_VALUE_RE.fullmatch(s):
            return "Date"
        s = _PARENS_RE.sub(" ", s)
        s = _DIGITS_RE.sub(" ", s)
        s = " ".join(s.split()).lower()
        return self.aliases.get(s)

    def entry(self, tag_name: str) -> TagEntry:
        try:
            return self.entries[tag_name]
        except KeyError:
            raise TagScanError(f"unknown tag name {tag_name!r}") from None

    def pick(self, list_name: str, rng: random.Random) -> str:
        values = self.lists.get(list_name)
        if not values:
            raise TagScanError(f"bundled list {list_name!r} is empty or missing")
        return rng.choice(values)

    def excluded_tags(self) -> frozenset[str]:
        return frozenset(n for n, e in self.entries.items() if e.audit_excluded)


def default_registry(
    open_delim: str = "[**",
    close_delim: str = "**]",
    extra_aliases: dict[str, str] | None = None,
    data_dir: str | Path | None = None,
) -> TagRegistry:
    """Build the standard 27-tag registry with bundled surrogate source lists."""
    entries = {
        tag: TagEntry(tag, cid, category, rule, excluded)
        for cid, tag, category, rule, excluded in _TAG_TABLE
    }
    aliases = {name.lower(): name for name in TAG_NAMES}
    aliases.update(_BUILTIN_ALIASES)
    if extra_aliases:
        aliases.update({k.lower(): v for k, v in extra_aliases.items()})

    if data_dir is not None:
        base = Path(data_dir)
        read = lambda name: [l for l in (base / name).read_text(encoding="utf-8").splitlines() if l.strip()]
    else:
        read = _load_lines
    lists = {
        "first_names": read("first_names.txt"),
        "last_names": read("last_names.txt"),
        "countries": read("countries.txt"),
        "states": read("states.txt"),
    }
    addresses = []
    for line in read("addresses.tsv"):
        street, city, state, postal = line.split("\t")
        addresses.append((street, city, state, postal))
    registry = TagRegistry(entries, open_delim, close_delim, aliases, lists, addresses)
    for name, values in lists.items():
        if not values:
            raise TagScanError(f"bundled list {name!r} is empty")
    if not addresses:
        raise TagScanError("bundled address corpus is empty")
    return registry


def scan_tags(text: str, registry: TagRegistry) -> list[TagSpan]:
    """Find all tag occurrences left to right.

    Raises TagScanError for unbalanced delimiters (with offset) or unknown
    tag names (all unknowns listed; never silently dropped).
    """
    op, cl = registry.open_delim, registry.close_delim
    spans: list[TagSpan] = []
    unknown: dict[str, int] = {}
    pos = 0
    index = 0
    while True:
        o = text.find(op, pos)
        c = text.find(cl, pos)
        if o == -1 and c == -1:
            break
        if o == -1 or (c != -1 and c < o):
            raise TagScanError(f"closing delimiter without opener at offset {c}", offset=c)
        c = text.find(cl, o + len(op))
        if c == -1:
            raise TagScanError(f"unterminated tag starting at offset {o}", offset=o)
        inner = text[o + len(op) : c]
        if op in inner:
            raise TagScanError(f"nested opening delimiter inside tag at offset {o}", offset=o)
        name = registry.resolve(inner)
        if name is None:
            unknown.setdefault(inner.strip(), o)
        else:
            spans.append(TagSpan(name, o, c + len(cl), index))
            index += 1
        pos = c + len(cl)
    if unknown:
        listing = ", ".join(repr(k) for k in sorted(unknown))
        raise TagScanError(f"unknown tag name(s): {listing}", offset=min(unknown.values()))
    return spans


def derive_rng(seed: int, note_id: str, occurrence_index: int) -> random.Random:
    """Stable per-occurrence RNG so reruns and parallelism never change outputs."""
    material = f"{seed}|{note_id}|{occurrence_index}".encode("utf-8")
    digest = hashlib.sha256(material).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _formatted_number(pattern: str, rng: random.Random) -> str:
    out = []
    for ch in pattern:
        if ch == "d":
            out.append(str(rng.randrange(10)))
        elif ch == "A":
            out.append(rng.choice(string.ascii_uppercase))
        else:
            out.append(ch)
    return "".join(out)


def make_surrogate(tag_name: str, note_id: str, rng: random.Random, registry: TagRegistry) -> InjectedPhi:
    """Draw one surrogate surface for ``tag_name`` under the registry's rule."""
    entry = registry.entry(tag_name)
    rule = entry.rule
    kind = rule.kind
    if kind == "int-range":
        surface = rule.prefix + str(rng.randint(rule.lo, rule.hi))
    elif kind == "fixed-digit-prefixed":
        lo = 10 ** (rule.digits - 1)
        surface = rule.prefix + str(rng.randint(lo, 10 * lo - 1))
    elif kind == "year":
        surface = str(rng.randint(rule.lo, rule.hi))
    elif kind == "formatted-number":
        surface = _formatted_number(rule.pattern, rng)
    elif kind == "list-pick":
        surface = registry.pick(rule.list_name, rng)
    elif kind == "country":
        surface = registry.pick("countries", rng)
    elif kind == "state":
        surface = registry.pick("states", rng)
    elif kind == "composed-name":
        first = registry.pick("first_names", rng)
        last = registry.pick("last_names", rng)
        if rule.style == "full":
            surface = f"{first} {last}"
        elif rule.style == "initials":
            surface = first[0].upper() + last[0].upper()
        elif rule.style == "name_phone":
            surface = f"{first} {last} {_formatted_number(_PHONE_PATTERN, rng)}"
        else:
            raise TagScanError(f"unknown composed-name style {rule.style!r}")
    elif kind == "note-id-prefixed":
        surface = f"{rule.word}_{note_id}"
    elif kind == "address":
        street, city, state, postal = rng.choice(registry.addresses)
        surface = f"{street}, {city}, {state} {postal}"
    elif kind == "city":
        surface = rng.choice(registry.addresses)[1]
    else:
        raise TagScanError(f"unknown surrogate rule kind {kind!r}")
    return InjectedPhi(tag_name, entry.hipaa_category, surface, occurrence_index=-1)


def repopulate_note(
    record: NoteRecord, registry: TagRegistry, seed: int
) -> tuple[NoteRecord, list[InjectedPhi]]:
    """Replace every tag in the note with a surrogate surface.

    Deterministic given (seed, note_id). Returns the re-identified record
    and one InjectedPhi per replaced span, in document order.
    """
    spans = scan_tags(record.text, registry)
    if not spans:
        return record, []
    pieces = []
    injected: list[InjectedPhi] = []
    cursor = 0
    out_len = 0
    for span in spans:
        rng = derive_rng(seed, record.note_id, span.occurrence_index)
        drawn = make_surrogate(span.tag_name, record.note_id, rng, registry)
        pieces.append(record.text[cursor : span.start])
        out_len += span.start - cursor
        injected.append(
            InjectedPhi(drawn.tag_name, drawn.hipaa_category, drawn.surface, span.occurrence_index, start=out_len)
        )
        pieces.append(drawn.surface)
        out_len += len(drawn.surface)
        cursor = span.end
    pieces.append(record.text[cursor:])
    new_text = "".join(pieces)
    return NoteRecord(record.note_id, new_text, record.icd9_label), injected


def repopulate_corpus(
    records: Sequence[NoteRecord], registry: TagRegistry, seed: int
) -> tuple[list[NoteRecord], PhiMapping]:
    """Repopulate a whole corpus; note order and outputs are independent of call order."""
    mapping = PhiMapping(seed=seed)
    out: list[NoteRecord] = []
    for record in records:
        reid_record, injected = repopulate_note(record, registry, seed)
        out.append(reid_record)
        mapping.notes[record.note_id] = injected
    return out, mapping


def save_mapping(path: str | Path, mapping: PhiMapping) -> None:
    payload = {
        "seed": mapping.seed,
        "notes": {
            note_id: [
                {
                    "tag": phi.tag_name,
                    "category": phi.hipaa_category,
                    "surface": phi.surface,
                    "occurrence_index": phi.occurrence_index,
                }
                for phi in entries
            ]
            for note_id, entries in mapping.notes.items()
        },
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_mapping(path: str | Path) -> PhiMapping:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    mapping = PhiMapping(seed=int(raw["seed"]))
    for note_id, entries in raw["notes"].items():
        mapping.notes[note_id] = [
            InjectedPhi(e["tag"], e["category"], e["surface"], e["occurrence_index"]) for e in entries
        ]
    return mapping
