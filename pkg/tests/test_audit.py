import random

import pytest

import oracles
from synthnotes.audit import (
    HIPAA_CATEGORIES,
    audit_corpus,
    cooccurrence_report,
    occurrence_report,
    scan_leaks,
    surface_pattern,
)
from synthnotes.generation import SyntheticNote
from synthnotes.reid import InjectedPhi, PhiMapping


def phi(tag, category, surface, index=0):
    return InjectedPhi(tag, category, surface, index)


def syn(note_id, text):
    return SyntheticNote(note_id, "one_shot", "echo", text)


def test_eighteen_categories():
    assert len(HIPAA_CATEGORIES) == 18
    assert len(set(HIPAA_CATEGORIES)) == 18


def test_scan_finds_identifier_substring():
    injected = [phi("Medical record number", "Medical record numbers", "mrn_123456")]
    record = scan_leaks(syn("n1", "chart shows mrn_123456 today"), injected)
    assert record.categories == {"Medical record numbers"}
    assert record.matches[0].offset == 12


def test_scan_counts_category_once_per_note():
    injected = [phi("Date", "All date", "1987")]
    record = scan_leaks(syn("n1", "in 1987 and again 1987 and 1987"), injected)
    assert record.categories == {"All date"}
    assert len(record.matches) == 1


def test_scan_clean_note_is_empty():
    injected = [phi("First name", "Names", "Oliver")]
    record = scan_leaks(syn("n1", "nothing shared here"), injected)
    assert record.categories == frozenset()
    assert record.matches == ()


def test_scan_is_case_insensitive():
    injected = [phi("First name", "Names", "Oliver")]
    record = scan_leaks(syn("n1", "seen by OLIVER today"), injected)
    assert record.categories == {"Names"}


def test_word_boundary_for_names():
    injected = [phi("First name", "Names", "Ann")]
    assert scan_leaks(syn("n1", "planning continues"), injected).categories == frozenset()
    assert scan_leaks(syn("n1", "Ann arrived"), injected).categories == {"Names"}


def test_digit_boundary_for_numeric_surfaces():
    injected = [phi("Age", "All date", "67")]
    assert scan_leaks(syn("n1", "dose 670 mg"), injected).categories == frozenset()
    assert scan_leaks(syn("n1", "a 67 year old"), injected).categories == {"All date"}
    assert scan_leaks(syn("n1", "aged 67."), injected).categories == {"All date"}


def test_raw_substring_for_formatted_identifiers():
    injected = [phi("Phone number", "Telephone", "555-12-3456")]
    assert scan_leaks(syn("n1", "call(555-12-3456)now"), injected).categories == {"Telephone"}


def test_excluded_tag_never_contributes():
    injected = [phi("Number", "Unique identifying number", "123")]
    record = scan_leaks(syn("n1", "value 123 recorded"), injected)
    assert record.categories == frozenset()


def test_multiword_geographic_surface():
    injected = [phi("State", "Geographic", "New York")]
    assert scan_leaks(syn("n1", "moved to new york recently"), injected).categories == {"Geographic"}
    assert scan_leaks(syn("n1", "newark york street"), injected).categories == frozenset()


def make_mapping(entries):
    mapping = PhiMapping(seed=0)
    mapping.notes.update(entries)
    return mapping


def test_occurrence_report_rates():
    scans = [
        scan_leaks(syn("a", "in 1987"), [phi("Date", "All date", "1987")]),
        scan_leaks(syn("b", "in 1990"), [phi("Date", "All date", "1990")]),
        scan_leaks(syn("c", "no leak"), [phi("Date", "All date", "1991")]),
        scan_leaks(syn("d", "none"), [phi("Date", "All date", "1992")]),
    ]
    report = occurrence_report(scans, corpus_size=4)
    assert report.per_category["All date"].notes_leaking == 2
    assert report.per_category["All date"].rate == pytest.approx(0.5)
    assert set(report.per_category) == set(HIPAA_CATEGORIES)
    assert report.per_category["SSN"].notes_leaking == 0


def test_occurrence_report_zero_leak_corpus():
    scans = [scan_leaks(syn("a", "clean"), [phi("Date", "All date", "1987")])]
    report = occurrence_report(scans, corpus_size=1)
    assert all(c.notes_leaking == 0 for c in report.per_category.values())


def test_occurrence_report_denominator_is_source_size():
    scans = [scan_leaks(syn("a", "in 1987"), [phi("Date", "All date", "1987")])]
    report = occurrence_report(scans, corpus_size=10)
    assert report.per_category["All date"].rate == pytest.approx(0.1)


def test_occurrence_report_rejects_bad_size():
    with pytest.raises(ValueError):
        occurrence_report([], 0)


def test_cooccurrence_buckets():
    scans = [
        scan_leaks(
            syn("a", "Oliver seen in 1987"),
            [phi("First name", "Names", "Oliver"), phi("Date", "All date", "1987")],
        ),
        scan_leaks(syn("b", "in 1990"), [phi("Date", "All date", "1990")]),
    ]
    table = cooccurrence_report(scans, corpus_size=2)
    assert table.buckets == {2: {"count": 1, "percent": 0.5}}


def test_cooccurrence_empty_when_no_multi_leak():
    scans = [scan_leaks(syn("b", "in 1990"), [phi("Date", "All date", "1990")])]
    assert cooccurrence_report(scans).buckets == {}


def test_monotonicity_removing_surface_never_raises_rates():
    injected = [
        phi("First name", "Names", "Oliver"),
        phi("Date", "All date", "1987", 1),
    ]
    text = "Oliver seen in 1987"
    full = scan_leaks(syn("a", text), injected)
    reduced = scan_leaks(syn("a", text), injected[:1])
    assert reduced.categories <= full.categories


def test_audit_corpus_unknown_note_is_error():
    mapping = make_mapping({"a": [phi("Date", "All date", "1987")]})
    with pytest.raises(KeyError, match="zz"):
        audit_corpus([syn("zz", "text")], mapping)


def test_audit_corpus_global_mode_uses_vocabulary():
    mapping = make_mapping(
        {
            "a": [phi("First name", "Names", "Oliver")],
            "b": [phi("First name", "Names", "Sophia")],
        }
    )
    # note a reuses note b's surrogate: invisible per_note, caught globally
    synthetics = [syn("a", "Sophia came by"), syn("b", "clean")]
    per_note = audit_corpus(synthetics, mapping, "per_note")
    assert per_note[0].categories == frozenset()
    global_scan = audit_corpus(synthetics, mapping, "global")
    assert global_scan[0].categories == {"Names"}


def random_fixture(n_notes, seed):
    """Mapping plus synthetic notes with a random subset of surfaces planted."""
    rng = random.Random(seed)
    surfaces = [
        ("First name", "Names", "Oliver"),
        ("Last name", "Names", "Walker"),
        ("Date", "All date", "1987"),
        ("Age", "All date", "63"),
        ("Medical record number", "Medical record numbers", "mrn_482913"),
        ("State", "Geographic", "New Hampshire"),
        ("Phone number", "Telephone", "214-55-7788"),
        ("Serial number", "Device identifiers", "sn_4821733"),
        ("Number", "Unique identifying number", "512"),
        ("Unit number", "Unique identifying number", "un_7301"),
    ]
    filler = "routine course noted overnight with stable vitals and diet advanced".split()
    mapping = PhiMapping(seed=seed)
    synthetics = []
    for i in range(n_notes):
        note_id = f"n{i}"
        injected = []
        planted = []
        for index, (tag, category, surface) in enumerate(rng.sample(surfaces, rng.randint(1, 6))):
            injected.append(InjectedPhi(tag, category, surface, index))
            if rng.random() < 0.5:
                planted.append(surface)
        mapping.notes[note_id] = injected
        words = [rng.choice(filler) for _ in range(rng.randint(5, 12))]
        for surface in planted:
            words.insert(rng.randrange(len(words) + 1), surface)
        synthetics.append(syn(note_id, " ".join(words)))
    return mapping, synthetics


@pytest.mark.parametrize("mode", ["per_note", "global"])
def test_audit_equals_bruteforce_oracle(mode):
    mapping, synthetics = random_fixture(120, seed=5)
    scans = audit_corpus(synthetics, mapping, mode)
    report = occurrence_report(scans, len(synthetics))
    table = cooccurrence_report(scans, len(synthetics))
    rates, histogram = oracles.audit_counts(
        synthetics, mapping, len(synthetics), HIPAA_CATEGORIES, mode
    )
    for category in HIPAA_CATEGORIES:
        count, rate = rates[category]
        assert report.per_category[category].notes_leaking == count
        assert report.per_category[category].rate == rate
    assert {k: (b["count"], b["percent"]) for k, b in table.buckets.items()} == histogram


def test_surface_pattern_classes():
    assert surface_pattern("Oliver").pattern.startswith(r"\b")
    assert surface_pattern("New York").pattern.startswith(r"\b")
    assert surface_pattern("1987").pattern.startswith("(?<!")
    assert "mrn_123456" in surface_pattern("mrn_123456").pattern
