"""End-to-end acceptance suite.

Each test prints one pass/fail line so a full run reads as a checklist:
``pytest tests/test_acceptance.py -s``.
"""

import json
import random
import re
import time

import yaml

import oracles
from conftest import make_corpus, make_docs
from synthnotes.audit import (
    HIPAA_CATEGORIES,
    audit_corpus,
    cooccurrence_report,
    occurrence_report,
    scan_leaks,
)
from synthnotes.config import PipelineConfig
from synthnotes.corpus import NoteRecord, save_corpus
from synthnotes.generation import SyntheticNote, load_denial_log, load_synthetic_corpus
from synthnotes.keywords import (
    Keyphrase,
    dedup_phrases,
    kpminer_extract,
    load_stopwords,
    similarity,
    yake_extract,
)
from synthnotes.pipeline import run_pipeline
from synthnotes.reid import (
    TAG_NAMES,
    InjectedPhi,
    PhiMapping,
    make_surrogate,
    repopulate_corpus,
    scan_tags,
)
from synthnotes.simmetrics import TfidfVectorizer, cosine_pair, rouge_n
from synthnotes.utility import crossvalidate, partition_folds

STOPWORDS = load_stopwords()


def report(number, name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"ACCEPTANCE {number} {name}: {status}{suffix}")
    assert ok, f"criterion {number} {name}: {detail}"


# --- 1. dummy-surrogate format conformance ---------------------------------

SAMPLES_PER_RULE = 10_000

def _registry_checkers(registry):
    first = set(registry.lists["first_names"])
    last = set(registry.lists["last_names"])
    states = set(registry.lists["states"])
    countries = set(registry.lists["countries"])
    cities = {city for _, city, _, _ in registry.addresses}
    address_re = re.compile(r".+, .+, [A-Z]{2} \d{5}$")

    def full_name(s):
        parts = s.split(" ")
        return len(parts) == 2 and parts[0] in first and parts[1] in last

    def name_phone(s):
        head, _, phone = s.rpartition(" ")
        return full_name(head) and re.fullmatch(r"\d{3}-\d{2}-\d{4}", phone) is not None

    return {
        "Address": lambda s: address_re.fullmatch(s) is not None,
        "Age": lambda s: s.isdigit() and 52 <= int(s) <= 99,
        "Clip number": lambda s: re.fullmatch(r"clip_\d{4}", s) is not None,
        "Company": lambda s: s == "Company_note1",
        "Country": lambda s: s in countries,
        "Date": lambda s: re.fullmatch(r"\d{4}", s) is not None and 1900 <= int(s) <= 2099,
        "First name": lambda s: s in first,
        "Full name": full_name,
        "Full name phone": name_phone,
        "Holiday": lambda s: s == "Holiday_note1",
        "Hospital": lambda s: s == "Hospital_note1",
        "Hospital ward": lambda s: s == "Hospital Ward_note1",
        "Job number": lambda s: re.fullmatch(r"jn_\d{5}", s) is not None,
        "Last name": lambda s: s in last,
        "Location": lambda s: s in cities,
        "MD number": lambda s: re.fullmatch(r"MD_[A-Z]{2}_\d{4}", s) is not None,
        "Medical record number": lambda s: re.fullmatch(r"mrn_\d{6}", s) is not None,
        "Name initial": lambda s: re.fullmatch(r"[A-Z]{2}", s) is not None,
        "Number": lambda s: re.fullmatch(r"\d{3}", s) is not None,
        "Numeric identifier": lambda s: re.fullmatch(r"ni_\d{6}", s) is not None,
        "Pager number": lambda s: s.startswith("pg_") and 10 <= int(s[3:]) <= 999,
        "Phone number": lambda s: re.fullmatch(r"\d{3}-\d{2}-\d{4}", s) is not None,
        "Serial number": lambda s: re.fullmatch(r"sn_\d{7}", s) is not None,
        "SSN": lambda s: re.fullmatch(r"\d{3}-\d{2}-\d{4}", s) is not None,
        "State": lambda s: s in states,
        "Unit number": lambda s: re.fullmatch(r"un_\d{4}", s) is not None,
        "University": lambda s: s == "University_note1",
    }


def test_criterion_1_surrogate_format_conformance(registry):
    checkers = _registry_checkers(registry)
    assert set(checkers) == set(TAG_NAMES)
    started = time.perf_counter()
    violations = []
    ages = set()
    for tag_name, check in checkers.items():
        rng = random.Random(hash(tag_name) & 0xFFFF)
        for _ in range(SAMPLES_PER_RULE):
            surface = make_surrogate(tag_name, "note1", rng, registry).surface
            if not check(surface):
                violations.append((tag_name, surface))
            if tag_name == "Age":
                ages.add(int(surface))
    elapsed = time.perf_counter() - started
    coverage_ok = ages == set(range(52, 100))
    report(
        1,
        "surrogate-format-conformance",
        not violations and coverage_ok and elapsed < 5.0,
        f"{27 * SAMPLES_PER_RULE} surfaces, {len(violations)} violations, {elapsed:.2f}s",
    )


# --- 2. re-identification round trip ----------------------------------------

def tagged_fixture(n_notes=100):
    rng = random.Random(17)
    records = []
    for i in range(n_notes):
        count = rng.randint(2, 6)
        tags = [TAG_NAMES[(i + j * 7) % len(TAG_NAMES)] for j in range(count)]
        tagged = " and ".join(f"[**{t}**]" for t in tags)
        text = f"Note {i}: saw {tagged} during the visit. Plan reviewed in detail."
        records.append(NoteRecord(f"note{i}", text, "401.9"))
    return records


def test_criterion_2_reid_round_trip(registry):
    records = tagged_fixture(100)
    expected_spans = {r.note_id: len(scan_tags(r.text, registry)) for r in records}

    out_a, mapping_a = repopulate_corpus(records, registry, seed=11)
    out_b, mapping_b = repopulate_corpus(records, registry, seed=11)
    out_c, mapping_c = repopulate_corpus(records, registry, seed=12)

    residual = sum(len(scan_tags(r.text, registry)) for r in out_a)
    counts_ok = all(len(mapping_a.notes[r.note_id]) == expected_spans[r.note_id] for r in records)
    replay_ok = out_a == out_b and mapping_a.notes == mapping_b.notes
    surfaces_a = [p.surface for entries in mapping_a.notes.values() for p in entries]
    surfaces_c = [p.surface for entries in mapping_c.notes.values() for p in entries]
    seed_changes = surfaces_a != surfaces_c
    report(
        2,
        "reid-round-trip",
        residual == 0 and counts_ok and replay_ok and seed_changes,
        f"100 notes, {sum(expected_spans.values())} tags, residual={residual}",
    )


# --- 3./4. audit oracle equivalence and counting semantics -------------------

def planted_fixture(n_notes, seed):
    rng = random.Random(seed)
    surfaces = [
        ("First name", "Names", "Oliver"),
        ("Last name", "Names", "Walker"),
        ("Full name", "Names", "Grace Chen"),
        ("Date", "All date", "1987"),
        ("Age", "All date", "63"),
        ("Medical record number", "Medical record numbers", "mrn_482913"),
        ("State", "Geographic", "New Hampshire"),
        ("Country", "Geographic", "Belgium"),
        ("Phone number", "Telephone", "214-55-7788"),
        ("Pager number", "Telephone", "pg_417"),
        ("Serial number", "Device identifiers", "sn_4821733"),
        ("SSN", "SSN", "903-44-1122"),
        ("Number", "Unique identifying number", "512"),
        ("Unit number", "Unique identifying number", "un_7301"),
        ("Numeric identifier", "Unique identifying number", "ni_550912"),
    ]
    filler = "routine course noted overnight with stable vitals and diet advanced".split()
    mapping = PhiMapping(seed=seed)
    synthetics = []
    for i in range(n_notes):
        note_id = f"n{i}"
        injected = []
        planted = []
        for index, (tag, category, surface) in enumerate(rng.sample(surfaces, rng.randint(1, 8))):
            injected.append(InjectedPhi(tag, category, surface, index))
            if rng.random() < 0.55:
                planted.append(surface)
        mapping.notes[note_id] = injected
        words = [rng.choice(filler) for _ in range(rng.randint(6, 14))]
        for surface in planted:
            words.insert(rng.randrange(len(words) + 1), surface)
        synthetics.append(SyntheticNote(note_id, "one_shot", "mock", " ".join(words)))
    return mapping, synthetics


def test_criterion_3_audit_oracle_equivalence(registry):
    mapping, synthetics = planted_fixture(1000, seed=23)
    started = time.perf_counter()
    scans = audit_corpus(synthetics, mapping, "per_note")
    occurrence = occurrence_report(scans, 1000)
    table = cooccurrence_report(scans, 1000)
    rates, histogram = oracles.audit_counts(synthetics, mapping, 1000, HIPAA_CATEGORIES, "per_note")
    elapsed = time.perf_counter() - started

    rates_equal = all(
        (occurrence.per_category[c].notes_leaking, occurrence.per_category[c].rate) == rates[c]
        for c in HIPAA_CATEGORIES
    )
    table_equal = {k: (b["count"], b["percent"]) for k, b in table.buckets.items()} == histogram

    # echo-backend identity: synthetic == re-identified source, so per-category
    # counts equal what the mapping alone implies
    records = tagged_fixture(100)
    reid_records, reid_mapping = repopulate_corpus(records, registry, seed=29)
    echoes = [SyntheticNote(r.note_id, "one_shot", "echo", r.text) for r in reid_records]
    echo_scans = audit_corpus(echoes, reid_mapping, "per_note")
    echo_report = occurrence_report(echo_scans, len(records))
    expected = {category: 0 for category in HIPAA_CATEGORIES}
    for entries in reid_mapping.notes.values():
        for category in {p.hipaa_category for p in entries if p.tag_name != "Number"}:
            expected[category] += 1
    echo_ok = all(
        echo_report.per_category[c].notes_leaking == expected[c] for c in HIPAA_CATEGORIES
    )
    report(
        3,
        "audit-oracle-equivalence",
        rates_equal and table_equal and echo_ok and elapsed < 10.0,
        f"1000 notes, oracle exact={rates_equal and table_equal}, echo identity={echo_ok}, {elapsed:.2f}s",
    )


def test_criterion_4_category_counted_once_per_note():
    repeated_text = "on 1987, then 1987, later 1987, again 1987, finally 1987"
    once = scan_leaks(
        SyntheticNote("a", "one_shot", "echo", repeated_text),
        [InjectedPhi("Date", "All date", "1987", 0)],
    )
    injected_five = [InjectedPhi("Date", "All date", "1987", k) for k in range(5)]
    five = scan_leaks(SyntheticNote("a", "one_shot", "echo", repeated_text), injected_five)
    reports = occurrence_report([once], 1), occurrence_report([five], 1)
    ok = all(r.per_category["All date"].notes_leaking == 1 for r in reports)
    report(4, "category-counted-once-per-note", ok, "5 occurrences -> Date count 1")


# --- 5. metric oracles --------------------------------------------------------

def test_criterion_5_metric_oracles():
    checks = []
    checks.append(abs(rouge_n("a b c", "a b d", 1).f1 - 2 / 3) <= 1e-12)
    checks.append(abs(rouge_n("a b c", "a b d", 2).f1 - 1 / 2) <= 1e-12)
    checks.append(rouge_n("x y z w", "x y z w", 1).f1 == 1.0)
    checks.append(rouge_n("x y z w", "x y z w", 3).f1 == 1.0)

    space = TfidfVectorizer().fit(["alpha beta gamma", "delta epsilon"])
    idem = space.transform_one("alpha beta gamma")
    disjoint_a = space.transform_one("alpha beta gamma")
    disjoint_b = space.transform_one("delta epsilon")
    checks.append(abs(cosine_pair(idem, idem) - 1.0) <= 1e-12)
    checks.append(cosine_pair(disjoint_a, disjoint_b) == 0.0)

    rng = random.Random(321)
    vocabulary = "one two three four five six seven eight nine ten".split()
    mismatches = 0
    for _ in range(200):
        a = " ".join(rng.choice(vocabulary) for _ in range(rng.randint(1, 20)))
        b = " ".join(rng.choice(vocabulary) for _ in range(rng.randint(1, 20)))
        for n in (1, 2, 3):
            if abs(rouge_n(a, b, n).f1 - oracles.rouge_f1(a, b, n)) > 1e-9:
                mismatches += 1
        pair_space = TfidfVectorizer().fit([a, b])
        va, vb = pair_space.transform([a, b])
        oa, ob = oracles.tfidf_vectors([a, b])
        if abs(cosine_pair(va, vb) - oracles.cosine(oa, ob)) > 1e-9:
            mismatches += 1
    checks.append(mismatches == 0)
    report(
        5,
        "metric-oracles",
        all(checks),
        f"frozen examples ok, 200 random pairs, {mismatches} mismatches",
    )


# --- 6. keyword extractor exactness ------------------------------------------

def test_criterion_6_keyword_extractor_exactness():
    docs = make_docs(50, max_tokens=30, seed=77)
    score_errors = 0
    ranking_errors = 0
    for doc in docs:
        got = yake_extract(doc, max_ngram=3, top_k=100, stopwords=STOPWORDS)
        want = oracles.yake_topk(doc, 3, 100, STOPWORDS)
        if [p.surface for p in got] != [w[2] for w in want]:
            ranking_errors += 1
        score_errors += sum(
            1 for p, w in zip(got, want) if abs(p.score - w[0]) > 1e-9
        )
        got_kp = kpminer_extract(doc, lasf=1, cutoff=400, top_k=100, stopwords=STOPWORDS)
        want_kp = oracles.kpminer_topk(doc, 1, 400, 2.3, 3.0, 100, STOPWORDS)
        if [p.surface for p in got_kp] != [w[2] for w in want_kp]:
            ranking_errors += 1
        score_errors += sum(
            1 for p, w in zip(got_kp, want_kp) if abs(p.score - w[0]) > 1e-9
        )

    rng = random.Random(555)
    words = "alpha beta gamma delta epsilon zeta eta theta".split()
    dedup_failures = 0
    for _ in range(1000):
        phrases = [
            Keyphrase(" ".join(rng.sample(words, rng.randint(1, 3))), 0.0, "yake", i)
            for i in range(rng.randint(0, 8))
        ]
        kept = dedup_phrases(phrases, 0.85)
        if dedup_phrases(kept, 0.85) != kept:
            dedup_failures += 1
        for i, a in enumerate(kept):
            for b in kept[i + 1 :]:
                if similarity(a.surface.lower(), b.surface.lower()) >= 0.85:
                    dedup_failures += 1
    report(
        6,
        "keyword-extractor-exactness",
        score_errors == 0 and ranking_errors == 0 and dedup_failures == 0,
        f"50 docs, score errors={score_errors}, ranking errors={ranking_errors}, "
        f"dedup failures={dedup_failures}/1000 sets",
    )


# --- 7. utility protocol -------------------------------------------------------

def separable_800(seed=31, n_classes=8, words_per_class=200):
    rng = random.Random(seed)
    labels = [f"c{k}" for k in range(n_classes)]
    pools = {lab: [f"{lab}term{j}" for j in range(words_per_class)] for lab in labels}
    filler = [f"shared{j}" for j in range(30)]
    records = []
    for i in range(800):
        lab = labels[i % n_classes]
        words = []
        for _ in range(8):
            words.append(rng.choice(pools[lab]))
            words.extend(rng.choice(filler) for _ in range(2))
        records.append(NoteRecord(f"n{i}", " ".join(words) + ".", lab))
    return records


def test_criterion_7_utility_protocol():
    started = time.perf_counter()
    sources = separable_800()
    synthetics = [SyntheticNote(r.note_id, "one_shot", "echo", r.text) for r in sources]

    ids = [r.note_id for r in sources]
    folds = partition_folds(ids, 10, seed=5)
    flat = [i for fold in folds for i in fold]
    partition_ok = sorted(flat) == sorted(ids) and len(flat) == len(set(flat))

    scores = crossvalidate(synthetics, sources, folds=10, seed=5)

    shuffled = ids[:]
    random.Random(2).shuffle(shuffled)
    control = crossvalidate(
        synthetics, sources, mapping={i: shuffled[i] for i in range(len(synthetics))},
        folds=10, seed=5,
    )
    elapsed = time.perf_counter() - started
    ok = (
        partition_ok
        and scores.micro_f1 >= 0.95
        and 0.075 <= control.micro_f1 <= 0.175
        and elapsed < 60.0
    )
    report(
        7,
        "utility-protocol",
        ok,
        f"echo micro={scores.micro_f1:.4f}, shuffled micro={control.micro_f1:.4f}, {elapsed:.1f}s",
    )


# --- 8./9. pipeline determinism and report schemas -----------------------------

PIPELINE_TAGS = ("First name", "Last name", "Date", "Age", "Hospital", "Medical record number")


def write_pipeline_config(tmp_path, out_name, **overrides):
    corpus_path = tmp_path / "corpus.jsonl"
    if not corpus_path.exists():
        save_corpus(corpus_path, make_corpus(20, tags_for=lambda i: PIPELINE_TAGS))
    payload = {
        "corpus": str(corpus_path),
        "out": str(tmp_path / out_name),
        "seed": 7,
        "methods": ["one_shot", "keyword"],
        "backend": "echo",
        "utility": {"folds": 5, "epochs": 10},
    }
    payload.update(overrides)
    path = tmp_path / f"{out_name}.yaml"
    path.write_text(yaml.safe_dump(payload), encoding="utf-8")
    return path


def run_dir_files(out):
    return sorted(
        p.relative_to(out).as_posix()
        for p in out.rglob("*")
        if p.is_file() and p.name != "manifest.json"
    )


def test_criterion_8_pipeline_determinism(tmp_path):
    config_a = PipelineConfig.from_file(write_pipeline_config(tmp_path, "a"))
    config_b = PipelineConfig.from_file(write_pipeline_config(tmp_path, "b"))
    out_a = run_pipeline(config_a)
    out_b = run_pipeline(config_b)
    files_a, files_b = run_dir_files(out_a), run_dir_files(out_b)
    identical = files_a == files_b and all(
        (out_a / name).read_bytes() == (out_b / name).read_bytes() for name in files_a
    )

    deny_config = PipelineConfig.from_file(
        write_pipeline_config(
            tmp_path,
            "deny",
            backend="deny",
            backends={"deny": {"kind": "deny", "note_ids": ["n2", "n11", "n19"]}},
            methods=["one_shot"],
        )
    )
    out_deny = run_pipeline(deny_config)
    synthetics = load_synthetic_corpus(out_deny / "synthetic_one_shot.jsonl")
    denials = load_denial_log(out_deny / "denials_one_shot.jsonl")
    accounting = len(synthetics) + len(denials) == 20 and len(denials) == 3
    report(
        8,
        "pipeline-determinism",
        identical and accounting,
        f"{len(files_a)} files byte-identical={identical}, "
        f"deficit accounting {len(synthetics)}+{len(denials)}=20",
    )


def test_criterion_9_report_schema_fidelity(tmp_path):
    config = PipelineConfig.from_file(write_pipeline_config(tmp_path, "run"))
    out = run_pipeline(config)
    checks = []

    audit = json.loads((out / "audit_one_shot.json").read_text())
    checks.append(set(audit["occurrence"]) == set(HIPAA_CATEGORIES) and len(HIPAA_CATEGORIES) == 18)
    checks.append(all(set(v) == {"count", "rate"} for v in audit["occurrence"].values()))

    cooc_lines = (out / "report" / "cooccurrence.csv").read_text().splitlines()
    checks.append(cooc_lines[0] == "method,backend,2 PHIs,3 PHIs,4 PHIs")

    similarity = json.loads((out / "similarity_one_shot.json").read_text())
    checks.append({"rouge1_f1", "rouge2_f1", "rouge3_f1", "cosine"} <= set(similarity["means"]))
    sim_header = (out / "similarity_one_shot.csv").read_text().splitlines()[0]
    checks.append(sim_header == "note_id,rouge1_f1,rouge2_f1,rouge3_f1,cosine")

    utility = json.loads((out / "utility_one_shot.json").read_text())
    checks.append(set(utility["mean"]) == {"micro", "macro"})
    checks.append(set(utility["benchmark"]) == {"micro", "macro"})
    checks.append("per_fold" in utility and "per_class" in utility)
    report(
        9,
        "report-schema-fidelity",
        all(checks),
        f"{sum(checks)}/{len(checks)} schema checks",
    )
