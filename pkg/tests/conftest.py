import random

import pytest

from synthnotes.corpus import NoteRecord, save_corpus
from synthnotes.reid import default_registry

# Class-specific vocabulary for separable classification fixtures.
CLASS_WORDS = {
    "401.9": ["hypertensive", "amlodipine", "systolic"],
    "428.0": ["decompensated", "furosemide", "orthopnea"],
    "427.31": ["fibrillation", "anticoagulation", "cardioversion"],
    "584.9": ["azotemia", "oliguria", "dialysis"],
    "250.00": ["glycemic", "metformin", "neuropathy"],
    "518.81": ["ventilator", "hypoxemia", "intubation"],
    "599.0": ["pyuria", "nitrofurantoin", "dysuria"],
    "038.9": ["bacteremia", "vancomycin", "septic"],
}

FILLER = (
    "patient admitted with symptoms reviewed overnight stable course continued "
    "medication adjusted follow clinic discharge plan reviewed labs trending "
    "tolerating diet ambulating without assistance vital signs monitored"
).split()


@pytest.fixture(scope="session")
def registry():
    return default_registry()


def make_note_text(rng, label, tags=()):
    words = []
    for _ in range(6):
        words.append(rng.choice(CLASS_WORDS[label]))
        words.extend(rng.choice(FILLER) for _ in range(4))
    body = " ".join(words)
    tag_text = " ".join(f"[**{t}**]" for t in tags)
    return f"Seen at {tag_text} today. {body}." if tags else f"{body}."


def make_corpus(n_notes, seed=7, labels=("401.9", "428.0"), tags_for=None):
    """Build n tagged notes cycling over labels; tags_for(i) picks tag names."""
    rng = random.Random(seed)
    records = []
    for i in range(n_notes):
        label = labels[i % len(labels)]
        tags = tags_for(i) if tags_for else ("First name", "Date", "Hospital")
        records.append(NoteRecord(f"n{i}", make_note_text(rng, label, tags), label))
    return records


def make_docs(count, max_tokens=30, seed=99):
    """Constructed ASCII documents: varied casing, punctuation, sentences."""
    rng = random.Random(seed)
    vocabulary = [
        "cardiac", "failure", "renal", "dialysis", "acute", "chronic", "lesion",
        "the", "of", "and", "with", "stable", "output", "BP", "ICU", "Flow",
        "murmur", "edema", "sepsis", "fever",
    ]
    docs = []
    for _ in range(count):
        n_tokens = rng.randint(4, max_tokens)
        words = []
        for i in range(n_tokens):
            word = rng.choice(vocabulary)
            if rng.random() < 0.15:
                word = word.capitalize()
            words.append(word)
            if i < n_tokens - 1 and rng.random() < 0.18:
                words[-1] += rng.choice([".", ",", "!", ";"])
        doc = " ".join(words)
        if not doc.endswith((".", "!", "?")):
            doc += "."
        docs.append(doc)
    return docs


@pytest.fixture
def small_corpus():
    return make_corpus(6)


@pytest.fixture
def corpus_file(tmp_path, small_corpus):
    path = tmp_path / "corpus.jsonl"
    save_corpus(path, small_corpus)
    return path
