"""Prompt rendering and pluggable text-generation backends.

Three prompt styles feed a backend: the raw note (one_shot), the
letters-only note (normalized_one_shot), and the fill-in-the-blanks
keyphrase skeleton (keyword). Backends are pluggable; the built-in mocks
(echo, deny, scramble) make every downstream audit and metric testable
without a hosted model, and the http backend speaks a minimal
chat-completion shape.

A content-filter denial is a recorded outcome, not an error: the note is
retried up to the denial limit, then logged as denied and omitted from the
synthetic corpus (a deficit). Transport failures retry with exponential
backoff. Always: |synthetic notes| + |denial log| = |source corpus|.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .errors import BackendDenial, BackendTransportError, ConfigError
from .keywords import ClozePrompt

METHODS = ("one_shot", "normalized_one_shot", "keyword")
BODY_PLACEHOLDER = "{BODY}"

# Bundled preambles are placeholders, not the (unpublished) wording used
# with any hosted model; override them in the run config for real studies.
DEFAULT_TEMPLATES = {
    "one_shot": (
        "Write a new discharge summary for a different patient with a similar "
        "clinical course to the following note.\n\n{BODY}\n"
    ),
    "normalized_one_shot": (
        "The following is a clinical note reduced to its words. Write a full "
        "discharge summary for a similar patient.\n\n{BODY}\n"
    ),
    "keyword": (
        "Fill in the blanks to produce a complete discharge summary that uses "
        "these key phrases in order.\n\n{BODY}\n"
    ),
}


@dataclass(frozen=True)
class PromptTemplate:
    method: str
    preamble: str

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.preamble.count(BODY_PLACEHOLDER) != 1:
            raise ConfigError(
                f"template for {self.method!r} must contain exactly one {BODY_PLACEHOLDER}"
            )


@dataclass(frozen=True)
class RenderedPrompt:
    source_note_id: str
    method: str
    text: str
    body: str


@dataclass(frozen=True)
class GenerationOutcome:
    source_note_id: str
    method: str
    backend_id: str
    status: str  # ok | denied | failed
    text: str
    attempts: int
    error: str = ""


@dataclass(frozen=True)
class SyntheticNote:
    source_note_id: str
    method: str
    backend_id: str
    text: str


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3  # transport attempts, including the first
    denial_limit: int = 3
    backoff_base: float = 0.5
    backoff_factor: float = 2.0
    max_backoff: float = 30.0
    sleep: Callable[[float], None] = time.sleep

    def backoff(self, retry_number: int) -> float:
        return min(self.max_backoff, self.backoff_base * self.backoff_factor**retry_number)


def render_prompt(method: str, body, template: PromptTemplate) -> str:
    """Substitute the body into the template, byte-preserving everything else."""
    if template.method != method:
        raise ConfigError(f"template is for {template.method!r}, not {method!r}")
    if isinstance(body, ClozePrompt):
        if method != "keyword":
            raise ConfigError(f"cloze body requires the keyword method, not {method!r}")
        body_text = body.rendered
    elif isinstance(body, str):
        if method == "keyword":
            raise ConfigError("keyword method requires a cloze body, got plain text")
        body_text = body
    else:
        raise ConfigError(f"unsupported body type {type(body).__name__}")
    head, _, tail = template.preamble.partition(BODY_PLACEHOLDER)
    return head + body_text + tail


class _InflightCounter:
    """Thread-safe tracker of concurrent calls; mocks expose max_inflight."""

    def __init__(self):
        self._lock = threading.Lock()
        self._inflight = 0
        self.max_inflight = 0

    def __enter__(self):
        with self._lock:
            self._inflight += 1
            self.max_inflight = max(self.max_inflight, self._inflight)
        return self

    def __exit__(self, *exc):
        with self._lock:
            self._inflight -= 1
        return False


class EchoBackend:
    """Returns the prompt body verbatim; the identity generator for tests."""

    backend_id = "echo"

    def __init__(self, latency: float = 0.0):
        self.latency = latency
        self.counter = _InflightCounter()

    def complete(self, prompt: RenderedPrompt) -> str:
        with self.counter:
            if self.latency:
                time.sleep(self.latency)
            return prompt.body


class DenyBackend:
    """Simulates a content filter.

    With no ``note_ids`` every prompt is refused; with a list, only those
    source notes are refused and the rest echo their body, which makes the
    backend a deficit injector for end-to-end accounting tests.
    """

    backend_id = "deny"

    def __init__(self, note_ids: Sequence[str] | None = None):
        self.note_ids = None if note_ids is None else frozenset(note_ids)
        self.counter = _InflightCounter()

    def complete(self, prompt: RenderedPrompt) -> str:
        with self.counter:
            if self.note_ids is None or prompt.source_note_id in self.note_ids:
                raise BackendDenial("content filter refused the prompt")
            return prompt.body


class ScrambleBackend:
    """Returns the body with its whitespace tokens deterministically shuffled."""

    backend_id = "scramble"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.counter = _InflightCounter()

    def complete(self, prompt: RenderedPrompt) -> str:
        with self.counter:
            tokens = prompt.body.split()
            material = f"{self.seed}|{prompt.source_note_id}".encode("utf-8")
            rng = random.Random(int.from_bytes(hashlib.sha256(material).digest()[:8], "big"))
            rng.shuffle(tokens)
            return " ".join(tokens)


@dataclass
class HttpBackendConfig:
    endpoint: str
    model: str
    auth_env: str = ""
    temperature: float = 0.7
    timeout: float = 60.0
    denial_status_codes: tuple[int, ...] = (400,)
    denial_pattern: str = r"content_filter|content management policy|ResponsibleAIPolicy"


class HttpChatBackend:
    """Minimal chat-completion client with configurable denial recognition.

    A response is a denial when its status code is in the configured set
    AND its body matches the denial pattern; other non-2xx responses and
    transport exceptions are retryable failures. The API key is read from
    the environment variable named in the config, never stored.
    """

    def __init__(self, config: HttpBackendConfig, session=None, backend_id: str = "http"):
        import os

        self.config = config
        self.backend_id = backend_id
        self._denial_re = re.compile(config.denial_pattern, re.IGNORECASE)
        if session is None:
            import requests

            session = requests.Session()
        self.session = session
        self._api_key = os.environ.get(config.auth_env, "") if config.auth_env else ""

    def complete(self, prompt: RenderedPrompt) -> str:
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt.text}],
            "temperature": self.config.temperature,
        }
        try:
            response = self.session.post(
                self.config.endpoint, json=payload, headers=headers, timeout=self.config.timeout
            )
        except Exception as exc:
            raise BackendTransportError(f"request failed: {exc}") from exc
        body = response.text
        if response.status_code in self.config.denial_status_codes and self._denial_re.search(body):
            raise BackendDenial(f"content filter denial (status {response.status_code})")
        if not 200 <= response.status_code < 300:
            raise BackendTransportError(f"status {response.status_code}: {body[:200]}")
        try:
            data = response.json()
            return data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendTransportError(f"malformed completion response: {exc}") from exc


def generate_one(prompt: RenderedPrompt, backend, policy: RetryPolicy = RetryPolicy()) -> GenerationOutcome:
    """Drive one prompt through the backend under the retry policy."""
    attempts = 0
    transport_failures = 0
    denials = 0
    last_error = ""
    while True:
        attempts += 1
        try:
            text = backend.complete(prompt)
        except BackendDenial as exc:
            denials += 1
            last_error = str(exc)
            if denials >= policy.denial_limit:
                return GenerationOutcome(
                    prompt.source_note_id, prompt.method, backend.backend_id,
                    "denied", "", attempts, last_error,
                )
            continue
        except BackendTransportError as exc:
            transport_failures += 1
            last_error = str(exc)
            if transport_failures >= policy.max_attempts:
                return GenerationOutcome(
                    prompt.source_note_id, prompt.method, backend.backend_id,
                    "failed", "", attempts, last_error,
                )
            policy.sleep(policy.backoff(transport_failures - 1))
            continue
        if not text:
            return GenerationOutcome(
                prompt.source_note_id, prompt.method, backend.backend_id,
                "failed", "", attempts, "backend returned empty text",
            )
        return GenerationOutcome(
            prompt.source_note_id, prompt.method, backend.backend_id, "ok", text, attempts
        )


def generate_corpus(
    prompts: Sequence[RenderedPrompt],
    backend,
    policy: RetryPolicy = RetryPolicy(),
    jobs: int = 1,
) -> list[GenerationOutcome]:
    """One outcome per prompt, in input order, with at most ``jobs`` in flight."""
    if jobs <= 1:
        return [generate_one(p, backend, policy) for p in prompts]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda p: generate_one(p, backend, policy), prompts))


def split_outcomes(outcomes: Iterable[GenerationOutcome]) -> tuple[list[SyntheticNote], list[GenerationOutcome]]:
    """Separate successes from the denial log (denied and failed notes)."""
    synthetics: list[SyntheticNote] = []
    denials: list[GenerationOutcome] = []
    for outcome in outcomes:
        if outcome.status == "ok":
            synthetics.append(
                SyntheticNote(outcome.source_note_id, outcome.method, outcome.backend_id, outcome.text)
            )
        else:
            denials.append(outcome)
    return synthetics, denials


def save_synthetic_corpus(path: str | Path, notes: Iterable[SyntheticNote]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for note in notes:
            fh.write(
                json.dumps(
                    {
                        "source_note_id": note.source_note_id,
                        "method": note.method,
                        "backend": note.backend_id,
                        "text": note.text,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_synthetic_corpus(path: str | Path) -> list[SyntheticNote]:
    notes = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            raw = json.loads(line)
            notes.append(
                SyntheticNote(raw["source_note_id"], raw["method"], raw["backend"], raw["text"])
            )
    return notes


def save_denial_log(path: str | Path, denials: Iterable[GenerationOutcome]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for outcome in denials:
            fh.write(
                json.dumps(
                    {
                        "source_note_id": outcome.source_note_id,
                        "status": outcome.status,
                        "attempts": outcome.attempts,
                        "error": outcome.error,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_denial_log(path: str | Path) -> list[dict]:
    entries = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                entries.append(json.loads(line))
    return entries


def make_backend(name: str, options: dict | None = None, seed: int = 0):
    """Instantiate a built-in backend by name, or an http backend from options."""
    options = dict(options or {})
    kind = options.pop("kind", name)
    options.pop("retry_limit", None)
    options.pop("denial_limit", None)
    if kind == "echo":
        return EchoBackend(**options)
    if kind == "deny":
        return DenyBackend(**options)
    if kind == "scramble":
        options.setdefault("seed", seed)
        return ScrambleBackend(**options)
    if kind == "http":
        if "denial_status_codes" in options:
            options["denial_status_codes"] = tuple(options["denial_status_codes"])
        config = HttpBackendConfig(**options)
        return HttpChatBackend(config, backend_id=name)
    raise ConfigError(f"unknown backend kind {kind!r}")
