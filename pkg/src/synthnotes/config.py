"""Run configuration: a single human-editable YAML file plus flag overrides.

Secrets never live in the config; an http backend names the environment
variable holding its API key. The config hash (over the normalized content,
seed included) keys the pipeline manifest, so any edit invalidates resume.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .generation import DEFAULT_TEMPLATES, METHODS

BUILTIN_BACKENDS = ("echo", "deny", "scramble")
AUDIT_MODES = ("per_note", "global")


@dataclass
class KeywordParams:
    max_ngram: int = 3
    top_k: int | None = None
    dedup_threshold: float = 0.85
    lasf: int = 3
    cutoff: int = 400
    alpha: float = 2.3
    sigma: float = 3.0
    scrub_geographic: bool = False
    tfidf_floor: float | None = None
    stopwords: str | None = None
    blank: str = "____"


@dataclass
class UtilityParams:
    folds: int = 10
    epochs: int = 30
    learning_rate: float = 0.1
    l2: float = 1e-4


@dataclass
class ReidParams:
    open_delim: str = "[**"
    close_delim: str = "**]"
    aliases: dict = field(default_factory=dict)


@dataclass
class RetryParams:
    max_attempts: int = 3
    denial_limit: int = 3
    backoff_base: float = 0.5


@dataclass
class PipelineConfig:
    corpus: Path
    out: Path
    seed: int = 0
    jobs: int = 1
    labels: Path | None = None
    methods: list[str] = field(default_factory=lambda: list(METHODS))
    backend: str = "echo"
    backends: dict = field(default_factory=dict)
    audit_mode: str = "per_note"
    keywords: KeywordParams = field(default_factory=KeywordParams)
    utility: UtilityParams = field(default_factory=UtilityParams)
    reid: ReidParams = field(default_factory=ReidParams)
    retry: RetryParams = field(default_factory=RetryParams)
    templates: dict = field(default_factory=lambda: dict(DEFAULT_TEMPLATES))

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | None = None) -> "PipelineConfig":
        raw = dict(raw)
        base = Path(base_dir) if base_dir else Path.cwd()

        def path_of(value):
            p = Path(value)
            return p if p.is_absolute() else base / p

        try:
            corpus = path_of(raw.pop("corpus"))
            out = path_of(raw.pop("out"))
        except KeyError as exc:
            raise ConfigError(f"config is missing required key {exc}") from exc
        labels = raw.pop("labels", None)
        config = cls(
            corpus=corpus,
            out=out,
            seed=int(raw.pop("seed", 0)),
            jobs=int(raw.pop("jobs", 1)),
            labels=path_of(labels) if labels else None,
            methods=list(raw.pop("methods", list(METHODS))),
            backend=str(raw.pop("backend", "echo")),
            backends=dict(raw.pop("backends", {})),
            audit_mode=str(raw.pop("audit_mode", "per_note")),
            keywords=KeywordParams(**raw.pop("keywords", {})),
            utility=UtilityParams(**raw.pop("utility", {})),
            reid=ReidParams(**raw.pop("reid", {})),
            retry=RetryParams(**raw.pop("retry", {})),
            templates={**DEFAULT_TEMPLATES, **raw.pop("templates", {})},
        )
        if raw:
            raise ConfigError(f"unknown config key(s): {sorted(raw)}")
        return config

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a mapping")
        return cls.from_dict(raw, base_dir=path.parent)

    def validate(self) -> None:
        if not self.corpus.exists():
            raise ConfigError(f"corpus file not found: {self.corpus}")
        if self.labels is not None and not self.labels.exists():
            raise ConfigError(f"label set file not found: {self.labels}")
        for method in self.methods:
            if method not in METHODS:
                raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")
        if not self.methods:
            raise ConfigError("methods list is empty")
        if self.audit_mode not in AUDIT_MODES:
            raise ConfigError(f"unknown audit mode {self.audit_mode!r}")
        if self.backend not in BUILTIN_BACKENDS and self.backend not in self.backends:
            raise ConfigError(
                f"backend {self.backend!r} is neither built-in {BUILTIN_BACKENDS} nor configured"
            )
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        stopwords = self.keywords.stopwords
        if stopwords and not Path(stopwords).exists():
            raise ConfigError(f"stopword file not found: {stopwords}")

    def as_dict(self) -> dict:
        return {
            "corpus": str(self.corpus),
            "out": str(self.out),
            "seed": self.seed,
            "jobs": self.jobs,
            "labels": str(self.labels) if self.labels else None,
            "methods": self.methods,
            "backend": self.backend,
            "backends": self.backends,
            "audit_mode": self.audit_mode,
            "keywords": vars(self.keywords),
            "utility": vars(self.utility),
            "reid": vars(self.reid),
            "retry": vars(self.retry),
            "templates": self.templates,
        }

    def config_hash(self) -> str:
        # jobs is execution detail, not content: exclude it so changing
        # parallelism does not invalidate resume.
        payload = self.as_dict()
        payload.pop("jobs")
        payload.pop("out")
        canonical = json.dumps(payload, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
