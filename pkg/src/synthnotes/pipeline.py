"""Stage orchestration with a manifest for resumable, deterministic runs.

Every stage writes its outputs under the run directory and records the
hashes of its inputs in ``manifest.json``. On rerun, a stage is skipped
when its recorded config hash and input hashes still match and its outputs
exist; deleting one output file recomputes only that stage (and anything
downstream whose inputs changed). No output carries a timestamp, so equal
configs and seeds produce byte-identical artifacts.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from . import audit as audit_mod
from .config import PipelineConfig
from .corpus import NoteRecord, filter_to_label_set, load_corpus, load_label_set, save_corpus
from .errors import ConfigError, StageError, SynthNotesError
from .generation import (
    PromptTemplate,
    RenderedPrompt,
    RetryPolicy,
    load_synthetic_corpus,
    make_backend,
    render_prompt,
    save_denial_log,
    save_synthetic_corpus,
    split_outcomes,
    generate_corpus,
)
from .keywords import (
    ClozePrompt,
    Keyphrase,
    build_cloze,
    extract_keyphrases,
    load_stopwords,
)
from .reid import default_registry, load_mapping, repopulate_corpus, save_mapping, HIPAA_GEOGRAPHIC
from .simmetrics import TfidfVectorizer, similarity_summary
from .textprep import normalize_text
from .utility import benchmark_crossvalidate, crossvalidate

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


@dataclass
class Stage:
    name: str
    inputs: list[Path]
    outputs: list[Path]
    run: Callable[[], None]


class PipelineRun:
    """Wires config to stages and owns the manifest."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.out = config.out

    # artifact paths -----------------------------------------------------
    def path(self, name: str) -> Path:
        return self.out / name

    def reid_corpus_path(self) -> Path:
        return self.path("reid_corpus.jsonl")

    def mapping_path(self) -> Path:
        return self.path("phi_mapping.json")

    def normalized_path(self) -> Path:
        return self.path("normalized_corpus.jsonl")

    def cloze_path(self) -> Path:
        return self.path("cloze_prompts.jsonl")

    def synthetic_path(self, method: str) -> Path:
        return self.path(f"synthetic_{method}.jsonl")

    def denial_path(self, method: str) -> Path:
        return self.path(f"denials_{method}.jsonl")

    def audit_path(self, method: str) -> Path:
        return self.path(f"audit_{method}.json")

    def similarity_csv_path(self, method: str) -> Path:
        return self.path(f"similarity_{method}.csv")

    def similarity_json_path(self, method: str) -> Path:
        return self.path(f"similarity_{method}.json")

    def utility_path(self, method: str) -> Path:
        return self.path(f"utility_{method}.json")

    def benchmark_path(self) -> Path:
        return self.path("utility_benchmark.json")

    # stage bodies -------------------------------------------------------
    def _load_sources(self) -> list[NoteRecord]:
        records = load_corpus(self.config.corpus)
        if self.config.labels is not None:
            records = filter_to_label_set(records, load_label_set(self.config.labels))
        return records

    def stage_reid(self) -> None:
        cfg = self.config
        records = self._load_sources()
        registry = default_registry(cfg.reid.open_delim, cfg.reid.close_delim, cfg.reid.aliases)
        reid_records, mapping = repopulate_corpus(records, registry, cfg.seed)
        save_corpus(self.reid_corpus_path(), reid_records)
        save_mapping(self.mapping_path(), mapping)

    def stage_normalize(self) -> None:
        records = load_corpus(self.reid_corpus_path())
        normalized = []
        for record in records:
            text = normalize_text(record.text)
            if not text:
                raise StageError("normalize", "note has no alphabetic words", record.note_id)
            normalized.append(NoteRecord(record.note_id, text, record.icd9_label))
        save_corpus(self.normalized_path(), normalized)

    def stage_keywords(self) -> None:
        cfg = self.config
        params = cfg.keywords
        records = load_corpus(self.normalized_path())
        stopwords = load_stopwords(params.stopwords)
        mapping = load_mapping(self.mapping_path()) if params.scrub_geographic else None
        weights_by_note = None
        if params.tfidf_floor is not None:
            vectorizer = TfidfVectorizer().fit([r.text for r in records])
            weights_by_note = {
                r.note_id: vectorizer.transform_one(r.text).weights for r in records
            }
        with self.cloze_path().open("w", encoding="utf-8") as fh:
            for record in records:
                exclude = ()
                if mapping is not None:
                    exclude = [
                        phi.surface
                        for phi in mapping.notes.get(record.note_id, [])
                        if phi.hipaa_category == HIPAA_GEOGRAPHIC
                    ]
                try:
                    phrases = extract_keyphrases(
                        record.text,
                        max_ngram=params.max_ngram,
                        top_k=params.top_k,
                        dedup_threshold=params.dedup_threshold,
                        lasf=params.lasf,
                        cutoff=params.cutoff,
                        alpha=params.alpha,
                        sigma=params.sigma,
                        stopwords=stopwords,
                        exclude_surfaces=exclude,
                        tfidf_weights=weights_by_note.get(record.note_id) if weights_by_note else None,
                        tfidf_floor=params.tfidf_floor,
                    )
                    cloze = build_cloze(record.text, phrases, params.blank)
                except ValueError as exc:
                    raise StageError("keywords", str(exc), record.note_id) from exc
                fh.write(
                    json.dumps(
                        {
                            "note_id": record.note_id,
                            "blank": cloze.blank,
                            "phrases": [
                                {
                                    "surface": p.surface,
                                    "score": p.score,
                                    "source": p.source,
                                    "first_offset": p.first_offset,
                                }
                                for p in cloze.phrases
                            ],
                            "rendered": cloze.rendered,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )

    def _load_cloze(self) -> dict[str, ClozePrompt]:
        prompts = {}
        with self.cloze_path().open(encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                raw = json.loads(line)
                phrases = tuple(
                    Keyphrase(p["surface"], p["score"], p["source"], p["first_offset"])
                    for p in raw["phrases"]
                )
                prompts[raw["note_id"]] = ClozePrompt(phrases, raw["blank"], raw["rendered"])
        return prompts

    def stage_generate(self, method: str) -> None:
        cfg = self.config
        reid_records = load_corpus(self.reid_corpus_path())
        template = PromptTemplate(method, cfg.templates[method])
        if method == "one_shot":
            bodies = {r.note_id: r.text for r in reid_records}
        elif method == "normalized_one_shot":
            bodies = {r.note_id: r.text for r in load_corpus(self.normalized_path())}
        else:
            bodies = self._load_cloze()
        prompts = []
        for record in reid_records:
            if record.note_id not in bodies:
                raise StageError("generate", f"no {method} body for note", record.note_id)
            body = bodies[record.note_id]
            text = render_prompt(method, body, template)
            body_text = body.rendered if isinstance(body, ClozePrompt) else body
            prompts.append(RenderedPrompt(record.note_id, method, text, body_text))
        backend = make_backend(cfg.backend, cfg.backends.get(cfg.backend), cfg.seed)
        backend_options = cfg.backends.get(cfg.backend, {})
        policy = RetryPolicy(
            max_attempts=backend_options.get("retry_limit", cfg.retry.max_attempts),
            denial_limit=backend_options.get("denial_limit", cfg.retry.denial_limit),
            backoff_base=cfg.retry.backoff_base,
        )
        outcomes = generate_corpus(prompts, backend, policy, cfg.jobs)
        synthetics, denials = split_outcomes(outcomes)
        save_synthetic_corpus(self.synthetic_path(method), synthetics)
        save_denial_log(self.denial_path(method), denials)

    def stage_audit(self, method: str) -> None:
        cfg = self.config
        synthetics = load_synthetic_corpus(self.synthetic_path(method))
        mapping = load_mapping(self.mapping_path())
        corpus_size = len(load_corpus(self.reid_corpus_path()))
        scans = audit_mod.audit_corpus(synthetics, mapping, cfg.audit_mode)
        occurrence = audit_mod.occurrence_report(scans, corpus_size)
        cooccurrence = audit_mod.cooccurrence_report(scans, corpus_size)
        audit_mod.write_audit_report(self.audit_path(method), occurrence, cooccurrence, cfg.audit_mode)

    def stage_metrics(self, method: str) -> None:
        sources = load_corpus(self.reid_corpus_path())
        synthetics = load_synthetic_corpus(self.synthetic_path(method))
        try:
            summary = similarity_summary(sources, synthetics)
        except ValueError as exc:
            raise StageError("metrics", str(exc)) from exc
        with self.similarity_csv_path(method).open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["note_id", "rouge1_f1", "rouge2_f1", "rouge3_f1", "cosine"])
            for row in summary.rows:
                writer.writerow(
                    [row.note_id, repr(row.rouge1_f1), repr(row.rouge2_f1), repr(row.rouge3_f1), repr(row.cosine)]
                )
        write_json(self.similarity_json_path(method), {"means": summary.means, "method": method})

    def stage_utility_benchmark(self) -> None:
        cfg = self.config
        sources = load_corpus(self.reid_corpus_path())
        scores = benchmark_crossvalidate(
            sources,
            folds=cfg.utility.folds,
            seed=cfg.seed,
            epochs=cfg.utility.epochs,
            learning_rate=cfg.utility.learning_rate,
            l2=cfg.utility.l2,
        )
        write_json(
            self.benchmark_path(),
            {
                "micro": scores.micro_f1,
                "macro": scores.macro_f1,
                "per_fold": scores.per_fold,
                "per_class": scores.per_class,
            },
        )

    def stage_utility(self, method: str) -> None:
        cfg = self.config
        sources = load_corpus(self.reid_corpus_path())
        synthetics = load_synthetic_corpus(self.synthetic_path(method))
        scores = crossvalidate(
            synthetics,
            sources,
            folds=cfg.utility.folds,
            seed=cfg.seed,
            epochs=cfg.utility.epochs,
            learning_rate=cfg.utility.learning_rate,
            l2=cfg.utility.l2,
        )
        benchmark = json.loads(self.benchmark_path().read_text(encoding="utf-8"))
        write_json(
            self.utility_path(method),
            {
                "benchmark": {"micro": benchmark["micro"], "macro": benchmark["macro"]},
                "per_fold": scores.per_fold,
                "mean": {"micro": scores.micro_f1, "macro": scores.macro_f1},
                "per_class": scores.per_class,
            },
        )

    def stage_report(self) -> None:
        emit_report(self.out, "csv")
        emit_report(self.out, "json")

    # orchestration ------------------------------------------------------
    def stages(self) -> list[Stage]:
        cfg = self.config
        inputs = [cfg.corpus] + ([cfg.labels] if cfg.labels else [])
        stages = [
            Stage("reid", inputs, [self.reid_corpus_path(), self.mapping_path()], self.stage_reid),
            Stage("normalize", [self.reid_corpus_path()], [self.normalized_path()], self.stage_normalize),
        ]
        if "keyword" in cfg.methods:
            stages.append(
                Stage(
                    "keywords",
                    [self.normalized_path(), self.mapping_path()],
                    [self.cloze_path()],
                    self.stage_keywords,
                )
            )
        report_inputs: list[Path] = []
        for method in cfg.methods:
            if method == "one_shot":
                gen_inputs = [self.reid_corpus_path()]
            elif method == "normalized_one_shot":
                gen_inputs = [self.normalized_path()]
            else:
                gen_inputs = [self.reid_corpus_path(), self.cloze_path()]
            stages.append(
                Stage(
                    f"generate_{method}",
                    gen_inputs,
                    [self.synthetic_path(method), self.denial_path(method)],
                    lambda m=method: self.stage_generate(m),
                )
            )
            stages.append(
                Stage(
                    f"audit_{method}",
                    [self.synthetic_path(method), self.mapping_path(), self.reid_corpus_path()],
                    [self.audit_path(method)],
                    lambda m=method: self.stage_audit(m),
                )
            )
            stages.append(
                Stage(
                    f"metrics_{method}",
                    [self.synthetic_path(method), self.reid_corpus_path()],
                    [self.similarity_csv_path(method), self.similarity_json_path(method)],
                    lambda m=method: self.stage_metrics(m),
                )
            )
            report_inputs += [
                self.audit_path(method),
                self.similarity_json_path(method),
                self.utility_path(method),
            ]
        stages.append(
            Stage(
                "utility_benchmark",
                [self.reid_corpus_path()],
                [self.benchmark_path()],
                self.stage_utility_benchmark,
            )
        )
        for method in cfg.methods:
            stages.append(
                Stage(
                    f"utility_{method}",
                    [self.synthetic_path(method), self.reid_corpus_path(), self.benchmark_path()],
                    [self.utility_path(method)],
                    lambda m=method: self.stage_utility(m),
                )
            )
        report_dir = self.path("report")
        report_outputs = [
            report_dir / "summary.json",
            report_dir / "cooccurrence.csv",
            report_dir / "similarity_summary.csv",
            report_dir / "utility_summary.csv",
        ] + [report_dir / f"occurrence_{method}.csv" for method in cfg.methods]
        stages.append(Stage("report", report_inputs, report_outputs, self.stage_report))
        return stages


def _load_manifest(path: Path) -> dict:
    if path.exists():
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            logger.warning("manifest at %s is unreadable; rebuilding", path)
    return {"stages": {}}


def _can_skip(stage: Stage, manifest: dict, config_hash: str) -> bool:
    entry = manifest["stages"].get(stage.name)
    if not entry or entry.get("config_hash") != config_hash:
        return False
    if not all(p.exists() for p in stage.outputs):
        return False
    recorded = entry.get("inputs", {})
    for path in stage.inputs:
        if not path.exists() or recorded.get(str(path)) != file_sha256(path):
            return False
    return True


def run_stage(run: PipelineRun, stage: Stage, manifest: dict, config_hash: str) -> bool:
    """Execute one stage unless the manifest proves it is current. Returns True if run."""
    if _can_skip(stage, manifest, config_hash):
        logger.info("stage %s is up to date; skipping", stage.name)
        return False
    logger.info("running stage %s", stage.name)
    try:
        stage.run()
    except StageError:
        raise
    except SynthNotesError as exc:
        raise StageError(stage.name, str(exc)) from exc
    except (ValueError, KeyError, OSError) as exc:
        raise StageError(stage.name, str(exc)) from exc
    manifest["stages"][stage.name] = {
        "config_hash": config_hash,
        "inputs": {str(p): file_sha256(p) for p in stage.inputs},
        "outputs": [str(p) for p in stage.outputs],
    }
    return True


def run_pipeline(config: PipelineConfig, only: Sequence[str] | None = None) -> Path:
    """Run all stages (or the named subset) with resume; returns the run directory."""
    config.validate()
    run = PipelineRun(config)
    run.out.mkdir(parents=True, exist_ok=True)
    manifest_path = run.path(MANIFEST_NAME)
    manifest = _load_manifest(manifest_path)
    config_hash = config.config_hash()
    manifest["config_hash"] = config_hash
    manifest["seed"] = config.seed
    for stage in run.stages():
        if only is not None and stage.name not in only:
            continue
        run_stage(run, stage, manifest, config_hash)
        write_json(manifest_path, manifest)
    return run.out


def emit_report(artifact_dir: str | Path, format: str = "csv") -> list[Path]:
    """Flatten stage outputs into chart-ready tables; lossless numbers.

    Raises StageError when the directory has no stage outputs or a method's
    outputs are incomplete.
    """
    artifact_dir = Path(artifact_dir)
    if format not in ("csv", "json"):
        raise ConfigError(f"unknown report format {format!r}")
    audit_files = sorted(artifact_dir.glob("audit_*.json"))
    if not audit_files:
        raise StageError("report", f"no audit outputs found in {artifact_dir}")
    report_dir = artifact_dir / "report"
    report_dir.mkdir(exist_ok=True)
    written: list[Path] = []

    methods = [p.stem.removeprefix("audit_") for p in audit_files]
    summary: dict = {"methods": {}}
    cooccurrence_rows = []
    for method in methods:
        audit_report = audit_mod.load_audit_report(artifact_dir / f"audit_{method}.json")
        similarity_path = artifact_dir / f"similarity_{method}.json"
        utility_path = artifact_dir / f"utility_{method}.json"
        synthetic_path = artifact_dir / f"synthetic_{method}.jsonl"
        for required in (similarity_path, utility_path, synthetic_path):
            if not required.exists():
                raise StageError("report", f"missing stage output {required.name}")
        backend = "unknown"
        with synthetic_path.open(encoding="utf-8") as fh:
            first = fh.readline().strip()
            if first:
                backend = json.loads(first).get("backend", "unknown")
        similarity = json.loads(similarity_path.read_text(encoding="utf-8"))
        utility = json.loads(utility_path.read_text(encoding="utf-8"))
        summary["methods"][method] = {
            "backend": backend,
            "occurrence": audit_report["occurrence"],
            "cooccurrence": audit_report["cooccurrence"],
            "similarity": similarity["means"],
            "utility": {"mean": utility["mean"], "benchmark": utility["benchmark"]},
        }
        cooccurrence_rows.append((method, backend, audit_report))
        if format == "csv":
            occ_path = report_dir / f"occurrence_{method}.csv"
            audit_mod.write_occurrence_csv(occ_path, audit_report)
            written.append(occ_path)

    if format == "csv":
        cooc_path = report_dir / "cooccurrence.csv"
        audit_mod.write_cooccurrence_csv(cooc_path, cooccurrence_rows)
        written.append(cooc_path)
        sim_path = report_dir / "similarity_summary.csv"
        with sim_path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["method", "backend", "rouge1_f1", "rouge2_f1", "rouge3_f1", "cosine", "pairs"])
            for method in methods:
                cell = summary["methods"][method]
                means = cell["similarity"]
                writer.writerow(
                    [method, cell["backend"]]
                    + [repr(means[k]) for k in ("rouge1_f1", "rouge2_f1", "rouge3_f1", "cosine")]
                    + [int(means["pairs"])]
                )
        written.append(sim_path)
        util_path = report_dir / "utility_summary.csv"
        with util_path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["method", "backend", "micro_f1", "macro_f1", "benchmark_micro", "benchmark_macro"])
            for method in methods:
                cell = summary["methods"][method]
                writer.writerow(
                    [
                        method,
                        cell["backend"],
                        repr(cell["utility"]["mean"]["micro"]),
                        repr(cell["utility"]["mean"]["macro"]),
                        repr(cell["utility"]["benchmark"]["micro"]),
                        repr(cell["utility"]["benchmark"]["macro"]),
                    ]
                )
        written.append(util_path)
    summary_path = report_dir / "summary.json"
    write_json(summary_path, summary)
    written.append(summary_path)
    return written
