"""synthnotes: synthetic clinical note generation with privacy auditing.

The pipeline repopulates de-identified notes with format-conformant dummy
PHI, renders three prompt styles against a pluggable generation backend,
and audits the synthetic output for surrogate leakage, text similarity,
and downstream coding utility.
"""

from .audit import (
    HIPAA_CATEGORIES,
    LeakRecord,
    audit_corpus,
    cooccurrence_report,
    occurrence_report,
    scan_leaks,
)
from .config import PipelineConfig
from .corpus import LabelSet, NoteRecord, filter_to_label_set, load_corpus, save_corpus
from .errors import (
    BackendDenial,
    BackendTransportError,
    ConfigError,
    CorpusError,
    StageError,
    SynthNotesError,
    TagScanError,
)
from .generation import (
    EchoBackend,
    DenyBackend,
    GenerationOutcome,
    PromptTemplate,
    RetryPolicy,
    ScrambleBackend,
    SyntheticNote,
    generate_corpus,
    generate_one,
    render_prompt,
)
from .keywords import (
    ClozePrompt,
    Keyphrase,
    build_cloze,
    dedup_phrases,
    extract_keyphrases,
    kpminer_extract,
    yake_extract,
)
from .pipeline import emit_report, run_pipeline
from .reid import (
    InjectedPhi,
    PhiMapping,
    TagRegistry,
    default_registry,
    make_surrogate,
    repopulate_corpus,
    repopulate_note,
    scan_tags,
)
from .simmetrics import RougeScore, TfidfVectorizer, cosine_pair, rouge_n, similarity_summary
from .textprep import normalize_text, split_sentences, tokenize
from .utility import (
    LogisticTextClassifier,
    UtilityScores,
    benchmark_crossvalidate,
    crossvalidate,
    evaluate_micro_macro,
)

__version__ = "0.1.0"
