"""Exception types shared across the pipeline."""


class SynthNotesError(Exception):
    """Base class for all package errors."""


class CorpusError(SynthNotesError):
    """Corpus file is malformed, empty, or violates record invariants."""


class TagScanError(SynthNotesError):
    """PHI tag syntax problem: unknown tag names or unbalanced delimiters."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class ConfigError(SynthNotesError):
    """Pipeline configuration is invalid or references missing files."""


class StageError(SynthNotesError):
    """A pipeline stage failed; carries the stage name and offending note."""

    def __init__(self, stage, message, note_id=None):
        detail = f"stage '{stage}': {message}"
        if note_id is not None:
            detail += f" (note_id={note_id!r})"
        super().__init__(detail)
        self.stage = stage
        self.note_id = note_id


class BackendTransportError(SynthNotesError):
    """Retryable transport-level failure while talking to a generation backend."""


class BackendDenial(SynthNotesError):
    """The backend's content filter refused the prompt. Not a pipeline error."""
