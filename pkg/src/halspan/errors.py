"""Exception types shared across the pipeline."""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for all halspan errors."""


class ContractViolation(PipelineError):
    """An operation was called with inputs that break its preconditions."""


class CorpusParseError(PipelineError):
    """A corpus line is not a well-formed record object."""

    def __init__(self, message: str, line_number: int | None = None):
        super().__init__(message)
        self.line_number = line_number


class CorpusValidationError(PipelineError):
    """A parsed record violates the record or span invariants."""

    def __init__(self, message: str, record_id: str | None = None):
        super().__init__(message)
        self.record_id = record_id


class TagProtocolError(PipelineError):
    """Marker text is malformed (stray, nested, or misordered markers)."""

    def __init__(self, message: str, position: int | None = None):
        super().__init__(message)
        self.position = position


class TransportError(PipelineError):
    """A translation backend could not be reached or returned no text."""


class TranslationFailure(PipelineError):
    """A record could not be translated within the retry budget."""

    def __init__(self, message: str, record_id: str | None = None):
        super().__init__(message)
        self.record_id = record_id


class UnencodableRecordError(PipelineError):
    """A record's answer alone does not fit the model's sequence length."""

    def __init__(self, message: str, record_id: str | None = None):
        super().__init__(message)
        self.record_id = record_id


class EmptyInputError(PipelineError):
    """An operation that needs at least one element received none."""


class ArtifactMismatchError(PipelineError):
    """Two pipeline artifacts disagree on tokenizer, ids, or shapes."""
