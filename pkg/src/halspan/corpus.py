"""Span-annotated RAG corpus: record model, validation, and JSONL serialization.

One record per line:

    {"id": str, "task_type": "QA"|"Data2txt"|"Summary", "split": "train"|"test",
     "language": str, "prompt": str, "answer": str,
     "labels": [{"start": int, "end": int, "label": str, "text": str?}],
     "source_model": str?}

Span offsets are code-point offsets into ``answer``, half-open.  Unknown
top-level fields and unknown span fields survive a load/save round-trip
unchanged.  Files are UTF-8.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import CorpusParseError, CorpusValidationError

logger = logging.getLogger(__name__)

TASK_TYPES = ("QA", "Data2txt", "Summary")
SPLITS = ("train", "test")

CATEGORY_LABELS = (
    "Evident Conflict",
    "Subtle Conflict",
    "Evident Baseless Info",
    "Subtle Baseless Info",
)
BINARY_LABEL = "hallucinated"
KNOWN_LABELS = CATEGORY_LABELS + (BINARY_LABEL,)


@dataclass(frozen=True)
class AnnotatedSpan:
    """Half-open character interval [start, end) on an answer, with a label."""

    start: int
    end: int
    label: str = BINARY_LABEL
    text: str | None = None
    extra: Mapping[str, Any] = field(default_factory=dict)

    def overlaps(self, start: int, end: int) -> bool:
        return self.start < end and start < self.end

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"start": self.start, "end": self.end, "label": self.label}
        if self.text is not None:
            d["text"] = self.text
        d.update(self.extra)
        return d


@dataclass(frozen=True)
class PredictedSpan:
    """A detected span plus the mean hallucination probability of its tokens."""

    start: int
    end: int
    confidence: float

    def to_dict(self) -> dict[str, Any]:
        return {"start": self.start, "end": self.end, "confidence": self.confidence}


@dataclass(frozen=True)
class RagRecord:
    """One annotated RAG instance.  Immutable after construction."""

    id: str
    task_type: str
    split: str
    language: str
    prompt: str
    answer: str
    labels: tuple[AnnotatedSpan, ...]
    source_model: str | None = None
    extra: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "id": self.id,
            "task_type": self.task_type,
            "split": self.split,
            "language": self.language,
            "prompt": self.prompt,
            "answer": self.answer,
            "labels": [s.to_dict() for s in self.labels],
        }
        if self.source_model is not None:
            d["source_model"] = self.source_model
        d.update(self.extra)
        return d


_RECORD_FIELDS = {
    "id", "task_type", "split", "language", "prompt", "answer", "labels", "source_model",
}
_SPAN_FIELDS = {"start", "end", "label", "text"}


def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def validate_span(span: AnnotatedSpan, answer: str, record_id: str = "?") -> None:
    """Check one span against its answer; raise CorpusValidationError if broken."""
    if not _is_int(span.start) or not _is_int(span.end):
        raise CorpusValidationError(
            f"record {record_id!r}: span offsets must be integers, got "
            f"({span.start!r}, {span.end!r})",
            record_id=record_id,
        )
    if not (0 <= span.start < span.end <= len(answer)):
        raise CorpusValidationError(
            f"record {record_id!r}: span ({span.start}, {span.end}) out of bounds "
            f"for answer of length {len(answer)}",
            record_id=record_id,
        )
    if span.text is not None and span.text != answer[span.start:span.end]:
        raise CorpusValidationError(
            f"record {record_id!r}: span text {span.text!r} does not match answer "
            f"substring {answer[span.start:span.end]!r}",
            record_id=record_id,
        )


def validate_record(record: RagRecord, strict: bool = False) -> None:
    """Check all record invariants.

    Unknown category labels are warned about unless ``strict`` is set, in which
    case they are rejected; translated corpora in the wild drift on label
    strings, so lenient is the default.
    """
    if not isinstance(record.id, str) or not record.id:
        raise CorpusValidationError("record id must be a non-empty string", record_id=str(record.id))
    if record.task_type not in TASK_TYPES:
        raise CorpusValidationError(
            f"record {record.id!r}: task_type {record.task_type!r} not in {TASK_TYPES}",
            record_id=record.id,
        )
    if record.split not in SPLITS:
        raise CorpusValidationError(
            f"record {record.id!r}: split {record.split!r} not in {SPLITS}",
            record_id=record.id,
        )
    for span in record.labels:
        validate_span(span, record.answer, record.id)
        if span.label not in KNOWN_LABELS:
            if strict:
                raise CorpusValidationError(
                    f"record {record.id!r}: unknown span label {span.label!r}",
                    record_id=record.id,
                )
            logger.warning("record %r: unknown span label %r", record.id, span.label)


def normalize_spans(spans: Iterable[AnnotatedSpan]) -> list[AnnotatedSpan]:
    """Sort spans and merge any that overlap or touch.

    A merged span covers the union of its constituents and takes the label of
    the earliest-starting one; its ``text`` is dropped since it no longer names
    a single annotated surface string.  Spans untouched by merging pass
    through unchanged.  Idempotent; preserves exact character coverage.
    """
    ordered = sorted(spans, key=lambda s: (s.start, s.end))
    merged: list[AnnotatedSpan] = []
    for span in ordered:
        if merged and span.start <= merged[-1].end:
            prev = merged[-1]
            if span.end > prev.end:
                merged[-1] = AnnotatedSpan(start=prev.start, end=span.end, label=prev.label)
            # else: span lies inside prev, union unchanged, prev kept as-is
        else:
            merged.append(span)
    return merged


def to_binary(record: RagRecord) -> RagRecord:
    """Collapse category labels: every span becomes BINARY_LABEL, offsets kept."""
    if all(s.label == BINARY_LABEL for s in record.labels):
        return record
    return replace(
        record,
        labels=tuple(replace(s, label=BINARY_LABEL) for s in record.labels),
    )


def _span_from_dict(obj: Mapping[str, Any], record_id: str) -> AnnotatedSpan:
    if not isinstance(obj, Mapping):
        raise CorpusValidationError(
            f"record {record_id!r}: span entry is not an object", record_id=record_id
        )
    if "start" not in obj or "end" not in obj:
        raise CorpusValidationError(
            f"record {record_id!r}: span missing start/end", record_id=record_id
        )
    # Some distributions name the category field "type" instead of "label".
    label = obj.get("label", obj.get("type"))
    if label is None:
        raise CorpusValidationError(
            f"record {record_id!r}: span missing label", record_id=record_id
        )
    extra = {k: v for k, v in obj.items() if k not in _SPAN_FIELDS and k != "type"}
    return AnnotatedSpan(
        start=obj["start"],
        end=obj["end"],
        label=label,
        text=obj.get("text"),
        extra=extra,
    )


def record_from_dict(obj: Mapping[str, Any], strict: bool = False) -> RagRecord:
    """Build and validate a RagRecord from a parsed JSON object."""
    missing = [k for k in ("id", "task_type", "split", "language", "prompt", "answer", "labels")
               if k not in obj]
    if missing:
        raise CorpusValidationError(
            f"record {obj.get('id', '?')!r}: missing fields {missing}",
            record_id=obj.get("id"),
        )
    record_id = obj["id"]
    spans = tuple(_span_from_dict(s, record_id) for s in obj["labels"])
    record = RagRecord(
        id=record_id,
        task_type=obj["task_type"],
        split=obj["split"],
        language=obj["language"],
        prompt=obj["prompt"],
        answer=obj["answer"],
        labels=spans,
        source_model=obj.get("source_model"),
        extra={k: v for k, v in obj.items() if k not in _RECORD_FIELDS},
    )
    validate_record(record, strict=strict)
    return record


def load_corpus(path: str | Path, strict: bool = False) -> list[RagRecord]:
    """Load all records from a JSONL file, preserving line order.

    Raises CorpusParseError naming the line number on malformed JSON, and
    CorpusValidationError naming the record id on invariant violations.
    """
    records: list[RagRecord] = []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusParseError(
                    f"{path}: line {line_number}: {e}", line_number=line_number
                ) from e
            if not isinstance(obj, dict):
                raise CorpusParseError(
                    f"{path}: line {line_number}: expected an object, got {type(obj).__name__}",
                    line_number=line_number,
                )
            records.append(record_from_dict(obj, strict=strict))
    return records


def save_corpus(records: Iterable[RagRecord], path: str | Path) -> None:
    """Write records as one JSON object per line; inverse of load_corpus."""
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record.to_dict(), ensure_ascii=False))
            f.write("\n")
