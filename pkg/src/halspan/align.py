"""Character-span to token-label alignment over packed (prompt, answer) inputs.

An answer token is labeled 1 when its character interval overlaps a gold span
by at least one character, 0 otherwise; prompt and special tokens are masked
with IGNORE_LABEL (-100) and never contribute to training.  When a packed
sequence exceeds the length budget, prompt tokens are dropped from the end of
the prompt; the answer is never truncated.
"""

from __future__ import annotations

import json
import logging
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .corpus import AnnotatedSpan, BINARY_LABEL, RagRecord, normalize_spans
from .errors import ContractViolation, EmptyInputError, UnencodableRecordError

logger = logging.getLogger(__name__)

IGNORE_LABEL = -100
SUPPORTED = 0
HALLUCINATED = 1


@dataclass(frozen=True)
class OffsetToken:
    """One token with half-open character offsets into its segment text."""

    index: int
    char_start: int
    char_end: int
    is_special: bool = False


@dataclass(frozen=True)
class Encoding:
    """A segment tokenized without special tokens: ids plus parallel offsets."""

    ids: tuple[int, ...]
    offsets: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.ids)

    def head(self, n: int) -> "Encoding":
        return Encoding(ids=self.ids[:n], offsets=self.offsets[:n])


@dataclass(frozen=True)
class PackedSequence:
    """A (prompt, answer) pair packed with the tokenizer's special tokens.

    ``answer_range`` is the half-open token-index interval spanning the answer
    segment's content tokens; offsets of answer tokens are relative to the
    answer text, prompt tokens to the prompt text.
    """

    input_ids: tuple[int, ...]
    tokens: tuple[OffsetToken, ...]
    answer_range: tuple[int, int]


class OffsetTokenizer(Protocol):
    """Any tokenizer that yields character offsets and packs segment pairs."""

    def encode(self, text: str) -> Encoding: ...

    def pack(self, prompt: Encoding, answer: Encoding) -> PackedSequence: ...


@dataclass(frozen=True)
class TokenLabelSequence:
    """Packed token sequence with per-token labels in {-100, 0, 1}."""

    record_id: str
    input_ids: tuple[int, ...]
    tokens: tuple[OffsetToken, ...]
    labels: tuple[int, ...]
    answer_range: tuple[int, int]
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.input_ids)

    def answer_token_indices(self) -> list[int]:
        """Positions of the non-special answer tokens, in order."""
        lo, hi = self.answer_range
        return [i for i in range(lo, hi) if not self.tokens[i].is_special]

    def answer_tokens(self) -> list[OffsetToken]:
        return [self.tokens[i] for i in self.answer_token_indices()]

    def answer_labels(self) -> list[int]:
        return [self.labels[i] for i in self.answer_token_indices()]

    @classmethod
    def from_ids(cls, record_id: str, input_ids: Sequence[int],
                 labels: Sequence[int]) -> "TokenLabelSequence":
        """Rebuild a trainable sequence from an exported label row.

        Character offsets are not stored in label files, so tokens carry (0, 0)
        offsets and the supervision structure is recovered from the -100
        sentinel; sufficient for training, not for span reporting.
        """
        if len(input_ids) != len(labels):
            raise ContractViolation(
                f"record {record_id!r}: {len(input_ids)} ids vs {len(labels)} labels"
            )
        tokens = tuple(
            OffsetToken(index=i, char_start=0, char_end=0, is_special=(lab == IGNORE_LABEL))
            for i, lab in enumerate(labels)
        )
        supervised = [i for i, lab in enumerate(labels) if lab != IGNORE_LABEL]
        answer_range = (supervised[0], supervised[-1] + 1) if supervised else (0, 0)
        return cls(
            record_id=record_id,
            input_ids=tuple(input_ids),
            tokens=tokens,
            labels=tuple(labels),
            answer_range=answer_range,
        )


def _labeling_spans(record: RagRecord) -> list[AnnotatedSpan]:
    """Normalized gold spans with whitespace-only ones dropped."""
    spans = []
    for span in normalize_spans(record.labels):
        if record.answer[span.start:span.end].isspace():
            logger.warning(
                "record %r: dropping whitespace-only span (%d, %d)",
                record.id, span.start, span.end,
            )
            continue
        spans.append(span)
    return spans


def build_labels(record: RagRecord, tokenizer: OffsetTokenizer,
                 max_len: int) -> TokenLabelSequence:
    """Tokenize, pack, truncate, and label one record.

    Raises UnencodableRecordError when the answer plus packing overhead cannot
    fit ``max_len`` on its own.
    """
    spans = _labeling_spans(record)
    prompt_enc = tokenizer.encode(record.prompt)
    answer_enc = tokenizer.encode(record.answer)

    packed = tokenizer.pack(prompt_enc, answer_enc)
    overhead = len(packed.input_ids) - len(prompt_enc) - len(answer_enc)
    truncated = False
    if len(packed.input_ids) > max_len:
        keep = max_len - overhead - len(answer_enc)
        if keep < 0:
            raise UnencodableRecordError(
                f"record {record.id!r}: answer needs {len(answer_enc) + overhead} tokens, "
                f"max_len is {max_len}",
                record_id=record.id,
            )
        packed = tokenizer.pack(prompt_enc.head(keep), answer_enc)
        truncated = True

    lo, hi = packed.answer_range
    labels = []
    for i, tok in enumerate(packed.tokens):
        if tok.is_special or not (lo <= i < hi):
            labels.append(IGNORE_LABEL)
        elif any(s.overlaps(tok.char_start, tok.char_end) for s in spans):
            labels.append(HALLUCINATED)
        else:
            labels.append(SUPPORTED)

    return TokenLabelSequence(
        record_id=record.id,
        input_ids=packed.input_ids,
        tokens=packed.tokens,
        labels=tuple(labels),
        answer_range=packed.answer_range,
        truncated=truncated,
    )


def binary_runs(values: Sequence[int]) -> list[tuple[int, int]]:
    """Half-open index intervals of the maximal runs of 1s."""
    runs = []
    start = None
    for i, v in enumerate(values):
        if v == 1 and start is None:
            start = i
        elif v != 1 and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(values)))
    return runs


def labels_to_spans(seq: TokenLabelSequence,
                    values: Sequence[int]) -> list[AnnotatedSpan]:
    """Turn per-answer-token binary values back into character spans.

    ``values`` must parallel the non-special answer tokens.  Special tokens
    sitting inside the answer segment are skipped entirely and therefore never
    break a run.
    """
    answer_toks = seq.answer_tokens()
    if len(values) != len(answer_toks):
        raise ContractViolation(
            f"record {seq.record_id!r}: {len(values)} values for "
            f"{len(answer_toks)} answer tokens"
        )
    spans = [
        AnnotatedSpan(
            start=answer_toks[i].char_start,
            end=answer_toks[j - 1].char_end,
            label=BINARY_LABEL,
        )
        for i, j in binary_runs(values)
    ]
    # a run of zero-width tokens covers no characters
    return normalize_spans(s for s in spans if s.end > s.start)


@dataclass(frozen=True)
class LengthStats:
    count: int
    mean: float
    median: float
    min: int
    max: int


def length_stats(corpus: Sequence[RagRecord],
                 tokenizer: OffsetTokenizer) -> LengthStats:
    """Packed (prompt + answer) token-length statistics, before truncation."""
    if not corpus:
        raise EmptyInputError("length_stats needs at least one record")
    lengths = [
        len(tokenizer.pack(tokenizer.encode(r.prompt), tokenizer.encode(r.answer)).input_ids)
        for r in corpus
    ]
    return LengthStats(
        count=len(lengths),
        mean=statistics.fmean(lengths),
        median=statistics.median(lengths),
        min=min(lengths),
        max=max(lengths),
    )


def save_labels(sequences: Iterable[TokenLabelSequence], path: str | Path) -> None:
    """Write label rows, one object per line: {"id", "input_ids", "labels"}."""
    with open(path, "w", encoding="utf-8") as f:
        for seq in sequences:
            row = {
                "id": seq.record_id,
                "input_ids": list(seq.input_ids),
                "labels": list(seq.labels),
            }
            f.write(json.dumps(row, ensure_ascii=False))
            f.write("\n")


def load_labels(path: str | Path) -> list[TokenLabelSequence]:
    """Read label rows back into trainable sequences (offsets not recovered)."""
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            row = json.loads(line)
            out.append(TokenLabelSequence.from_ids(row["id"], row["input_ids"], row["labels"]))
    return out
