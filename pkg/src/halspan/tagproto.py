"""Inline HAL-marker codec for annotation-preserving translation.

Annotated spans are delimited with paired ``<HAL>``/``</HAL>`` markers so a
translator can carry them across languages; after translation the markers are
stripped and the spans recovered against the target-language text.  Markers
must strictly alternate open/close with no nesting, and a translation is only
accepted if it contains exactly as many pairs as the source.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .corpus import AnnotatedSpan, BINARY_LABEL
from .errors import ContractViolation, TagProtocolError

TAG_OPEN = "<HAL>"
TAG_CLOSE = "</HAL>"

_MARKER_RE = re.compile(r"</?HAL>")

# Instruction template sent to the translation backend, with
# {source_lang}/{target_lang} placeholders.  Versioned so transcripts can name
# the exact wording they were produced with.
CORE_TRANSLATION_PROMPT_NAME = "core_translation_prompt"
CORE_TRANSLATION_PROMPT_VERSION = 1
CORE_TRANSLATION_PROMPT = (
    "Translate the following text from {source_lang} to {target_lang}. If the "
    "original text contains <HAL> tags, translate the content inside <HAL> tags "
    "and ensure the number of the <HAL> tags remain exactly the same in the "
    "output. If the original text does not contain <HAL> tags, just translate "
    "the text. Do NOT add any <HAL> tags if they were not in the original text. "
    "Do NOT remove any <HAL> tags that were in the original text. Do not "
    "include any additional sentences summarizing or explaining the "
    "translation. Your output should be just the translated text, nothing else."
)


@dataclass(frozen=True)
class TaggedText:
    """Text containing zero or more well-formed, non-nested marker pairs."""

    text: str
    pair_count: int

    @classmethod
    def from_text(cls, text: str) -> "TaggedText":
        """Parse and validate arbitrary text; raise TagProtocolError if malformed."""
        pairs = _scan_pairs(text)
        return cls(text=text, pair_count=len(pairs))


def _scan_pairs(text: str) -> list[tuple[int, int, int, int]]:
    """Return (open_start, open_end, close_start, close_end) for each pair.

    Raises TagProtocolError, carrying the offending character position, when
    markers are nested, misordered, or unbalanced.
    """
    pairs = []
    open_match: re.Match | None = None
    for m in _MARKER_RE.finditer(text):
        if m.group() == TAG_OPEN:
            if open_match is not None:
                raise TagProtocolError(
                    f"nested open marker at position {m.start()}", position=m.start()
                )
            open_match = m
        else:
            if open_match is None:
                raise TagProtocolError(
                    f"close marker without open at position {m.start()}", position=m.start()
                )
            pairs.append((open_match.start(), open_match.end(), m.start(), m.end()))
            open_match = None
    if open_match is not None:
        raise TagProtocolError(
            f"unclosed marker at position {open_match.start()}", position=open_match.start()
        )
    return pairs


def marker_count(text: str) -> int:
    """Number of marker substrings (open or close) present, well-formed or not."""
    return len(_MARKER_RE.findall(text))


def inject_tags(answer: str, spans: list[AnnotatedSpan]) -> TaggedText:
    """Wrap each span of the answer in markers.

    Spans must be normalized: sorted, non-overlapping, and in bounds (see
    corpus.normalize_spans); anything else raises ContractViolation.  So does
    an answer that already contains literal markers, since the codec could not
    tell them apart from injected ones.  All characters outside the markers
    are preserved exactly.
    """
    if marker_count(answer) != 0:
        raise ContractViolation("answer text already contains marker substrings")
    prev_end = 0
    for span in spans:
        if span.start < prev_end:
            raise ContractViolation(
                f"spans not sorted/non-overlapping at ({span.start}, {span.end}); "
                "normalize_spans first"
            )
        if not (0 <= span.start < span.end <= len(answer)):
            raise ContractViolation(
                f"span ({span.start}, {span.end}) out of bounds for answer "
                f"of length {len(answer)}"
            )
        prev_end = span.end

    parts: list[str] = []
    cursor = 0
    for span in spans:
        parts.append(answer[cursor:span.start])
        parts.append(TAG_OPEN)
        parts.append(answer[span.start:span.end])
        parts.append(TAG_CLOSE)
        cursor = span.end
    parts.append(answer[cursor:])
    return TaggedText(text="".join(parts), pair_count=len(spans))


def validate_tags(candidate: str, expected_pairs: int) -> bool:
    """True iff candidate holds exactly ``expected_pairs`` well-formed pairs.

    Total: never raises.  Stray, nested, or misordered markers and any count
    mismatch all yield False.
    """
    try:
        pairs = _scan_pairs(candidate)
    except TagProtocolError:
        return False
    return len(pairs) == expected_pairs


def extract_spans(tagged: TaggedText | str) -> tuple[str, list[AnnotatedSpan]]:
    """Strip markers and recover the spans they delimited.

    Offsets are computed against the stripped text, so
    ``inject_tags(*extract_spans(t))`` reproduces ``t.text`` exactly.
    Recovered spans carry the binary label; category labels, if any, are
    reattached by the caller (see translate.translate_record).
    """
    text = tagged.text if isinstance(tagged, TaggedText) else tagged
    pairs = _scan_pairs(text)

    spans: list[AnnotatedSpan] = []
    stripped_parts: list[str] = []
    cursor = 0
    removed = 0
    for open_start, open_end, close_start, close_end in pairs:
        stripped_parts.append(text[cursor:open_start])
        stripped_parts.append(text[open_end:close_start])
        start = open_start - removed
        removed += open_end - open_start
        end = close_start - removed
        removed += close_end - close_start
        if end > start:
            spans.append(AnnotatedSpan(start=start, end=end, label=BINARY_LABEL))
        cursor = close_end
    stripped_parts.append(text[cursor:])
    return "".join(stripped_parts), spans
