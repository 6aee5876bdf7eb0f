"""Batch translation through a pluggable backend, preserving span annotations.

Answers travel through the marker protocol (inject -> translate -> validate ->
extract); prompts are translated whole, instructions and structured content
alike.  A record whose markers do not survive the retry budget is excluded and
reported, never passed through silently.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Literal, Protocol

import requests

from .corpus import AnnotatedSpan, RagRecord, normalize_spans
from .errors import ContractViolation, PipelineError, TransportError, TranslationFailure
from .tagproto import (
    CORE_TRANSLATION_PROMPT,
    TaggedText,
    extract_spans,
    inject_tags,
    marker_count,
    validate_tags,
)

logger = logging.getLogger(__name__)

API_KEY_ENV = "HALSPAN_API_KEY"

DEFAULT_PARALLELISM = 30


class TranslationBackend(Protocol):
    """One call mapping (text, source_lang, target_lang) to translated text."""

    def translate(self, text: str, source_lang: str, target_lang: str) -> str: ...


@dataclass(frozen=True)
class TranslationRequest:
    source_text: TaggedText | str
    source_lang: str
    target_lang: str
    kind: Literal["answer", "prompt"]

    def __post_init__(self):
        if self.source_lang == self.target_lang:
            raise ContractViolation(
                f"source and target language are both {self.source_lang!r}"
            )

    @property
    def text(self) -> str:
        return self.source_text.text if isinstance(self.source_text, TaggedText) else self.source_text

    @property
    def expected_pairs(self) -> int:
        return self.source_text.pair_count if isinstance(self.source_text, TaggedText) else 0


@dataclass(frozen=True)
class TranslationOutcome:
    translated: str
    attempts: int
    valid: bool
    failure_reason: str | None = None


@dataclass(frozen=True)
class RetryPolicy:
    """Re-issue the same request on marker violations, then give up."""

    max_attempts: int = 3

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ContractViolation("max_attempts must be >= 1")


class IdentityBackend:
    """Returns the input verbatim.  Useful for tests and pipeline dry runs."""

    def translate(self, text: str, source_lang: str, target_lang: str) -> str:
        return text


class CallableBackend:
    """Adapts a plain (text, source_lang, target_lang) -> str function."""

    def __init__(self, fn: Callable[[str, str, str], str]):
        self._fn = fn

    def translate(self, text: str, source_lang: str, target_lang: str) -> str:
        return self._fn(text, source_lang, target_lang)


class OpenAICompatBackend:
    """Chat-completions backend (vLLM and friends speak this protocol).

    The instruction template is prepended to the text; the endpoint, model
    name, and timeout come from arguments or config, the API key only from the
    HALSPAN_API_KEY environment variable.
    """

    def __init__(self, endpoint: str, model: str, timeout: float = 120.0,
                 temperature: float = 0.0):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.timeout = timeout
        self.temperature = temperature

    def translate(self, text: str, source_lang: str, target_lang: str) -> str:
        instruction = CORE_TRANSLATION_PROMPT.format(
            source_lang=source_lang, target_lang=target_lang
        )
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(API_KEY_ENV)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": f"{instruction}\n\n{text}"}],
            "temperature": self.temperature,
        }
        try:
            resp = requests.post(
                f"{self.endpoint}/chat/completions",
                json=payload, headers=headers, timeout=self.timeout,
            )
            resp.raise_for_status()
            body = resp.json()
            return body["choices"][0]["message"]["content"]
        except requests.RequestException as e:
            raise TransportError(f"translation endpoint failed: {e}") from e
        except (KeyError, IndexError, ValueError) as e:
            raise TransportError(f"malformed translation response: {e}") from e


def translate_text(backend: TranslationBackend, request: TranslationRequest,
                   policy: RetryPolicy = RetryPolicy()) -> TranslationOutcome:
    """Translate one request, retrying until the marker invariant holds.

    ``valid`` in the outcome means the translated text carries exactly the
    expected number of well-formed pairs and no pair collapsed to an empty
    span.  Transport errors propagate immediately; they are not retried.
    """
    expected = request.expected_pairs
    last = ""
    reason = None
    for attempt in range(1, policy.max_attempts + 1):
        last = backend.translate(request.text, request.source_lang, request.target_lang)
        if not validate_tags(last, expected):
            reason = (
                f"marker invariant violated ({marker_count(last)} markers, "
                f"expected {expected} pairs)"
            )
            continue
        if expected and len(extract_spans(last)[1]) != expected:
            reason = "an annotated span collapsed to empty in translation"
            continue
        return TranslationOutcome(translated=last, attempts=attempt, valid=True)
    return TranslationOutcome(
        translated=last, attempts=policy.max_attempts, valid=False, failure_reason=reason
    )


def translate_record(record: RagRecord, backend: TranslationBackend, target_lang: str,
                     policy: RetryPolicy = RetryPolicy(),
                     source_lang: str | None = None) -> RagRecord:
    """Translate one record, recovering target-language span offsets.

    Spans are normalized before marker injection.  Category labels (and the
    presence of per-span text/extra fields) are carried over positionally:
    marker count and order are preserved by the protocol, so span i of the
    source corresponds to span i of the translation.

    Raises TranslationFailure when markers do not survive the retry budget and
    TransportError when the backend itself fails.
    """
    src = source_lang or record.language
    spans = normalize_spans(record.labels)
    tagged = inject_tags(record.answer, spans)

    answer_outcome = translate_text(
        backend, TranslationRequest(tagged, src, target_lang, kind="answer"), policy
    )
    if not answer_outcome.valid:
        raise TranslationFailure(
            f"record {record.id!r}: {answer_outcome.failure_reason} "
            f"after {answer_outcome.attempts} attempts",
            record_id=record.id,
        )

    # Prompts normally contain no markers; if the source prompt is marker-free
    # the backend must not invent any.
    prompt_source: TaggedText | str
    if marker_count(record.prompt) == 0:
        prompt_source = TaggedText(text=record.prompt, pair_count=0)
    else:
        prompt_source = record.prompt  # odd source; skip marker validation
    prompt_outcome = translate_text(
        backend, TranslationRequest(prompt_source, src, target_lang, kind="prompt"), policy
    )
    if not prompt_outcome.valid:
        raise TranslationFailure(
            f"record {record.id!r}: prompt translation: {prompt_outcome.failure_reason} "
            f"after {prompt_outcome.attempts} attempts",
            record_id=record.id,
        )

    new_answer, recovered = extract_spans(answer_outcome.translated)
    new_spans = tuple(
        AnnotatedSpan(
            start=r.start,
            end=r.end,
            label=s.label,
            text=new_answer[r.start:r.end] if s.text is not None else None,
            extra=s.extra,
        )
        for r, s in zip(recovered, spans)
    )
    return replace(
        record,
        prompt=prompt_outcome.translated,
        answer=new_answer,
        labels=new_spans,
        language=target_lang,
    )


def translate_corpus(records: list[RagRecord], backend: TranslationBackend,
                     target_lang: str, parallelism: int = DEFAULT_PARALLELISM,
                     policy: RetryPolicy = RetryPolicy(),
                     source_lang: str | None = None,
                     ) -> tuple[list[RagRecord], list[tuple[str, str]]]:
    """Translate a corpus with bounded concurrency and per-record isolation.

    Returns (translated, failures); every input record lands in exactly one of
    the two, and both keep input order.  A failure entry is (record id, reason)
    with the reason prefixed "transport:" or "protocol:".
    """
    if parallelism < 1:
        raise ContractViolation("parallelism must be >= 1")
    if not records:
        return [], []

    def work(record: RagRecord) -> RagRecord:
        return translate_record(record, backend, target_lang, policy, source_lang)

    translated: list[RagRecord] = []
    failures: list[tuple[str, str]] = []
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        futures = [pool.submit(work, r) for r in records]
        for record, future in zip(records, futures):
            try:
                translated.append(future.result())
            except TransportError as e:
                logger.warning("record %r excluded: transport: %s", record.id, e)
                failures.append((record.id, f"transport: {e}"))
            except TranslationFailure as e:
                logger.warning("record %r excluded: protocol: %s", record.id, e)
                failures.append((record.id, f"protocol: {e}"))
            except PipelineError as e:
                logger.warning("record %r excluded: %s", record.id, e)
                failures.append((record.id, str(e)))
    return translated, failures
