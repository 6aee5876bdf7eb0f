"""Offset-producing tokenizers for the alignment layer.

SimpleWordTokenizer is a dependency-free word/punctuation splitter with a
stable hashed vocabulary, good enough for desk-scale training and tests.
HFTokenizerAdapter wraps any fast Hugging Face tokenizer behind the same
protocol.  Tokenizers are named by spec strings ("simple", "simple:vocab=N",
"hf:<model>") which artifact manifests record and compare.
"""

from __future__ import annotations

import hashlib
import re

from .align import Encoding, OffsetToken, PackedSequence
from .errors import ContractViolation

PAD_ID = 0
CLS_ID = 1
SEP_ID = 2
UNK_ID = 3
_N_RESERVED = 4

_WORD_RE = re.compile(r"\w+|[^\w\s]")


class SimpleWordTokenizer:
    """Splits on words and punctuation; ids come from a stable hash.

    Packing layout is [CLS] prompt [SEP] answer [SEP].  Hashing makes the
    vocabulary deterministic across processes, which keeps exported label
    files byte-identical for a given corpus.
    """

    def __init__(self, vocab_size: int = 8192):
        if vocab_size <= _N_RESERVED:
            raise ContractViolation(f"vocab_size must exceed {_N_RESERVED}")
        self.vocab_size = vocab_size

    @property
    def spec(self) -> str:
        return f"simple:vocab={self.vocab_size}"

    def token_id(self, token: str) -> int:
        digest = hashlib.md5(token.encode("utf-8")).digest()
        bucket = int.from_bytes(digest[:8], "big") % (self.vocab_size - _N_RESERVED)
        return _N_RESERVED + bucket

    def encode(self, text: str) -> Encoding:
        ids = []
        offsets = []
        for m in _WORD_RE.finditer(text):
            ids.append(self.token_id(m.group()))
            offsets.append((m.start(), m.end()))
        return Encoding(ids=tuple(ids), offsets=tuple(offsets))

    def pack(self, prompt: Encoding, answer: Encoding) -> PackedSequence:
        input_ids = (CLS_ID,) + prompt.ids + (SEP_ID,) + answer.ids + (SEP_ID,)
        tokens: list[OffsetToken] = [OffsetToken(0, 0, 0, is_special=True)]
        for start, end in prompt.offsets:
            tokens.append(OffsetToken(len(tokens), start, end))
        tokens.append(OffsetToken(len(tokens), 0, 0, is_special=True))
        answer_start = len(tokens)
        for start, end in answer.offsets:
            tokens.append(OffsetToken(len(tokens), start, end))
        answer_range = (answer_start, len(tokens))
        tokens.append(OffsetToken(len(tokens), 0, 0, is_special=True))
        return PackedSequence(
            input_ids=input_ids, tokens=tuple(tokens), answer_range=answer_range
        )


class HFTokenizerAdapter:
    """Adapts a fast Hugging Face tokenizer to the OffsetTokenizer protocol.

    The pair special-token template (prefix, infix between segments, suffix)
    is read off one probe encoding at construction, so packing reproduces the
    layout the backbone was pretrained with while segments stay independently
    encodable for prompt-side truncation.
    """

    def __init__(self, name_or_path: str, **kwargs):
        from transformers import AutoTokenizer  # optional dependency

        self._name = name_or_path
        self._tok = AutoTokenizer.from_pretrained(name_or_path, use_fast=True, **kwargs)
        if not self._tok.is_fast:
            raise ContractViolation(
                f"{name_or_path}: a fast tokenizer is required for character offsets"
            )
        self._prefix, self._infix, self._suffix = self._probe_pair_template()

    def _probe_pair_template(self) -> tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]:
        for a, b in (("a", "b"), ("hello", "world")):
            probe = self._tok(a, b)
            seq_ids = probe.sequence_ids()
            ids = probe["input_ids"]
            first = [i for i, s in enumerate(seq_ids) if s == 0]
            second = [i for i, s in enumerate(seq_ids) if s == 1]
            if first and second:
                return (
                    tuple(ids[:first[0]]),
                    tuple(ids[first[-1] + 1:second[0]]),
                    tuple(ids[second[-1] + 1:]),
                )
        raise ContractViolation(
            f"{self._name}: could not derive the pair special-token template"
        )

    @property
    def spec(self) -> str:
        return f"hf:{self._name}"

    @property
    def vocab_size(self) -> int:
        return len(self._tok)

    def encode(self, text: str) -> Encoding:
        enc = self._tok(text, add_special_tokens=False, return_offsets_mapping=True)
        return Encoding(
            ids=tuple(enc["input_ids"]),
            offsets=tuple((s, e) for s, e in enc["offset_mapping"]),
        )

    def pack(self, prompt: Encoding, answer: Encoding) -> PackedSequence:
        input_ids = self._prefix + prompt.ids + self._infix + answer.ids + self._suffix
        tokens: list[OffsetToken] = []
        for _ in self._prefix:
            tokens.append(OffsetToken(len(tokens), 0, 0, is_special=True))
        for start, end in prompt.offsets:
            tokens.append(OffsetToken(len(tokens), start, end))
        for _ in self._infix:
            tokens.append(OffsetToken(len(tokens), 0, 0, is_special=True))
        answer_start = len(tokens)
        for start, end in answer.offsets:
            tokens.append(OffsetToken(len(tokens), start, end))
        answer_range = (answer_start, len(tokens))
        for _ in self._suffix:
            tokens.append(OffsetToken(len(tokens), 0, 0, is_special=True))
        return PackedSequence(
            input_ids=tuple(input_ids), tokens=tuple(tokens), answer_range=answer_range
        )


def get_tokenizer(spec: str):
    """Resolve a tokenizer spec string to a tokenizer instance."""
    if spec == "simple":
        return SimpleWordTokenizer()
    if spec.startswith("simple:vocab="):
        return SimpleWordTokenizer(vocab_size=int(spec.split("=", 1)[1]))
    if spec.startswith("hf:"):
        return HFTokenizerAdapter(spec[3:])
    raise ContractViolation(f"unknown tokenizer spec {spec!r}")
