"""Walkthrough: the span-annotated corpus format and its core operations.

Creates a few records, saves them as JSONL, loads them back, and shows span
normalization and the binary label projection.

Run:  python demos/01_annotated_corpus.py
"""

import tempfile
from pathlib import Path

from halspan import (
    AnnotatedSpan,
    RagRecord,
    load_corpus,
    normalize_spans,
    save_corpus,
    to_binary,
)

# One QA record whose answer contains two annotated stretches.  Offsets are
# code points into the answer, half-open.
answer = "The plant opened in 1952 and employs 4,800 people across nine sites."
record = RagRecord(
    id="demo-qa-1",
    task_type="QA",
    split="train",
    language="en",
    prompt="When did the plant open? Context: The plant opened in 1962.",
    answer=answer,
    labels=(
        AnnotatedSpan(20, 24, "Evident Conflict", text="1952"),
        AnnotatedSpan(37, 48, "Evident Baseless Info", text="4,800 peopl"),
    ),
)

print("record:", record.id)
for span in record.labels:
    print(f"  span ({span.start:>3},{span.end:>3}) {span.label!r}: "
          f"{answer[span.start:span.end]!r}")

# Round-trip through the JSONL schema: one object per line, byte-exact.
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "corpus.jsonl"
    save_corpus([record], path)
    print("\nserialized line:")
    print(" ", path.read_text(encoding="utf-8").strip()[:120], "...")
    reloaded = load_corpus(path)
    assert reloaded == [record]
    print("round-trip exact:", reloaded == [record])

# Overlapping annotator spans are merged before anything downstream sees
# them; the earliest-starting span donates the label.
messy = [
    AnnotatedSpan(15, 30, "Subtle Conflict"),
    AnnotatedSpan(25, 40, "Evident Conflict"),
    AnnotatedSpan(41, 50, "Subtle Baseless Info"),
]
print("\nnormalize_spans:")
for span in normalize_spans(messy):
    print(f"  ({span.start}, {span.end}) {span.label!r}")

# The training task is binary: every category collapses to "hallucinated",
# offsets untouched.
binary = to_binary(record)
print("\nto_binary labels:", [s.label for s in binary.labels])
print("offsets unchanged:", [(s.start, s.end) for s in binary.labels])
