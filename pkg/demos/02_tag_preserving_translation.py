"""Walkthrough: carrying span annotations through machine translation.

Annotated stretches are wrapped in <HAL></HAL> markers, the tagged text is
sent to a translation backend, the output is only accepted if every marker
pair survived, and the spans are recovered against the translated text.

Run:  python demos/02_tag_preserving_translation.py
"""

from halspan import AnnotatedSpan, RagRecord, extract_spans, inject_tags, validate_tags
from halspan.tagproto import CORE_TRANSLATION_PROMPT
from halspan.translate import CallableBackend, RetryPolicy, translate_record
from halspan.errors import TranslationFailure

answer = "The factory opened in 1952 and makes 4,800 cars a day."
spans = [AnnotatedSpan(22, 26), AnnotatedSpan(37, 42)]

# 1. inject markers around the annotated offsets
tagged = inject_tags(answer, spans)
print("tagged answer:")
print(" ", tagged.text)

# 2. this is the instruction a real LLM backend receives (plus the text)
print("\nbackend instruction:")
print(" ", CORE_TRANSLATION_PROMPT.format(source_lang="English",
                                          target_lang="Turkish")[:100], "...")

# 3. a toy "translator" that reverses word order but keeps marker pairs intact
def scramble(text, source_lang, target_lang):
    return " ".join(reversed(text.split(" ")))

translated = scramble(tagged.text, "en", "tr")
print("\nscrambled translation:", translated)
print("marker pairs preserved:", validate_tags(translated, tagged.pair_count))

# 4. recover the spans against the translated text
new_answer, new_spans = extract_spans(translated)
print("recovered answer:", new_answer)
for span in new_spans:
    print(f"  recovered span ({span.start}, {span.end}): "
          f"{new_answer[span.start:span.end]!r}")

# Whole-record translation composes the two protocols (answer with markers,
# prompt translated whole) and re-attaches category labels positionally.
record = RagRecord(
    id="demo-1", task_type="Data2txt", split="train", language="en",
    prompt="Write a review from the structured data.", answer=answer,
    labels=(
        AnnotatedSpan(22, 26, "Evident Conflict"),
        AnnotatedSpan(37, 42, "Evident Baseless Info"),
    ),
)
out = translate_record(record, CallableBackend(scramble), "tr")
print("\ntranslated record language:", out.language)
print("labels carried over:", [(s.start, s.end, s.label) for s in out.labels])

# A backend that eats markers is rejected after the retry budget; the record
# is reported instead of passed through with corrupt offsets.
def marker_eater(text, source_lang, target_lang):
    return text.replace("</HAL>", "", 1)

try:
    translate_record(record, CallableBackend(marker_eater), "tr",
                     policy=RetryPolicy(max_attempts=3))
except TranslationFailure as e:
    print("\nmarker-eating backend correctly rejected:")
    print(" ", e)
