"""Walkthrough: spans -> token labels -> training -> detection -> metrics.

Builds a small synthetic corpus whose hallucinated stretches use a giveaway
vocabulary, trains the built-in toy encoder on it, detects spans on the train
set, and prints the sliced metrics report.  CPU-only, under a minute.

Run:  python demos/03_train_detect_evaluate.py
"""

import random

from halspan import (
    AnnotatedSpan,
    EvalInstance,
    RagRecord,
    SimpleWordTokenizer,
    TrainConfig,
    build_labels,
    detect_spans,
    predict,
    report_rows,
    sliced_report,
    train,
)

REAL = "the report states that revenue grew this quarter according to the filing".split()
FAKE = ["zorblat", "quexil", "vantor", "mizzen", "crelb"]

rng = random.Random(7)


def synth_record(i):
    words, spans, pos = [], [], 0
    for _ in range(rng.randint(6, 14)):
        if words:
            pos += 1
        if rng.random() < 0.3:
            w = rng.choice(FAKE)
            spans.append(AnnotatedSpan(pos, pos + len(w)))
        else:
            w = rng.choice(REAL)
        words.append(w)
        pos += len(w)
    return RagRecord(
        id=f"demo-{i:03d}", task_type=rng.choice(("QA", "Data2txt", "Summary")),
        split="train", language="en",
        prompt="summarize the passage", answer=" ".join(words),
        labels=tuple(spans),
    )


corpus = [synth_record(i) for i in range(120)]
tokenizer = SimpleWordTokenizer(vocab_size=2048)

# character spans -> per-token labels over the packed (prompt, answer) input;
# prompt and special tokens carry the -100 ignore sentinel
sequences = [build_labels(r, tokenizer, max_len=128) for r in corpus]
one = sequences[0]
print("packed length:", len(one), "answer tokens:", len(one.answer_token_indices()))
print("labels head:", one.labels[:12], "...")

config = TrainConfig(epochs=6, learning_rate=1e-3, batch_size=4, max_len=128, seed=42)
model, losses = train(sequences, config)
print("\nper-epoch loss:", [round(x, 4) for x in losses])

# per-token hallucination probabilities, then thresholded character spans
predictions = predict(model, sequences)
sample = predictions[0]
spans = detect_spans(sample, threshold=0.5)
print(f"\n{sample.id}: {len(spans)} detected span(s)")
for s in spans:
    print(f"  ({s.start:>3},{s.end:>3}) conf={s.confidence:.3f} "
          f"text={corpus[0].answer[s.start:s.end]!r}")

# token- and example-level reports, sliced by task type plus the whole corpus
instances = [
    EvalInstance(
        record=record,
        token_gold=tuple(seq.answer_labels()),
        token_probs=prediction.probs,
        spans=tuple(detect_spans(prediction, 0.5)),
    )
    for record, seq, prediction in zip(corpus, sequences, predictions)
]
sliced = sliced_report(instances, threshold=0.5)
print("\nlevel    slice      class1-F1  macro-F1   AUROC")
for row in report_rows(sliced):
    f1 = row["class1_f1"]
    macro = row["macro_f1"]
    auroc = row["auroc"]
    print(f"{row['level']:<8} {row['slice']:<10} "
          f"{f1 if f1 is None else round(f1, 4)!s:>9}  "
          f"{macro if macro is None else round(macro, 4)!s:>8}  "
          f"{auroc if auroc is None else round(auroc, 4)!s:>6}")
