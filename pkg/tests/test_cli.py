from __future__ import annotations

import json
from dataclasses import replace

import pytest

from halspan import align, corpus
from halspan.cli import main
from halspan.tokenizers import SimpleWordTokenizer

from synth import make_corpus

TOK_SPEC = "simple:vocab=2048"


def last_summary(capsys):
    out = capsys.readouterr().out.strip().splitlines()
    return json.loads(out[-1])


def write_corpus(tmp_path, records, name="corpus.jsonl"):
    path = tmp_path / name
    corpus.save_corpus(records, path)
    return path


@pytest.fixture
def small_corpus(tmp_path):
    return write_corpus(tmp_path, make_corpus(201, 12))


def test_translate_identity(tmp_path, small_corpus, capsys):
    out = tmp_path / "translated.jsonl"
    failures = tmp_path / "failures.jsonl"
    code = main([
        "translate", str(small_corpus), "--target-lang", "tr",
        "--out", str(out), "--failures-out", str(failures),
    ])
    assert code == 0
    summary = last_summary(capsys)
    assert summary["command"] == "translate"
    assert summary["failures"] == 0
    original = corpus.load_corpus(small_corpus)
    translated = corpus.load_corpus(out)
    assert translated == [replace(r, language="tr") for r in original]
    assert failures.read_text(encoding="utf-8") == ""


def test_bad_flags_exit_1(capsys):
    assert main(["translate", "whatever.jsonl"]) == 1  # --target-lang/--out missing
    assert "error: usage" in capsys.readouterr().err
    assert main(["no-such-command"]) == 1


def test_translate_missing_input(tmp_path, capsys):
    code = main([
        "translate", str(tmp_path / "nope.jsonl"), "--target-lang", "tr",
        "--out", str(tmp_path / "o.jsonl"),
    ])
    assert code == 1
    assert "error: usage" in capsys.readouterr().err


def test_translate_corrupting_backend(tmp_path, small_corpus, capsys):
    out = tmp_path / "translated.jsonl"
    failures = tmp_path / "failures.jsonl"
    code = main([
        "translate", str(small_corpus), "--target-lang", "tr",
        "--backend", "backends:corrupting",
        "--out", str(out), "--failures-out", str(failures),
    ])
    assert code == 2
    err = capsys.readouterr().err
    assert "error:" in err
    failure_rows = [json.loads(line) for line in failures.read_text("utf-8").splitlines()]
    # only records that actually carry spans can lose a marker
    with_spans = [r.id for r in corpus.load_corpus(small_corpus) if r.labels]
    assert [row["id"] for row in failure_rows] == with_spans
    assert all("protocol" in row["reason"] for row in failure_rows)


def test_translate_unreachable_endpoint(tmp_path, small_corpus, capsys):
    code = main([
        "translate", str(small_corpus), "--target-lang", "tr",
        "--backend", "http", "--endpoint", "http://127.0.0.1:9",
        "--model", "any", "--timeout", "0.5",
        "--out", str(tmp_path / "o.jsonl"),
    ])
    assert code == 3
    assert "error: transport" in capsys.readouterr().err


def test_build_labels(tmp_path, small_corpus, capsys):
    out = tmp_path / "labels.jsonl"
    code = main([
        "build-labels", str(small_corpus), "--tokenizer", TOK_SPEC,
        "--max-len", "256", "--out", str(out),
    ])
    assert code == 0
    summary = last_summary(capsys)
    assert summary["records"] == 12
    manifest = json.loads((tmp_path / "labels.jsonl.manifest.json").read_text("utf-8"))
    assert manifest["tokenizer"] == TOK_SPEC
    assert manifest["max_len"] == 256
    rows = [json.loads(line) for line in out.read_text("utf-8").splitlines()]
    assert all(set(row) == {"id", "input_ids", "labels"} for row in rows)
    assert all(
        set(row["labels"]) <= {-100, 0, 1} and len(row["labels"]) == len(row["input_ids"])
        for row in rows
    )


def test_build_labels_full_answer_span(tmp_path, capsys):
    record = make_corpus(7, 1)[0]
    record = replace(
        record,
        labels=(corpus.AnnotatedSpan(start=0, end=len(record.answer)),),
    )
    path = write_corpus(tmp_path, [record])
    out = tmp_path / "labels.jsonl"
    assert main(["build-labels", str(path), "--tokenizer", TOK_SPEC,
                 "--out", str(out)]) == 0
    row = json.loads(out.read_text("utf-8"))
    supervised = [lab for lab in row["labels"] if lab != -100]
    assert supervised and all(lab == 1 for lab in supervised)
    assert row["labels"][0] == -100  # leading special/prompt masked


def test_build_labels_overlong_answer(tmp_path, capsys):
    records = make_corpus(9, 2)
    records[1] = replace(records[1], answer=" ".join(f"w{i}" for i in range(80)), labels=())
    path = write_corpus(tmp_path, records)
    code = main([
        "build-labels", str(path), "--tokenizer", TOK_SPEC,
        "--max-len", "40", "--out", str(tmp_path / "labels.jsonl"),
    ])
    assert code == 2
    assert records[1].id in capsys.readouterr().err


def test_build_labels_deterministic(tmp_path, small_corpus, capsys):
    first = tmp_path / "a.jsonl"
    second = tmp_path / "b.jsonl"
    for out in (first, second):
        assert main(["build-labels", str(small_corpus), "--tokenizer", TOK_SPEC,
                     "--out", str(out)]) == 0
    assert first.read_bytes() == second.read_bytes()
    capsys.readouterr()


def run_pipeline(tmp_path, capsys, n_records=48, epochs=6, lr="1e-3"):
    """translate -> build-labels -> train -> predict -> evaluate, asserting exit 0."""
    raw = write_corpus(tmp_path, make_corpus(303, n_records), "raw.jsonl")
    translated = tmp_path / "translated.jsonl"
    labels = tmp_path / "labels.jsonl"
    model_dir = tmp_path / "model"
    predictions = tmp_path / "predictions.jsonl"
    report_dir = tmp_path / "reports"

    assert main(["translate", str(raw), "--target-lang", "tr",
                 "--out", str(translated)]) == 0
    assert main(["build-labels", str(translated), "--tokenizer", TOK_SPEC,
                 "--max-len", "256", "--out", str(labels)]) == 0
    assert main(["train", str(labels), "--model-dir", str(model_dir),
                 "--epochs", str(epochs), "--learning-rate", lr,
                 "--batch-size", "4", "--max-len", "256", "--seed", "7"]) == 0
    assert main(["predict", str(model_dir), str(translated),
                 "--out", str(predictions)]) == 0
    assert main(["evaluate", str(translated), str(predictions),
                 "--report-dir", str(report_dir)]) == 0
    return translated, labels, model_dir, predictions, report_dir


def test_full_pipeline_overfit(tmp_path, capsys):
    *_, report_dir = run_pipeline(tmp_path, capsys)
    summary = last_summary(capsys)
    assert summary["command"] == "evaluate"
    assert summary["token_f1_class1"] >= 0.95

    document = json.loads((report_dir / "report.json").read_text("utf-8"))
    by_key = {(r["level"], r["slice"]): r for r in document["reports"]}
    assert by_key[("token", "Whole")]["class_1"]["f1"] >= 0.95
    assert (report_dir / "report.csv").read_text("utf-8").startswith("level,slice")


def test_model_manifest_records_pipeline_identity(tmp_path, capsys):
    _, _, model_dir, predictions, _ = run_pipeline(
        tmp_path, capsys, n_records=8, epochs=1
    )
    manifest = json.loads((model_dir / "manifest.json").read_text("utf-8"))
    assert manifest["tokenizer"] == TOK_SPEC
    assert manifest["seed"] == 7
    assert manifest["label_map"] == {"0": "supported", "1": "hallucinated"}
    prediction_manifest = json.loads(
        (tmp_path / "predictions.jsonl.manifest.json").read_text("utf-8")
    )
    assert prediction_manifest["tokenizer"] == TOK_SPEC
    assert prediction_manifest["threshold"] == 0.5


def test_predict_rows_shape(tmp_path, capsys):
    translated, _, _, predictions, _ = run_pipeline(
        tmp_path, capsys, n_records=8, epochs=1
    )
    rows = [json.loads(line) for line in predictions.read_text("utf-8").splitlines()]
    assert [r["id"] for r in rows] == [r.id for r in corpus.load_corpus(translated)]
    for row in rows:
        assert set(row) == {"id", "spans", "token_probs"}
        for span in row["spans"]:
            assert set(span) == {"start", "end", "confidence"}
            assert span["end"] > span["start"]


def test_evaluate_perfect_predictions(tmp_path, capsys):
    records = make_corpus(404, 10)
    gold_path = write_corpus(tmp_path, records)
    tokenizer = SimpleWordTokenizer(vocab_size=2048)
    predictions = tmp_path / "predictions.jsonl"
    with open(predictions, "w", encoding="utf-8") as f:
        for record in records:
            seq = align.build_labels(record, tokenizer, 256)
            gold_labels = seq.answer_labels()
            spans = align.labels_to_spans(seq, gold_labels)
            f.write(json.dumps({
                "id": record.id,
                "spans": [{"start": s.start, "end": s.end, "confidence": 1.0}
                          for s in spans],
                "token_probs": [float(lab) for lab in gold_labels],
            }) + "\n")
    code = main([
        "evaluate", str(gold_path), str(predictions),
        "--report-dir", str(tmp_path / "reports"),
        "--tokenizer", TOK_SPEC, "--threshold", "0.5",
    ])
    assert code == 0
    summary = last_summary(capsys)
    assert summary["token_f1_class1"] == 1.0
    assert summary["token_macro_f1"] == 1.0


def test_evaluate_id_mismatch(tmp_path, capsys):
    records = make_corpus(11, 3)
    gold_path = write_corpus(tmp_path, records)
    predictions = tmp_path / "predictions.jsonl"
    with open(predictions, "w", encoding="utf-8") as f:
        f.write(json.dumps({"id": "synth-0000", "spans": []}) + "\n")
        f.write(json.dumps({"id": "stranger", "spans": []}) + "\n")
    code = main([
        "evaluate", str(gold_path), str(predictions),
        "--report-dir", str(tmp_path / "reports"), "--tokenizer", TOK_SPEC,
    ])
    assert code == 4
    err = capsys.readouterr().err
    assert "error: mismatch" in err and "stranger" in err


def test_train_tokenizer_mismatch(tmp_path, small_corpus, capsys):
    labels = tmp_path / "labels.jsonl"
    assert main(["build-labels", str(small_corpus), "--tokenizer", TOK_SPEC,
                 "--out", str(labels)]) == 0
    code = main([
        "train", str(labels), "--model-dir", str(tmp_path / "model"),
        "--tokenizer", "simple:vocab=512", "--epochs", "1",
    ])
    assert code == 4
    assert "error: mismatch" in capsys.readouterr().err


def test_config_file_overrides_flags(tmp_path, small_corpus, capsys):
    labels = tmp_path / "labels.jsonl"
    assert main(["build-labels", str(small_corpus), "--tokenizer", TOK_SPEC,
                 "--max-len", "256", "--out", str(labels)]) == 0
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"epochs": 1, "learning-rate": 1e-3, "max-len": 256}),
                      encoding="utf-8")
    code = main([
        "train", str(labels), "--model-dir", str(tmp_path / "model"),
        "--epochs", "6", "--config", str(config),
    ])
    assert code == 0
    assert last_summary(capsys)["epochs"] == 1


def test_evaluate_span_only_predictions(tmp_path, capsys):
    """Without token_probs, token values are reconstructed from span overlap."""
    raw = write_corpus(tmp_path, make_corpus(505, 10), "raw.jsonl")
    labels = tmp_path / "labels.jsonl"
    model_dir = tmp_path / "model"
    predictions = tmp_path / "predictions.jsonl"
    assert main(["build-labels", str(raw), "--tokenizer", TOK_SPEC,
                 "--max-len", "256", "--out", str(labels)]) == 0
    assert main(["train", str(labels), "--model-dir", str(model_dir),
                 "--epochs", "6", "--learning-rate", "1e-3",
                 "--max-len", "256"]) == 0
    assert main(["predict", str(model_dir), str(raw), "--out", str(predictions),
                 "--no-emit-token-probs"]) == 0
    rows = [json.loads(line) for line in predictions.read_text("utf-8").splitlines()]
    assert all("token_probs" not in row for row in rows)
    assert main(["evaluate", str(raw), str(predictions),
                 "--report-dir", str(tmp_path / "reports")]) == 0
    summary = last_summary(capsys)
    assert summary["token_f1_class1"] >= 0.95  # overfit model, span route


def test_evaluate_deterministic_reports(tmp_path, capsys):
    translated, _, _, predictions, first_dir = run_pipeline(
        tmp_path, capsys, n_records=8, epochs=1
    )
    second_dir = tmp_path / "reports2"
    assert main(["evaluate", str(translated), str(predictions),
                 "--report-dir", str(second_dir)]) == 0
    assert (first_dir / "report.json").read_bytes() == \
        (second_dir / "report.json").read_bytes()
    assert (first_dir / "report.csv").read_bytes() == \
        (second_dir / "report.csv").read_bytes()
