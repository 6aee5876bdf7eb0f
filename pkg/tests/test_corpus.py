from __future__ import annotations

import json
import logging

import pytest
from hypothesis import given, settings, strategies as st

from halspan.corpus import (
    AnnotatedSpan,
    BINARY_LABEL,
    CATEGORY_LABELS,
    RagRecord,
    load_corpus,
    normalize_spans,
    save_corpus,
    to_binary,
)
from halspan.errors import CorpusParseError, CorpusValidationError

from oracles import covered_chars, coverage_runs


def write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def test_load_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    assert load_corpus(path) == []


def test_load_translated_summary_record(tmp_path, turkish_summary_record):
    record = turkish_summary_record
    line = json.dumps({
        "id": record.id,
        "task_type": "Summary",
        "split": "train",
        "language": "tr",
        "prompt": record.prompt,
        "answer": record.answer,
        "labels": [
            {"start": 545, "end": 596, "label": "Evident Conflict"},
            {"start": 824, "end": 906, "label": "Evident Baseless Info"},
        ],
    }, ensure_ascii=False)
    path = tmp_path / "corpus.jsonl"
    write_lines(path, [line])

    loaded = load_corpus(path)
    assert len(loaded) == 1
    got = loaded[0]
    assert "en az bir ay önce" in got.answer
    assert len(got.labels) == 2
    assert (got.labels[0].start, got.labels[0].end) == (545, 596)
    assert got.labels[0].label == "Evident Conflict"
    assert (got.labels[1].start, got.labels[1].end) == (824, 906)
    assert got.labels[1].label == "Evident Baseless Info"
    assert (got.task_type, got.split, got.language) == ("Summary", "train", "tr")


def test_load_rejects_out_of_bounds_span(tmp_path):
    line = json.dumps({
        "id": "bad-span", "task_type": "QA", "split": "test", "language": "en",
        "prompt": "p", "answer": "0123456789",
        "labels": [{"start": 5, "end": 50, "label": "hallucinated"}],
    })
    path = tmp_path / "corpus.jsonl"
    write_lines(path, [line])
    with pytest.raises(CorpusValidationError) as exc:
        load_corpus(path)
    assert "bad-span" in str(exc.value)
    assert exc.value.record_id == "bad-span"


def test_load_rejects_span_text_mismatch(tmp_path):
    line = json.dumps({
        "id": "r1", "task_type": "QA", "split": "test", "language": "en",
        "prompt": "p", "answer": "abcdef",
        "labels": [{"start": 0, "end": 3, "label": "hallucinated", "text": "xyz"}],
    })
    path = tmp_path / "corpus.jsonl"
    write_lines(path, [line])
    with pytest.raises(CorpusValidationError):
        load_corpus(path)


def test_load_malformed_line_names_line_number(tmp_path):
    good = json.dumps({
        "id": "ok", "task_type": "QA", "split": "test", "language": "en",
        "prompt": "p", "answer": "a", "labels": [],
    })
    path = tmp_path / "corpus.jsonl"
    write_lines(path, [good, "{not json"])
    with pytest.raises(CorpusParseError) as exc:
        load_corpus(path)
    assert exc.value.line_number == 2
    assert "line 2" in str(exc.value)


def test_load_missing_field(tmp_path):
    path = tmp_path / "corpus.jsonl"
    write_lines(path, [json.dumps({"id": "x", "task_type": "QA"})])
    with pytest.raises(CorpusValidationError):
        load_corpus(path)


def test_load_bad_task_type(tmp_path):
    line = json.dumps({
        "id": "x", "task_type": "Chat", "split": "test", "language": "en",
        "prompt": "p", "answer": "a", "labels": [],
    })
    path = tmp_path / "corpus.jsonl"
    write_lines(path, [line])
    with pytest.raises(CorpusValidationError):
        load_corpus(path)


def test_unknown_label_warns_then_strict_rejects(tmp_path, caplog):
    line = json.dumps({
        "id": "drifty", "task_type": "QA", "split": "test", "language": "en",
        "prompt": "p", "answer": "abcdef",
        "labels": [{"start": 0, "end": 3, "label": "Konflikt"}],
    })
    path = tmp_path / "corpus.jsonl"
    write_lines(path, [line])
    with caplog.at_level(logging.WARNING):
        records = load_corpus(path)
    assert records[0].labels[0].label == "Konflikt"
    assert any("Konflikt" in m for m in caplog.messages)
    with pytest.raises(CorpusValidationError):
        load_corpus(path, strict=True)


def test_span_type_alias_accepted(tmp_path):
    # some source-language distributions name the category field "type"
    line = json.dumps({
        "id": "x", "task_type": "QA", "split": "test", "language": "en",
        "prompt": "p", "answer": "abcdef",
        "labels": [{"start": 0, "end": 3, "type": "Evident Conflict"}],
    })
    path = tmp_path / "corpus.jsonl"
    write_lines(path, [line])
    assert load_corpus(path)[0].labels[0].label == "Evident Conflict"


# -- normalize_spans --


def spans_of(pairs):
    return [AnnotatedSpan(start=s, end=e, label=lab) for s, e, lab in pairs]


def test_normalize_empty():
    assert normalize_spans([]) == []


def test_normalize_merges_overlap():
    merged = normalize_spans(spans_of([(10, 20, "A"), (15, 25, "B")]))
    assert [(s.start, s.end) for s in merged] == coverage_runs([(10, 20), (15, 25)])
    assert merged == [AnnotatedSpan(start=10, end=25, label="A")]


def test_normalize_preserves_gap():
    spans = spans_of([(5, 8, "A"), (9, 12, "B")])
    assert normalize_spans(spans) == spans
    assert [(s.start, s.end) for s in spans] == coverage_runs([(5, 8), (9, 12)])


def test_normalize_merges_touching():
    merged = normalize_spans(spans_of([(5, 8, "A"), (8, 12, "B")]))
    assert [(s.start, s.end) for s in merged] == coverage_runs([(5, 8), (8, 12)])
    assert merged[0].label == "A"


def test_normalize_contained_span_keeps_outer_text():
    outer = AnnotatedSpan(start=0, end=10, label="A", text="0123456789")
    inner = AnnotatedSpan(start=2, end=5, label="B")
    assert normalize_spans([inner, outer]) == [outer]


@st.composite
def raw_span_lists(draw):
    length = draw(st.integers(min_value=1, max_value=50))
    n = draw(st.integers(min_value=0, max_value=8))
    spans = []
    for _ in range(n):
        start = draw(st.integers(min_value=0, max_value=length - 1))
        end = draw(st.integers(min_value=start + 1, max_value=length))
        label = draw(st.sampled_from(CATEGORY_LABELS + (BINARY_LABEL,)))
        spans.append(AnnotatedSpan(start=start, end=end, label=label))
    return spans


@given(raw_span_lists())
def test_normalize_idempotent_and_coverage_preserving(spans):
    once = normalize_spans(spans)
    assert normalize_spans(once) == once
    assert covered_chars((s.start, s.end) for s in once) == \
        covered_chars((s.start, s.end) for s in spans)
    for a, b in zip(once, once[1:]):
        assert a.end < b.start  # sorted, disjoint, not even touching


@given(raw_span_lists())
def test_normalize_takes_earliest_label(spans):
    for merged in normalize_spans(spans):
        constituents = [s for s in spans if s.start == merged.start]
        assert merged.label in {s.label for s in constituents}


# -- to_binary --


def make_record(answer, pairs, **overrides):
    fields = dict(
        id="r", task_type="QA", split="train", language="en",
        prompt="p", answer=answer, labels=tuple(spans_of(pairs)),
    )
    fields.update(overrides)
    return RagRecord(**fields)


def test_to_binary_no_spans_is_identity():
    record = make_record("abc", [])
    assert to_binary(record) == record


def test_to_binary_preserves_offsets(turkish_summary_record):
    binary = to_binary(turkish_summary_record)
    assert [(s.start, s.end) for s in binary.labels] == [(545, 596), (824, 906)]
    assert all(s.label == BINARY_LABEL for s in binary.labels)
    assert binary.answer == turkish_summary_record.answer
    assert binary.id == turkish_summary_record.id


def test_to_binary_total_over_all_categories():
    pairs = [(i * 3, i * 3 + 2, lab) for i, lab in enumerate(CATEGORY_LABELS)]
    record = make_record("x" * 20, pairs)
    binary = to_binary(record)
    assert len(binary.labels) == 4
    assert {s.label for s in binary.labels} == {BINARY_LABEL}
    assert [(s.start, s.end) for s in binary.labels] == [(s, e) for s, e, _ in pairs]


# -- round trip --


def test_save_empty(tmp_path):
    path = tmp_path / "out.jsonl"
    save_corpus([], path)
    assert path.read_text(encoding="utf-8") == ""
    assert load_corpus(path) == []


def test_roundtrip_newlines_and_unicode(tmp_path):
    record = make_record("line one\nline two\ttab \"quoted\" çğı", [(0, 4, BINARY_LABEL)])
    path = tmp_path / "out.jsonl"
    save_corpus([record], path)
    assert len(path.read_text(encoding="utf-8").rstrip("\n").splitlines()) == 1
    assert load_corpus(path) == [record]


def test_roundtrip_preserves_extra_fields(tmp_path):
    line = json.dumps({
        "id": "x", "task_type": "QA", "split": "test", "language": "en",
        "prompt": "p", "answer": "abcdef",
        "labels": [{"start": 0, "end": 3, "label": "hallucinated", "note": "dubious"}],
        "source_model": "gen-1", "annotator": "a7",
    })
    path = tmp_path / "in.jsonl"
    write_lines(path, [line])
    records = load_corpus(path)
    assert records[0].extra == {"annotator": "a7"}
    assert records[0].labels[0].extra == {"note": "dubious"}
    out = tmp_path / "out.jsonl"
    save_corpus(records, out)
    assert json.loads(out.read_text(encoding="utf-8")) == json.loads(line)
    assert load_corpus(out) == records


clean_text = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",)), max_size=40
)


@st.composite
def record_lists(draw):
    records = []
    for i in range(draw(st.integers(min_value=0, max_value=5))):
        answer = draw(clean_text.filter(lambda t: len(t) >= 1))
        length = len(answer)
        spans = []
        cursor = 0
        while cursor < length and draw(st.booleans()):
            start = draw(st.integers(min_value=cursor, max_value=length - 1))
            end = draw(st.integers(min_value=start + 1, max_value=length))
            with_text = draw(st.booleans())
            spans.append(AnnotatedSpan(
                start=start, end=end,
                label=draw(st.sampled_from(CATEGORY_LABELS + (BINARY_LABEL,))),
                text=answer[start:end] if with_text else None,
            ))
            cursor = end + 1
        records.append(RagRecord(
            id=f"r{i}",
            task_type=draw(st.sampled_from(("QA", "Data2txt", "Summary"))),
            split=draw(st.sampled_from(("train", "test"))),
            language=draw(st.sampled_from(("en", "tr", "de"))),
            prompt=draw(clean_text),
            answer=answer,
            labels=tuple(spans),
            source_model=draw(st.one_of(st.none(), st.just("gen"))),
        ))
    return records


@settings(max_examples=50)
@given(record_lists())
def test_roundtrip_property(tmp_path_factory, records):
    path = tmp_path_factory.mktemp("rt") / "corpus.jsonl"
    save_corpus(records, path)
    assert load_corpus(path) == records


def test_load_preserves_order(tmp_path):
    records = [make_record(f"answer {i}", [], id=f"r{i}") for i in range(5)]
    path = tmp_path / "c.jsonl"
    save_corpus(records, path)
    assert [r.id for r in load_corpus(path)] == [f"r{i}" for i in range(5)]
