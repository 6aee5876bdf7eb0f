"""Token- and example-level detection metrics, sliced by task type.

Precision/recall/F1 are reported per class (0 = supported, 1 = hallucinated)
plus unweighted macro averages; AUROC is the rank statistic over scores, with
ties counted half.  A metric without a defined value (zero support,
single-class gold) is reported as absent together with the reason, never as 0
or NaN.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .corpus import PredictedSpan, RagRecord, TASK_TYPES
from .errors import ContractViolation, EmptyInputError

WHOLE_SLICE = "Whole"
SLICES = TASK_TYPES + (WHOLE_SLICE,)

TOKEN_LEVEL = "token"
EXAMPLE_LEVEL = "example"


@dataclass(frozen=True)
class Confusion:
    """Binary confusion counts with class 1 as the positive class."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(
            tp=self.tp + other.tp, fp=self.fp + other.fp,
            fn=self.fn + other.fn, tn=self.tn + other.tn,
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class ClassMetrics:
    precision: float | None
    recall: float | None
    f1: float | None
    support: int
    note: str | None = None


@dataclass(frozen=True)
class MacroMetrics:
    precision: float | None
    recall: float | None
    f1: float | None
    note: str | None = None


@dataclass(frozen=True)
class MetricsReport:
    level: str
    slice: str
    class_0: ClassMetrics
    class_1: ClassMetrics
    macro: MacroMetrics
    auroc: float | None
    auroc_note: str | None
    confusion: Confusion
    threshold: float | None = None

    def to_dict(self) -> dict[str, Any]:
        def cls_dict(c: ClassMetrics) -> dict[str, Any]:
            d: dict[str, Any] = {"p": c.precision, "r": c.recall, "f1": c.f1,
                                 "support": c.support}
            if c.note:
                d["note"] = c.note
            return d

        out: dict[str, Any] = {
            "level": self.level,
            "slice": self.slice,
            "class_0": cls_dict(self.class_0),
            "class_1": cls_dict(self.class_1),
            "macro": {"p": self.macro.precision, "r": self.macro.recall,
                      "f1": self.macro.f1},
            "auroc": self.auroc,
            "confusion": {"tp": self.confusion.tp, "fp": self.confusion.fp,
                          "fn": self.confusion.fn, "tn": self.confusion.tn},
            "threshold": self.threshold,
        }
        if self.macro.note:
            out["macro"]["note"] = self.macro.note
        if self.auroc_note:
            out["auroc_note"] = self.auroc_note
        return out


def confusion_from_labels(gold: Sequence[int], pred: Sequence[int]) -> Confusion:
    tp = fp = fn = tn = 0
    for g, p in zip(gold, pred):
        if g == 1 and p == 1:
            tp += 1
        elif g == 0 and p == 1:
            fp += 1
        elif g == 1 and p == 0:
            fn += 1
        else:
            tn += 1
    return Confusion(tp=tp, fp=fp, fn=fn, tn=tn)


def _prf(tp: int, fp: int, fn: int) -> tuple[float | None, float | None, float | None, str | None]:
    precision = tp / (tp + fp) if tp + fp else None
    recall = tp / (tp + fn) if tp + fn else None
    note_bits = []
    if precision is None:
        note_bits.append("precision undefined: no predicted instances")
    if recall is None:
        note_bits.append("recall undefined: zero support")
    if precision is None or recall is None:
        f1 = None
    elif precision + recall == 0:
        f1 = 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return precision, recall, f1, "; ".join(note_bits) or None


def class_metrics(confusion: Confusion) -> tuple[ClassMetrics, ClassMetrics]:
    """Per-class metrics (class 0, class 1) from one confusion matrix."""
    p1, r1, f1_1, note1 = _prf(confusion.tp, confusion.fp, confusion.fn)
    p0, r0, f1_0, note0 = _prf(confusion.tn, confusion.fn, confusion.fp)
    c0 = ClassMetrics(p0, r0, f1_0, support=confusion.tn + confusion.fp, note=note0)
    c1 = ClassMetrics(p1, r1, f1_1, support=confusion.tp + confusion.fn, note=note1)
    return c0, c1


def _macro(c0: ClassMetrics, c1: ClassMetrics) -> MacroMetrics:
    def mean(a: float | None, b: float | None) -> float | None:
        return (a + b) / 2 if a is not None and b is not None else None

    note = None
    if c0.note or c1.note:
        note = "macro undefined where a per-class value is absent"
    return MacroMetrics(
        precision=mean(c0.precision, c1.precision),
        recall=mean(c0.recall, c1.recall),
        f1=mean(c0.f1, c1.f1),
        note=note,
    )


def auroc_score(gold: Sequence[int], scores: Sequence[float]
                ) -> tuple[float | None, str | None]:
    """Rank-statistic AUROC: P(random positive outranks random negative).

    Ties count one half; equals the Mann-Whitney U normalization, so it matches
    a pairwise-comparison oracle exactly.  Returns (None, reason) when gold
    holds a single class.
    """
    if len(gold) != len(scores):
        raise ContractViolation(f"{len(gold)} gold labels vs {len(scores)} scores")
    n_pos = sum(1 for g in gold if g == 1)
    n_neg = len(gold) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None, "auroc undefined: gold contains a single class"

    order = sorted(range(len(scores)), key=lambda i: scores[i])
    ranks = [0.0] * len(scores)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        avg_rank = (i + j + 2) / 2  # 1-based average rank of the tie group
        for k in range(i, j + 1):
            ranks[order[k]] = avg_rank
        i = j + 1
    rank_sum_pos = sum(r for r, g in zip(ranks, gold) if g == 1)
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2
    return u / (n_pos * n_neg), None


def _assemble(gold: Sequence[int], pred: Sequence[int], scores: Sequence[float],
              level: str, slice_name: str, threshold: float | None) -> MetricsReport:
    confusion = confusion_from_labels(gold, pred)
    c0, c1 = class_metrics(confusion)
    auroc, auroc_note = auroc_score(gold, scores)
    return MetricsReport(
        level=level, slice=slice_name, class_0=c0, class_1=c1,
        macro=_macro(c0, c1), auroc=auroc, auroc_note=auroc_note,
        confusion=confusion, threshold=threshold,
    )


def token_metrics(gold: Sequence[int], probs: Sequence[float], threshold: float,
                  slice_name: str = WHOLE_SLICE) -> MetricsReport:
    """Token-level metrics from gold labels and hallucination probabilities.

    ``gold`` must already have IGNORE positions filtered out; a threshold in
    [0, 1) turns probabilities into predictions, AUROC stays threshold-free.
    """
    if len(gold) != len(probs):
        raise ContractViolation(f"{len(gold)} gold labels vs {len(probs)} probabilities")
    if any(g not in (0, 1) for g in gold):
        raise ContractViolation("gold token labels must be 0/1 with IGNORE pre-filtered")
    if not (0.0 <= threshold < 1.0):
        raise ContractViolation(f"threshold {threshold} outside [0, 1)")
    pred = [1 if p >= threshold else 0 for p in probs]
    return _assemble(gold, pred, probs, TOKEN_LEVEL, slice_name, threshold)


def example_metrics(records: Sequence[RagRecord],
                    predictions: Mapping[str, Sequence[PredictedSpan]],
                    scores: Mapping[str, float],
                    slice_name: str = WHOLE_SLICE) -> MetricsReport:
    """Example-level metrics: a record is positive iff it has any span.

    ``predictions`` and ``scores`` are keyed by record id; ids must match the
    records exactly.  AUROC ranks the per-record scores (normally the max
    answer-token probability).
    """
    record_ids = {r.id for r in records}
    missing = sorted(record_ids - set(predictions)) + sorted(record_ids - set(scores))
    if missing:
        raise ContractViolation(f"predictions/scores missing record ids: {missing}")

    gold = [1 if r.labels else 0 for r in records]
    pred = [1 if predictions[r.id] else 0 for r in records]
    score = [scores[r.id] for r in records]
    return _assemble(gold, pred, score, EXAMPLE_LEVEL, slice_name, None)


@dataclass(frozen=True)
class EvalInstance:
    """Everything needed to score one record at both levels."""

    record: RagRecord
    token_gold: tuple[int, ...]
    token_probs: tuple[float, ...]
    spans: tuple[PredictedSpan, ...]
    example_score: float | None = None

    def __post_init__(self):
        if len(self.token_gold) != len(self.token_probs):
            raise ContractViolation(
                f"record {self.record.id!r}: {len(self.token_gold)} gold labels vs "
                f"{len(self.token_probs)} probabilities"
            )

    @property
    def score(self) -> float:
        if self.example_score is not None:
            return self.example_score
        if self.token_probs:
            return max(self.token_probs)
        if self.spans:
            return max(s.confidence for s in self.spans)
        return 0.0


@dataclass(frozen=True)
class SlicedReports:
    """Per-slice, per-level reports plus the slices that had no records."""

    reports: dict[str, dict[str, MetricsReport]]
    omitted: dict[str, str] = field(default_factory=dict)

    def get(self, slice_name: str, level: str) -> MetricsReport:
        return self.reports[slice_name][level]

    def all_reports(self) -> list[MetricsReport]:
        return [
            self.reports[s][lvl]
            for s in SLICES if s in self.reports
            for lvl in (TOKEN_LEVEL, EXAMPLE_LEVEL)
        ]


def sliced_report(instances: Sequence[EvalInstance], threshold: float) -> SlicedReports:
    """Token and example reports per task slice plus the Whole union.

    The Whole slice is computed over the union of all instances, never as a
    mean of slice values; empty task slices are omitted with a reason.
    """
    if not instances:
        raise EmptyInputError("sliced_report needs at least one instance")

    def compute(group: Sequence[EvalInstance], name: str) -> dict[str, MetricsReport]:
        gold: list[int] = []
        probs: list[float] = []
        for inst in group:
            gold.extend(inst.token_gold)
            probs.extend(inst.token_probs)
        token = token_metrics(gold, probs, threshold, slice_name=name)
        example = example_metrics(
            [inst.record for inst in group],
            {inst.record.id: inst.spans for inst in group},
            {inst.record.id: inst.score for inst in group},
            slice_name=name,
        )
        return {TOKEN_LEVEL: token, EXAMPLE_LEVEL: example}

    reports: dict[str, dict[str, MetricsReport]] = {}
    omitted: dict[str, str] = {}
    for task in TASK_TYPES:
        group = [inst for inst in instances if inst.record.task_type == task]
        if group:
            reports[task] = compute(group, task)
        else:
            omitted[task] = "no records with this task type"
    reports[WHOLE_SLICE] = compute(instances, WHOLE_SLICE)
    return SlicedReports(reports=reports, omitted=omitted)


def report_document(sliced: SlicedReports, threshold: float,
                    model_manifest_version: str | None = None) -> dict[str, Any]:
    """One structured document for a whole evaluation run."""
    return {
        "threshold": threshold,
        "model_manifest_version": model_manifest_version,
        "omitted_slices": dict(sliced.omitted),
        "reports": [r.to_dict() for r in sliced.all_reports()],
    }


def report_rows(sliced: SlicedReports) -> list[dict[str, Any]]:
    """Flat spreadsheet rows, one per level and slice."""
    rows = []
    for r in sliced.all_reports():
        rows.append({
            "level": r.level,
            "slice": r.slice,
            "class0_precision": r.class_0.precision,
            "class0_recall": r.class_0.recall,
            "class0_f1": r.class_0.f1,
            "class0_support": r.class_0.support,
            "class1_precision": r.class_1.precision,
            "class1_recall": r.class_1.recall,
            "class1_f1": r.class_1.f1,
            "class1_support": r.class_1.support,
            "macro_precision": r.macro.precision,
            "macro_recall": r.macro.recall,
            "macro_f1": r.macro.f1,
            "auroc": r.auroc,
            "threshold": r.threshold,
        })
    return rows
