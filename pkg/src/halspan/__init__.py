"""Token-level hallucination detection for retrieval-augmented generation.

The pipeline: load a span-annotated corpus, optionally translate it while
preserving annotations via inline markers, align character spans to token
labels, train a binary token classifier, and evaluate detections at token and
example granularity.
"""

from .align import (
    IGNORE_LABEL,
    LengthStats,
    OffsetToken,
    TokenLabelSequence,
    build_labels,
    labels_to_spans,
    length_stats,
    load_labels,
    save_labels,
)
from .corpus import (
    AnnotatedSpan,
    BINARY_LABEL,
    PredictedSpan,
    RagRecord,
    load_corpus,
    normalize_spans,
    save_corpus,
    to_binary,
)
from .detector import (
    TokenClassifier,
    TokenPrediction,
    TrainConfig,
    detect_spans,
    load_model,
    predict,
    save_model,
    train,
)
from .metrics import (
    EvalInstance,
    MetricsReport,
    SlicedReports,
    auroc_score,
    example_metrics,
    report_document,
    report_rows,
    sliced_report,
    token_metrics,
)
from .tagproto import TaggedText, extract_spans, inject_tags, validate_tags
from .tokenizers import HFTokenizerAdapter, SimpleWordTokenizer, get_tokenizer
from .translate import (
    IdentityBackend,
    OpenAICompatBackend,
    RetryPolicy,
    translate_corpus,
    translate_record,
)

__version__ = "0.1.0"

__all__ = [
    "AnnotatedSpan",
    "BINARY_LABEL",
    "EvalInstance",
    "HFTokenizerAdapter",
    "IGNORE_LABEL",
    "IdentityBackend",
    "LengthStats",
    "MetricsReport",
    "OffsetToken",
    "OpenAICompatBackend",
    "PredictedSpan",
    "RagRecord",
    "RetryPolicy",
    "SimpleWordTokenizer",
    "SlicedReports",
    "TaggedText",
    "TokenClassifier",
    "TokenLabelSequence",
    "TokenPrediction",
    "TrainConfig",
    "auroc_score",
    "build_labels",
    "detect_spans",
    "example_metrics",
    "extract_spans",
    "get_tokenizer",
    "inject_tags",
    "labels_to_spans",
    "length_stats",
    "load_corpus",
    "load_labels",
    "load_model",
    "normalize_spans",
    "predict",
    "report_document",
    "report_rows",
    "save_corpus",
    "save_labels",
    "save_model",
    "sliced_report",
    "to_binary",
    "token_metrics",
    "train",
    "translate_corpus",
    "translate_record",
    "validate_tags",
]
