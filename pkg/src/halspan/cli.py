"""Pipeline commands: translate -> build-labels -> train -> predict -> evaluate.

Exit codes are stable for scripting: 0 ok, 1 usage, 2 partial data failure,
3 transport, 4 artifact mismatch.  Every successful command prints one
machine-readable JSON summary line on stdout; every non-zero exit carries a
one-line reason on stderr.  A --config JSON file, when given, overrides flag
values; backend credentials come only from the environment.
"""

from __future__ import annotations

import argparse
import csv
import importlib
import json
import sys
from pathlib import Path
from typing import Any, Sequence

from . import align, corpus, detector, metrics, tokenizers, translate
from .errors import (
    ArtifactMismatchError,
    PipelineError,
    TransportError,
    UnencodableRecordError,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARTIAL = 2
EXIT_TRANSPORT = 3
EXIT_MISMATCH = 4

LABEL_MANIFEST_VERSION = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; the pipeline taxonomy reserves 1 for that."""

    def error(self, message):
        raise UsageError(message)


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {path}")
    return p


def _manifest_path(data_path: str | Path) -> Path:
    return Path(str(data_path) + ".manifest.json")


def _write_manifest(data_path: str | Path, manifest: dict[str, Any]) -> None:
    with open(_manifest_path(data_path), "w", encoding="utf-8") as f:
        json.dump(manifest, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")


def _read_manifest(data_path: str | Path) -> dict[str, Any] | None:
    p = _manifest_path(data_path)
    if not p.is_file():
        return None
    with open(p, "r", encoding="utf-8") as f:
        return json.load(f)


def _summary(**fields: Any) -> None:
    print(json.dumps(fields, ensure_ascii=False))


def _apply_config_file(args: argparse.Namespace) -> None:
    config_path = getattr(args, "config", None)
    if not config_path:
        return
    with open(_require_file(config_path, "config file"), "r", encoding="utf-8") as f:
        overrides = json.load(f)
    if not isinstance(overrides, dict):
        raise UsageError(f"config file {config_path} must hold a JSON object")
    for key, value in overrides.items():
        dest = key.replace("-", "_")
        if hasattr(args, dest):
            setattr(args, dest, value)


def resolve_backend(args: argparse.Namespace) -> translate.TranslationBackend:
    spec = args.backend
    if spec == "identity":
        return translate.IdentityBackend()
    if spec == "http":
        if not args.endpoint or not args.model:
            raise UsageError("--backend http requires --endpoint and --model")
        return translate.OpenAICompatBackend(
            endpoint=args.endpoint, model=args.model, timeout=args.timeout
        )
    if ":" in spec:
        module_name, attr = spec.rsplit(":", 1)
        try:
            obj = getattr(importlib.import_module(module_name), attr)
        except (ImportError, AttributeError) as e:
            raise UsageError(f"cannot load backend {spec!r}: {e}") from e
        if not hasattr(obj, "translate") and callable(obj):
            obj = obj()
        if not hasattr(obj, "translate"):
            raise UsageError(f"backend {spec!r} does not provide translate()")
        return obj
    raise UsageError(f"unknown backend {spec!r} (identity, http, or module:factory)")


# -- commands --


def cmd_translate(args: argparse.Namespace) -> int:
    in_path = _require_file(args.input, "input corpus")
    backend = resolve_backend(args)
    records = corpus.load_corpus(in_path)
    policy = translate.RetryPolicy(max_attempts=args.max_attempts)
    translated, failures = translate.translate_corpus(
        records, backend, args.target_lang, parallelism=args.parallelism,
        policy=policy, source_lang=args.source_lang,
    )
    corpus.save_corpus(translated, args.out)
    _write_manifest(args.out, {
        "command": "translate",
        "source": str(in_path),
        "target_lang": args.target_lang,
        "backend": args.backend,
        "max_attempts": args.max_attempts,
        "parallelism": args.parallelism,
        "seed": args.seed,
        "records": len(translated),
        "failures": len(failures),
    })
    if args.failures_out:
        with open(args.failures_out, "w", encoding="utf-8") as f:
            for record_id, reason in failures:
                f.write(json.dumps({"id": record_id, "reason": reason}, ensure_ascii=False))
                f.write("\n")
    _summary(command="translate", records=len(translated), failures=len(failures),
             out=str(args.out))
    if failures:
        if not translated and all(r.startswith("transport:") for _, r in failures):
            raise TransportError(
                f"backend unreachable for all {len(failures)} records; "
                f"first: {failures[0][1]}"
            )
        print(f"error: {len(failures)} records failed translation "
              f"(first: {failures[0][0]}: {failures[0][1]})", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_build_labels(args: argparse.Namespace) -> int:
    in_path = _require_file(args.input, "input corpus")
    tokenizer = tokenizers.get_tokenizer(args.tokenizer)
    records = corpus.load_corpus(in_path)
    skipped: list[tuple[str, str]] = []
    sequences: list[align.TokenLabelSequence] = []
    for record in records:
        try:
            sequences.append(align.build_labels(record, tokenizer, args.max_len))
        except UnencodableRecordError as e:
            skipped.append((record.id, str(e)))
    align.save_labels(sequences, args.out)
    _write_manifest(args.out, {
        "command": "build-labels",
        "format_version": LABEL_MANIFEST_VERSION,
        "source": str(in_path),
        "tokenizer": tokenizer.spec,
        "max_len": args.max_len,
        "vocab_size": tokenizer.vocab_size,
        "seed": args.seed,
        "records": len(sequences),
        "skipped": len(skipped),
    })
    _summary(command="build-labels", records=len(sequences), skipped=len(skipped),
             out=str(args.out))
    if skipped:
        for record_id, reason in skipped:
            print(f"error: unencodable record {record_id}: {reason}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    labels_path = _require_file(args.labels, "labels file")
    label_manifest = _read_manifest(labels_path)

    tokenizer_spec = args.tokenizer
    if label_manifest:
        manifest_tok = label_manifest.get("tokenizer")
        if tokenizer_spec and manifest_tok and tokenizer_spec != manifest_tok:
            raise ArtifactMismatchError(
                f"label file was built with tokenizer {manifest_tok!r}, "
                f"--tokenizer says {tokenizer_spec!r}"
            )
        tokenizer_spec = tokenizer_spec or manifest_tok
        manifest_max_len = label_manifest.get("max_len")
        if manifest_max_len and manifest_max_len > args.max_len:
            raise ArtifactMismatchError(
                f"label file allows sequences up to {manifest_max_len} tokens, "
                f"--max-len says {args.max_len}"
            )

    sequences = align.load_labels(labels_path)
    config = detector.TrainConfig(
        epochs=args.epochs, learning_rate=args.learning_rate,
        batch_size=args.batch_size, max_len=args.max_len, seed=args.seed,
        backbone_id=args.backbone, device=args.device,
    )
    if config.backbone_id == "toy":
        vocab = None
        if label_manifest:
            vocab = label_manifest.get("vocab_size")
        if vocab is None:
            vocab = max((max(s.input_ids) for s in sequences if s.input_ids), default=0) + 1
        else:
            top = max((max(s.input_ids) for s in sequences if s.input_ids), default=0)
            if top >= vocab:
                raise ArtifactMismatchError(
                    f"label file contains token id {top}, vocab_size is {vocab}"
                )
        longest = max((len(s) for s in sequences), default=16)
        config.backbone_config = {"vocab_size": vocab, "max_position": max(longest, 16)}

    model, losses = detector.train(sequences, config)
    detector.save_model(
        model, args.model_dir, backbone_id=config.backbone_id,
        max_len=config.max_len, seed=config.seed, tokenizer_spec=tokenizer_spec,
        extra={"train_config": config.to_dict(), "loss_trace": losses},
    )
    _summary(command="train", records=len(sequences), epochs=config.epochs,
             final_loss=losses[-1], model_dir=str(args.model_dir))
    return EXIT_OK


def _build_sequences(records: Sequence[corpus.RagRecord], tokenizer,
                     max_len: int) -> tuple[list[align.TokenLabelSequence],
                                            list[tuple[str, str]]]:
    sequences, skipped = [], []
    for record in records:
        try:
            sequences.append(align.build_labels(record, tokenizer, max_len))
        except UnencodableRecordError as e:
            skipped.append((record.id, str(e)))
    return sequences, skipped


def cmd_predict(args: argparse.Namespace) -> int:
    in_path = _require_file(args.input, "input corpus")
    model, manifest = detector.load_model(_require_file(
        Path(args.model_dir) / detector.MANIFEST_FILE, "model manifest").parent)
    tokenizer_spec = manifest.get("tokenizer")
    if not tokenizer_spec:
        raise ArtifactMismatchError("model manifest does not name a tokenizer")
    tokenizer = tokenizers.get_tokenizer(tokenizer_spec)
    threshold = args.threshold if args.threshold is not None \
        else manifest.get("threshold_default", detector.DEFAULT_THRESHOLD)
    max_len = manifest.get("max_len", 4096)

    records = corpus.load_corpus(in_path)
    sequences, skipped = _build_sequences(records, tokenizer, max_len)
    predictions = detector.predict(model, sequences, batch_size=args.batch_size)
    with open(args.out, "w", encoding="utf-8") as f:
        for pred in predictions:
            spans = detector.detect_spans(pred, threshold)
            row: dict[str, Any] = {"id": pred.id, "spans": [s.to_dict() for s in spans]}
            if args.emit_token_probs:
                row["token_probs"] = list(pred.probs)
            f.write(json.dumps(row, ensure_ascii=False))
            f.write("\n")
    _write_manifest(args.out, {
        "command": "predict",
        "source": str(in_path),
        "model_dir": str(args.model_dir),
        "model_manifest_version": manifest.get("version"),
        "tokenizer": tokenizer_spec,
        "max_len": max_len,
        "threshold": threshold,
        "seed": args.seed,
        "records": len(predictions),
        "skipped": len(skipped),
    })
    _summary(command="predict", records=len(predictions), skipped=len(skipped),
             threshold=threshold, out=str(args.out))
    if skipped:
        for record_id, reason in skipped:
            print(f"error: unencodable record {record_id}: {reason}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _load_predictions(path: Path) -> dict[str, dict[str, Any]]:
    rows: dict[str, dict[str, Any]] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            row = json.loads(line)
            rows[row["id"]] = row
    return rows


def cmd_evaluate(args: argparse.Namespace) -> int:
    gold_path = _require_file(args.gold, "gold corpus")
    pred_path = _require_file(args.predictions, "predictions file")
    records = corpus.load_corpus(gold_path)
    rows = _load_predictions(pred_path)

    gold_ids = {r.id for r in records}
    missing = sorted(gold_ids ^ set(rows))
    if missing:
        raise ArtifactMismatchError(
            f"gold and predictions disagree on record ids: {missing[:10]}"
            + (" ..." if len(missing) > 10 else "")
        )

    pred_manifest = _read_manifest(pred_path) or {}
    tokenizer_spec = args.tokenizer or pred_manifest.get("tokenizer")
    if not tokenizer_spec:
        raise ArtifactMismatchError(
            "predictions carry no tokenizer manifest; pass --tokenizer"
        )
    tokenizer = tokenizers.get_tokenizer(tokenizer_spec)
    max_len = pred_manifest.get("max_len", args.max_len)
    threshold = args.threshold if args.threshold is not None \
        else pred_manifest.get("threshold", detector.DEFAULT_THRESHOLD)

    instances = []
    for record in records:
        seq = align.build_labels(record, tokenizer, max_len)
        token_gold = seq.answer_labels()
        row = rows[record.id]
        spans = tuple(
            corpus.PredictedSpan(start=s["start"], end=s["end"],
                                 confidence=s.get("confidence", 1.0))
            for s in row.get("spans", [])
        )
        if "token_probs" in row:
            probs = row["token_probs"]
            if len(probs) != len(token_gold):
                raise ArtifactMismatchError(
                    f"record {record.id!r}: {len(probs)} token probabilities vs "
                    f"{len(token_gold)} answer tokens; tokenizer mismatch?"
                )
        else:
            # span-only predictions: reconstruct binary token values
            probs = [
                1.0 if any(s.start < t.char_end and t.char_start < s.end for s in spans)
                else 0.0
                for t in seq.answer_tokens()
            ]
        instances.append(metrics.EvalInstance(
            record=record,
            token_gold=tuple(token_gold),
            token_probs=tuple(float(p) for p in probs),
            spans=spans,
        ))

    sliced = metrics.sliced_report(instances, threshold)
    report_dir = Path(args.report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    document = metrics.report_document(
        sliced, threshold,
        model_manifest_version=pred_manifest.get("model_manifest_version"),
    )
    with open(report_dir / "report.json", "w", encoding="utf-8") as f:
        json.dump(document, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")
    rows_flat = metrics.report_rows(sliced)
    with open(report_dir / "report.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows_flat[0].keys()))
        writer.writeheader()
        writer.writerows(rows_flat)

    whole_token = sliced.get(metrics.WHOLE_SLICE, metrics.TOKEN_LEVEL)
    _summary(command="evaluate", records=len(records), threshold=threshold,
             token_f1_class1=whole_token.class_1.f1,
             token_macro_f1=whole_token.macro.f1,
             auroc=whole_token.auroc, report_dir=str(report_dir))
    return EXIT_OK


# -- argument wiring --


def build_parser() -> _Parser:
    parser = _Parser(prog="halspan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: _Parser) -> None:
        p.add_argument("--config", help="JSON file whose values override flags")
        p.add_argument("--seed", type=int, default=42)

    p = sub.add_parser("translate", help="translate a corpus, preserving span annotations")
    p.add_argument("input")
    p.add_argument("--source-lang", default=None,
                   help="override per-record language field")
    p.add_argument("--target-lang", required=True)
    p.add_argument("--backend", default="identity",
                   help="identity, http, or module:factory")
    p.add_argument("--endpoint", help="chat-completions base URL for --backend http")
    p.add_argument("--model", help="model name for --backend http")
    p.add_argument("--timeout", type=float, default=120.0)
    p.add_argument("--parallelism", type=int, default=translate.DEFAULT_PARALLELISM)
    p.add_argument("--max-attempts", type=int, default=3)
    p.add_argument("--out", required=True)
    p.add_argument("--failures-out", default=None)
    common(p)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("build-labels", help="align gold spans to token labels")
    p.add_argument("input")
    p.add_argument("--tokenizer", default="simple")
    p.add_argument("--max-len", type=int, default=4096)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_build_labels)

    p = sub.add_parser("train", help="train the token classifier on a label file")
    p.add_argument("labels")
    p.add_argument("--model-dir", required=True)
    p.add_argument("--tokenizer", default=None,
                   help="must agree with the label file manifest when both are set")
    p.add_argument("--backbone", default="toy")
    p.add_argument("--epochs", type=int, default=6)
    p.add_argument("--learning-rate", type=float, default=1e-5)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--max-len", type=int, default=4096)
    p.add_argument("--device", default="cpu")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="detect hallucination spans with a trained model")
    p.add_argument("model_dir")
    p.add_argument("input")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--out", required=True)
    p.add_argument("--emit-token-probs", action=argparse.BooleanOptionalAction,
                   default=True)
    common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against gold spans")
    p.add_argument("gold")
    p.add_argument("predictions")
    p.add_argument("--report-dir", required=True)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--tokenizer", default=None)
    p.add_argument("--max-len", type=int, default=4096)
    common(p)
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config_file(args)
        if hasattr(args, "threshold") and args.threshold is not None \
                and not (0.0 < args.threshold < 1.0):
            raise UsageError(f"--threshold {args.threshold} outside (0, 1)")
        return args.func(args)
    except UsageError as e:
        print(f"error: usage: {e}", file=sys.stderr)
        return EXIT_USAGE
    except TransportError as e:
        print(f"error: transport: {e}", file=sys.stderr)
        return EXIT_TRANSPORT
    except ArtifactMismatchError as e:
        print(f"error: mismatch: {e}", file=sys.stderr)
        return EXIT_MISMATCH
    except FileNotFoundError as e:
        print(f"error: usage: {e}", file=sys.stderr)
        return EXIT_USAGE
    except PipelineError as e:
        print(f"error: data: {e}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
