"""Command-line entry point: ``distress-screen <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import audio_features, text_features
from .errors import DataError
from .fusion_model import (
    TASKS,
    SampleRecord,
    TrainingConfig,
    build_model,
    predict_batch,
    split_dataset,
    stack_records,
    train_model,
)
from .metrics import confusion, metrics_report
from .persistence import (
    FeatureTable,
    load_model,
    read_feature_csv,
    read_labels_csv,
    save_model,
    write_feature_csv,
)
from .service import ServiceConfig, score_sample, serve, thresholds_from_env
from .wav import load_wav

log = logging.getLogger("distress_screen")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


# -- subcommands -----------------------------------------------------------


def cmd_extract_audio(args) -> int:
    vectors = audio_features.extract_directory(args.audio_dir, workers=args.workers)
    ids = sorted(vectors)
    labels = None
    if args.labels:
        label_map = read_labels_csv(args.labels)
        labels = [label_map[i] for i in ids] if all(i in label_map for i in ids) else None
        if labels is None:
            log.warning("labels file does not cover every recording; writing without labels")
    write_feature_csv(FeatureTable("audio", ids, np.stack([vectors[i] for i in ids]), labels), args.out)
    print(f"wrote {len(ids)} audio feature rows to {args.out}")
    return EXIT_OK


def _transcript_id(path: Path) -> str:
    stem = path.stem
    return stem[: -len("_TRANSCRIPT")] if stem.upper().endswith("_TRANSCRIPT") else stem


def cmd_extract_text(args) -> int:
    vectors = {}
    if args.embeddings:
        vectors.update(text_features.load_embedding_csv(args.embeddings))
    if args.transcripts:
        paths = sorted(
            p for p in Path(args.transcripts).iterdir() if p.suffix.lower() in (".csv", ".tsv", ".txt")
        )
        for p in paths:
            ident = _transcript_id(p)
            if ident in vectors:
                continue
            vectors[ident] = text_features.embed_transcript(
                text_features.load_transcript(p, speaker=args.speaker)
            )
    if not vectors:
        raise UsageError("extract-text needs --transcripts and/or --embeddings")
    ids = sorted(vectors)
    write_feature_csv(FeatureTable("text", ids, np.stack([vectors[i] for i in ids])), args.out)
    print(f"wrote {len(ids)} text feature rows to {args.out}")
    return EXIT_OK


def _load_records(audio_csv, text_csv, labels_csv=None):
    audio = read_feature_csv(audio_csv, kind="audio")
    text = read_feature_csv(text_csv, kind="text")
    labels = audio.label_dict()
    labels.update(text.label_dict())
    if labels_csv:
        labels.update(read_labels_csv(labels_csv))
    a, t = audio.as_dict(), text.as_dict()
    ids = sorted(set(a) & set(t) & set(labels))
    if not ids:
        raise DataError("no ids shared by the audio features, text features and labels")
    dropped = len(set(a) | set(t)) - len(ids)
    if dropped:
        log.warning("%d ids lack one modality or a label and were skipped", dropped)
    return [SampleRecord(i, a[i], t[i], labels[i]) for i in ids]


def _threshold(args, task: str) -> float:
    if getattr(args, "threshold", None) is not None:
        return args.threshold
    return thresholds_from_env().get(task, 0.5)


def cmd_train(args) -> int:
    records = _load_records(args.audio_features, args.text_features, args.labels)
    cfg = TrainingConfig(
        batch_size=args.batch_size, epochs=args.epochs, lr=args.lr, seed=args.seed,
        threshold=_threshold(args, args.task),
    )
    train, test = split_dataset(records, cfg)
    model = build_model(args.seed, task_tag=args.task)
    history = train_model(model, train, cfg)
    save_model(model, args.model_out)
    if args.history_out:
        history.write_csv(args.history_out)

    a, t, y = stack_records(test)
    scores = predict_batch(model, a, t)
    if args.predictions_out:
        _write_predictions(args.predictions_out, [r.id for r in test], y, scores)
    report = metrics_report(confusion(y, scores, cfg.threshold))
    print(report.format_table())
    print(f"Test Accuracy: {report.accuracy:.2f}")
    print(f"saved {args.task} model to {args.model_out}")
    return EXIT_OK


def _write_predictions(path, ids, labels, scores) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label", "score"])
        for i, y, s in sorted(zip(ids, labels, scores)):
            w.writerow([i, int(y), format(float(s), ".9g")])


def _read_predictions(path):
    labels, scores = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"label", "score"} <= set(reader.fieldnames):
            raise DataError(f"{path}: predictions need 'label' and 'score' columns")
        for line_no, row in enumerate(reader, start=2):
            try:
                labels.append(int(float(row["label"])))
                scores.append(float(row["score"]))
            except (TypeError, ValueError):
                raise DataError(f"{path}:{line_no}: non-numeric label or score") from None
    if not labels:
        raise DataError(f"{path}: no predictions")
    return np.array(labels), np.array(scores)


def cmd_evaluate(args) -> int:
    if args.predictions:
        y, scores = _read_predictions(args.predictions)
        task = args.task
    else:
        if not (args.model and args.audio_features and args.text_features):
            raise UsageError("evaluate needs --predictions, or --model with --audio-features and --text-features")
        model = load_model(args.model[0])
        task = model.task_tag
        records = _load_records(args.audio_features, args.text_features, args.labels)
        a, t, y = stack_records(records)
        scores = predict_batch(model, a, t)
    report = metrics_report(confusion(y, scores, _threshold(args, task)))
    out = report.to_dict()
    out["task"] = task
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    _emit(out)
    print(report.format_table())
    print(f"accuracy: {report.accuracy:.2f}")
    return EXIT_OK


def _single_row(path, kind: str, ident):
    table = read_feature_csv(path, kind=kind)
    values = table.as_dict()
    if ident is not None:
        if ident not in values:
            raise DataError(f"{path}: id {ident!r} not found")
        return values[ident]
    if len(values) != 1:
        raise DataError(f"{path}: holds {len(values)} rows; choose one with --id")
    return next(iter(values.values()))


def cmd_predict(args) -> int:
    if args.wav:
        audio_vec = audio_features.extract_audio_features(load_wav(args.wav))
    elif args.audio_features:
        audio_vec = _single_row(args.audio_features, "audio", args.id)
    else:
        raise UsageError("predict needs --wav or --audio-features")

    source = "provided"
    if args.text_features:
        text_vec = _single_row(args.text_features, "text", args.id)
    elif args.embeddings:
        table = text_features.load_embedding_csv(args.embeddings)
        if args.id is None and len(table) != 1:
            raise DataError(f"{args.embeddings}: choose a row with --id")
        key = args.id if args.id is not None else next(iter(table))
        if key not in table:
            raise DataError(f"{args.embeddings}: id {key!r} not found")
        text_vec = table[key]
    elif args.transcript:
        text_vec = text_features.embed_transcript(text_features.load_transcript(args.transcript))
        source = "stub"
    elif args.text is not None:
        text_vec = text_features.stub_embed(text_features.preprocess_text(args.text))
        source = "stub"
    else:
        raise UsageError("predict needs --text-features, --embeddings, --transcript or --text")

    models = _load_models(args.model)
    thresholds = {task: _threshold(args, task) for task in models}
    body = score_sample(ServiceConfig(models, thresholds), audio_vec, text_vec)
    body["feature_dims"] = {"audio": len(audio_vec), "text": len(text_vec)}
    body["embedding_source"] = source
    _emit(body)
    return EXIT_OK


def _load_models(paths) -> dict:
    if not paths:
        raise UsageError("at least one --model is required")
    models = {}
    for p in paths:
        m = load_model(p)
        if m.task_tag in models:
            raise DataError(f"two models for task {m.task_tag!r}")
        models[m.task_tag] = m
    return models


def cmd_serve(args) -> int:
    models = _load_models(args.model)
    thresholds = thresholds_from_env()
    for task in TASKS:
        flag = getattr(args, f"threshold_{task}")
        if flag is not None:
            thresholds[task] = flag
    cfg = ServiceConfig(models, thresholds, staging_root=args.staging_dir, max_bytes=args.max_bytes)
    if args.staging_dir:
        os.makedirs(args.staging_dir, exist_ok=True)
    serve(cfg, host=args.host, port=args.port)
    return EXIT_OK


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="distress-screen", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("extract-audio", help="WAV directory -> audio feature CSV")
    s.add_argument("--audio-dir", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--labels")
    s.add_argument("--workers", type=int, default=None)
    s.set_defaults(func=cmd_extract_audio)

    s = sub.add_parser("extract-text", help="transcripts/embeddings -> text feature CSV")
    s.add_argument("--transcripts", help="directory of transcript CSV/TSV files")
    s.add_argument("--embeddings", help="precomputed id,e0..e767 CSV")
    s.add_argument("--speaker", default="Participant")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_extract_text)

    s = sub.add_parser("train", help="train a model from feature CSVs")
    s.add_argument("--audio-features", required=True)
    s.add_argument("--text-features", required=True)
    s.add_argument("--labels", help="id,label CSV (optional if tables carry labels)")
    s.add_argument("--task", choices=TASKS, default="depression")
    s.add_argument("--model-out", required=True)
    s.add_argument("--history-out")
    s.add_argument("--predictions-out", help="write held-out id,label,score CSV")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--epochs", type=int, default=8)
    s.add_argument("--batch-size", type=int, default=8)
    s.add_argument("--lr", type=float, default=0.001)
    s.add_argument("--threshold", type=float)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="metrics report from a model or a predictions CSV")
    s.add_argument("--predictions", help="id,label,score CSV")
    s.add_argument("--model", action="append")
    s.add_argument("--audio-features")
    s.add_argument("--text-features")
    s.add_argument("--labels")
    s.add_argument("--task", choices=TASKS, default="depression")
    s.add_argument("--threshold", type=float)
    s.add_argument("--json-out")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("predict", help="score one sample")
    s.add_argument("--model", action="append", required=True)
    s.add_argument("--wav")
    s.add_argument("--audio-features")
    s.add_argument("--text-features")
    s.add_argument("--embeddings")
    s.add_argument("--transcript")
    s.add_argument("--text")
    s.add_argument("--id")
    s.add_argument("--threshold", type=float)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("serve", help="run the HTTP prediction service")
    s.add_argument("--model", action="append", required=True)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8000)
    s.add_argument("--threshold-depression", type=float)
    s.add_argument("--threshold-ptsd", type=float)
    s.add_argument("--staging-dir")
    s.add_argument("--max-bytes", type=int, default=64 * 1024 * 1024)
    s.set_defaults(func=cmd_serve)
    return p


def run_cli(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
