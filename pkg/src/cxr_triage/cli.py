"""Command-line pipeline: ingest -> embed -> eval, plus a k-sweep utility.

Exit codes are part of the interface:
  0 success, 1 usage error, 2 input parse error, 3 missing or unreadable
  image files, 4 graph load/shape error, 5 a class absent from a split.
All randomness flows from one seed (flag, else CXR_TRIAGE_SEED, else 42),
so the report manifest is enough to reproduce a run bit for bit.
"""

from __future__ import annotations

import argparse
import os
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .dataset import (
    DatasetManifestError,
    MetadataError,
    SplitSpec,
    Task,
    derive_labels,
    filter_views,
    parse_metadata,
    read_dataset_manifest,
    split,
    with_image_root,
    write_dataset_manifest,
)
from .embedding import (
    ExtractorConfig,
    ExtractorMode,
    GraphExtractor,
    GraphLoadError,
    GraphShapeError,
    EmbeddingsParseError,
    global_average_pool,
    load_embeddings,
    save_embeddings,
    stub_extract,
)
from .imaging import PixelRangeError, PngDecodeError, UnsupportedPngError, preprocess_png
from .knn import fit, predict_batch, score_batch
from .metrics import (
    BootstrapError,
    bootstrap_auc_ci,
    compute_metrics,
    confusion_matrix,
    roc_auc,
)
from .report import RunManifest, build_metrics_dict, sha256_file, write_report

DEFAULT_K = 5
DEFAULT_TRAIN_FRAC = 0.75
DEFAULT_BOOTSTRAP = 10000
DEFAULT_SEED = 42
SEED_ENV_VAR = "CXR_TRIAGE_SEED"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARSE = 2
EXIT_IMAGES = 3
EXIT_GRAPH = 4
EXIT_CLASS = 5

_MAX_LISTED_MISSING = 20


class UsageError(Exception):
    """Bad flags or flag combinations; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; the exit-code contract
    # reserves 2 for parse errors, so route usage problems through UsageError.
    def error(self, message):
        raise UsageError(message)


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _resolve_seed(flag_value: int | None) -> int:
    """--seed wins; else CXR_TRIAGE_SEED; else the documented default."""
    if flag_value is not None:
        seed = flag_value
    else:
        env = os.environ.get(SEED_ENV_VAR)
        if env is None:
            return DEFAULT_SEED
        try:
            seed = int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from None
    if seed < 0:
        raise UsageError(f"seed must be non-negative, got {seed}")
    return seed


def cmd_ingest(args) -> int:
    meta_path = Path(args.metadata)
    if not meta_path.is_file():
        return _fail(EXIT_PARSE, f"metadata file not found: {meta_path}")
    try:
        records = parse_metadata(meta_path.read_text(encoding="utf-8"))
    except MetadataError as e:
        return _fail(EXIT_PARSE, f"cannot parse {meta_path}: {e}")
    examples = derive_labels(filter_views(records), Task(args.task))
    located = [with_image_root(ex.record, args.images_dir) for ex in examples]
    missing = [r.image_filename for r in located if not Path(r.image_filename).is_file()]
    if missing:
        listed = "".join(f"\n  {p}" for p in missing[:_MAX_LISTED_MISSING])
        suffix = "" if len(missing) <= _MAX_LISTED_MISSING else f"\n  ... and {len(missing) - _MAX_LISTED_MISSING} more"
        return _fail(EXIT_IMAGES, f"{len(missing)} image file(s) missing:{listed}{suffix}")
    with open(args.out, "w", encoding="utf-8", newline="") as sink:
        write_dataset_manifest(located, sink)
    positives = sum(ex.label for ex in examples)
    print(f"positives={positives} negatives={len(examples) - positives}")
    print(f"labeled={len(examples)}")
    return EXIT_OK


def cmd_embed(args) -> int:
    try:
        with open(args.dataset, encoding="utf-8") as f:
            records = read_dataset_manifest(f)
    except FileNotFoundError:
        return _fail(EXIT_PARSE, f"dataset manifest not found: {args.dataset}")
    except DatasetManifestError as e:
        return _fail(EXIT_PARSE, f"cannot parse {args.dataset}: {e}")
    examples = derive_labels(records, Task(args.task))
    seed = _resolve_seed(args.seed)

    if args.graph:
        config = ExtractorConfig(ExtractorMode.GRAPH, graph_path=args.graph)
        try:
            extractor = GraphExtractor(args.graph)
        except (GraphLoadError, GraphShapeError) as e:
            return _fail(EXIT_GRAPH, str(e))
    else:
        config = ExtractorConfig(ExtractorMode.STUB, stub_seed=seed)
        extractor = None

    embeddings = []
    labels = []
    for ex in examples:
        path = ex.record.image_filename
        try:
            data = Path(path).read_bytes()
        except OSError as e:
            return _fail(EXIT_IMAGES, f"cannot read image {path}: {e}")
        try:
            image = preprocess_png(data)
        except (PngDecodeError, UnsupportedPngError, PixelRangeError) as e:
            return _fail(EXIT_IMAGES, f"cannot decode image {path}: {e}")
        if extractor is not None:
            try:
                emb = global_average_pool(extractor.extract(image), image_id=path)
            except (GraphLoadError, GraphShapeError) as e:
                return _fail(EXIT_GRAPH, f"graph failed on {path}: {e}")
        else:
            emb = stub_extract(config, image, image_id=path)
        embeddings.append(emb)
        labels.append(ex.label)

    with open(args.out, "w", encoding="utf-8", newline="") as sink:
        n = save_embeddings(embeddings, labels, sink)
    print(f"embedded={n} mode={config.mode.value}")
    return EXIT_OK


def _load_embeddings_file(path):
    with open(path, encoding="utf-8") as f:
        return load_embeddings(f)


def _split_embeddings(embeddings, labels, train_fraction, seed):
    """Shuffle-and-cut split of parallel (embedding, label) sequences."""
    pairs = list(zip(embeddings, labels))
    train, test = split(pairs, SplitSpec(train_fraction, seed))
    train_x = np.array([e.values for e, _ in train], dtype=np.float64)
    train_y = np.array([y for _, y in train], dtype=np.int64)
    test_x = np.array([e.values for e, _ in test], dtype=np.float64)
    test_y = np.array([y for _, y in test], dtype=np.int64)
    return train_x, train_y, test_x, test_y


def _check_split_classes(train_y, test_y) -> str | None:
    """A message if either half lacks a class (or any rows), else None."""
    for name, y in (("train", train_y), ("test", test_y)):
        if y.size == 0:
            return f"{name} split is empty; adjust --train-frac"
        if y.min() == y.max():
            return (
                f"class {1 - int(y[0])} is absent from the {name} split; "
                "try a different --seed or a stratified split"
            )
    return None


def _validate_eval_flags(args) -> None:
    if not 0.0 < args.train_frac <= 1.0:
        raise UsageError(f"--train-frac must be in (0, 1], got {args.train_frac}")
    if getattr(args, "k", 1) < 1:
        raise UsageError(f"--k must be at least 1, got {args.k}")
    if getattr(args, "bootstrap", 1) < 1:
        raise UsageError(f"--bootstrap must be at least 1, got {args.bootstrap}")


def cmd_eval(args) -> int:
    _validate_eval_flags(args)
    seed = _resolve_seed(args.seed)
    try:
        embeddings, labels = _load_embeddings_file(args.embeddings)
    except FileNotFoundError:
        return _fail(EXIT_PARSE, f"embeddings file not found: {args.embeddings}")
    except EmbeddingsParseError as e:
        return _fail(EXIT_PARSE, f"cannot parse {args.embeddings}: {e}")

    train_x, train_y, test_x, test_y = _split_embeddings(
        embeddings, labels, args.train_frac, seed)
    problem = _check_split_classes(train_y, test_y)
    if problem:
        return _fail(EXIT_CLASS, problem)
    if args.k > train_y.size:
        raise UsageError(f"--k {args.k} exceeds the train split size {train_y.size}")

    model = fit(train_x, train_y, args.k)
    predictions = predict_batch(model, test_x)
    scores = score_batch(model, test_x)
    cm = confusion_matrix(predictions, test_y)
    ms = compute_metrics(cm)
    curve, auc_value = roc_auc(scores, test_y)
    try:
        ci = bootstrap_auc_ci(scores, test_y, n_resamples=args.bootstrap, seed=seed)
    except BootstrapError as e:
        return _fail(EXIT_CLASS, str(e))

    digests = {"embeddings": sha256_file(args.embeddings)}
    if args.metadata:
        digests["metadata"] = sha256_file(args.metadata)
    manifest = RunManifest(
        task=args.task,
        split={
            "train_fraction": args.train_frac,
            "seed": seed,
            "n_train": int(train_y.size),
            "n_test": int(test_y.size),
        },
        k=args.k,
        extractor_mode=None,
        digests=digests,
        metrics=build_metrics_dict(
            args.task, args.k, int(train_y.size), int(test_y.size),
            cm, ms, auc_value, ci),
        tool_version=__version__,
        created_at=datetime.now(timezone.utc).isoformat(),
    )
    write_report(args.report_dir, cm, curve, auc_value, ci, manifest)
    print(
        f"{ms.precision} {ms.recall} {ms.f1} {ms.accuracy} "
        f"{auc_value} {ci.low} {ci.high}"
    )
    return EXIT_OK


def cmd_sweep_k(args) -> int:
    _validate_eval_flags(args)
    if args.k_min < 1:
        raise UsageError(f"--k-min must be at least 1, got {args.k_min}")
    if args.k_min > args.k_max:
        raise UsageError(f"--k-min {args.k_min} exceeds --k-max {args.k_max}")
    seed = _resolve_seed(args.seed)
    try:
        embeddings, labels = _load_embeddings_file(args.embeddings)
    except FileNotFoundError:
        return _fail(EXIT_PARSE, f"embeddings file not found: {args.embeddings}")
    except EmbeddingsParseError as e:
        return _fail(EXIT_PARSE, f"cannot parse {args.embeddings}: {e}")

    # One split for the whole sweep, so rows differ only in k.
    train_x, train_y, test_x, test_y = _split_embeddings(
        embeddings, labels, args.train_frac, seed)
    problem = _check_split_classes(train_y, test_y)
    if problem:
        return _fail(EXIT_CLASS, problem)
    if args.k_max > train_y.size:
        raise UsageError(f"--k-max {args.k_max} exceeds the train split size {train_y.size}")

    rows = []
    for k in range(args.k_min, args.k_max + 1):
        model = fit(train_x, train_y, k)
        cm = confusion_matrix(predict_batch(model, test_x), test_y)
        ms = compute_metrics(cm)
        _, auc_value = roc_auc(score_batch(model, test_x), test_y)
        rows.append((k, ms.precision, ms.recall, ms.f1, ms.accuracy, auc_value))

    out_dir = Path(args.report_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["k,precision,recall,f1,accuracy,auc"]
    lines += [f"{k},{p!r},{r!r},{f1!r},{a!r},{auc_value!r}"
              for k, p, r, f1, a, auc_value in rows]
    (out_dir / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")

    best_k = max(rows, key=lambda row: (row[3], -row[0]))[0]
    print(f"best_k={best_k}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="cxr-triage", description="Chest X-ray triage pipeline")
    version = f"%(prog)s {__version__}"
    parser.add_argument("--version", action="version", version=version)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("ingest", help="filter metadata and write a dataset manifest")
    p.add_argument("--version", action="version", version=version)
    p.add_argument("--metadata", required=True, help="metadata CSV path")
    p.add_argument("--images-dir", required=True, help="directory holding the PNG files")
    p.add_argument("--task", required=True, choices=[t.value for t in Task])
    p.add_argument("--out", required=True, help="dataset manifest JSON to write")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("embed", help="extract one embedding per dataset record")
    p.add_argument("--version", action="version", version=version)
    p.add_argument("--dataset", required=True, help="dataset manifest JSON from ingest")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--graph", help="exported TorchScript feature graph")
    mode.add_argument("--stub", action="store_true",
                      help="deterministic stand-in extractor (no model needed)")
    p.add_argument("--task", required=True, choices=[t.value for t in Task])
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="embeddings CSV to write")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("eval", help="split, fit KNN, score the test half, write reports")
    p.add_argument("--version", action="version", version=version)
    p.add_argument("--embeddings", required=True, help="embeddings CSV from embed")
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--train-frac", type=float, default=DEFAULT_TRAIN_FRAC)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--bootstrap", type=int, default=DEFAULT_BOOTSTRAP,
                   help="bootstrap resample count for the AUC interval")
    p.add_argument("--report-dir", required=True)
    p.add_argument("--task", choices=[t.value for t in Task], default=None,
                   help="recorded in the manifest (the embeddings file does not say)")
    p.add_argument("--metadata", default=None,
                   help="original metadata CSV, digested into the manifest if given")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-k", help="evaluate a range of k on one fixed split")
    p.add_argument("--version", action="version", version=version)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--k-min", type=int, default=2)
    p.add_argument("--k-max", type=int, default=14)
    p.add_argument("--train-frac", type=float, default=DEFAULT_TRAIN_FRAC)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--report-dir", required=True)
    p.set_defaults(func=cmd_sweep_k)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
