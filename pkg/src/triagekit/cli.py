"""Command-line interface.

Subcommands cover the full flow: ``gen`` (synthetic cases), ``ingest``
(parse + merge + dataset export), ``train``, ``predict``, ``eval``
(algorithms x datasets matrix), ``run`` (the end-to-end case pipeline),
and ``serve`` (HTTP service).

Every option can also come from a config file (``--config``) holding
``key = value`` lines; explicit flags win over the file, the file wins
over built-in defaults.

Exit codes: 0 success, 1 usage error, 2 data or format error,
3 degenerate-class error.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import json
import sys
from pathlib import Path

from . import classifiers, evaluation, features, pipeline, synthgen
from .classifiers import ALGORITHMS, DegenerateClassError, TrainConfig
from .ingest import FormatError, _parse_iso_utc
from .knownbase import KnownBase, PersistenceError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DEGENERATE = 3


class UsageError(Exception):
    """Bad flags or config keys; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the contract here is 1."""

    def error(self, message: str):
        raise UsageError(message)


def _instant(text: str) -> dt.datetime:
    parsed = _parse_iso_utc(text)
    if parsed is None:
        raise UsageError(f"bad instant: {text!r} (want ISO-8601)")
    return parsed


def read_config_file(path: str) -> dict[str, str]:
    """Parse ``key = value`` lines; # comments and blanks ignored."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(
                    f"{path}:{line_number}: expected 'key = value', "
                    f"got {line!r}")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _resolve(args: argparse.Namespace, defaults: dict,
             converters: dict) -> dict:
    """Merge defaults < config file < explicit flags."""
    merged = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        for key, raw in read_config_file(config_path).items():
            if key not in defaults:
                raise UsageError(f"unknown config key: {key}")
            convert = converters.get(key, str)
            try:
                merged[key] = convert(raw)
            except (TypeError, ValueError) as exc:
                raise UsageError(
                    f"bad config value for {key}: {raw!r} ({exc})") from exc
    for key in defaults:
        provided = getattr(args, key, argparse.SUPPRESS)
        if provided is not argparse.SUPPRESS:
            merged[key] = provided
    return merged


def _add(parser: argparse.ArgumentParser, name: str, **kwargs) -> None:
    parser.add_argument(name, default=argparse.SUPPRESS, **kwargs)


def _train_config(opts: dict) -> TrainConfig:
    return TrainConfig(
        algorithm=opts["algorithm"],
        k_neighbors=opts["k_neighbors"],
        seed=opts["seed"],
    )


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------

GEN_DEFAULTS = {
    "out": None, "total": 5000, "illegal_fraction": 0.108,
    "known_fraction": 0.5, "case_id": "synth", "seed": 0,
}
GEN_CONVERTERS = {"total": int, "illegal_fraction": float,
                  "known_fraction": float, "seed": int}


def cmd_gen(args: argparse.Namespace) -> int:
    opts = _resolve(args, GEN_DEFAULTS, GEN_CONVERTERS)
    if not opts["out"]:
        raise UsageError("gen requires --out")
    params = dataclasses.replace(
        synthgen.scenario_for_ratio(opts["total"], opts["illegal_fraction"],
                                    seed=opts["seed"]),
        known_fraction=opts["known_fraction"])
    case = synthgen.generate(params)
    paths = synthgen.emit(case, opts["out"], case_id=opts["case_id"])
    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------

INGEST_DEFAULTS = {
    "timeline": None, "metadata": None, "metadata_format": "csv",
    "known_base": None, "source_id": "case0", "reference_time": None,
    "out": None,
}
INGEST_CONVERTERS = {"reference_time": _instant}


def cmd_ingest(args: argparse.Namespace) -> int:
    opts = _resolve(args, INGEST_DEFAULTS, INGEST_CONVERTERS)
    for required in ("timeline", "metadata", "out"):
        if not opts[required]:
            raise UsageError(f"ingest requires --{required.replace('_', '-')}")
    config = pipeline.PipelineConfig(
        timeline_path=opts["timeline"], metadata_path=opts["metadata"],
        metadata_format=opts["metadata_format"], source_id=opts["source_id"],
    )
    records, diagnostics, counts = pipeline.load_case_inputs(config)
    if opts["known_base"]:
        base = KnownBase.load(opts["known_base"])
        labeled = []
        for record in records:
            verdict = (base.lookup(record.metadata.hash)
                       if record.metadata.hash else "unknown")
            labeled.append(record if verdict == "unknown"
                           else record.with_label(verdict))
        records = labeled
    reference = opts["reference_time"] or pipeline.derive_reference_time(
        records)
    vectors = features.extract_all(records, reference)
    Path(opts["out"]).write_text(features.serialize_dataset(vectors),
                                 encoding="utf-8")
    for diag in diagnostics:
        print(f"line {diag.line_number}: {diag.reason}", file=sys.stderr)
    print(f"artifacts: {counts['artifacts']} orphans: "
          f"{counts['orphan_events']} diagnostics: {len(diagnostics)}")
    print(f"dataset: {opts['out']}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

TRAIN_DEFAULTS = {
    "dataset": None, "algorithm": "tree", "k_extensions": 8,
    "k_neighbors": 5, "seed": 0, "out_model": None, "out_schema": None,
}
TRAIN_CONVERTERS = {"k_extensions": int, "k_neighbors": int, "seed": int}


def cmd_train(args: argparse.Namespace) -> int:
    opts = _resolve(args, TRAIN_DEFAULTS, TRAIN_CONVERTERS)
    for required in ("dataset", "out_model", "out_schema"):
        if not opts[required]:
            raise UsageError(f"train requires --{required.replace('_', '-')}")
    with open(opts["dataset"], "r", encoding="utf-8") as handle:
        vectors = features.parse_dataset(handle)
    labeled = [v for v in vectors if v.class_label is not None]
    if not labeled:
        raise ValueError("dataset has no labeled rows to train on")
    schema = features.build_schema(labeled, opts["k_extensions"])
    rows = features.encode_all(labeled, schema)
    model = classifiers.train([r.values for r in rows],
                              [r.class_label for r in rows],
                              _train_config(opts))
    classifiers.save_model(model, opts["out_model"], schema.fingerprint())
    Path(opts["out_schema"]).write_text(
        json.dumps(schema.to_dict(), sort_keys=True, indent=2) + "\n",
        encoding="utf-8")
    print(f"model: {opts['out_model']}")
    print(f"schema: {opts['out_schema']}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# predict
# ---------------------------------------------------------------------------

PREDICT_DEFAULTS = {
    "dataset": None, "model": None, "schema": None, "threshold": 0.5,
    "out": None,
}
PREDICT_CONVERTERS = {"threshold": float}


def cmd_predict(args: argparse.Namespace) -> int:
    opts = _resolve(args, PREDICT_DEFAULTS, PREDICT_CONVERTERS)
    for required in ("dataset", "model", "schema"):
        if not opts[required]:
            raise UsageError(
                f"predict requires --{required.replace('_', '-')}")
    with open(opts["dataset"], "r", encoding="utf-8") as handle:
        vectors = features.parse_dataset(handle)
    with open(opts["schema"], "r", encoding="utf-8") as handle:
        schema = features.FeatureSchema.from_dict(json.load(handle))
    model, fingerprint = classifiers.load_model(opts["model"])
    if fingerprint and fingerprint != schema.fingerprint():
        raise ValueError("model was trained against a different schema")
    rows = [features.encode(v, schema).values for v in vectors]
    scores = classifiers.score_many(model, rows)
    lines = ["index,score,predicted"]
    for i, score in enumerate(scores):
        lines.append(
            f"{i},{score:.10g},{int(score >= opts['threshold'])}")
    text = "\n".join(lines) + "\n"
    if opts["out"]:
        Path(opts["out"]).write_text(text, encoding="utf-8")
        print(f"predictions: {opts['out']}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

EVAL_DEFAULTS = {
    "dataset": None, "algorithms": ",".join(ALGORITHMS),
    "k_extensions": 8, "k_neighbors": 5, "test_fraction": 0.3, "seed": 0,
    "threshold": 0.5, "out": None, "pr_dir": None,
}
EVAL_CONVERTERS = {"k_extensions": int, "k_neighbors": int,
                   "test_fraction": float, "seed": int, "threshold": float}


def _eval_one(name: str, path: str, algorithm: str, opts: dict) -> dict:
    with open(path, "r", encoding="utf-8") as handle:
        vectors = features.parse_dataset(handle)
    labeled = [v for v in vectors if v.class_label is not None]
    if not labeled:
        raise ValueError(f"dataset {name} has no labeled rows")
    labels = [v.class_label for v in labeled]
    train_idx, test_idx = evaluation.stratified_split_indices(
        labels, opts["test_fraction"], opts["seed"])
    train_vectors = [labeled[i] for i in train_idx]
    test_vectors = [labeled[i] for i in test_idx]

    schema = features.build_schema(train_vectors, opts["k_extensions"])
    train_rows = features.encode_all(train_vectors, schema)
    test_rows = features.encode_all(test_vectors, schema)
    model = classifiers.train(
        [r.values for r in train_rows], [r.class_label for r in train_rows],
        _train_config({**opts, "algorithm": algorithm}))
    scores = classifiers.score_many(model, [r.values for r in test_rows])
    y_test = [r.class_label for r in test_rows]
    y_pred = [int(s >= opts["threshold"]) for s in scores]
    precision, recall, f1 = evaluation.evaluate_predictions(y_test, y_pred)
    try:
        ap = evaluation.average_precision(y_test, scores.tolist())
        curve = evaluation.pr_curve(y_test, scores.tolist())
    except evaluation.UndefinedRecallError:
        ap, curve = 0.0, []
    if opts["pr_dir"] and curve:
        pr_dir = Path(opts["pr_dir"])
        pr_dir.mkdir(parents=True, exist_ok=True)
        (pr_dir / f"pr_{algorithm}_{name}.csv").write_text(
            evaluation.serialize_pr_curve(curve), encoding="utf-8")
    return {"algorithm": algorithm, "dataset": name, "precision": precision,
            "recall": recall, "f1": f1, "average_precision": ap}


def cmd_eval(args: argparse.Namespace) -> int:
    opts = _resolve(args, EVAL_DEFAULTS, EVAL_CONVERTERS)
    if not opts["dataset"]:
        raise UsageError("eval requires at least one --dataset NAME=PATH")
    datasets = []
    for item in (opts["dataset"] if isinstance(opts["dataset"], list)
                 else [opts["dataset"]]):
        name, sep, path = item.partition("=")
        if not sep:
            raise UsageError(f"--dataset must be NAME=PATH, got {item!r}")
        datasets.append((name, path))
    algorithms = [a.strip() for a in opts["algorithms"].split(",") if a.strip()]
    for algorithm in algorithms:
        if algorithm not in ALGORITHMS:
            raise UsageError(f"unknown algorithm: {algorithm}")

    rows = [_eval_one(name, path, algorithm, opts)
            for name, path in datasets for algorithm in algorithms]
    table = evaluation.serialize_metrics_table(rows)
    if opts["out"]:
        Path(opts["out"]).write_text(table, encoding="utf-8")
        print(f"matrix: {opts['out']}")
    else:
        sys.stdout.write(table)
    return EXIT_OK


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

RUN_DEFAULTS = {
    "timeline": None, "metadata": None, "metadata_format": "csv",
    "known_base": None, "source_id": "case0", "algorithm": "tree",
    "k_extensions": 8, "k_neighbors": 5, "test_fraction": 0.3,
    "threshold": 0.5, "reference_time": None, "external_dataset": None,
    "seed": 0, "out": None,
}
RUN_CONVERTERS = {"k_extensions": int, "k_neighbors": int,
                  "test_fraction": float, "threshold": float, "seed": int,
                  "reference_time": _instant}


def cmd_run(args: argparse.Namespace) -> int:
    opts = _resolve(args, RUN_DEFAULTS, RUN_CONVERTERS)
    for required in ("timeline", "metadata", "out"):
        if not opts[required]:
            raise UsageError(f"run requires --{required.replace('_', '-')}")
    config = pipeline.PipelineConfig(
        timeline_path=opts["timeline"],
        metadata_path=opts["metadata"],
        known_base_path=opts["known_base"],
        source_id=opts["source_id"],
        metadata_format=opts["metadata_format"],
        train=_train_config(opts),
        k_extensions=opts["k_extensions"],
        test_fraction=opts["test_fraction"],
        reference_time=opts["reference_time"],
        threshold=opts["threshold"],
        external_dataset_path=opts["external_dataset"],
        seed=opts["seed"],
    )
    result = pipeline.run_case(config)
    paths = pipeline.save_outputs(result, opts["out"])
    counts = result.report.counts
    print(f"known: {counts['known']} (benign {counts['known_benign']}, "
          f"illegal {counts['known_illegal']}) unknown: {counts['unknown']}")
    if result.report.holdout:
        h = result.report.holdout
        print(f"holdout f1: {h.f1:.4f} precision: {h.precision:.4f} "
              f"recall: {h.recall:.4f}")
    print(f"report: {paths['report']}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# serve
# ---------------------------------------------------------------------------

SERVE_DEFAULTS = {
    "data_dir": None, "known_base": None, "host": "127.0.0.1", "port": 8710,
}
SERVE_CONVERTERS = {"port": int}


def cmd_serve(args: argparse.Namespace) -> int:
    opts = _resolve(args, SERVE_DEFAULTS, SERVE_CONVERTERS)
    if not opts["data_dir"]:
        raise UsageError("serve requires --data-dir")
    import uvicorn

    from .service import create_app
    app = create_app(opts["data_dir"], known_base_path=opts["known_base"])
    uvicorn.run(app, host=opts["host"], port=opts["port"], log_level="info")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser wiring
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="triagekit",
                     description="metadata-based forensic triage pipeline")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    gen = sub.add_parser("gen", help="generate a synthetic case")
    _add(gen, "--config")
    _add(gen, "--out")
    _add(gen, "--total", type=int)
    _add(gen, "--illegal-fraction", type=float, dest="illegal_fraction")
    _add(gen, "--known-fraction", type=float, dest="known_fraction")
    _add(gen, "--case-id", dest="case_id")
    _add(gen, "--seed", type=int)
    gen.set_defaults(handler=cmd_gen)

    ingest = sub.add_parser("ingest",
                            help="parse and merge inputs, export dataset CSV")
    _add(ingest, "--config")
    _add(ingest, "--timeline")
    _add(ingest, "--metadata")
    _add(ingest, "--metadata-format", choices=pipeline.METADATA_FORMATS,
         dest="metadata_format")
    _add(ingest, "--known-base", dest="known_base")
    _add(ingest, "--source-id", dest="source_id")
    _add(ingest, "--reference-time", type=_instant, dest="reference_time")
    _add(ingest, "--out")
    ingest.set_defaults(handler=cmd_ingest)

    train = sub.add_parser("train", help="train a model from a dataset CSV")
    _add(train, "--config")
    _add(train, "--dataset")
    _add(train, "--algorithm", choices=ALGORITHMS)
    _add(train, "--k-extensions", type=int, dest="k_extensions")
    _add(train, "--k-neighbors", type=int, dest="k_neighbors")
    _add(train, "--seed", type=int)
    _add(train, "--out-model", dest="out_model")
    _add(train, "--out-schema", dest="out_schema")
    train.set_defaults(handler=cmd_train)

    predict = sub.add_parser("predict", help="score a dataset with a model")
    _add(predict, "--config")
    _add(predict, "--dataset")
    _add(predict, "--model")
    _add(predict, "--schema")
    _add(predict, "--threshold", type=float)
    _add(predict, "--out")
    predict.set_defaults(handler=cmd_predict)

    evalp = sub.add_parser("eval",
                           help="algorithms x datasets evaluation matrix")
    _add(evalp, "--config")
    evalp.add_argument("--dataset", action="append",
                       default=argparse.SUPPRESS, metavar="NAME=PATH")
    _add(evalp, "--algorithms")
    _add(evalp, "--k-extensions", type=int, dest="k_extensions")
    _add(evalp, "--k-neighbors", type=int, dest="k_neighbors")
    _add(evalp, "--test-fraction", type=float, dest="test_fraction")
    _add(evalp, "--threshold", type=float)
    _add(evalp, "--seed", type=int)
    _add(evalp, "--out")
    _add(evalp, "--pr-dir", dest="pr_dir")
    evalp.set_defaults(handler=cmd_eval)

    run = sub.add_parser("run", help="full case pipeline")
    _add(run, "--config")
    _add(run, "--timeline")
    _add(run, "--metadata")
    _add(run, "--metadata-format", choices=pipeline.METADATA_FORMATS,
         dest="metadata_format")
    _add(run, "--known-base", dest="known_base")
    _add(run, "--source-id", dest="source_id")
    _add(run, "--algorithm", choices=ALGORITHMS)
    _add(run, "--k-extensions", type=int, dest="k_extensions")
    _add(run, "--k-neighbors", type=int, dest="k_neighbors")
    _add(run, "--test-fraction", type=float, dest="test_fraction")
    _add(run, "--threshold", type=float)
    _add(run, "--reference-time", type=_instant, dest="reference_time")
    _add(run, "--external-dataset", dest="external_dataset")
    _add(run, "--seed", type=int)
    _add(run, "--out")
    run.set_defaults(handler=cmd_run)

    serve = sub.add_parser("serve", help="start the HTTP service")
    _add(serve, "--config")
    _add(serve, "--data-dir", dest="data_dir")
    _add(serve, "--known-base", dest="known_base")
    _add(serve, "--host")
    _add(serve, "--port", type=int)
    serve.set_defaults(handler=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "handler", None):
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        return args.handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DegenerateClassError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print("hint: import more known hashes (both classes are required) "
              "and rerun", file=sys.stderr)
        return EXIT_DEGENERATE
    except (FormatError, PersistenceError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
