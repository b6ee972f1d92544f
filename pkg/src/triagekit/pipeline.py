"""End-to-end case processing: ingest, filter, train, rank, report.

A case run parses the timeline and metadata inputs, collates them into
artifact records, splits the records by known-base lookup, measures
holdout quality on the known side, retrains on all known rows, and
ranks the unknown side by model score.  The resulting
:class:`CaseReport` contains no wall-clock values, so the same inputs
and seed always serialize to the same bytes.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import classifiers, evaluation, features
from .classifiers import DegenerateClassError, Model, TrainConfig
from .features import FeatureSchema, FeatureVector
from .ingest import (
    ParseDiagnostic,
    format_instant,
    parse_artifact_csv,
    parse_bodyfile,
    parse_l2tcsv,
)
from .knownbase import KnownBase
from .merge import LABEL_ILLEGAL, ArtifactRecord, collate

METADATA_FORMATS = ("csv", "bodyfile")

RANKING_COLUMNS = ("rank", "source_id", "inode", "path", "hash", "score",
                   "predicted")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a case run needs; paths stay as given (echoed verbatim)."""

    timeline_path: str
    metadata_path: str
    known_base_path: str | None = None
    source_id: str = "case0"
    metadata_format: str = "csv"
    train: TrainConfig = field(default_factory=TrainConfig)
    k_extensions: int = 8
    test_fraction: float = 0.3
    reference_time: dt.datetime | None = None
    threshold: float = 0.5
    external_dataset_path: str | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.metadata_format not in METADATA_FORMATS:
            raise ValueError(
                f"metadata_format must be one of {METADATA_FORMATS}, "
                f"got {self.metadata_format!r}")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError(
                f"test_fraction must be in (0, 1), got {self.test_fraction}")
        if self.threshold != self.threshold:  # NaN guard
            raise ValueError("threshold must not be NaN")
        if (self.reference_time is not None
                and self.reference_time.tzinfo is None):
            raise ValueError("reference_time must be timezone-aware")


@dataclass(frozen=True)
class HoldoutMetrics:
    precision: float
    recall: float
    f1: float
    average_precision: float | None
    train_rows: int
    test_rows: int

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "average_precision": self.average_precision,
            "train_rows": self.train_rows,
            "test_rows": self.test_rows,
        }


@dataclass(frozen=True)
class RankedArtifact:
    rank: int
    source_id: str
    inode: int | None
    path: str
    hash: str
    score: float
    predicted: int

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "source_id": self.source_id,
            "inode": self.inode,
            "path": self.path,
            "hash": self.hash,
            "score": self.score,
            "predicted": self.predicted,
        }


@dataclass(frozen=True)
class CaseReport:
    source_id: str
    algorithm: str
    threshold: float
    reference_time: str
    schema_fingerprint: str
    counts: dict
    holdout: HoldoutMetrics | None
    ranking: tuple[RankedArtifact, ...]
    diagnostics: tuple[ParseDiagnostic, ...]
    config_echo: dict

    def to_dict(self) -> dict:
        return {
            "source_id": self.source_id,
            "algorithm": self.algorithm,
            "threshold": self.threshold,
            "reference_time": self.reference_time,
            "schema_fingerprint": self.schema_fingerprint,
            "counts": dict(self.counts),
            "holdout": self.holdout.to_dict() if self.holdout else None,
            "ranking": [entry.to_dict() for entry in self.ranking],
            "diagnostics": [
                {"line_number": d.line_number, "reason": d.reason}
                for d in self.diagnostics
            ],
            "config": dict(self.config_echo),
        }


@dataclass(frozen=True)
class RunResult:
    """Report plus the trained artifacts callers may want to persist."""

    report: CaseReport
    model: Model
    schema: FeatureSchema
    known: tuple[ArtifactRecord, ...]
    unknown: tuple[ArtifactRecord, ...]


def serialize_report(report: CaseReport) -> str:
    """Canonical JSON: sorted keys, two-space indent, trailing newline."""
    return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"


def serialize_ranking_csv(ranking) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RANKING_COLUMNS)
    for entry in ranking:
        writer.writerow((
            str(entry.rank), entry.source_id,
            "-" if entry.inode is None else str(entry.inode),
            entry.path, entry.hash, f"{entry.score:.10g}",
            str(entry.predicted),
        ))
    return buf.getvalue()


def derive_reference_time(records) -> dt.datetime:
    """Latest instant across events and metadata timestamps."""
    latest: dt.datetime | None = None
    for record in records:
        stamps = [record.metadata.crtime, record.metadata.atime,
                  record.metadata.mtime, record.metadata.ctime]
        stamps.extend(ev.instant for ev in record.events)
        for stamp in stamps:
            if stamp is not None and (latest is None or stamp > latest):
                latest = stamp
    if latest is None:
        raise ValueError(
            "cannot derive a reference time: no timestamps in the case")
    return latest


def load_case_inputs(config: PipelineConfig):
    """Parse and collate the two input files.

    Returns (records, diagnostics, counts) where counts holds the raw
    parse and merge tallies.
    """
    with open(config.timeline_path, "r", encoding="utf-8") as handle:
        events, event_diags = parse_l2tcsv(handle)
    with open(config.metadata_path, "r", encoding="utf-8") as handle:
        if config.metadata_format == "bodyfile":
            metadata, meta_diags = parse_bodyfile(handle, config.source_id)
        else:
            metadata, meta_diags = parse_artifact_csv(handle)

    result = collate(metadata, events, config.source_id)
    counts = {
        "events_parsed": len(events),
        "metadata_rows": len(metadata),
        "artifacts": len(result.records),
        "orphan_events": result.orphan_count,
        "duplicate_keys": result.duplicate_count,
        "timeline_diagnostics": len(event_diags),
        "metadata_diagnostics": len(meta_diags),
    }
    return result.records, tuple(event_diags) + tuple(meta_diags), counts


def _labels_of(vectors) -> list[int]:
    return [v.class_label for v in vectors]


def _train_on(vectors, schema: FeatureSchema, config: TrainConfig) -> Model:
    rows = features.encode_all(vectors, schema)
    X = [r.values for r in rows]
    y = [r.class_label for r in rows]
    return classifiers.train(X, y, config)


def _load_external(path: str | None) -> list[FeatureVector]:
    if path is None:
        return []
    with open(path, "r", encoding="utf-8") as handle:
        vectors = features.parse_dataset(handle)
    labeled = [v for v in vectors if v.class_label is not None]
    if len(labeled) != len(vectors):
        raise ValueError(
            f"external dataset {path} contains unlabeled rows")
    return labeled


def run_case(config: PipelineConfig) -> RunResult:
    """Execute the full triage flow for one case."""
    records, diagnostics, counts = load_case_inputs(config)

    base = (KnownBase.load(config.known_base_path)
            if config.known_base_path else KnownBase())
    split = base.filter_split(records)
    known, unknown = split.known, split.unknown
    counts["known"] = len(known)
    counts["known_illegal"] = sum(
        1 for r in known if r.label == LABEL_ILLEGAL)
    counts["known_benign"] = counts["known"] - counts["known_illegal"]
    counts["unknown"] = len(unknown)

    if not known:
        raise DegenerateClassError(
            "no known artifacts matched the known base; nothing to train on")

    reference = config.reference_time or derive_reference_time(records)

    known_vectors = features.extract_all(known, reference)
    counts["flagged"] = sum(1 for v in known_vectors if v.flagged)
    external = _load_external(config.external_dataset_path)
    counts["external_rows"] = len(external)

    # holdout pass: schema and model fitted on the train side only
    holdout: HoldoutMetrics | None = None
    labels = _labels_of(known_vectors)
    try:
        train_idx, test_idx = evaluation.stratified_split_indices(
            labels, config.test_fraction, config.seed)
    except evaluation.StratificationError:
        train_idx = test_idx = None
    if train_idx is not None:
        train_vectors = [known_vectors[i] for i in train_idx] + external
        test_vectors = [known_vectors[i] for i in test_idx]
        schema_holdout = features.build_schema(
            train_vectors, config.k_extensions, reference_time=reference)
        model_holdout = _train_on(train_vectors, schema_holdout, config.train)
        test_rows = features.encode_all(test_vectors, schema_holdout)
        X_test = [r.values for r in test_rows]
        y_test = [r.class_label for r in test_rows]
        scores = classifiers.score_many(model_holdout, X_test)
        y_pred = [int(s >= config.threshold) for s in scores]
        precision, recall, f1 = evaluation.evaluate_predictions(y_test, y_pred)
        try:
            ap = evaluation.average_precision(y_test, scores.tolist())
        except evaluation.UndefinedRecallError:
            ap = None
        holdout = HoldoutMetrics(
            precision=precision, recall=recall, f1=f1, average_precision=ap,
            train_rows=len(train_vectors), test_rows=len(test_vectors),
        )

    # final pass: everything known (plus external rows) trains the ranker
    final_vectors = known_vectors + external
    schema = features.build_schema(final_vectors, config.k_extensions,
                                   reference_time=reference)
    model = _train_on(final_vectors, schema, config.train)

    unknown_vectors = features.extract_all(unknown, reference)
    counts["flagged"] += sum(1 for v in unknown_vectors if v.flagged)
    ranking: list[RankedArtifact] = []
    if unknown_vectors:
        rows = [features.encode(v, schema).values for v in unknown_vectors]
        scores = classifiers.score_many(model, rows)
        order = sorted(
            range(len(unknown)),
            key=lambda i: (-scores[i], unknown[i].metadata.path,
                           unknown[i].key.inode or 0),
        )
        for rank, i in enumerate(order, start=1):
            record = unknown[i]
            ranking.append(RankedArtifact(
                rank=rank,
                source_id=record.key.source_id,
                inode=record.key.inode,
                path=record.metadata.path,
                hash=record.metadata.hash,
                score=float(scores[i]),
                predicted=int(scores[i] >= config.threshold),
            ))

    report = CaseReport(
        source_id=config.source_id,
        algorithm=config.train.algorithm,
        threshold=config.threshold,
        reference_time=format_instant(reference),
        schema_fingerprint=schema.fingerprint(),
        counts=counts,
        holdout=holdout,
        ranking=tuple(ranking),
        diagnostics=diagnostics,
        config_echo={
            "timeline_path": str(config.timeline_path),
            "metadata_path": str(config.metadata_path),
            "known_base_path": (str(config.known_base_path)
                                if config.known_base_path else None),
            "metadata_format": config.metadata_format,
            "algorithm": config.train.algorithm,
            "k_extensions": config.k_extensions,
            "test_fraction": config.test_fraction,
            "threshold": config.threshold,
            "seed": config.seed,
        },
    )
    return RunResult(report=report, model=model, schema=schema,
                     known=tuple(known), unknown=tuple(unknown))


def rank_unknown(report: CaseReport, top_n: int | None = None):
    """Top slice of the ranking; None means the whole list."""
    if top_n is None:
        return list(report.ranking)
    if top_n < 0:
        raise ValueError(f"top_n must be >= 0, got {top_n}")
    return list(report.ranking[:top_n])


def save_outputs(result: RunResult, out_dir: str | Path) -> dict[str, Path]:
    """Write report.json, ranking.csv, model.json, schema.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": out / "report.json",
        "ranking": out / "ranking.csv",
        "model": out / "model.json",
        "schema": out / "schema.json",
    }
    paths["report"].write_text(serialize_report(result.report),
                               encoding="utf-8")
    paths["ranking"].write_text(serialize_ranking_csv(result.report.ranking),
                                encoding="utf-8")
    classifiers.save_model(result.model, paths["model"],
                           result.schema.fingerprint())
    paths["schema"].write_text(
        json.dumps(result.schema.to_dict(), sort_keys=True, indent=2) + "\n",
        encoding="utf-8")
    return paths
