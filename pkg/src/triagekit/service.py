"""Case-oriented HTTP API over the pipeline.

Cases are created by uploading a timeline and a metadata file; the
service persists each case in its own directory (inputs, a known-base
snapshot, label log, model, report) so a restart loses nothing.
Investigator label confirmations update both the case snapshot and the
server-wide known base, and a retrain re-runs the filter/train/rank
steps so confirmed artifacts leave the unknown ranking.

All endpoints live under ``/v1/``; errors carry a machine-readable
``code`` plus a human ``message``.
"""

from __future__ import annotations

import datetime as dt
import io
import json
import shutil
import threading
from pathlib import Path

from fastapi import FastAPI, File, Form, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .classifiers import ALGORITHMS, DegenerateClassError, TrainConfig
from .ingest import (FormatError, parse_artifact_csv, parse_bodyfile,
                     parse_l2tcsv)
from .knownbase import KnownBase, KnownEntry
from .merge import LABEL_BENIGN, LABEL_ILLEGAL, collate
from .pipeline import (METADATA_FORMATS, PipelineConfig, run_case,
                       save_outputs)

STATUS_INGESTED = "ingested"
STATUS_RANKED = "ranked"

_DECISIONS = (LABEL_BENIGN, LABEL_ILLEGAL)


class ApiError(Exception):
    """Maps to a JSON error response {code, message, ...extra}."""

    def __init__(self, status: int, code: str, message: str,
                 extra: dict | None = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.extra = extra or {}


def _now_iso() -> str:
    return dt.datetime.now(dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class CaseStore:
    """Per-case directories under one root; writes serialized per case."""

    def __init__(self, root: str | Path,
                 global_base_path: str | Path | None = None):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._global_base_path = (Path(global_base_path)
                                  if global_base_path else None)
        if self._global_base_path and self._global_base_path.exists():
            self.global_base = KnownBase.load(self._global_base_path)
        else:
            self.global_base = KnownBase(path=self._global_base_path)
        self._create_lock = threading.Lock()
        self._case_locks: dict[str, threading.Lock] = {}
        existing = [int(p.name.split("-")[1]) for p in self.root.iterdir()
                    if p.is_dir() and p.name.startswith("case-")
                    and p.name.split("-")[1].isdigit()]
        self._next_index = max(existing, default=0) + 1

    def case_dir(self, case_id: str) -> Path:
        path = self.root / case_id
        if not (path / "meta.json").exists():
            raise ApiError(404, "not-found", f"no such case: {case_id}")
        return path

    def lock(self, case_id: str) -> threading.Lock:
        with self._create_lock:
            return self._case_locks.setdefault(case_id, threading.Lock())

    def allocate(self) -> tuple[str, Path]:
        with self._create_lock:
            case_id = f"case-{self._next_index:04d}"
            self._next_index += 1
        path = self.root / case_id
        (path / "inputs").mkdir(parents=True)
        return case_id, path

    def read_meta(self, case_id: str) -> dict:
        path = self.case_dir(case_id) / "meta.json"
        return json.loads(path.read_text(encoding="utf-8"))

    def write_meta(self, case_id: str, meta: dict) -> None:
        path = self.root / case_id / "meta.json"
        path.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n",
                        encoding="utf-8")

    def snapshot_global_base(self, case_dir: Path) -> Path:
        """Copy the server-wide base into the case as its working base."""
        snapshot = case_dir / "known.csv"
        if self._global_base_path and self._global_base_path.exists():
            shutil.copyfile(self._global_base_path, snapshot)
        else:
            self.global_base.save(snapshot)
        return snapshot


def _validate_uploads(timeline_text: str, metadata_text: str,
                      metadata_format: str, source_id: str):
    """Parse both inputs; a fatal format error raises ApiError."""
    try:
        events, event_diags = parse_l2tcsv(io.StringIO(timeline_text))
        if metadata_format == "bodyfile":
            metadata, meta_diags = parse_bodyfile(
                io.StringIO(metadata_text), source_id)
        else:
            metadata, meta_diags = parse_artifact_csv(
                io.StringIO(metadata_text))
    except FormatError as exc:
        raise ApiError(400, "format-error", str(exc),
                       {"diagnostics": [{"line_number": 1,
                                         "reason": "bad-header"}]}) from exc
    diagnostics = [{"line_number": d.line_number, "reason": d.reason}
                   for d in list(event_diags) + list(meta_diags)]
    return events, metadata, diagnostics


def _case_config(meta: dict, case_dir: Path) -> PipelineConfig:
    cfg = meta["config"]
    return PipelineConfig(
        timeline_path=str(case_dir / "inputs" / "timeline.csv"),
        metadata_path=str(case_dir / "inputs" / "metadata.csv"),
        known_base_path=str(case_dir / "known.csv"),
        source_id=meta["source_id"],
        metadata_format=cfg["metadata_format"],
        train=TrainConfig(algorithm=cfg["algorithm"], seed=cfg["seed"]),
        k_extensions=cfg["k_extensions"],
        test_fraction=cfg["test_fraction"],
        threshold=cfg["threshold"],
        seed=cfg["seed"],
    )


def _event_summary(record) -> dict:
    counts_type: dict[str, int] = {}
    counts_source: dict[str, int] = {}
    for event in record.events:
        counts_type[event.event_type] = counts_type.get(
            event.event_type, 0) + 1
        counts_source[event.source] = counts_source.get(event.source, 0) + 1

    def modal(counts: dict[str, int]) -> str:
        return min(counts, key=lambda k: (-counts[k], k)) if counts else ""

    first = record.events[0].instant if record.events else None
    last = record.events[-1].instant if record.events else None
    fmt = "%Y-%m-%dT%H:%M:%SZ"
    return {
        "total_count": len(record.events),
        "top_type": modal(counts_type),
        "top_source": modal(counts_source),
        "first_event": first.strftime(fmt) if first else None,
        "last_event": last.strftime(fmt) if last else None,
    }


def create_app(data_dir: str | Path,
               known_base_path: str | Path | None = None) -> FastAPI:
    """Build the service over a case-store root directory."""
    store = CaseStore(data_dir, known_base_path)
    app = FastAPI(title="triagekit service", version="1")
    # the review UI is served statically from wherever is convenient
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    @app.exception_handler(ApiError)
    async def _api_error(_request, exc: ApiError):
        payload = {"code": exc.code, "message": str(exc), **exc.extra}
        return JSONResponse(payload, status_code=exc.status)

    def _handle(case_id: str, meta: dict) -> dict:
        return {
            "case_id": case_id,
            "status": meta["status"],
            "version": meta["version"],
            "created_at": meta["created_at"],
            "counts": meta["counts"],
        }

    @app.post("/v1/cases", status_code=201)
    async def create_case(
        timeline: UploadFile = File(...),
        metadata: UploadFile = File(...),
        metadata_format: str = Form("csv"),
        source_id: str = Form("case0"),
        algorithm: str = Form("tree"),
        k_extensions: int = Form(8),
        test_fraction: float = Form(0.3),
        threshold: float = Form(0.5),
        seed: int = Form(0),
    ):
        if metadata_format not in METADATA_FORMATS:
            raise ApiError(400, "invalid-argument",
                           f"metadata_format must be one of "
                           f"{METADATA_FORMATS}")
        if algorithm not in ALGORITHMS:
            raise ApiError(400, "invalid-argument",
                           f"algorithm must be one of {ALGORITHMS}")
        if not 0.0 < test_fraction < 1.0:
            raise ApiError(400, "invalid-argument",
                           "test_fraction must be in (0, 1)")
        try:
            timeline_text = (await timeline.read()).decode("utf-8")
            metadata_text = (await metadata.read()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ApiError(400, "format-error",
                           f"uploads must be UTF-8 text: {exc}") from exc

        events, parsed_metadata, diagnostics = _validate_uploads(
            timeline_text, metadata_text, metadata_format, source_id)

        case_id, case_dir = store.allocate()
        (case_dir / "inputs" / "timeline.csv").write_text(
            timeline_text, encoding="utf-8")
        (case_dir / "inputs" / "metadata.csv").write_text(
            metadata_text, encoding="utf-8")
        snapshot = store.snapshot_global_base(case_dir)

        result = collate(parsed_metadata, events, source_id)
        case_base = KnownBase.load(snapshot)
        split = case_base.filter_split(result.records)
        known_illegal = sum(1 for r in split.known
                            if r.label == LABEL_ILLEGAL)
        counts = {
            "artifacts": len(result.records),
            "known": len(split.known),
            "known_benign": len(split.known) - known_illegal,
            "known_illegal": known_illegal,
            "unknown": len(split.unknown),
            "orphan_events": result.orphan_count,
            "duplicate_keys": result.duplicate_count,
            "diagnostics": len(diagnostics),
        }
        hashes = sorted({r.metadata.hash for r in result.records
                         if r.metadata.hash})
        (case_dir / "hashes.txt").write_text(
            "\n".join(hashes) + ("\n" if hashes else ""), encoding="utf-8")

        meta = {
            "case_id": case_id,
            "status": STATUS_INGESTED,
            "version": 0,
            "created_at": _now_iso(),
            "source_id": source_id,
            "config": {
                "metadata_format": metadata_format,
                "algorithm": algorithm,
                "k_extensions": k_extensions,
                "test_fraction": test_fraction,
                "threshold": threshold,
                "seed": seed,
            },
            "counts": counts,
            "diagnostics": diagnostics,
        }
        store.write_meta(case_id, meta)
        return _handle(case_id, meta)

    @app.get("/v1/cases/{case_id}")
    async def get_case(case_id: str):
        return _handle(case_id, store.read_meta(case_id))

    @app.post("/v1/cases/{case_id}/retrain")
    async def retrain(case_id: str):
        with store.lock(case_id):
            case_dir = store.case_dir(case_id)
            meta = store.read_meta(case_id)
            config = _case_config(meta, case_dir)
            try:
                result = run_case(config)
            except DegenerateClassError as exc:
                raise ApiError(409, "degenerate-class", str(exc)) from exc
            save_outputs(result, case_dir)

            by_key = {(r.key.source_id, r.key.inode): r
                      for r in result.unknown}
            predictions = []
            for entry in result.report.ranking:
                record = by_key.get((entry.source_id, entry.inode))
                predictions.append({
                    "rank": entry.rank,
                    "source_id": entry.source_id,
                    "inode": entry.inode,
                    "path": entry.path,
                    "hash": entry.hash,
                    "score": entry.score,
                    "predicted": entry.predicted,
                    "events": (_event_summary(record) if record else None),
                })
            (case_dir / "predictions.json").write_text(
                json.dumps(predictions, sort_keys=True, indent=2) + "\n",
                encoding="utf-8")

            meta["status"] = STATUS_RANKED
            meta["version"] += 1
            meta["counts"] = dict(result.report.counts)
            store.write_meta(case_id, meta)
            return _handle(case_id, meta)

    @app.get("/v1/cases/{case_id}/predictions")
    async def get_predictions(case_id: str, top_n: int | None = None):
        case_dir = store.case_dir(case_id)
        meta = store.read_meta(case_id)
        if meta["status"] != STATUS_RANKED:
            raise ApiError(409, "not-trained",
                           f"case {case_id} has not been retrained yet")
        if top_n is not None and top_n < 0:
            raise ApiError(400, "invalid-argument",
                           f"top_n must be >= 0, got {top_n}")
        predictions = json.loads(
            (case_dir / "predictions.json").read_text(encoding="utf-8"))
        if top_n is not None:
            predictions = predictions[:top_n]
        return {"case_id": case_id, "version": meta["version"],
                "count": len(predictions), "predictions": predictions}

    @app.post("/v1/cases/{case_id}/labels")
    async def submit_label(case_id: str, payload: dict):
        case_dir = store.case_dir(case_id)
        artifact_hash = str(payload.get("hash", "")).lower()
        decision = payload.get("decision")
        investigator = str(payload.get("investigator", ""))
        if decision not in _DECISIONS:
            raise ApiError(400, "invalid-argument",
                           f"decision must be one of {_DECISIONS}, "
                           f"got {decision!r}")
        hashes = set((case_dir / "hashes.txt").read_text(
            encoding="utf-8").split())
        if artifact_hash not in hashes:
            raise ApiError(404, "not-found",
                           f"hash {artifact_hash!r} is not in case "
                           f"{case_id}")

        with store.lock(case_id):
            entry = KnownEntry(hash=artifact_hash, label=decision,
                               case_id=case_id, recorded_at=None)
            case_base = KnownBase.load(case_dir / "known.csv")
            outcome = case_base.upsert(entry)
            store.global_base.upsert(entry)
            with open(case_dir / "labels.log", "a", encoding="utf-8") as log:
                log.write(json.dumps({
                    "hash": artifact_hash, "decision": decision,
                    "investigator": investigator, "time": _now_iso(),
                }, sort_keys=True) + "\n")
        return {"case_id": case_id, "hash": artifact_hash,
                "decision": decision, "result": outcome}

    @app.get("/v1/cases/{case_id}/report")
    async def get_report(case_id: str):
        case_dir = store.case_dir(case_id)
        meta = store.read_meta(case_id)
        if meta["status"] != STATUS_RANKED:
            raise ApiError(409, "not-trained",
                           f"case {case_id} has no report yet; retrain first")
        report = json.loads(
            (case_dir / "report.json").read_text(encoding="utf-8"))
        return {"case_id": case_id, "version": meta["version"],
                "report": report}

    return app
