"""Persistent hash base of known-benign and known-illegal artifacts.

The base backs the filtering step: artifacts whose hash is already known
get their label from the base and skip prediction; everything else is
"unknown" and goes to the model.  Investigator confirmations flow back in
through :meth:`KnownBase.upsert`.

Storage is a single append-friendly CSV (``hash,label,case_id,recorded_at``).
Appending a row with an existing hash relabels it: last write wins on
load, which keeps the full label history on disk for audit.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import logging
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .ingest import is_valid_hash
from .merge import LABEL_BENIGN, LABEL_ILLEGAL, ArtifactRecord

logger = logging.getLogger(__name__)

KNOWN_BASE_COLUMNS = ("hash", "label", "case_id", "recorded_at")
KNOWN_BASE_HEADER = ",".join(KNOWN_BASE_COLUMNS)

_LABELS = (LABEL_BENIGN, LABEL_ILLEGAL)


@dataclass(frozen=True)
class KnownEntry:
    hash: str
    label: str  # "benign" | "illegal"
    case_id: str = ""
    recorded_at: dt.datetime | None = None


@dataclass(frozen=True)
class FilterSplit:
    """Partition of a case's artifacts by hash familiarity.

    ``known`` records carry the base's label; ``unknown`` records have no
    label.  Together they are exactly the input, order preserved per side.
    """

    known: list[ArtifactRecord]
    unknown: list[ArtifactRecord]


def _normalize_hash(value: str) -> str:
    digest = value.strip().lower()
    if not is_valid_hash(digest):
        raise ValueError(f"malformed hash: {value!r}")
    return digest


def _format_recorded_at(instant: dt.datetime | None) -> str:
    if instant is None:
        return ""
    return instant.astimezone(dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _parse_recorded_at(text: str) -> dt.datetime | None:
    if not text:
        return None
    value = text[:-1] + "+00:00" if text.endswith("Z") else text
    try:
        parsed = dt.datetime.fromisoformat(value)
    except ValueError:
        return None
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=dt.timezone.utc)
    return parsed.astimezone(dt.timezone.utc)


class KnownBase:
    """In-memory hash -> label map with optional file persistence.

    Reads are lock-free; writes are serialized through one lock and are
    immediately visible to later lookups on the same instance.  When
    ``path`` is set, every upsert appends one CSV row, so the file is an
    audit log whose replay (last write wins) reproduces the state.
    """

    def __init__(self, path: Path | None = None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[str, KnownEntry] = {}
        self._write_lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._entries)

    def entries(self) -> list[KnownEntry]:
        return list(self._entries.values())

    def label_counts(self) -> dict[str, int]:
        counts = {LABEL_BENIGN: 0, LABEL_ILLEGAL: 0}
        for entry in self._entries.values():
            counts[entry.label] += 1
        return counts

    @classmethod
    def load(cls, path: Path) -> "KnownBase":
        """Replay a base file; missing file means an empty base."""
        base = cls(path=path)
        path = Path(path)
        if not path.exists():
            return base
        with path.open("r", encoding="utf-8", newline="") as handle:
            for row in csv.reader(handle):
                if not row or tuple(row) == KNOWN_BASE_COLUMNS:
                    continue
                if len(row) != len(KNOWN_BASE_COLUMNS):
                    logger.warning("known base %s: skipping malformed row %r", path, row)
                    continue
                digest, label, case_id, recorded = row
                if label not in _LABELS or not is_valid_hash(digest.lower()):
                    logger.warning("known base %s: skipping malformed row %r", path, row)
                    continue
                entry = KnownEntry(
                    hash=digest.lower(), label=label, case_id=case_id,
                    recorded_at=_parse_recorded_at(recorded),
                )
                base._entries[entry.hash] = entry
        return base

    def lookup(self, hash: str) -> str:
        """Label for a hash: "benign", "illegal", or "unknown".

        Matching is exact (case-insensitive hex); a malformed hash raises
        ValueError rather than reading as unknown.
        """
        entry = self._entries.get(_normalize_hash(hash))
        return entry.label if entry is not None else "unknown"

    def upsert(self, entry: KnownEntry) -> str:
        """Insert or relabel one hash; returns "inserted" or "replaced"."""
        digest = _normalize_hash(entry.hash)
        if entry.label not in _LABELS:
            raise ValueError(f"unknown label: {entry.label!r}")
        stored = KnownEntry(
            hash=digest, label=entry.label,
            case_id=entry.case_id, recorded_at=entry.recorded_at,
        )
        with self._write_lock:
            previous = self._entries.get(digest)
            self._entries[digest] = stored
            if self.path is not None:
                self._append_row(stored)
        if previous is None:
            return "inserted"
        if previous.label != stored.label:
            logger.info("known base: %s relabelled %s -> %s",
                        digest, previous.label, stored.label)
        return "replaced"

    def _append_row(self, entry: KnownEntry) -> None:
        assert self.path is not None
        new_file = not self.path.exists() or self.path.stat().st_size == 0
        try:
            with self.path.open("a", encoding="utf-8", newline="") as handle:
                writer = csv.writer(handle, lineterminator="\n")
                if new_file:
                    writer.writerow(KNOWN_BASE_COLUMNS)
                writer.writerow((
                    entry.hash, entry.label, entry.case_id,
                    _format_recorded_at(entry.recorded_at),
                ))
        except OSError as exc:
            raise PersistenceError(f"cannot append to known base {self.path}: {exc}") from exc

    def save(self, path: Path | None = None) -> Path:
        """Write the current state (one row per hash) to ``path``."""
        target = Path(path) if path is not None else self.path
        if target is None:
            raise ValueError("no path to save the known base to")
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(KNOWN_BASE_COLUMNS)
        for entry in self._entries.values():
            writer.writerow((
                entry.hash, entry.label, entry.case_id,
                _format_recorded_at(entry.recorded_at),
            ))
        try:
            target.write_text(buf.getvalue(), encoding="utf-8")
        except OSError as exc:
            raise PersistenceError(f"cannot write known base {target}: {exc}") from exc
        return target

    def filter_split(self, records: Sequence[ArtifactRecord]) -> FilterSplit:
        """Split artifacts into known (hash in base, labelled) and unknown.

        Records without a hash cannot match anything and are unknown by
        definition.  Order is preserved within each side.
        """
        known: list[ArtifactRecord] = []
        unknown: list[ArtifactRecord] = []
        for record in records:
            digest = record.metadata.hash
            entry = self._entries.get(digest) if digest else None
            if entry is None:
                unknown.append(record.with_label(None))
            else:
                known.append(record.with_label(entry.label))
        return FilterSplit(known=known, unknown=unknown)

    def import_hashes(
        self,
        hashes: Iterable[str],
        label: str,
        case_id: str = "",
        recorded_at: dt.datetime | None = None,
    ) -> int:
        """Upsert a plain newline-style hash list under one label."""
        count = 0
        for line in hashes:
            digest = line.strip()
            if not digest:
                continue
            self.upsert(KnownEntry(
                hash=digest, label=label, case_id=case_id, recorded_at=recorded_at,
            ))
            count += 1
        return count


class PersistenceError(OSError):
    """Raised when the base file cannot be written."""
