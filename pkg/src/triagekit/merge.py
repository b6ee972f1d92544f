"""Collate digital events with file metadata into per-artifact records.

Artifacts are keyed by (source_id, inode): the inode identifies a file
within one image/partition, and source_id names the image, so the pair is
unique across a multi-source case.  Events that carry no inode, or an
inode with no metadata row, have no owning artifact and are counted as
orphans.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
from collections import Counter
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .ingest import ARTIFACT_COLUMNS, FileMetadata, TimelineEvent, format_instant

LABEL_BENIGN = "benign"
LABEL_ILLEGAL = "illegal"


@dataclass(frozen=True)
class ArtifactKey:
    source_id: str
    inode: int


@dataclass(frozen=True)
class ArtifactRecord:
    """One file artifact: metadata plus its collated events.

    ``events`` are chronological (resolved UTC instant, ties by input
    order).  ``label`` is None until the known-hash filter or an
    investigator assigns "benign" or "illegal".
    """

    key: ArtifactKey
    metadata: FileMetadata
    events: tuple[TimelineEvent, ...]
    label: str | None = None

    def with_label(self, label: str | None) -> "ArtifactRecord":
        return replace(self, label=label)


@dataclass(frozen=True)
class EventSummary:
    total_count: int
    count_in_window: tuple[int, ...]
    top_type: str
    top_source: str


@dataclass(frozen=True)
class CollateResult:
    records: list[ArtifactRecord]
    orphan_count: int
    duplicate_count: int


def collate(
    metadata: Sequence[FileMetadata],
    events: Sequence[TimelineEvent],
    source_id: str,
) -> CollateResult:
    """Attach each event to the artifact owning its inode.

    Produces one record per distinct (source_id, inode) in ``metadata``,
    in first-seen order.  Duplicate metadata rows for a key keep the first
    row and are tallied in ``duplicate_count``.  Events with no inode or
    an unmatched inode are tallied in ``orphan_count``, so attached events
    plus orphans always equal ``len(events)``.
    """
    by_inode: dict[int, FileMetadata] = {}
    order: list[int] = []
    duplicates = 0
    for meta in metadata:
        if meta.inode in by_inode:
            duplicates += 1
            continue
        by_inode[meta.inode] = meta
        order.append(meta.inode)

    buckets: dict[int, list[TimelineEvent]] = {inode: [] for inode in order}
    orphans = 0
    for event in events:
        if event.inode is None or event.inode not in buckets:
            orphans += 1
            continue
        buckets[event.inode].append(event)

    records = []
    for inode in order:
        collated = sorted(buckets[inode], key=lambda e: e.instant)  # stable: input order breaks ties
        records.append(ArtifactRecord(
            key=ArtifactKey(source_id=source_id, inode=inode),
            metadata=by_inode[inode],
            events=tuple(collated),
        ))
    return CollateResult(records=records, orphan_count=orphans, duplicate_count=duplicates)


def _modal(values: Iterable[str]) -> str:
    """Most frequent value; ties broken lexicographically; "" when empty."""
    counts = Counter(values)
    if not counts:
        return ""
    return min(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]


def summarize_events(
    record: ArtifactRecord,
    windows: Sequence[tuple[dt.datetime, dt.datetime]] = (),
) -> EventSummary:
    """Event counts for an artifact, total and per half-open [start, end)."""
    for start, end in windows:
        if end <= start:
            raise ValueError(f"invalid window: end {end} <= start {start}")
    per_window = tuple(
        sum(1 for e in record.events if start <= e.instant < end)
        for start, end in windows
    )
    return EventSummary(
        total_count=len(record.events),
        count_in_window=per_window,
        top_type=_modal(e.event_type for e in record.events),
        top_source=_modal(e.source for e in record.events),
    )


def serialize_merged_csv(records: Sequence[ArtifactRecord]) -> str:
    """Merged-record export: the native artifact CSV plus event_count."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ARTIFACT_COLUMNS + ("event_count",))
    for record in records:
        m = record.metadata
        writer.writerow((
            m.source_id, m.path, str(m.size_bytes), str(m.inode), m.hash,
            m.owner, format_instant(m.crtime), format_instant(m.atime),
            format_instant(m.mtime), format_instant(m.ctime),
            str(len(record.events)),
        ))
    return buf.getvalue()
