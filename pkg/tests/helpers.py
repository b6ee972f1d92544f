"""Shared builders for test inputs."""

from __future__ import annotations

import datetime as dt

from triagekit.ingest import FileMetadata, TimelineEvent

UTC = dt.timezone.utc


def utc(year, month, day, hour=0, minute=0, second=0) -> dt.datetime:
    return dt.datetime(year, month, day, hour, minute, second, tzinfo=UTC)


def make_event(inode: int | None, instant: dt.datetime,
               **overrides) -> TimelineEvent:
    fields = {
        "date": instant.date(),
        "time": instant.time(),
        "timezone": "UTC",
        "macb": "M...",
        "source": "FILE",
        "sourcetype": "OS Content Modification Time",
        "event_type": "Content Modification Time",
        "user": "user0",
        "host": "host0",
        "short_desc": "file",
        "desc": "touched",
        "version": "2",
        "filename": "/tmp/file",
        "inode": inode,
        "notes": "-",
        "format": "filestat",
        "extra": "-",
        "instant": instant,
    }
    fields.update(overrides)
    return TimelineEvent(**fields)


def make_meta(inode: int, path: str, **overrides) -> FileMetadata:
    name = path.rsplit("/", 1)[-1]
    fields = {
        "source_id": "case0",
        "path": path,
        "name": name,
        "size_bytes": 2048,
        "inode": inode,
        "hash": "a" * 64,
        "owner": "user0",
        "crtime": utc(2019, 1, 1),
        "atime": utc(2019, 1, 2),
        "mtime": utc(2019, 1, 2),
        "ctime": utc(2019, 1, 1),
    }
    fields.update(overrides)
    return FileMetadata(**fields)
