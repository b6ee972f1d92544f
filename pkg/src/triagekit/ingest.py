"""Parsers and writers for the three supported triage input formats.

Formats:

* super-timeline CSV, 17 fixed columns (``date`` .. ``extra``), comma
  separated with RFC-4180 quoting;
* bodyfile, 11 pipe-separated fields
  (``MD5|name|inode|mode|UID|GID|size|atime|mtime|ctime|crtime``) with
  epoch-second timestamps, ``0`` meaning "not recorded";
* native artifact CSV, the pipeline's interchange format
  (``source_id,path,size_bytes,inode,hash,owner,crtime,atime,mtime,ctime``)
  with ISO-8601 UTC timestamps.

Parsers are streaming: they consume the input line by line and never hold
more than one record in memory.  Malformed lines are reported as
:class:`ParseDiagnostic` values and never abort the stream; only a missing
or wrong header is fatal.  ``serialize_*`` functions write the canonical
form of each format, and ``serialize(parse(x))`` is byte-identical to ``x``
for canonical input.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
from dataclasses import dataclass, field
from typing import Iterable, Iterator
from zoneinfo import ZoneInfo

L2T_COLUMNS = (
    "date", "time", "timezone", "MACB", "source", "sourcetype", "type",
    "user", "host", "short", "desc", "version", "filename", "inode",
    "notes", "format", "extra",
)
L2T_HEADER = ",".join(L2T_COLUMNS)

ARTIFACT_COLUMNS = (
    "source_id", "path", "size_bytes", "inode", "hash", "owner",
    "crtime", "atime", "mtime", "ctime",
)
ARTIFACT_HEADER = ",".join(ARTIFACT_COLUMNS)

BODYFILE_FIELD_COUNT = 11

# Diagnostic reasons.  bad-macb extends the four base reasons: a MACB flag
# string outside {M,A,C,B,.}x4 has no other bucket to land in.
BAD_FIELD_COUNT = "bad-field-count"
BAD_TIMESTAMP = "bad-timestamp"
BAD_INTEGER = "bad-integer"
BAD_HASH = "bad-hash"
BAD_MACB = "bad-macb"

_MACB_CHARS = frozenset("MACB.")
_HASH_LENGTHS = frozenset((32, 40, 64))
_HEX_CHARS = frozenset("0123456789abcdef")

_UTC = dt.timezone.utc
_TZ_ALIASES = {"UTC": _UTC, "GMT": _UTC, "Z": _UTC}


class FormatError(ValueError):
    """Fatal input problem: missing or mismatched header line."""


@dataclass(frozen=True)
class ParseDiagnostic:
    """One malformed input line, reported instead of raised."""

    line_number: int  # 1-based physical line number, header included
    reason: str
    raw_line: str


@dataclass(frozen=True)
class TimelineEvent:
    """One row of the super timeline.

    ``date``/``time``/``timezone`` keep the source fields; ``instant`` is
    the same moment resolved to UTC, which is what every downstream
    consumer (collation order, event windows, age features) uses.
    """

    date: dt.date
    time: dt.time
    timezone: str
    macb: str
    source: str
    sourcetype: str
    event_type: str
    user: str
    host: str
    short_desc: str
    desc: str
    version: str
    filename: str
    inode: int | None
    notes: str
    format: str
    extra: str
    instant: dt.datetime = field(compare=False)


@dataclass(frozen=True)
class FileMetadata:
    """Filesystem metadata for one file artifact.

    ``hash`` is a lowercase hex digest (MD5/SHA1/SHA256) or ``""`` when no
    hash was recorded.  ``name`` always equals the final path component.
    Any of the four timestamps may be absent (``None``).
    """

    source_id: str
    path: str
    name: str
    size_bytes: int
    inode: int
    hash: str
    owner: str = ""
    crtime: dt.datetime | None = None
    atime: dt.datetime | None = None
    mtime: dt.datetime | None = None
    ctime: dt.datetime | None = None


def is_valid_hash(text: str) -> bool:
    """True for a lowercase/uppercase hex digest of length 32, 40 or 64."""
    if len(text) not in _HASH_LENGTHS:
        return False
    return all(c in _HEX_CHARS for c in text.lower())


def path_basename(path: str) -> str:
    """Final component of a /-separated path ("/a/b/c.txt" -> "c.txt")."""
    return path.rstrip("/").rpartition("/")[2]


def _resolve_timezone(name: str) -> dt.tzinfo | None:
    alias = _TZ_ALIASES.get(name.strip().upper())
    if alias is not None:
        return alias
    try:
        return ZoneInfo(name.strip())
    except Exception:
        return None


def _parse_iso_utc(text: str) -> dt.datetime | None:
    """ISO-8601 text -> UTC datetime at seconds precision, or None."""
    value = text.strip()
    if value.endswith(("Z", "z")):
        value = value[:-1] + "+00:00"
    try:
        parsed = dt.datetime.fromisoformat(value)
    except ValueError:
        return None
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=_UTC)
    return parsed.astimezone(_UTC).replace(microsecond=0)


def format_instant(instant: dt.datetime | None) -> str:
    """Canonical artifact-CSV timestamp: ``YYYY-MM-DDTHH:MM:SSZ`` or ""."""
    if instant is None:
        return ""
    return instant.astimezone(_UTC).strftime("%Y-%m-%dT%H:%M:%SZ")


def _split_csv_line(raw: str) -> list[str]:
    """Split one physical line with RFC-4180 quoting rules.

    Fields with embedded newlines are not supported (they would defeat
    per-line diagnostics); a line left unbalanced by its quotes simply
    yields the wrong field count and is diagnosed as such.
    """
    try:
        rows = list(csv.reader([raw]))
    except csv.Error:
        return []
    if not rows:
        return []
    return rows[0]


def _iter_lines(stream: Iterable[str]) -> Iterator[tuple[int, str]]:
    for number, line in enumerate(stream, start=1):
        yield number, line.rstrip("\r\n")


# ---------------------------------------------------------------------------
# l2tcsv timeline
# ---------------------------------------------------------------------------

def iter_l2tcsv(stream: Iterable[str]) -> Iterator[TimelineEvent | ParseDiagnostic]:
    """Stream TimelineEvents (and diagnostics) from l2tcsv text lines.

    Raises FormatError when the 17-column header is missing or wrong.
    """
    lines = _iter_lines(stream)
    try:
        _, header = next(lines)
    except StopIteration:
        raise FormatError("empty input: expected l2tcsv header") from None
    if header != L2T_HEADER:
        raise FormatError(f"not an l2tcsv header: {header!r}")

    for number, raw in lines:
        yield _parse_l2t_line(number, raw)


def _parse_l2t_line(number: int, raw: str) -> TimelineEvent | ParseDiagnostic:
    fields = _split_csv_line(raw)
    if len(fields) != len(L2T_COLUMNS):
        return ParseDiagnostic(number, BAD_FIELD_COUNT, raw)

    (date_s, time_s, tz_s, macb, source, sourcetype, event_type, user, host,
     short_desc, desc, version, filename, inode_s, notes, fmt, extra) = fields

    try:
        date = dt.datetime.strptime(date_s, "%m/%d/%Y").date()
        time = dt.datetime.strptime(time_s, "%H:%M:%S").time()
    except ValueError:
        return ParseDiagnostic(number, BAD_TIMESTAMP, raw)
    tzinfo = _resolve_timezone(tz_s)
    if tzinfo is None:
        return ParseDiagnostic(number, BAD_TIMESTAMP, raw)

    if len(macb) != 4 or not set(macb) <= _MACB_CHARS:
        return ParseDiagnostic(number, BAD_MACB, raw)

    inode: int | None
    if inode_s in ("", "-"):
        inode = None
    else:
        try:
            inode = int(inode_s)
        except ValueError:
            return ParseDiagnostic(number, BAD_INTEGER, raw)
        if inode < 0:
            return ParseDiagnostic(number, BAD_INTEGER, raw)

    instant = dt.datetime.combine(date, time, tzinfo).astimezone(_UTC)
    return TimelineEvent(
        date=date, time=time, timezone=tz_s, macb=macb, source=source,
        sourcetype=sourcetype, event_type=event_type, user=user, host=host,
        short_desc=short_desc, desc=desc, version=version, filename=filename,
        inode=inode, notes=notes, format=fmt, extra=extra, instant=instant,
    )


def parse_l2tcsv(stream: Iterable[str]) -> tuple[list[TimelineEvent], list[ParseDiagnostic]]:
    """Collect iter_l2tcsv into (events, diagnostics), input order kept."""
    events: list[TimelineEvent] = []
    diagnostics: list[ParseDiagnostic] = []
    for item in iter_l2tcsv(stream):
        (diagnostics if isinstance(item, ParseDiagnostic) else events).append(item)
    return events, diagnostics


def serialize_l2tcsv(events: Iterable[TimelineEvent]) -> str:
    """Canonical l2tcsv text: fixed header, minimal quoting, LF endings."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(L2T_COLUMNS)
    for e in events:
        writer.writerow((
            f"{e.date.month:02d}/{e.date.day:02d}/{e.date.year:04d}",
            e.time.strftime("%H:%M:%S"),
            e.timezone, e.macb, e.source, e.sourcetype, e.event_type,
            e.user, e.host, e.short_desc, e.desc, e.version, e.filename,
            "-" if e.inode is None else str(e.inode),
            e.notes, e.format, e.extra,
        ))
    return buf.getvalue()


# ---------------------------------------------------------------------------
# bodyfile
# ---------------------------------------------------------------------------

def iter_bodyfile(
    stream: Iterable[str], source_id: str
) -> Iterator[FileMetadata | ParseDiagnostic]:
    """Stream FileMetadata from pipe-separated bodyfile lines.

    The bodyfile carries no origin identifier, so the caller supplies
    ``source_id``.  A ``0`` or empty MD5 field means "not hashed"; ``0``
    timestamps mean "not recorded".
    """
    for number, raw in _iter_lines(stream):
        if raw == "":
            continue
        yield _parse_bodyfile_line(number, raw, source_id)


def _parse_bodyfile_line(
    number: int, raw: str, source_id: str
) -> FileMetadata | ParseDiagnostic:
    fields = raw.split("|")
    if len(fields) != BODYFILE_FIELD_COUNT:
        return ParseDiagnostic(number, BAD_FIELD_COUNT, raw)
    md5, name, inode_s, _mode, uid, _gid, size_s, atime_s, mtime_s, ctime_s, crtime_s = fields

    digest = "" if md5 in ("", "0") else md5.lower()
    if digest and not is_valid_hash(digest):
        return ParseDiagnostic(number, BAD_HASH, raw)

    try:
        inode = int(inode_s)
        size = int(size_s)
    except ValueError:
        return ParseDiagnostic(number, BAD_INTEGER, raw)
    if inode < 0 or size < 0:
        return ParseDiagnostic(number, BAD_INTEGER, raw)

    stamps: list[dt.datetime | None] = []
    for value in (atime_s, mtime_s, ctime_s, crtime_s):
        try:
            seconds = int(value)
        except ValueError:
            return ParseDiagnostic(number, BAD_INTEGER, raw)
        if seconds < 0:
            return ParseDiagnostic(number, BAD_INTEGER, raw)
        stamps.append(
            None if seconds == 0
            else dt.datetime.fromtimestamp(seconds, tz=_UTC)
        )
    atime, mtime, ctime, crtime = stamps

    return FileMetadata(
        source_id=source_id, path=name, name=path_basename(name),
        size_bytes=size, inode=inode, hash=digest, owner=uid,
        crtime=crtime, atime=atime, mtime=mtime, ctime=ctime,
    )


def parse_bodyfile(
    stream: Iterable[str], source_id: str
) -> tuple[list[FileMetadata], list[ParseDiagnostic]]:
    """Collect iter_bodyfile into (metadata, diagnostics)."""
    records: list[FileMetadata] = []
    diagnostics: list[ParseDiagnostic] = []
    for item in iter_bodyfile(stream, source_id):
        (diagnostics if isinstance(item, ParseDiagnostic) else records).append(item)
    return records, diagnostics


# ---------------------------------------------------------------------------
# native artifact CSV
# ---------------------------------------------------------------------------

def iter_artifact_csv(stream: Iterable[str]) -> Iterator[FileMetadata | ParseDiagnostic]:
    """Stream FileMetadata from the native artifact CSV.

    The header must start with the ten canonical columns; extra trailing
    columns (e.g. block allocation info from other exporters) are accepted
    and ignored.  Duplicate (source_id, inode) pairs are not this layer's
    problem; collation resolves them.
    """
    lines = _iter_lines(stream)
    try:
        _, header = next(lines)
    except StopIteration:
        raise FormatError("empty input: expected artifact CSV header") from None
    header_fields = _split_csv_line(header)
    if tuple(header_fields[: len(ARTIFACT_COLUMNS)]) != ARTIFACT_COLUMNS:
        raise FormatError(f"not an artifact CSV header: {header!r}")
    width = len(header_fields)

    for number, raw in lines:
        yield _parse_artifact_line(number, raw, width)


def _parse_artifact_line(
    number: int, raw: str, width: int
) -> FileMetadata | ParseDiagnostic:
    fields = _split_csv_line(raw)
    if len(fields) != width:
        return ParseDiagnostic(number, BAD_FIELD_COUNT, raw)
    source_id, path, size_s, inode_s, digest, owner = fields[:6]

    try:
        size = int(size_s)
        inode = int(inode_s)
    except ValueError:
        return ParseDiagnostic(number, BAD_INTEGER, raw)
    if size < 0 or inode < 0:
        return ParseDiagnostic(number, BAD_INTEGER, raw)

    digest = digest.lower()
    if digest and not is_valid_hash(digest):
        return ParseDiagnostic(number, BAD_HASH, raw)

    stamps: list[dt.datetime | None] = []
    for value in fields[6:10]:
        if value == "":
            stamps.append(None)
            continue
        parsed = _parse_iso_utc(value)
        if parsed is None:
            return ParseDiagnostic(number, BAD_TIMESTAMP, raw)
        stamps.append(parsed)
    crtime, atime, mtime, ctime = stamps

    return FileMetadata(
        source_id=source_id, path=path, name=path_basename(path),
        size_bytes=size, inode=inode, hash=digest, owner=owner,
        crtime=crtime, atime=atime, mtime=mtime, ctime=ctime,
    )


def parse_artifact_csv(
    stream: Iterable[str],
) -> tuple[list[FileMetadata], list[ParseDiagnostic]]:
    """Collect iter_artifact_csv into (metadata, diagnostics)."""
    records: list[FileMetadata] = []
    diagnostics: list[ParseDiagnostic] = []
    for item in iter_artifact_csv(stream):
        (diagnostics if isinstance(item, ParseDiagnostic) else records).append(item)
    return records, diagnostics


def serialize_artifact_csv(records: Iterable[FileMetadata]) -> str:
    """Canonical artifact CSV: ten columns, minimal quoting, LF endings."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ARTIFACT_COLUMNS)
    for m in records:
        writer.writerow((
            m.source_id, m.path, str(m.size_bytes), str(m.inode), m.hash,
            m.owner, format_instant(m.crtime), format_instant(m.atime),
            format_instant(m.mtime), format_instant(m.ctime),
        ))
    return buf.getvalue()
