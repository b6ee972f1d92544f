"""Feature extraction and encoding for artifact records.

An :class:`ArtifactRecord` becomes a raw :class:`FeatureVector` (directory
depth, extension, name length, four age granularities, size in KB, event
count, optional 0/1 class), and a :class:`FeatureSchema` built from
training data turns raw vectors into dense numeric rows: a one-hot block
over the top-K extensions plus min-max normalized numerics, every entry
in [0, 1].
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import io
import json
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .merge import LABEL_BENIGN, LABEL_ILLEGAL, ArtifactRecord

# Numeric fields in NumericRow order (after the one-hot extension block).
NUMERIC_FIELDS = (
    "depth_of_dir", "name_length", "age_years", "age_months",
    "age_days", "age_hours", "size_kb", "event_count",
)

OTHER_EXTENSION = "OTHER"

DATASET_COLUMNS = (
    "depth", "ext", "name_len", "age_y", "age_m", "age_d", "age_h",
    "size_kb", "event_count", "class",
)
DATASET_HEADER = ",".join(DATASET_COLUMNS)

_LABEL_TO_CLASS = {LABEL_BENIGN: 0, LABEL_ILLEGAL: 1}

SECONDS_PER_HOUR = 3600
HOURS_PER_DAY = 24
DAYS_PER_MONTH = 30  # fixed divisors keep age buckets deterministic
DAYS_PER_YEAR = 365


@dataclass(frozen=True)
class FeatureVector:
    """Raw per-artifact features before encoding.

    ``flagged`` marks records whose creation time was missing and could
    not be recovered from events; their ages are zero by construction.
    """

    depth_of_dir: int
    file_extension: str
    name_length: int
    age_years: int
    age_months: int
    age_days: int
    age_hours: int
    size_kb: int
    event_count: int
    class_label: int | None = None
    flagged: bool = False

    def numerics(self) -> tuple[int, ...]:
        return (
            self.depth_of_dir, self.name_length, self.age_years,
            self.age_months, self.age_days, self.age_hours,
            self.size_kb, self.event_count,
        )


@dataclass(frozen=True)
class FeatureSchema:
    """Fixed encoding contract learned from training vectors.

    ``extension_vocabulary`` ends with the OTHER bucket; ``minmax_ranges``
    holds one (min, max) pair per NUMERIC_FIELDS entry, observed on the
    training data only.
    """

    extension_vocabulary: tuple[str, ...]
    reference_time: dt.datetime | None
    minmax_ranges: tuple[tuple[float, float], ...]

    @property
    def width(self) -> int:
        return len(self.extension_vocabulary) + len(NUMERIC_FIELDS)

    def to_dict(self) -> dict:
        return {
            "extension_vocabulary": list(self.extension_vocabulary),
            "reference_time": (
                self.reference_time.strftime("%Y-%m-%dT%H:%M:%SZ")
                if self.reference_time is not None else None
            ),
            "minmax_ranges": [list(pair) for pair in self.minmax_ranges],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureSchema":
        reference = data.get("reference_time")
        parsed = None
        if reference:
            parsed = dt.datetime.strptime(
                reference, "%Y-%m-%dT%H:%M:%SZ"
            ).replace(tzinfo=dt.timezone.utc)
        return cls(
            extension_vocabulary=tuple(data["extension_vocabulary"]),
            reference_time=parsed,
            minmax_ranges=tuple(
                (float(lo), float(hi)) for lo, hi in data["minmax_ranges"]
            ),
        )

    def fingerprint(self) -> str:
        """Stable digest of the encoding contract, stored in model files."""
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class NumericRow:
    """Dense encoded row: one-hot extension block then normalized numerics."""

    values: tuple[float, ...]
    class_label: int | None = None


def extension_of(name: str) -> str:
    """Lowercased text after the final dot; "" when the name has no dot."""
    head, sep, tail = name.rpartition(".")
    return tail.lower() if sep else ""


def directory_depth(path: str) -> int:
    """Number of non-empty directory components above the filename."""
    parts = path.split("/")[:-1]
    return sum(1 for part in parts if part)


def extract(record: ArtifactRecord, reference_time: dt.datetime) -> FeatureVector:
    """Compute the raw feature vector for one collated artifact.

    Ages count whole hours/days/months/years between creation and
    ``reference_time`` (floored; month=30d, year=365d).  A missing
    creation time falls back to the earliest event instant; with no
    events either, ages are zero and the vector is flagged.
    """
    meta = record.metadata
    flagged = False
    crtime = meta.crtime
    if crtime is None:
        if record.events:
            crtime = record.events[0].instant
        else:
            crtime = reference_time
            flagged = True

    delta = max((reference_time - crtime).total_seconds(), 0.0)
    age_hours = int(delta // SECONDS_PER_HOUR)
    age_days = age_hours // HOURS_PER_DAY
    label = _LABEL_TO_CLASS.get(record.label) if record.label is not None else None

    return FeatureVector(
        depth_of_dir=directory_depth(meta.path),
        file_extension=extension_of(meta.name),
        name_length=len(meta.name),
        age_years=age_days // DAYS_PER_YEAR,
        age_months=age_days // DAYS_PER_MONTH,
        age_days=age_days,
        age_hours=age_hours,
        size_kb=meta.size_bytes // 1024,
        event_count=len(record.events),
        class_label=label,
        flagged=flagged,
    )


def extract_all(
    records: Sequence[ArtifactRecord], reference_time: dt.datetime
) -> list[FeatureVector]:
    return [extract(record, reference_time) for record in records]


def build_schema(
    training: Sequence[FeatureVector],
    k: int,
    reference_time: dt.datetime | None = None,
) -> FeatureSchema:
    """Fix the encoding from training vectors: top-k extensions + ranges.

    Extension ranking is by frequency, ties broken lexicographically; the
    OTHER bucket is always appended.  Min-max ranges come from the
    training numerics only, so later encodes clamp rather than rescale.
    """
    if not training:
        raise ValueError("cannot build a schema from an empty training set")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")

    counts = Counter(v.file_extension for v in training)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    vocabulary = tuple(ext for ext, _ in ranked[:k]) + (OTHER_EXTENSION,)

    columns = list(zip(*(v.numerics() for v in training)))
    ranges = tuple((float(min(col)), float(max(col))) for col in columns)
    return FeatureSchema(
        extension_vocabulary=vocabulary,
        reference_time=reference_time,
        minmax_ranges=ranges,
    )


def encode(vector: FeatureVector, schema: FeatureSchema) -> NumericRow:
    """Encode one raw vector against a fixed schema.

    Unseen extensions land in OTHER; numerics map through
    (x - min) / (max - min) clamped to [0, 1], with a degenerate range
    (max == min) encoding as 0.
    """
    onehot = [0.0] * len(schema.extension_vocabulary)
    try:
        slot = schema.extension_vocabulary.index(vector.file_extension)
    except ValueError:
        slot = len(schema.extension_vocabulary) - 1
    onehot[slot] = 1.0

    numerics = []
    for value, (lo, hi) in zip(vector.numerics(), schema.minmax_ranges):
        if hi == lo:
            numerics.append(0.0)
        else:
            scaled = (value - lo) / (hi - lo)
            numerics.append(min(max(scaled, 0.0), 1.0))
    return NumericRow(values=tuple(onehot) + tuple(numerics),
                      class_label=vector.class_label)


def encode_all(
    vectors: Sequence[FeatureVector], schema: FeatureSchema
) -> list[NumericRow]:
    return [encode(v, schema) for v in vectors]


# ---------------------------------------------------------------------------
# dataset CSV (raw FeatureVector form)
# ---------------------------------------------------------------------------

def serialize_dataset(vectors: Iterable[FeatureVector]) -> str:
    """Raw feature dataset as CSV; empty class column for unlabeled rows."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(DATASET_COLUMNS)
    for v in vectors:
        writer.writerow((
            str(v.depth_of_dir), v.file_extension, str(v.name_length),
            str(v.age_years), str(v.age_months), str(v.age_days),
            str(v.age_hours), str(v.size_kb), str(v.event_count),
            "" if v.class_label is None else str(v.class_label),
        ))
    return buf.getvalue()


def parse_dataset(stream: Iterable[str]) -> list[FeatureVector]:
    """Read a dataset CSV produced by serialize_dataset."""
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None or tuple(header) != DATASET_COLUMNS:
        raise ValueError(f"not a feature dataset header: {header!r}")
    vectors = []
    for row in reader:
        if not row:
            continue
        if len(row) != len(DATASET_COLUMNS):
            raise ValueError(f"bad dataset row: {row!r}")
        depth, ext, name_len, age_y, age_m, age_d, age_h, size_kb, count, cls = row
        vectors.append(FeatureVector(
            depth_of_dir=int(depth), file_extension=ext,
            name_length=int(name_len), age_years=int(age_y),
            age_months=int(age_m), age_days=int(age_d), age_hours=int(age_h),
            size_kb=int(size_kb), event_count=int(count),
            class_label=None if cls == "" else int(cls),
        ))
    return vectors
