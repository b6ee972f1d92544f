"""Synthetic case generator with a planted ground truth.

Produces artifact metadata, a matching event timeline, a ground-truth
labeling, and a seed known-base covering a configurable fraction of the
artifacts.  The class geometry is deliberate:

* illegal artifacts sit in per-cluster stash directories at a fixed
  depth, carry multimedia extensions, and cluster tightly in size and
  creation time;
* most benign artifacts are shallow system/document files with broad
  size and age distributions;
* a benign "personal media" slice (``media_fraction``) carries the same
  multimedia extensions at shallow depth with old creation times;
* a small benign "stash-like" slice (``decoy_fraction``) matches the
  illegal clusters in depth, extension, and creation window but stays
  in a disjoint small-size band, so only learners that weigh features
  jointly keep it separate.

Everything is drawn from one seeded generator, so a given parameter set
always yields byte-identical output files.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import io
import string
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ingest import (
    FileMetadata,
    TimelineEvent,
    serialize_artifact_csv,
    serialize_l2tcsv,
)
from .knownbase import KNOWN_BASE_COLUMNS

_UTC = dt.timezone.utc

GROUND_TRUTH_COLUMNS = ("hash", "class")

# neutral directory vocabulary for generated paths
_DIR_WORDS = ("data", "store", "sets", "batch", "node", "area", "keep",
              "pool", "tier", "bin")
_BENIGN_TOP = ("usr", "var", "home", "opt", "srv")
_CLUSTER_LEAVES = ("depot", "vault", "crate", "stack", "hold")

_BENIGN_EXTENSIONS = (("log", 0.22), ("txt", 0.20), ("dll", 0.16),
                      ("ini", 0.12), ("dat", 0.12), ("pdf", 0.10),
                      ("exe", 0.08))

_EVENT_TYPES = ("Content Modification Time", "Last Access Time",
                "Metadata Modification Time", "Creation Time")
_EVENT_MACB = ("M...", ".A..", "..C.", "...B")
_EVENT_SOURCES = (("FILE", "OS Last Access Time"),
                  ("FILE", "OS Content Modification Time"),
                  ("WEBHIST", "Chrome History"),
                  ("LOG", "System Log"))


class GenerationError(ValueError):
    """Scenario parameters that cannot produce a coherent case."""


@dataclass(frozen=True)
class ClusterSpec:
    """One illegal stash: sizes and creation times cluster around it."""

    size_kb_center: float
    size_kb_spread: float
    crtime_center: dt.datetime
    crtime_spread_hours: float

    def __post_init__(self) -> None:
        if self.size_kb_center <= 0 or self.size_kb_spread < 0:
            raise GenerationError("cluster size parameters must be positive")
        if self.crtime_spread_hours < 0:
            raise GenerationError("crtime spread must be non-negative")
        if self.crtime_center.tzinfo is None:
            raise GenerationError("crtime_center must be timezone-aware")


def default_clusters(base_time: dt.datetime) -> tuple[ClusterSpec, ...]:
    """Two stashes: small images recently, large video further back."""
    return (
        ClusterSpec(size_kb_center=450.0, size_kb_spread=80.0,
                    crtime_center=base_time - dt.timedelta(days=45),
                    crtime_spread_hours=36.0),
        ClusterSpec(size_kb_center=2800.0, size_kb_spread=600.0,
                    crtime_center=base_time - dt.timedelta(days=120),
                    crtime_spread_hours=72.0),
    )


@dataclass(frozen=True)
class ScenarioParams:
    """Knobs for one generated case; defaults give a workable scenario."""

    n_benign: int
    n_illegal: int
    clusters: tuple[ClusterSpec, ...]
    base_time: dt.datetime = dt.datetime(2019, 3, 1, tzinfo=_UTC)
    cluster_dir_depth: int = 5
    event_rate_benign: float = 2.0
    event_rate_illegal: float = 6.0
    extension_mix: tuple[tuple[str, float], ...] = (
        ("jpg", 0.40), ("png", 0.25), ("mp4", 0.20), ("avi", 0.15))
    media_fraction: float = 0.08
    decoy_fraction: float = 0.04
    known_fraction: float = 0.5
    history_days: int = 730
    source_id: str = "synth0"
    seed: int = 0

    @property
    def cluster_count(self) -> int:
        return len(self.clusters)

    def __post_init__(self) -> None:
        if self.n_benign < 0 or self.n_illegal < 0:
            raise GenerationError("artifact counts must be non-negative")
        if self.n_illegal > 0 and not self.clusters:
            raise GenerationError("illegal artifacts need at least one cluster")
        if not 0.0 <= self.known_fraction <= 1.0:
            raise GenerationError("known_fraction must be in [0, 1]")
        if not 0.0 <= self.media_fraction <= 1.0:
            raise GenerationError("media_fraction must be in [0, 1]")
        if not 0.0 <= self.decoy_fraction <= 1.0:
            raise GenerationError("decoy_fraction must be in [0, 1]")
        if self.media_fraction + self.decoy_fraction > 1.0:
            raise GenerationError("media and decoy fractions exceed 1")
        if self.event_rate_benign < 0 or self.event_rate_illegal < 0:
            raise GenerationError("event rates must be non-negative")
        if not self.extension_mix or any(
                w <= 0 for _, w in self.extension_mix):
            raise GenerationError("extension mix weights must be positive")
        if self.base_time.tzinfo is None:
            raise GenerationError("base_time must be timezone-aware")
        if self.cluster_dir_depth < 1:
            raise GenerationError("cluster_dir_depth must be >= 1")
        if self.history_days < 2:
            raise GenerationError("history_days must be >= 2")


def scenario_for_ratio(total: int, illegal_fraction: float,
                       seed: int = 0) -> ScenarioParams:
    """Scenario sized to a target artifact count and illegal fraction."""
    if total < 10:
        raise GenerationError("total must be >= 10")
    if not 0.0 < illegal_fraction < 1.0:
        raise GenerationError("illegal_fraction must be in (0, 1)")
    n_illegal = round(total * illegal_fraction)
    base_time = dt.datetime(2019, 3, 1, tzinfo=_UTC)
    return ScenarioParams(
        n_benign=total - n_illegal,
        n_illegal=n_illegal,
        clusters=default_clusters(base_time),
        base_time=base_time,
        seed=seed,
    )


@dataclass(frozen=True)
class GeneratedCase:
    metadata: tuple[FileMetadata, ...]
    events: tuple[TimelineEvent, ...]
    ground_truth: dict[str, int] = field(hash=False)
    known_hashes: frozenset[str] = frozenset()


def _artifact_hash(source_id: str, seed: int, index: int) -> str:
    return hashlib.sha256(f"{source_id}:{seed}:{index}".encode()).hexdigest()


def _pick_weighted(rng: np.random.Generator,
                   mix: tuple[tuple[str, float], ...]) -> str:
    names = [name for name, _ in mix]
    weights = np.array([weight for _, weight in mix], dtype=np.float64)
    return names[int(rng.choice(len(names), p=weights / weights.sum()))]


def _name_stem(rng: np.random.Generator) -> str:
    length = int(rng.integers(4, 13))
    letters = rng.choice(list(string.ascii_lowercase), size=length)
    return "".join(letters)


def _random_dir(rng: np.random.Generator, depth: int) -> tuple[str, ...]:
    parts = [str(_BENIGN_TOP[int(rng.integers(len(_BENIGN_TOP)))])]
    while len(parts) < depth:
        parts.append(str(_DIR_WORDS[int(rng.integers(len(_DIR_WORDS)))]))
    return tuple(parts)


def _cluster_dir(rng: np.random.Generator, depth: int,
                 cluster_index: int) -> tuple[str, ...]:
    """Stash directory for one cluster; the leaf names the cluster so
    decoy directories at the same depth can never collide with it."""
    parts = list(_random_dir(rng, depth))
    leaf = _CLUSTER_LEAVES[cluster_index % len(_CLUSTER_LEAVES)]
    parts[-1] = f"{leaf}{cluster_index:02d}"
    return tuple(parts)


def _clip_time(moment: dt.datetime, start: dt.datetime,
               end: dt.datetime) -> dt.datetime:
    return max(start, min(moment, end))


def _decoy_size_band(params: ScenarioParams) -> tuple[int, int]:
    """Small-size band disjoint from every cluster's 3-sigma size range."""
    low_edges = [spec.size_kb_center - 3.0 * spec.size_kb_spread
                 for spec in params.clusters]
    ceiling_kb = max(32.0, 0.6 * min(low_edges)) if low_edges else 64.0
    return 16 * 1024, int(ceiling_kb * 1024)


def generate(params: ScenarioParams) -> GeneratedCase:
    """Build one deterministic synthetic case from the parameters."""
    rng = np.random.default_rng(params.seed)
    window_start = params.base_time - dt.timedelta(days=params.history_days)
    window_end = params.base_time - dt.timedelta(hours=1)
    window_span = (window_end - window_start).total_seconds()

    cluster_dirs = [
        _cluster_dir(rng, params.cluster_dir_depth, i)
        for i in range(len(params.clusters))
    ]

    def cluster_draw(index: int):
        """Size and creation time near cluster ``index``'s centers."""
        spec = params.clusters[index]
        size_kb = max(1.0, rng.normal(spec.size_kb_center,
                                      spec.size_kb_spread))
        size_bytes = int(size_kb * 1024) + int(rng.integers(0, 1024))
        offset = rng.normal(0.0, spec.crtime_spread_hours)
        crtime = spec.crtime_center + dt.timedelta(hours=float(offset))
        crtime = _clip_time(crtime, window_start, window_end)
        return size_bytes, crtime.replace(microsecond=0)

    metadata: list[FileMetadata] = []
    events: list[TimelineEvent] = []
    ground_truth: dict[str, int] = {}
    index = 0

    def make_events(meta: FileMetadata, rate: float) -> None:
        count = int(rng.poisson(rate))
        horizon = (params.base_time - meta.crtime).total_seconds()
        for _ in range(count):
            offset = float(rng.uniform(0.0, max(horizon, 1.0)))
            instant = (meta.crtime + dt.timedelta(seconds=offset)).replace(
                microsecond=0)
            instant = _clip_time(instant, meta.crtime, params.base_time)
            kind = int(rng.integers(len(_EVENT_TYPES)))
            src, srctype = _EVENT_SOURCES[
                int(rng.integers(len(_EVENT_SOURCES)))]
            events.append(TimelineEvent(
                date=instant.date(), time=instant.time(), timezone="UTC",
                macb=_EVENT_MACB[kind], source=src, sourcetype=srctype,
                event_type=_EVENT_TYPES[kind], user="user0", host="host0",
                short_desc=meta.name,
                desc=f"{_EVENT_TYPES[kind]} {meta.path}",
                version="2", filename=meta.path, inode=meta.inode,
                notes="-", format="filestat", extra="-", instant=instant,
            ))

    def add_artifact(dirs: tuple[str, ...], ext: str, size_bytes: int,
                     crtime: dt.datetime, label: int, rate: float) -> None:
        nonlocal index
        stem = _name_stem(rng)
        name = f"{stem}.{ext}" if ext else stem
        path = "/" + "/".join(dirs + (name,))
        digest = _artifact_hash(params.source_id, params.seed, index)
        mtime = crtime + dt.timedelta(
            seconds=float(rng.uniform(0, 86400 * 30)))
        mtime = _clip_time(mtime, crtime, params.base_time).replace(
            microsecond=0)
        meta = FileMetadata(
            source_id=params.source_id, path=path, name=name,
            size_bytes=size_bytes, inode=1000 + index, hash=digest,
            owner="user0", crtime=crtime, atime=mtime, mtime=mtime,
            ctime=crtime,
        )
        metadata.append(meta)
        ground_truth[digest] = label
        make_events(meta, rate)
        index += 1

    n_media = int(params.n_benign * params.media_fraction)
    n_decoys = int(params.n_benign * params.decoy_fraction)
    n_bulk = params.n_benign - n_media - n_decoys
    old_cut = max(int(window_span * 0.4), 1)  # media slice stays old

    # benign bulk: shallow paths, broad sizes and ages
    for _ in range(n_bulk):
        ext = ("" if rng.uniform() < 0.05
               else _pick_weighted(rng, _BENIGN_EXTENSIONS))
        size_bytes = max(16, int(rng.lognormal(mean=9.0, sigma=2.0)))
        crtime = (window_start + dt.timedelta(
            seconds=float(rng.uniform(0.0, window_span)))).replace(
            microsecond=0)
        depth = int(rng.integers(1, 5))
        add_artifact(_random_dir(rng, depth), ext, size_bytes, crtime, 0,
                     params.event_rate_benign)

    # benign personal media: multimedia extensions, shallow, old
    for _ in range(n_media):
        ext = _pick_weighted(rng, params.extension_mix)
        size_bytes = max(16, int(rng.lognormal(mean=9.0, sigma=2.0)))
        crtime = (window_start + dt.timedelta(
            seconds=float(rng.uniform(0.0, old_cut)))).replace(microsecond=0)
        depth = int(rng.integers(2, 4))
        add_artifact(_random_dir(rng, depth), ext, size_bytes, crtime, 0,
                     params.event_rate_benign)

    # benign stash-like decoys: cluster depth, extensions, and timing,
    # but sizes in a disjoint small band
    decoy_lo, decoy_hi = _decoy_size_band(params)
    for _ in range(n_decoys):
        ext = _pick_weighted(rng, params.extension_mix)
        cluster_index = int(rng.integers(len(params.clusters))) \
            if params.clusters else 0
        if params.clusters:
            _, crtime = cluster_draw(cluster_index)
        else:
            crtime = window_end
        size_bytes = int(rng.integers(decoy_lo, max(decoy_hi, decoy_lo + 1)))
        add_artifact(_random_dir(rng, params.cluster_dir_depth), ext,
                     size_bytes, crtime, 0, params.event_rate_benign)

    # illegal: shared per-cluster stash directories
    for _ in range(params.n_illegal):
        ext = _pick_weighted(rng, params.extension_mix)
        cluster_index = int(rng.integers(len(params.clusters)))
        size_bytes, crtime = cluster_draw(cluster_index)
        add_artifact(cluster_dirs[cluster_index], ext, size_bytes, crtime, 1,
                     params.event_rate_illegal)

    # split known hashes per class so both labels reach the known base
    known: list[str] = []
    for label in (0, 1):
        hashes = [h for h, cls in ground_truth.items() if cls == label]
        n_known = int(len(hashes) * params.known_fraction)
        if n_known:
            picked = rng.choice(len(hashes), size=n_known, replace=False)
            known.extend(hashes[i] for i in sorted(int(j) for j in picked))

    events.sort(key=lambda ev: ev.instant)
    return GeneratedCase(
        metadata=tuple(metadata),
        events=tuple(events),
        ground_truth=ground_truth,
        known_hashes=frozenset(known),
    )


# ---------------------------------------------------------------------------
# on-disk emission
# ---------------------------------------------------------------------------

def serialize_ground_truth(case: GeneratedCase) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(GROUND_TRUTH_COLUMNS)
    for meta in case.metadata:
        writer.writerow((meta.hash, str(case.ground_truth[meta.hash])))
    return buf.getvalue()


def serialize_known_seed(case: GeneratedCase, case_id: str) -> str:
    """Known-base rows for the known fraction, in artifact order."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(KNOWN_BASE_COLUMNS)
    for meta in case.metadata:
        if meta.hash not in case.known_hashes:
            continue
        label = "illegal" if case.ground_truth[meta.hash] == 1 else "benign"
        writer.writerow((meta.hash, label, case_id, "2019-01-01T00:00:00Z"))
    return buf.getvalue()


def emit(case: GeneratedCase, out_dir: str | Path,
         case_id: str = "synth") -> dict[str, Path]:
    """Write the four case files; returns name -> path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "artifacts": out / "artifacts.csv",
        "timeline": out / "timeline.csv",
        "ground_truth": out / "ground_truth.csv",
        "known_seed": out / "known_seed.csv",
    }
    paths["artifacts"].write_text(serialize_artifact_csv(case.metadata),
                                  encoding="utf-8")
    paths["timeline"].write_text(serialize_l2tcsv(case.events),
                                 encoding="utf-8")
    paths["ground_truth"].write_text(serialize_ground_truth(case),
                                     encoding="utf-8")
    paths["known_seed"].write_text(serialize_known_seed(case, case_id),
                                   encoding="utf-8")
    return paths
