"""Generator tests: counts, geometry, determinism, and clean emission."""

import datetime as dt
import math

import pytest

from triagekit.features import directory_depth, extension_of
from triagekit.ingest import parse_artifact_csv, parse_l2tcsv
from triagekit.knownbase import KnownBase
from triagekit.synthgen import (
    ClusterSpec,
    GenerationError,
    ScenarioParams,
    default_clusters,
    emit,
    generate,
    scenario_for_ratio,
    serialize_ground_truth,
    serialize_known_seed,
)

BASE = dt.datetime(2019, 3, 1, tzinfo=dt.timezone.utc)

MEDIA_EXTS = {"jpg", "png", "mp4", "avi"}


def small_params(**overrides):
    kw = dict(n_benign=100, n_illegal=10, clusters=default_clusters(BASE)[:1])
    kw.update(overrides)
    return ScenarioParams(**kw)


def dirname(path):
    return path.rpartition("/")[0]


def test_counts_and_ground_truth():
    case = generate(small_params())
    assert len(case.metadata) == 110
    assert len(case.ground_truth) == 110
    assert sum(case.ground_truth.values()) == 10
    assert len({m.hash for m in case.metadata}) == 110
    assert sorted(m.inode for m in case.metadata) == list(range(1000, 1110))


def test_single_cluster_illegal_share_one_parent_directory():
    case = generate(small_params())
    illegal_dirs = {dirname(m.path) for m in case.metadata
                    if case.ground_truth[m.hash] == 1}
    assert len(illegal_dirs) == 1
    (stash,) = illegal_dirs
    assert directory_depth(stash + "/x") == 5  # default cluster_dir_depth


def test_two_clusters_give_two_stash_directories():
    params = small_params(n_illegal=40, clusters=default_clusters(BASE))
    case = generate(params)
    illegal_dirs = {dirname(m.path) for m in case.metadata
                    if case.ground_truth[m.hash] == 1}
    assert len(illegal_dirs) == 2


def test_illegal_artifacts_carry_media_extensions():
    case = generate(small_params())
    for meta in case.metadata:
        if case.ground_truth[meta.hash] == 1:
            assert extension_of(meta.name) in MEDIA_EXTS


def test_generation_is_deterministic():
    assert generate(small_params()) == generate(small_params())
    assert serialize_ground_truth(generate(small_params())) == \
        serialize_ground_truth(generate(small_params()))


def test_seed_changes_the_case():
    assert generate(small_params(seed=1)) != generate(small_params(seed=2))


def test_cluster_size_mean_within_three_sigma():
    """1000 draws from one cluster: the sample mean of size_kb must land
    within 3 standard errors of the center (plus the half-KB byte jitter
    the generator adds below the KB line)."""
    spec = ClusterSpec(size_kb_center=450.0, size_kb_spread=80.0,
                       crtime_center=BASE - dt.timedelta(days=45),
                       crtime_spread_hours=36.0)
    params = ScenarioParams(n_benign=0, n_illegal=1000, clusters=(spec,))
    case = generate(params)
    sizes_kb = [m.size_bytes / 1024 for m in case.metadata]
    assert len(sizes_kb) == 1000
    tolerance = 3.0 * 80.0 / math.sqrt(1000)
    assert abs(sum(sizes_kb) / 1000 - (450.0 + 0.5)) <= tolerance


def test_cluster_crtimes_concentrate_near_center():
    spec = ClusterSpec(size_kb_center=450.0, size_kb_spread=80.0,
                       crtime_center=BASE - dt.timedelta(days=45),
                       crtime_spread_hours=36.0)
    params = ScenarioParams(n_benign=0, n_illegal=500, clusters=(spec,))
    case = generate(params)
    offsets = [(m.crtime - spec.crtime_center).total_seconds() / 3600
               for m in case.metadata]
    mean = sum(offsets) / len(offsets)
    assert abs(mean) <= 3.0 * 36.0 / math.sqrt(500)
    assert max(abs(o) for o in offsets) <= 6 * 36.0  # no wild outliers


def test_decoys_sit_at_cluster_depth_but_smaller():
    """Benign rows at stash depth with media extensions are the decoys;
    their sizes must stay strictly below every cluster's 3-sigma floor."""
    params = small_params(n_benign=500, n_illegal=20)
    case = generate(params)
    floor_bytes = min(
        (spec.size_kb_center - 3 * spec.size_kb_spread) * 1024
        for spec in params.clusters
    )
    decoys = [
        m for m in case.metadata
        if case.ground_truth[m.hash] == 0
        and directory_depth(m.path) == params.cluster_dir_depth
        and extension_of(m.name) in MEDIA_EXTS
    ]
    assert len(decoys) == int(500 * params.decoy_fraction)
    for meta in decoys:
        assert meta.size_bytes < floor_bytes
    # decoys never land inside a real stash directory
    stash_dirs = {dirname(m.path) for m in case.metadata
                  if case.ground_truth[m.hash] == 1}
    assert all(dirname(m.path) not in stash_dirs for m in decoys)


def test_known_fraction_splits_per_class():
    case = generate(small_params())  # known_fraction defaults to 0.5
    known_labels = [case.ground_truth[h] for h in case.known_hashes]
    assert known_labels.count(0) == 50  # int(100 * 0.5)
    assert known_labels.count(1) == 5   # int(10 * 0.5)


def test_known_fraction_zero_and_one():
    assert generate(small_params(known_fraction=0.0)).known_hashes == frozenset()
    full = generate(small_params(known_fraction=1.0))
    assert len(full.known_hashes) == 110


def test_events_reference_real_inodes_and_are_sorted():
    case = generate(small_params())
    inodes = {m.inode for m in case.metadata}
    assert all(ev.inode in inodes for ev in case.events)
    instants = [ev.instant for ev in case.events]
    assert instants == sorted(instants)
    assert all(ev.timezone == "UTC" for ev in case.events)
    # events never precede their artifact's creation
    crtime_by_inode = {m.inode: m.crtime for m in case.metadata}
    assert all(ev.instant >= crtime_by_inode[ev.inode] for ev in case.events)


def test_illegal_event_rate_exceeds_benign():
    params = small_params(n_benign=200, n_illegal=100)
    case = generate(params)
    counts = {m.inode: 0 for m in case.metadata}
    for ev in case.events:
        counts[ev.inode] += 1
    by_class = {0: [], 1: []}
    for m in case.metadata:
        by_class[case.ground_truth[m.hash]].append(counts[m.inode])
    mean = lambda xs: sum(xs) / len(xs)  # noqa: E731
    assert mean(by_class[1]) > mean(by_class[0]) + 2.0


def test_emitted_files_parse_with_zero_diagnostics(tmp_path):
    case = generate(small_params())
    paths = emit(case, tmp_path, case_id="caseX")

    with paths["artifacts"].open() as handle:
        records, diags = parse_artifact_csv(handle)
    assert diags == [] and len(records) == 110
    assert records == list(case.metadata)

    with paths["timeline"].open() as handle:
        events, diags = parse_l2tcsv(handle)
    assert diags == [] and len(events) == len(case.events)

    base = KnownBase.load(paths["known_seed"])
    assert len(base) == len(case.known_hashes)
    assert base.label_counts() == {"benign": 50, "illegal": 5}

    lines = paths["ground_truth"].read_text().splitlines()
    assert lines[0] == "hash,class"
    assert len(lines) == 111


def test_known_seed_serialization_contains_only_known(tmp_path):
    case = generate(small_params())
    text = serialize_known_seed(case, "caseY")
    rows = text.splitlines()[1:]
    assert len(rows) == len(case.known_hashes)
    for row in rows:
        digest, label, case_id, recorded = row.split(",")
        assert digest in case.known_hashes
        assert case_id == "caseY"
        assert label in ("benign", "illegal")


def test_scenario_for_ratio_rounds():
    params = scenario_for_ratio(5000, 0.108)
    assert params.n_illegal == 540 and params.n_benign == 4460
    params = scenario_for_ratio(5000, 0.023)
    assert params.n_illegal == 115 and params.n_benign == 4885


def test_scenario_for_ratio_validation():
    with pytest.raises(GenerationError):
        scenario_for_ratio(5, 0.1)
    with pytest.raises(GenerationError):
        scenario_for_ratio(100, 0.0)
    with pytest.raises(GenerationError):
        scenario_for_ratio(100, 1.0)


@pytest.mark.parametrize("overrides", [
    dict(n_benign=-1),
    dict(n_illegal=-1),
    dict(n_illegal=5, clusters=()),
    dict(known_fraction=1.5),
    dict(media_fraction=-0.1),
    dict(media_fraction=0.7, decoy_fraction=0.7),
    dict(event_rate_benign=-1.0),
    dict(extension_mix=()),
    dict(extension_mix=(("jpg", 0.0),)),
    dict(base_time=dt.datetime(2019, 3, 1)),
    dict(cluster_dir_depth=0),
    dict(history_days=1),
])
def test_params_validation(overrides):
    with pytest.raises(GenerationError):
        small_params(**overrides)


@pytest.mark.parametrize("kw", [
    dict(size_kb_center=0.0),
    dict(size_kb_spread=-1.0),
    dict(crtime_spread_hours=-1.0),
    dict(crtime_center=dt.datetime(2019, 1, 1)),
])
def test_cluster_spec_validation(kw):
    base = dict(size_kb_center=100.0, size_kb_spread=10.0,
                crtime_center=BASE, crtime_spread_hours=24.0)
    base.update(kw)
    with pytest.raises(GenerationError):
        ClusterSpec(**base)
