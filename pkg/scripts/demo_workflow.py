"""Walk one case through the full loop: rank, confirm, re-rank.

Generates a small synthetic investigation, runs the pipeline against
the seeded known-hash base, prints the top suspects, then plays the
investigator: the top hit is confirmed illegal, the base is updated,
and a second run shows the confirmed file gone from the unknown side.

Usage:
    python3 scripts/demo_workflow.py [--workdir DIR] [--seed N]
"""

import argparse
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from triagekit.knownbase import KnownBase, KnownEntry
from triagekit.pipeline import PipelineConfig, run_case
from triagekit.synthgen import ScenarioParams, default_clusters, emit, generate
import datetime as dt


def show(report, top=8):
    counts = report.counts
    print(f"  artifacts={counts['artifacts']}  known={counts['known']} "
          f"(illegal {counts['known_illegal']})  unknown={counts['unknown']}")
    if report.holdout:
        print(f"  holdout f1={report.holdout.f1:.3f} "
              f"ap={report.holdout.average_precision:.3f}")
    print(f"  top {top} of {len(report.ranking)} ranked:")
    for item in report.ranking[:top]:
        print(f"    {item.rank:>3}  {item.score:.3f}  {item.path}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--workdir", help="keep files here instead of a temp dir")
    parser.add_argument("--seed", type=int, default=11)
    args = parser.parse_args(argv)

    workdir = Path(args.workdir) if args.workdir else Path(
        tempfile.mkdtemp(prefix="triage-demo-"))
    workdir.mkdir(parents=True, exist_ok=True)

    params = ScenarioParams(
        n_benign=600, n_illegal=40,
        clusters=default_clusters(dt.datetime(2019, 3, 1, tzinfo=dt.timezone.utc)),
        seed=args.seed)
    paths = emit(generate(params), workdir)
    print(f"case written to {workdir}")

    config = PipelineConfig(
        timeline_path=str(paths["timeline"]),
        metadata_path=str(paths["artifacts"]),
        known_base_path=str(paths["known_seed"]),
        source_id="demo0",
        seed=args.seed)

    print("\nfirst pass")
    result = run_case(config)
    show(result.report)

    top_hit = result.report.ranking[0]
    print(f"\ninvestigator confirms rank 1 as illegal: {top_hit.path}")
    base = KnownBase.load(paths["known_seed"])
    base.upsert(KnownEntry(hash=top_hit.hash, label="illegal",
                           case_id="demo0", recorded_at=None))

    print("\nsecond pass")
    rerun = run_case(config)
    show(rerun.report)

    still_there = any(r.hash == top_hit.hash for r in rerun.report.ranking)
    print(f"\nconfirmed hash still in unknown ranking: {still_there}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
