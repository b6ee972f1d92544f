"""Imbalance experiment: five classifiers across two class ratios.

Generates one synthetic case per ratio, holds out a stratified 30%
test side, trains every algorithm on the rest, and prints a metrics
table (class-1 precision/recall/F1 plus average precision).  The
mild-ratio case behaves like a routine investigation; the skewed one
shows which models survive a 2% base rate.

Usage:
    python3 scripts/run_experiment.py
    python3 scripts/run_experiment.py --total 10000 --seed 7 --out matrix.csv
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from triagekit.classifiers import ALGORITHMS, TrainConfig, predict_many, score_many, train
from triagekit.evaluation import (
    average_precision,
    confusion,
    prf,
    stratified_split_indices,
)
from triagekit.features import build_schema, encode_all, extract_all
from triagekit.merge import LABEL_BENIGN, LABEL_ILLEGAL, collate
from triagekit.synthgen import generate, scenario_for_ratio


def build_dataset(total: int, fraction: float, seed: int):
    """Feature rows and labels for one generated case, split 70/30."""
    case = generate(scenario_for_ratio(total, fraction, seed=seed))
    records = collate(case.metadata, case.events, "synth0").records
    labeled = [
        r.with_label(LABEL_ILLEGAL if case.ground_truth[r.metadata.hash]
                     else LABEL_BENIGN)
        for r in records
    ]
    reference = max(e.instant for e in case.events)
    vectors = extract_all(labeled, reference)
    y = [v.class_label for v in vectors]
    train_idx, test_idx = stratified_split_indices(y, 0.3, seed)
    schema = build_schema([vectors[i] for i in train_idx], k=8,
                          reference_time=reference)
    rows = encode_all(vectors, schema)
    X = [row.values for row in rows]
    return (
        [X[i] for i in train_idx], [y[i] for i in train_idx],
        [X[i] for i in test_idx], [y[i] for i in test_idx],
    )


def run_matrix(total, ratios, algorithms, seed):
    results = []
    for fraction in ratios:
        dataset = f"{fraction:.1%} illegal"
        X_train, y_train, X_test, y_test = build_dataset(total, fraction, seed)
        for algorithm in algorithms:
            started = time.perf_counter()
            model = train(X_train, y_train,
                          TrainConfig(algorithm=algorithm, seed=seed))
            precision, recall, f1 = prf(
                confusion(y_test, predict_many(model, X_test)))
            ap = average_precision(y_test, score_many(model, X_test))
            results.append({
                "algorithm": algorithm, "dataset": dataset,
                "precision": precision, "recall": recall, "f1": f1,
                "average_precision": ap,
                "seconds": time.perf_counter() - started,
            })
    return results


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--total", type=int, default=5000,
                        help="artifacts per generated case (default 5000)")
    parser.add_argument("--ratios", default="0.108,0.023",
                        help="comma-separated illegal fractions")
    parser.add_argument("--algorithms", default=",".join(ALGORITHMS),
                        help="comma-separated subset of: " + ", ".join(ALGORITHMS))
    parser.add_argument("--seed", type=int, default=11)
    parser.add_argument("--out", help="also write the table to this CSV file")
    args = parser.parse_args(argv)

    ratios = [float(v) for v in args.ratios.split(",") if v]
    algorithms = [v.strip() for v in args.algorithms.split(",") if v.strip()]
    unknown = [a for a in algorithms if a not in ALGORITHMS]
    if unknown:
        parser.error(f"unknown algorithm(s): {', '.join(unknown)}")

    results = run_matrix(args.total, ratios, algorithms, args.seed)

    header = f"{'dataset':<16} {'algorithm':<8} {'prec':>7} {'rec':>7} {'f1':>7} {'ap':>7} {'sec':>6}"
    print(header)
    print("-" * len(header))
    for row in results:
        print(f"{row['dataset']:<16} {row['algorithm']:<8} "
              f"{row['precision']:>7.3f} {row['recall']:>7.3f} "
              f"{row['f1']:>7.3f} {row['average_precision']:>7.3f} "
              f"{row['seconds']:>6.2f}")

    if args.out:
        from triagekit.evaluation import serialize_metrics_table
        Path(args.out).write_text(serialize_metrics_table(results),
                                  encoding="utf-8")
        print(f"\nwrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
