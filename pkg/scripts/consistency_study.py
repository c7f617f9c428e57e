"""Post-hoc consistency AUC per method on the grouped synthetic suite.

Usage: python3 scripts/consistency_study.py [--seeds 0 1 2 3 4] [--out table.csv]
"""
import argparse
import csv
import sys

from funcinfo.experiments import StudyConfig, consistency_study


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--n", type=int, default=64, help="Monte-Carlo samples per attribution")
    ap.add_argument("--test-examples", type=int, default=60)
    ap.add_argument("--out", help="optional per-seed CSV")
    args = ap.parse_args(argv)

    cfg = StudyConfig(n=args.n, test_examples=args.test_examples)
    means, rows = consistency_study(args.seeds, cfg)
    methods = list(means)
    print("seed  train_acc  " + "  ".join(f"{m:>13}" for m in methods))
    for r in rows:
        print(f"{r['seed']:>4}  {r['train_accuracy']:9.3f}  " + "  ".join(f"{r[m]:13.3f}" for m in methods))
    print("mean             " + "  ".join(f"{means[m]:13.3f}" for m in methods))
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
