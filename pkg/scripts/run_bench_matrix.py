"""Run the full benchmark matrix and print a per-algorithm summary.

Equivalent to `rankgate bench` but with an aggregate table at the end:
mean query counts per algorithm, split by correlation regime, plus the
overall oracle-match verdict. Writes the raw rows to bench_results.csv.

Usage: python scripts/run_bench_matrix.py [--out bench_results.csv]
                                          [--depth 20] [--seed 1000]
"""

from __future__ import annotations

import argparse
import statistics
import sys
import time
from collections import defaultdict

from rankgate.bench import default_matrix, run_suite, write_report


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="bench_results.csv")
    ap.add_argument("--depth", type=int, default=20)
    ap.add_argument("--seed", type=int, default=1000)
    ap.add_argument("--n", type=int, default=2000)
    args = ap.parse_args()

    specs = default_matrix(base_seed=args.seed, n=args.n)
    t0 = time.perf_counter()
    rows = run_suite(specs, depth=args.depth)
    elapsed = time.perf_counter() - t0
    write_report(args.out, rows)

    by_algo: dict[tuple[str, str], list[int]] = defaultdict(list)
    for r in rows:
        corr = r.workload.split("-")[3]
        by_algo[(r.algorithm, corr)].append(r.queries)

    print(f"\n{len(rows)} runs over {len(specs)} workloads "
          f"in {elapsed:.1f}s -> {args.out}")
    print(f"{'algorithm':<14}{'corr':<6}{'runs':>5}{'mean q':>9}{'median q':>10}")
    for (algo, corr), counts in sorted(by_algo.items()):
        print(f"{algo:<14}{corr:<6}{len(counts):>5}"
              f"{statistics.mean(counts):>9.1f}"
              f"{statistics.median(counts):>10.1f}")

    bad = [r for r in rows if not r.oracle_match]
    if bad:
        for r in bad:
            print(f"MISMATCH {r.workload} {r.algorithm}", file=sys.stderr)
        return 1
    print("all runs matched the oracle ranking")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
