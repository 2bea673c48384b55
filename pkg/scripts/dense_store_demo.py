"""Show what a shared dense-region store buys across sessions.

Builds one workload with a heavy equal-value cluster, runs the 1D engine
through a cold session (which has to crawl the cluster), then replays the
same requests in a fresh session backed by the store the first one filled.
The second session should answer from the cached slab without re-crawling.

Usage: python scripts/dense_store_demo.py [--n 2000] [--depth 30]
"""

from __future__ import annotations

import argparse
import tempfile

from rankgate.bench import WorkloadSpec, make_simulator
from rankgate.caches import DenseRegionStore, SessionCache
from rankgate.engine1d import ASCENDING, get_next_1d_rerank, make_state_1d
from rankgate.executor import Executor
from rankgate.model import query


def pull(sim, store, depth: int) -> int:
    cache = SessionCache("demo")
    ex = Executor(sim, cache.meter, session_cache=cache)
    state = make_state_1d(query(), "r1", ASCENDING)
    for _ in range(depth):
        get_next_1d_rerank(state, ex, store)
    return cache.meter.total_queries


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--depth", type=int, default=30)
    args = ap.parse_args()

    spec = WorkloadSpec(n=args.n, m=1, k=10, correlation="independent",
                        dense_fraction=0.1, seed=7)
    sim = make_simulator(spec)

    with tempfile.TemporaryDirectory() as root:
        store = DenseRegionStore(root)
        cold = pull(sim, store, args.depth)
        warm = pull(sim, store, args.depth)
        cached = len(list(store.iter_keys()))

    print(f"workload {spec.name}: {args.depth} results per session")
    print(f"cold session issued {cold} queries, filled {cached} store entries")
    print(f"warm session issued {warm} queries "
          f"({cold - warm} saved by the shared store)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
