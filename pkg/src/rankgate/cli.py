"""Command-line entry points.

  gen-data        write a seeded synthetic workload to disk
  bench           run the algorithm suite and emit an oracle-checked CSV
  serve           start the HTTP gateway
  crawl-cache     pre-warm one dense region slab in the shared store
  validate-cache  check the store against a source's current snapshot
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .bench import (
    CORRELATIONS,
    WorkloadSpec,
    default_matrix,
    run_suite,
    write_report,
    write_workload,
)
from .caches import DenseEntry, DenseRegion, DenseRegionStore, region_volume
from .engine1d import crawl_region
from .executor import Executor
from .model import Interval, SearchQuery, filter_signature
from .source import QueryMeter


def _cmd_gen_data(args: argparse.Namespace) -> int:
    spec = WorkloadSpec(n=args.n, m=args.m, k=args.k,
                        correlation=args.correlation,
                        dense_fraction=args.dense, seed=args.seed)
    out = write_workload(spec, args.out)
    print(f"wrote {spec.name} -> {out}")
    return 0


def _load_bench_specs(args: argparse.Namespace) -> list[WorkloadSpec]:
    if args.config:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        return [WorkloadSpec(**w) for w in doc["workloads"]]
    return default_matrix(base_seed=args.seed)


def _cmd_bench(args: argparse.Namespace) -> int:
    specs = _load_bench_specs(args)
    algorithms = tuple(args.algorithms.split(",")) if args.algorithms else None
    store_root = args.store if args.store else Path(args.out).parent / "bench-store"
    rows = run_suite(specs, depth=args.depth, algorithms=algorithms,
                     store_root=store_root, warm_rerank=args.warm_rerank)
    write_report(rows, args.out)
    bad = [r for r in rows if not r.oracle_match]
    print(f"{len(rows)} rows -> {args.out}; mismatches: {len(bad)}")
    for r in bad:
        print(f"  MISMATCH {r.workload} {r.algorithm}", file=sys.stderr)
    return 1 if bad else 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    try:
        config = ServiceConfig.load(args.config)
    except (OSError, KeyError, ValueError) as exc:
        print(f"bad config {args.config}: {exc}", file=sys.stderr)
        return 2
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return 0


def _service_source(args: argparse.Namespace):
    from .service import ServiceConfig

    config = ServiceConfig.load(args.config)
    entry = config.sources.get(args.source)
    if entry is None:
        print(f"no source {args.source!r} in {args.config}", file=sys.stderr)
        return None, None
    return config, entry.simulator


def _cmd_crawl_cache(args: argparse.Namespace) -> int:
    config, sim = _service_source(args)
    if sim is None:
        return 2
    schema = sim.schemas.get(args.attribute)
    if schema is None or not schema.is_numeric:
        print(f"{args.attribute!r} is not a numeric attribute", file=sys.stderr)
        return 2
    store = DenseRegionStore(config.dense_store_root)
    meter = QueryMeter()
    executor = Executor(sim, meter)
    interval = Interval(args.lo, args.hi)
    base = SearchQuery()
    tuples = crawl_region(base, args.attribute, interval, executor)
    region = DenseRegion.axis(args.attribute, interval)
    entry = DenseEntry(
        source_id=sim.source_id,
        filter_signature=filter_signature(base, (args.attribute,)),
        region=region,
        source_version=sim.snapshot_version(),
        created_at=time.time(),
        volume=region_volume(region, sim.schemas),
        tuples=tuple(sorted(tuples, key=lambda t: t.id)),
    )
    store.put(entry)
    executor.close()
    print(f"crawled {len(tuples)} tuples in {meter.total_queries} queries; "
          f"stored slab for {sim.source_id}/{args.attribute}")
    return 0


def _cmd_validate_cache(args: argparse.Namespace) -> int:
    config, sim = _service_source(args)
    if sim is None:
        return 2
    store = DenseRegionStore(config.dense_store_root)
    report = store.validate(sim)
    print(f"{sim.source_id}: kept={len(report.kept)} evicted={len(report.evicted)}"
          f" deferred={report.deferred}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="rankgate", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic workload")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--n", type=int, default=2000)
    g.add_argument("--m", type=int, default=2)
    g.add_argument("--k", type=int, default=10)
    g.add_argument("--correlation", choices=CORRELATIONS, default="independent")
    g.add_argument("--dense", type=float, default=0.0,
                   help="fraction of tuples sharing the designated value")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=_cmd_gen_data)

    b = sub.add_parser("bench", help="run the benchmark suite")
    b.add_argument("--config", help="JSON with a workloads list; default matrix otherwise")
    b.add_argument("--out", default="bench-report.csv")
    b.add_argument("--algorithms", help="comma-separated subset to run")
    b.add_argument("--depth", type=int, default=20, help="get-next depth per run")
    b.add_argument("--seed", type=int, default=1000)
    b.add_argument("--store", help="dense store root (default: next to --out)")
    b.add_argument("--warm-rerank", action="store_true",
                   help="run rerank twice per workload to measure amortization")
    b.set_defaults(func=_cmd_bench)

    s = sub.add_parser("serve", help="start the HTTP gateway")
    s.add_argument("--config", required=True, help="service config JSON")
    s.set_defaults(func=_cmd_serve)

    c = sub.add_parser("crawl-cache", help="pre-warm one dense region")
    c.add_argument("--config", required=True, help="service config JSON")
    c.add_argument("--source", required=True)
    c.add_argument("--attribute", required=True)
    c.add_argument("--lo", type=float, required=True)
    c.add_argument("--hi", type=float, required=True)
    c.set_defaults(func=_cmd_crawl_cache)

    v = sub.add_parser("validate-cache", help="validate the store for a source")
    v.add_argument("--config", required=True, help="service config JSON")
    v.add_argument("--source", required=True)
    v.set_defaults(func=_cmd_validate_cache)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
