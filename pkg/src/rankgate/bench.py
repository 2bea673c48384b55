"""Synthetic workloads and the measuring harness.

Datasets are uniform in [0,1] on the ranking attributes plus one auxiliary
numeric attribute, with an optional dense cluster sharing a single value on
the first ranking attribute. The system ranking realizes three correlation
modes against the user ranking: equal weights, negated weights, or seeded
random weights. Every benchmark row is verified against the brute-force
oracle; any mismatch fails the run.
"""

from __future__ import annotations

import csv
import json
import random
import time
from dataclasses import dataclass
from pathlib import Path

from .caches import DenseRegionStore, SessionCache
from .engine1d import (
    ASCENDING,
    DESCENDING,
    EngineConfig,
    get_next_1d_baseline,
    get_next_1d_binary,
    get_next_1d_rerank,
    make_state_1d,
)
from .enginemd import (
    get_next_md_baseline,
    get_next_md_binary,
    get_next_md_rerank,
    get_next_md_ta,
    make_state_md,
)
from .executor import Executor, RateLimit
from .model import (
    NUMERIC_CONTINUOUS,
    AttributeSchema,
    RankingSpec,
    SearchQuery,
    Tuple,
    rank_key,
)
from .source import (
    SimulatorConfig,
    SystemRanking,
    TopKSimulator,
    write_dataset,
    write_schema_doc,
)

CORRELATIONS = ("positive", "negative", "independent")
# Cluster offset from the preferred end of each ranked attribute: near-best,
# so get-next walks of modest depth run into the dense region early.
DENSE_VALUE = 0.002

ALGORITHMS_1D = ("1d-baseline", "1d-binary", "1d-rerank")
ALGORITHMS_MD = ("md-baseline", "md-binary", "md-rerank", "md-ta")

# user weights by position: the lead attribute dominates, later ones pull
# the other way, mirroring the kind of trade-off functions people type in
_USER_WEIGHTS = (1.0, -0.5, 0.25, -0.75)


@dataclass(frozen=True)
class WorkloadSpec:
    n: int
    m: int
    k: int
    correlation: str
    dense_fraction: float
    seed: int

    def __post_init__(self) -> None:
        if self.correlation not in CORRELATIONS:
            raise ValueError(f"correlation must be one of {CORRELATIONS}")
        if not 0.0 <= self.dense_fraction < 1.0:
            raise ValueError("dense_fraction must lie in [0, 1)")
        if self.m < 1 or self.m > len(_USER_WEIGHTS):
            raise ValueError(f"m must be 1..{len(_USER_WEIGHTS)}")

    @property
    def name(self) -> str:
        dense = int(round(self.dense_fraction * 100))
        return (f"n{self.n}-m{self.m}-k{self.k}-{self.correlation[:3]}"
                f"-d{dense}-s{self.seed}")


def user_weights(spec: WorkloadSpec) -> dict[str, float]:
    return {f"r{i + 1}": _USER_WEIGHTS[i] for i in range(spec.m)}


def build_workload(spec: WorkloadSpec):
    """(schemas, tuples, system_ranking). Deterministic in the seed."""
    rng = random.Random(spec.seed)
    attrs = [f"r{i + 1}" for i in range(spec.m)] + ["aux"]
    schemas = {a: AttributeSchema(a, NUMERIC_CONTINUOUS, 0.0, 1.0) for a in attrs}

    width = max(5, len(str(spec.n)))
    value_rows = [{a: rng.random() for a in attrs} for _ in range(spec.n)]
    cluster = int(spec.n * spec.dense_fraction)
    if cluster:
        # Dense tuples coincide on every ranked attribute, pinned near the
        # end the user weight prefers; only aux keeps them distinguishable.
        pins = {a: DENSE_VALUE if w > 0 else 1.0 - DENSE_VALUE
                for a, w in user_weights(spec).items()}
        for idx in rng.sample(range(spec.n), cluster):
            value_rows[idx].update(pins)
    else:
        seen: set[float] = set()
        for values in value_rows:  # keep the designated attribute collision-free
            while values["r1"] in seen:
                values["r1"] = rng.random()
            seen.add(values["r1"])
    rows = [Tuple(f"t{i:0{width}d}", values)
            for i, values in enumerate(value_rows)]

    user = user_weights(spec)
    if spec.correlation == "positive":
        system = SystemRanking.linear(dict(user))
    elif spec.correlation == "negative":
        system = SystemRanking.linear({a: -w for a, w in user.items()})
    else:
        weights = {a: rng.uniform(-1.0, 1.0) for a in attrs}
        if all(abs(w) < 1e-9 for w in weights.values()):
            weights[attrs[0]] = 1.0
        system = SystemRanking.linear(weights)
    return schemas, rows, system


def make_simulator(spec: WorkloadSpec, delay_ms: float = 0.0) -> TopKSimulator:
    schemas, rows, system = build_workload(spec)
    return TopKSimulator(spec.name, spec.name, schemas, rows, spec.k, system,
                         delay_ms=delay_ms)


def write_workload(spec: WorkloadSpec, out_dir: str | Path) -> Path:
    """Materialize a workload as dataset + schema + source config files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    schemas, rows, system = build_workload(spec)
    write_dataset(out / "dataset.csv", schemas, rows)
    write_schema_doc(out / "schema.json", schemas)
    cfg = SimulatorConfig(k=spec.k, system_ranking=system, dataset_path="dataset.csv")
    (out / "source.json").write_text(
        json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


def oracle_sequence(spec: WorkloadSpec, schemas, rows, depth: int) -> list[str]:
    user = RankingSpec.from_weights(user_weights(spec))
    ordered = sorted(rows, key=lambda t: rank_key(user, t, schemas))
    return [t.id for t in ordered[:depth]]


@dataclass
class BenchRow:
    workload: str
    algorithm: str
    queries: int
    parallel_fraction: float
    wall_ms: float
    oracle_match: bool


def _steps(algorithm: str, base: SearchQuery, user: dict[str, float],
           executor: Executor, store: DenseRegionStore | None,
           config: EngineConfig):
    if algorithm.startswith("1d"):
        attr = "r1"
        direction = ASCENDING if user[attr] > 0 else DESCENDING
        state = make_state_1d(base, attr, direction)
        if algorithm == "1d-baseline":
            return lambda: get_next_1d_baseline(state, executor, config)
        if algorithm == "1d-binary":
            return lambda: get_next_1d_binary(state, executor, config)
        return lambda: get_next_1d_rerank(state, executor, store, config)
    spec = RankingSpec.from_weights(user)
    state = make_state_md(base, spec)
    if algorithm == "md-baseline":
        return lambda: get_next_md_baseline(state, executor, config)
    if algorithm == "md-binary":
        return lambda: get_next_md_binary(state, executor, config)
    if algorithm == "md-ta":
        return lambda: get_next_md_ta(state, executor, store, config)
    return lambda: get_next_md_rerank(state, executor, store, config)


def run_algorithm(spec: WorkloadSpec, algorithm: str, simulator: TopKSimulator,
                  depth: int, store: DenseRegionStore | None = None,
                  config: EngineConfig = EngineConfig()) -> BenchRow:
    """One fresh session running `algorithm` for depth get-nexts."""
    user = user_weights(spec)
    cache = SessionCache(f"bench-{spec.name}-{algorithm}")
    executor = Executor(simulator, cache.meter, session_cache=cache,
                        rate_limit=RateLimit(max_in_flight=16))
    base = SearchQuery()
    step = _steps(algorithm, base, user, executor, store, config)

    if algorithm.startswith("1d"):
        direction = ASCENDING if user["r1"] > 0 else DESCENDING
        sign = 1.0 if direction == ASCENDING else -1.0
        ordered = sorted(simulator.all_tuples(),
                         key=lambda t: (sign * float(t.value("r1")), t.id))
        expected = [t.id for t in ordered[:depth]]
    else:
        expected = oracle_sequence(spec, simulator.schemas,
                                   simulator.all_tuples(), depth)

    got: list[str] = []
    started = time.perf_counter()
    for _ in range(depth):
        t = step()
        if t is None:
            break
        got.append(t.id)
    wall_ms = (time.perf_counter() - started) * 1000.0
    executor.close()
    return BenchRow(
        workload=spec.name,
        algorithm=algorithm,
        queries=cache.meter.total_queries,
        parallel_fraction=cache.meter.parallel_fraction,
        wall_ms=wall_ms,
        oracle_match=got == expected[:len(got)] and len(got) == len(expected),
    )


def default_matrix(base_seed: int = 1000, n: int = 2000) -> list[WorkloadSpec]:
    """The standard suite: 54 workloads spanning dimensionality, page size,
    correlation, and density."""
    specs = []
    i = 0
    for m in (1, 2, 3):
        for k in (5, 10, 50):
            for corr in CORRELATIONS:
                for dense in (0.0, 0.2):
                    specs.append(WorkloadSpec(n=n, m=m, k=k, correlation=corr,
                                              dense_fraction=dense,
                                              seed=base_seed + i))
                    i += 1
    return specs


def algorithms_for(spec: WorkloadSpec) -> tuple[str, ...]:
    if spec.m == 1:
        return ALGORITHMS_1D + ALGORITHMS_MD
    return ALGORITHMS_MD


def run_suite(specs: list[WorkloadSpec], depth: int = 20,
              algorithms: tuple[str, ...] | None = None,
              store_root: str | Path | None = None,
              warm_rerank: bool = False,
              config: EngineConfig = EngineConfig()) -> list[BenchRow]:
    rows: list[BenchRow] = []
    for spec in specs:
        simulator = make_simulator(spec)
        selected = algorithms or algorithms_for(spec)
        for algorithm in selected:
            if algorithm not in algorithms_for(spec):
                continue
            store = None
            if algorithm.endswith("rerank") or algorithm == "md-ta":
                root = (Path(store_root) if store_root is not None
                        else Path(".bench-store")) / spec.name / algorithm
                store = DenseRegionStore(root)
            rows.append(run_algorithm(spec, algorithm, simulator, depth,
                                      store, config))
            if warm_rerank and algorithm.endswith("rerank"):
                warm = run_algorithm(spec, algorithm, simulator, depth,
                                     store, config)
                warm.algorithm = algorithm + "+warm"
                rows.append(warm)
    return rows


def write_report(rows: list[BenchRow], out_path: str | Path) -> None:
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["workload", "algorithm", "queries", "parallel_fraction",
                    "wall_ms", "oracle_match"])
        for r in rows:
            w.writerow([r.workload, r.algorithm, r.queries,
                        f"{r.parallel_fraction:.4f}", f"{r.wall_ms:.1f}",
                        str(r.oracle_match).lower()])
