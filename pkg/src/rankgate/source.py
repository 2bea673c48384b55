"""Top-k sources: the response/descriptor types, the query meter, dataset
file formats, and an in-memory simulator of a hidden database.

The simulator answers conjunctive queries with the top k matches under its
own proprietary ranking and reports whether the result was truncated. It is
deliberately opaque: callers learn nothing about unreturned matches beyond
the overflow bit, which is exactly the contract of the live sources the
gateway fronts.
"""

from __future__ import annotations

import csv
import hashlib
import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import (
    CATEGORICAL,
    AttributeSchema,
    Interval,
    SchemaError,
    SearchQuery,
    Tuple,
    canonicalize,
    normalize,
    schemas_from_doc,
    schemas_to_doc,
)

OVERFLOW = "overflow"
COMPLETE = "complete"


class TransientSourceError(RuntimeError):
    """A retryable backend failure (timeouts, throttling, flaky transport)."""


@dataclass(frozen=True)
class TopKResponse:
    """What a top-k interface hands back: at most k matching tuples in the
    source's proprietary order, plus the truncation status."""

    tuples: tuple[Tuple, ...]
    status: str
    issued_at: float

    @property
    def overflowed(self) -> bool:
        return self.status == OVERFLOW


@dataclass(frozen=True)
class SourceDescriptor:
    source_id: str
    name: str
    k: int
    schemas: dict[str, AttributeSchema]


class QueryMeter:
    """Thread-safe account of backend query cost for one session.

    total_queries counts logical queries (retries of one query count once)
    and always equals sequential_queries + parallel_batch_queries.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.total_queries = 0
        self.sequential_queries = 0
        self.parallel_batch_queries = 0
        self.wall_seconds = 0.0

    def record_sequential(self) -> None:
        with self._lock:
            self.total_queries += 1
            self.sequential_queries += 1

    def record_parallel(self, n: int) -> None:
        with self._lock:
            self.total_queries += n
            self.parallel_batch_queries += n

    def add_wall(self, seconds: float) -> None:
        with self._lock:
            self.wall_seconds += seconds

    @property
    def parallel_fraction(self) -> float:
        with self._lock:
            if self.total_queries == 0:
                return 0.0
            return self.parallel_batch_queries / self.total_queries

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "total_queries": self.total_queries,
                "sequential_queries": self.sequential_queries,
                "parallel_batch_queries": self.parallel_batch_queries,
                "wall_seconds": self.wall_seconds,
            }


@dataclass(frozen=True)
class SystemRanking:
    """The source's hidden result order. Linear mode scores rows by a
    weighted sum of normalized values (ascending); lexicographic mode sorts
    by a list of (attribute, direction) pairs. Ties break by id."""

    mode: str = "linear"
    weights: tuple[tuple[str, float], ...] = ()
    order: tuple[tuple[str, str], ...] = ()

    @classmethod
    def linear(cls, weights: dict[str, float]) -> SystemRanking:
        return cls(mode="linear", weights=tuple(sorted(weights.items())))

    @classmethod
    def lexicographic(cls, order: list[tuple[str, str]]) -> SystemRanking:
        return cls(mode="lexicographic", order=tuple(order))

    def to_dict(self) -> dict:
        if self.mode == "linear":
            return {"mode": "linear", "weights": dict(self.weights)}
        return {"mode": "lexicographic", "order": [list(p) for p in self.order]}

    @classmethod
    def from_dict(cls, d: dict) -> SystemRanking:
        if d["mode"] == "linear":
            return cls.linear(d["weights"])
        return cls.lexicographic([tuple(p) for p in d["order"]])


@dataclass
class SimulatorConfig:
    k: int
    system_ranking: SystemRanking
    delay_ms: float = 0.0
    dataset_path: str | None = None

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "system_ranking": self.system_ranking.to_dict(),
            "delay_ms": self.delay_ms,
            "dataset_path": self.dataset_path,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SimulatorConfig:
        return cls(
            k=int(d["k"]),
            system_ranking=SystemRanking.from_dict(d["system_ranking"]),
            delay_ms=float(d.get("delay_ms", 0.0)),
            dataset_path=d.get("dataset_path"),
        )


class TopKSimulator:
    """Deterministic in-memory stand-in for a hidden web database.

    Matching is vectorized over column arrays and results are served as a
    prefix of one precomputed system-ranked order, so narrowing a query can
    only shrink its result and repeated queries are bit-stable. Mutations go
    through maintenance methods between serving sessions and change the
    snapshot version token.
    """

    def __init__(self, source_id: str, name: str, schemas: dict[str, AttributeSchema],
                 tuples: list[Tuple], k: int, system_ranking: SystemRanking,
                 delay_ms: float = 0.0) -> None:
        if k < 1:
            raise ValueError("k must be at least 1")
        self.source_id = source_id
        self.name = name
        self.schemas = dict(schemas)
        self.k = k
        self.system_ranking = system_ranking
        self.delay_ms = delay_ms
        self._lock = threading.Lock()
        self.search_count = 0
        self._in_flight = 0
        self.max_in_flight_seen = 0
        self.fault_hook = None  # tests may set this to inject failures
        self._load(tuples)

    # -- maintenance ----------------------------------------------------

    def _load(self, tuples: list[Tuple]) -> None:
        self._tuples = list(tuples)
        self._columns = {}
        for name, schema in self.schemas.items():
            if schema.is_numeric:
                col = np.array([float(t.value(name)) for t in self._tuples], dtype=np.float64)
            else:
                col = np.array([t.value(name) for t in self._tuples], dtype=object)
            self._columns[name] = col
        order = sorted(range(len(self._tuples)), key=self._system_key)
        self._ranked = np.array(order, dtype=np.int64)
        self._version = None

    def _system_key(self, idx: int):
        t = self._tuples[idx]
        r = self.system_ranking
        if r.mode == "linear":
            s = 0.0
            for attr, w in r.weights:
                s += w * normalize(self.schemas[attr], float(t.value(attr)))
            return (s, t.id)
        key = []
        for attr, direction in r.order:
            v = t.value(attr)
            if direction == "desc":
                v = -float(v)
            key.append(v)
        key.append(t.id)
        return tuple(key)

    def replace_tuples(self, tuples: list[Tuple]) -> None:
        """Maintenance-mode swap of the whole dataset."""
        with self._lock:
            self._load(tuples)

    def add_tuples(self, extra: list[Tuple]) -> None:
        """Maintenance-mode insert; changes the snapshot version."""
        with self._lock:
            self._load(self._tuples + list(extra))

    # -- serving --------------------------------------------------------

    def describe(self) -> SourceDescriptor:
        return SourceDescriptor(self.source_id, self.name, self.k, dict(self.schemas))

    def snapshot_version(self) -> str:
        with self._lock:
            if self._version is None:
                self._version = self._compute_version()
            return self._version

    def _compute_version(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(schemas_to_doc(self.schemas), sort_keys=True).encode())
        cols = list(self.schemas)
        for t in sorted(self._tuples, key=lambda t: t.id):
            row = [t.id] + [repr(t.value(c)) for c in cols]
            h.update("\x1f".join(row).encode())
            h.update(b"\x1e")
        return h.hexdigest()

    def _validate(self, q: SearchQuery) -> None:
        for pred in q.predicates:
            schema = self.schemas.get(pred.attribute)
            if schema is None:
                raise SchemaError(f"unknown attribute {pred.attribute!r}")
            if pred.interval is not None and not schema.is_numeric:
                raise SchemaError(f"{pred.attribute}: range predicate on categorical attribute")
            if pred.value is not None and schema.kind == CATEGORICAL:
                if pred.value not in schema.categories:
                    raise SchemaError(f"{pred.attribute}: {pred.value!r} is not a known category")
            if pred.value is not None and schema.is_numeric:
                if not isinstance(pred.value, (int, float)):
                    raise SchemaError(f"{pred.attribute}: equality value must be numeric")

    def _mask(self, q: SearchQuery) -> np.ndarray:
        mask = np.ones(len(self._tuples), dtype=bool)
        for pred in q.predicates:
            col = self._columns[pred.attribute]
            if pred.value is not None:
                if self.schemas[pred.attribute].is_numeric:
                    mask &= col == float(pred.value)
                else:
                    mask &= col == pred.value
            else:
                iv = pred.interval
                mask &= (col > iv.lo) if iv.lo_open else (col >= iv.lo)
                mask &= (col < iv.hi) if iv.hi_open else (col <= iv.hi)
        return mask

    def search(self, q: SearchQuery) -> TopKResponse:
        """Answer one conjunctive query with the top-k matches.

        Raises SchemaError before serving anything when the query references
        unknown attributes or misuses a kind.
        """
        q = canonicalize(q)
        self._validate(q)
        if self.fault_hook is not None:
            self.fault_hook(q)
        with self._lock:
            self.search_count += 1
            self._in_flight += 1
            self.max_in_flight_seen = max(self.max_in_flight_seen, self._in_flight)
        try:
            if self.delay_ms > 0:
                time.sleep(self.delay_ms / 1000.0)
            if q.impossible:
                return TopKResponse((), COMPLETE, time.time())
            hits = np.flatnonzero(self._mask(q)[self._ranked])
            if len(hits) > self.k:
                idx = self._ranked[hits[: self.k]]
                status = OVERFLOW
            else:
                idx = self._ranked[hits]
                status = COMPLETE
            return TopKResponse(tuple(self._tuples[i] for i in idx), status, time.time())
        finally:
            with self._lock:
                self._in_flight -= 1

    # oracle access for tests and the bench harness; not part of the
    # top-k interface the engines are allowed to touch
    def all_tuples(self) -> list[Tuple]:
        return list(self._tuples)


# Dataset files ----------------------------------------------------------------

def write_dataset(path: str | Path, schemas: dict[str, AttributeSchema],
                  tuples: list[Tuple]) -> None:
    """Write tuples as CSV: an `id` column followed by one column per
    schema attribute, UTF-8, `.` decimal separator."""
    cols = list(schemas)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["id"] + cols)
        for t in tuples:
            row = [t.id]
            for c in cols:
                v = t.value(c)
                row.append(repr(float(v)) if schemas[c].is_numeric else str(v))
            w.writerow(row)


def read_dataset(path: str | Path, schemas: dict[str, AttributeSchema]) -> list[Tuple]:
    out: list[Tuple] = []
    with open(path, newline="", encoding="utf-8") as f:
        r = csv.reader(f)
        header = next(r)
        if not header or header[0] != "id":
            raise ValueError(f"{path}: first dataset column must be 'id'")
        cols = header[1:]
        unknown = [c for c in cols if c not in schemas]
        if unknown:
            raise SchemaError(f"{path}: columns not in schema: {unknown}")
        for row in r:
            values: dict[str, object] = {}
            for c, raw in zip(cols, row[1:]):
                values[c] = float(raw) if schemas[c].is_numeric else raw
            out.append(Tuple(row[0], values))
    return out


def write_schema_doc(path: str | Path, schemas: dict[str, AttributeSchema]) -> None:
    Path(path).write_text(json.dumps(schemas_to_doc(schemas), indent=2) + "\n", encoding="utf-8")


def read_schema_doc(path: str | Path) -> dict[str, AttributeSchema]:
    return schemas_from_doc(json.loads(Path(path).read_text(encoding="utf-8")))


def simulator_from_files(source_id: str, name: str, config_path: str | Path,
                         schema_path: str | Path) -> TopKSimulator:
    """Build a simulator from a config JSON plus schema JSON; the dataset
    path inside the config resolves relative to the config file."""
    cfg_path = Path(config_path)
    cfg = SimulatorConfig.from_dict(json.loads(cfg_path.read_text(encoding="utf-8")))
    schemas = read_schema_doc(schema_path)
    if cfg.dataset_path is None:
        raise ValueError(f"{config_path}: config has no dataset_path")
    dataset = read_dataset(cfg_path.parent / cfg.dataset_path, schemas)
    return TopKSimulator(source_id, name, schemas, dataset, cfg.k,
                         cfg.system_ranking, cfg.delay_ms)
