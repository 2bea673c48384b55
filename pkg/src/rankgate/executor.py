"""Query dispatch. Engines never call a source directly; they hand single
queries or batches to an Executor, which enforces the rate limit, retries
transient failures, meters cost, and feeds every response through the
session's seen-tuple cache.

Batch results are joined and returned positionally, so engine behavior is
independent of the order in which the backend happens to finish them.
"""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .model import SearchQuery
from .source import QueryMeter, TopKResponse, TransientSourceError


@dataclass(frozen=True)
class RateLimit:
    max_in_flight: int = 8
    min_gap_ms: float = 0.0

    def __post_init__(self) -> None:
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be at least 1")
        if self.min_gap_ms < 0:
            raise ValueError("min_gap_ms must not be negative")


class BatchQueryError(RuntimeError):
    """At least one member of a batch failed hard; no results were released."""

    def __init__(self, failures: list[tuple[int, Exception]]) -> None:
        self.failures = failures
        first = failures[0]
        super().__init__(f"batch member {first[0]} failed: {first[1]}")


class Executor:
    """Session-scoped gateway to one top-k source.

    submit() runs one query on the calling thread; submit_batch() fans a
    list out over a bounded worker pool and joins before returning. Both
    count logical queries on the meter (a retried query counts once) and a
    batch of size one still counts as parallel work.
    """

    MAX_RETRIES = 3

    def __init__(self, source, meter: QueryMeter, session_cache=None,
                 rate_limit: RateLimit = RateLimit(), retry_backoff_s: float = 0.01) -> None:
        self.source = source
        self.meter = meter
        self.session_cache = session_cache
        self.rate_limit = rate_limit
        self.retry_backoff_s = retry_backoff_s
        self._pool: ThreadPoolExecutor | None = None
        self._gap_lock = threading.Lock()
        self._last_dispatch = 0.0
        # test seam: permutes batch dispatch order; results stay positional
        self.dispatch_permuter = None

    @property
    def descriptor(self):
        return self.source.describe()

    def source_version(self) -> str:
        return self.source.snapshot_version()

    def _pace(self) -> None:
        if self.rate_limit.min_gap_ms <= 0:
            return
        gap = self.rate_limit.min_gap_ms / 1000.0
        with self._gap_lock:
            now = time.monotonic()
            wait = self._last_dispatch + gap - now
            if wait > 0:
                time.sleep(wait)
                now = time.monotonic()
            self._last_dispatch = now

    def _call(self, q: SearchQuery) -> TopKResponse:
        attempts = 0
        while True:
            self._pace()
            try:
                return self.source.search(q)
            except TransientSourceError:
                attempts += 1
                if attempts > self.MAX_RETRIES:
                    raise
                time.sleep(self.retry_backoff_s * attempts)

    def _absorb(self, resp: TopKResponse) -> None:
        if self.session_cache is not None:
            self.session_cache.mark_seen(resp.tuples)

    def submit(self, q: SearchQuery) -> TopKResponse:
        start = time.monotonic()
        resp = self._call(q)
        self.meter.record_sequential()
        self.meter.add_wall(time.monotonic() - start)
        self._absorb(resp)
        return resp

    def submit_batch(self, queries: list[SearchQuery]) -> list[TopKResponse]:
        if not queries:
            return []
        start = time.monotonic()
        if self._pool is None:
            self._pool = ThreadPoolExecutor(max_workers=self.rate_limit.max_in_flight)
        order = list(range(len(queries)))
        if self.dispatch_permuter is not None:
            order = self.dispatch_permuter(len(queries))
        futures: dict[int, object] = {}
        for i in order:
            futures[i] = self._pool.submit(self._call, queries[i])
        results: list[TopKResponse | None] = [None] * len(queries)
        failures: list[tuple[int, Exception]] = []
        for i in range(len(queries)):
            try:
                results[i] = futures[i].result()
            except Exception as exc:  # noqa: BLE001 - classified below
                failures.append((i, exc))
        if failures:
            raise BatchQueryError(failures)
        self.meter.record_parallel(len(queries))
        self.meter.add_wall(time.monotonic() - start)
        for resp in results:
            self._absorb(resp)
        return results

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=False)
            self._pool = None
