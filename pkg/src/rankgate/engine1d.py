"""Single-attribute get-next over a top-k source.

Three strategies share one skeleton. Each get-next first tries to answer
from certified knowledge (regions whose matches are fully known), then
resolves ties at the frontier value, then searches the remaining region:

  baseline  narrows the region to the best candidate seen so far,
  binary    halves a work interval until a Complete response lands,
  rerank    is binary plus a persistent dense-region cache for intervals
            that keep overflowing.

Results are exact: the sequence of discoveries equals a brute-force sort of
all matches by (attribute value in the requested direction, id).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .caches import DenseEntry, DenseRegion, DenseRegionStore, region_volume
from .executor import Executor
from .model import (
    AttributeSchema,
    Interval,
    SchemaError,
    SearchQuery,
    Tuple,
    canonicalize,
    equals_pred,
    filter_signature,
    matches,
    range_pred,
    refine,
)
from .source import TopKResponse

ASCENDING = "ascending"
DESCENDING = "descending"


class NoMatchesError(LookupError):
    """The filtered region holds no tuples at all."""


class IndistinguishableTuplesError(RuntimeError):
    """A fully pinned point query still overflows: more than k tuples agree
    on every attribute, so the interface cannot enumerate them."""


@dataclass
class EngineConfig:
    """Shared engine tuning knobs. Thresholds are fractions of the
    normalized domain below which an overflowing region counts as dense."""

    dense_threshold_1d: float = 1e-3
    dense_threshold_md: float = 1e-4
    cover_granularity: int = 4


DEFAULT_CONFIG = EngineConfig()


@dataclass
class CertifiedSpan:
    """An interval whose matches are completely known."""

    interval: Interval
    tuples: dict[str, Tuple]


@dataclass
class GetNextState1D:
    """Cross-call state for one 1D ranking run.

    discovered is the oracle prefix so far; frontier_value tracks the last
    discovered value (None before the first discovery). spans accumulate
    certified knowledge so later calls can answer without new queries.
    """

    base_query: SearchQuery
    attribute: str
    direction: str
    discovered: list[Tuple] = field(default_factory=list)
    discovered_ids: set[str] = field(default_factory=set)
    spans: list[CertifiedSpan] = field(default_factory=list)
    frontier_value: float | None = None
    exhausted: bool = False

    def __post_init__(self) -> None:
        if self.direction not in (ASCENDING, DESCENDING):
            raise ValueError(f"bad direction: {self.direction!r}")
        self.base_query = canonicalize(self.base_query)


def make_state_1d(base_query: SearchQuery, attribute: str, direction: str) -> GetNextState1D:
    return GetNextState1D(base_query=base_query, attribute=attribute, direction=direction)


@dataclass(frozen=True)
class _Bound:
    value: float
    inclusive: bool


class _Axis:
    """Direction-aware interval arithmetic so one code path serves both
    ascending and descending runs by mirroring, not by negating values."""

    def __init__(self, schema: AttributeSchema, attribute: str, direction: str) -> None:
        if not schema.is_numeric:
            raise SchemaError(f"{attribute}: 1D ranking needs a numeric attribute")
        self.schema = schema
        self.attribute = attribute
        self.ascending = direction == ASCENDING

    def value(self, t: Tuple) -> float:
        return float(t.value(self.attribute))

    def key(self, t: Tuple) -> tuple[float, str]:
        v = self.value(t)
        return (v if self.ascending else -v, t.id)

    @property
    def better_extreme(self) -> float:
        return self.schema.domain_min if self.ascending else self.schema.domain_max

    @property
    def worse_extreme(self) -> float:
        return self.schema.domain_max if self.ascending else self.schema.domain_min

    def region(self, start: _Bound, end: _Bound) -> Interval:
        if self.ascending:
            return Interval(start.value, end.value, not start.inclusive, not end.inclusive)
        return Interval(end.value, start.value, not end.inclusive, not start.inclusive)

    def full_region(self, start: _Bound) -> Interval:
        return self.region(start, _Bound(self.worse_extreme, True))

    def split(self, w: Interval) -> tuple[Interval, Interval]:
        """(better half, worse half); the midpoint joins the better half so
        ties at the split value are certified together."""
        mid = w.lo + (w.hi - w.lo) / 2.0
        if not (w.lo < mid < w.hi):
            return Interval(0.0, -1.0), w  # unsplittable; caller finishes w whole
        if self.ascending:
            return Interval(w.lo, mid, w.lo_open, False), Interval(mid, w.hi, True, w.hi_open)
        return Interval(mid, w.hi, False, w.hi_open), Interval(w.lo, mid, w.lo_open, True)

    def cap(self, w: Interval, value: float) -> Interval:
        """Clip the worse end of w to `value`, keeping value inside."""
        if self.ascending:
            if value < w.hi:
                return Interval(w.lo, value, w.lo_open, False)
            return w
        if value > w.lo:
            return Interval(value, w.hi, False, w.hi_open)
        return w

    def worse_rest(self, w: Interval, span_end: Interval) -> Interval:
        # w minus a better-side prefix ending at span_end's worse edge
        if self.ascending:
            return Interval(span_end.hi, w.hi, not span_end.hi_open, w.hi_open)
        return Interval(w.lo, span_end.lo, w.lo_open, not span_end.lo_open)

    def norm_width(self, iv: Interval) -> float:
        dom = self.schema.width
        return iv.width / dom if dom > 0 else 0.0

    def reaches_worse_extreme(self, iv: Interval) -> bool:
        if self.ascending:
            return iv.hi > self.worse_extreme or (iv.hi == self.worse_extreme and not iv.hi_open)
        return iv.lo < self.worse_extreme or (iv.lo == self.worse_extreme and not iv.lo_open)

    def resume_bound(self, iv: Interval) -> _Bound:
        """Where a search must pick up after a certified interval."""
        if self.ascending:
            return _Bound(iv.hi, iv.hi_open)
        return _Bound(iv.lo, iv.lo_open)


# Certified-span bookkeeping ---------------------------------------------------

def _add_span(state: GetNextState1D, interval: Interval, tuples) -> None:
    if interval.is_empty:
        return
    state.spans.append(CertifiedSpan(interval, {t.id: t for t in tuples}))


def _merged_spans(state: GetNextState1D) -> list[CertifiedSpan]:
    spans = sorted(state.spans, key=lambda s: (s.interval.lo, s.interval.lo_open))
    merged: list[CertifiedSpan] = []
    for span in spans:
        if merged:
            cur = merged[-1].interval
            nxt = span.interval
            touches = nxt.lo < cur.hi or (
                nxt.lo == cur.hi and not (cur.hi_open and nxt.lo_open))
            if touches:
                if nxt.hi > cur.hi:
                    hi, hi_open = nxt.hi, nxt.hi_open
                elif nxt.hi == cur.hi:
                    hi, hi_open = cur.hi, cur.hi_open and nxt.hi_open
                else:
                    hi, hi_open = cur.hi, cur.hi_open
                merged[-1].interval = Interval(cur.lo, hi, cur.lo_open, hi_open)
                merged[-1].tuples.update(span.tuples)
                continue
        merged.append(CertifiedSpan(span.interval, dict(span.tuples)))
    return merged


def _span_covering(spans: list[CertifiedSpan], value: float) -> CertifiedSpan | None:
    for span in spans:
        if span.interval.contains(value):
            return span
    return None


# Generic complete enumeration -------------------------------------------------

def _remaining_interval(q: SearchQuery, schema: AttributeSchema) -> Interval | None:
    iv = Interval(schema.domain_min, schema.domain_max)
    for p in q.predicates:
        if p.attribute != schema.name:
            continue
        if p.value is not None:
            return None
        iv = iv.intersect(p.interval)
    if iv.is_empty or iv.lo == iv.hi:
        return None
    return iv


def _pinned_categories(q: SearchQuery) -> set[str]:
    return {p.attribute for p in q.predicates if p.value is not None}


def _subdivide(q: SearchQuery, resp: TopKResponse, schemas: dict[str, AttributeSchema]):
    """Partition an overflowing query into narrower children.

    Splits the widest unpinned numeric attribute at actual page values, so
    progress is guaranteed in the number of distinct values per part and
    value clusters get pinned instead of chased by vanishing midpoints.
    Falls back to categorical fan-out; a fully pinned overflow is an error.
    """
    candidates = []
    for name, schema in schemas.items():
        if not schema.is_numeric:
            continue
        iv = _remaining_interval(q, schema)
        if iv is None:
            continue
        width = iv.width / (schema.width or 1.0)
        if width > 0:
            candidates.append((width, name, iv))
    if candidates:
        _, attr, iv = max(candidates, key=lambda c: (c[0], c[1]))
        vals = sorted({float(t.value(attr)) for t in resp.tuples
                       if iv.contains(float(t.value(attr)))})
        parts: list[SearchQuery] = []
        if len(vals) >= 2:
            s = vals[(len(vals) - 1) // 2]
            parts.append(refine(q, range_pred(attr, iv.lo, s, iv.lo_open, False)))
            parts.append(refine(q, range_pred(attr, s, iv.hi, True, iv.hi_open)))
        else:
            v = vals[0]
            below = Interval(iv.lo, v, iv.lo_open, True)
            above = Interval(v, iv.hi, True, iv.hi_open)
            if not below.is_empty:
                parts.append(refine(q, range_pred(attr, below.lo, below.hi,
                                                  below.lo_open, below.hi_open)))
            parts.append(refine(q, equals_pred(attr, v)))
            if not above.is_empty:
                parts.append(refine(q, range_pred(attr, above.lo, above.hi,
                                                  above.lo_open, above.hi_open)))
        return [p for p in parts if not p.impossible]
    for name in sorted(schemas):
        schema = schemas[name]
        if schema.is_numeric or name in _pinned_categories(q):
            continue
        return [refine(q, equals_pred(name, c)) for c in schema.categories]
    raise IndistinguishableTuplesError(
        "point query still overflows: tuples identical on every attribute")


def crawl_complete(q: SearchQuery, executor: Executor,
                   first_response: TopKResponse | None = None) -> list[Tuple]:
    """Enumerate every tuple matching q, recursively partitioning overflowing
    sub-queries. Children of one level go out as a parallel batch."""
    schemas = executor.descriptor.schemas
    q = canonicalize(q)
    collected: dict[str, Tuple] = {}
    work: list[SearchQuery] = []

    def absorb(query: SearchQuery, resp: TopKResponse) -> None:
        for t in resp.tuples:
            collected[t.id] = t
        if resp.overflowed:
            work.extend(_subdivide(query, resp, schemas))

    if first_response is not None:
        absorb(q, first_response)
    else:
        work.append(q)
    while work:
        batch, work = work, []
        if len(batch) == 1:
            responses = [executor.submit(batch[0])]
        else:
            responses = executor.submit_batch(batch)
        for query, resp in zip(batch, responses):
            absorb(query, resp)
    return sorted(collected.values(), key=lambda t: t.id)


def crawl_equal_value(base_query: SearchQuery, attribute: str, value: float,
                      executor: Executor) -> list[Tuple]:
    """All tuples matching base_query with attribute == value, however many
    share it. Overflow is broken by pivoting on other attributes."""
    return crawl_complete(refine(base_query, equals_pred(attribute, value)), executor)


def crawl_region(base_query: SearchQuery, attribute: str, interval: Interval,
                 executor: Executor) -> list[Tuple]:
    """All tuples matching base_query with attribute inside interval, sorted
    by (value, id)."""
    q = refine(base_query, range_pred(attribute, interval.lo, interval.hi,
                                      interval.lo_open, interval.hi_open))
    out = crawl_complete(q, executor)
    return sorted(out, key=lambda t: (float(t.value(attribute)), t.id))


# Dense-region resolution --------------------------------------------------------

class _Resolver:
    """Certifies values and intervals, optionally through the dense store.

    Without a store this is plain crawling (baseline and pure binary). With
    one, slabs that overflowed get persisted and later runs are answered
    from containing slabs with zero backend queries. Store I/O failures
    degrade silently to crawling.
    """

    def __init__(self, state: GetNextState1D, executor: Executor,
                 store: DenseRegionStore | None) -> None:
        self.state = state
        self.executor = executor
        self.store = store
        self.attribute = state.attribute
        self._sig = None
        self._version = None

    def _signature(self) -> str:
        if self._sig is None:
            self._sig = filter_signature(self.state.base_query, (self.attribute,))
        return self._sig

    def _source_version(self) -> str:
        if self._version is None:
            self._version = self.executor.source_version()
        return self._version

    def _effective(self, iv: Interval) -> Interval:
        base_iv = _remaining_interval(self.state.base_query,
                                      self.executor.descriptor.schemas[self.attribute])
        for p in self.state.base_query.predicates:
            if p.attribute == self.attribute and p.value is not None:
                return iv.intersect(Interval(float(p.value), float(p.value)))
        return iv if base_iv is None else iv.intersect(base_iv)

    def _lookup(self, request: DenseRegion) -> list[Tuple] | None:
        if self.store is None:
            return None
        try:
            entry = self.store.get(self.executor.descriptor.source_id, self._signature(),
                                   request, self._source_version())
        except OSError:
            return None
        return None if entry is None else entry.tuples_in(request)

    def _persist(self, request: DenseRegion, tuples: list[Tuple]) -> None:
        if self.store is None:
            return
        schemas = self.executor.descriptor.schemas
        entry = DenseEntry(
            source_id=self.executor.descriptor.source_id,
            filter_signature=self._signature(),
            region=request,
            source_version=self._source_version(),
            created_at=time.time(),
            volume=region_volume(request, schemas),
            tuples=tuple(sorted(tuples, key=lambda t: t.id)),
        )
        try:
            self.store.put(entry)
        except OSError:
            pass

    def value_slab(self, value: float) -> list[Tuple]:
        """Complete match set at attribute == value."""
        request = DenseRegion.axis(self.attribute, Interval(value, value))
        cached = self._lookup(request)
        if cached is not None:
            return cached
        q = refine(self.state.base_query, equals_pred(self.attribute, value))
        resp = self.executor.submit(q)
        if not resp.overflowed:
            return list(resp.tuples)
        tuples = crawl_complete(q, self.executor, first_response=resp)
        self._persist(request, tuples)
        return tuples

    def region_probe(self, iv: Interval) -> list[Tuple] | None:
        """Cache-only lookup for an interval; None on miss."""
        return self._lookup(DenseRegion.axis(self.attribute, self._effective(iv)))

    def region_slab(self, iv: Interval, first_response: TopKResponse | None) -> list[Tuple]:
        """Complete match set inside an overflowing interval, crawled and,
        when a store is attached, persisted as a dense slab."""
        request = DenseRegion.axis(self.attribute, self._effective(iv))
        q = refine(self.state.base_query,
                   range_pred(self.attribute, iv.lo, iv.hi, iv.lo_open, iv.hi_open))
        tuples = crawl_complete(q, self.executor, first_response=first_response)
        self._persist(request, tuples)
        return tuples


# The shared get-next skeleton ---------------------------------------------------

def _frontier_key(state: GetNextState1D, axis: _Axis) -> tuple[float, str]:
    last = state.discovered[-1]
    return axis.key(last)


def _candidates_after(span: CertifiedSpan, state: GetNextState1D, axis: _Axis):
    if state.discovered:
        bar = _frontier_key(state, axis)
        return [t for t in span.tuples.values() if axis.key(t) > bar]
    return list(span.tuples.values())


def _resolve_known(state: GetNextState1D, axis: _Axis):
    """Answer from certified spans when possible.

    Returns ("answer", t) | ("exhausted",) | ("tie", value) when the
    frontier value itself needs certification | ("search", bound).
    """
    spans = _merged_spans(state)
    if state.discovered:
        anchor = state.frontier_value
    else:
        anchor = axis.better_extreme
    span = _span_covering(spans, anchor)
    if span is None:
        if state.discovered:
            return ("tie", anchor)
        return ("search", _Bound(anchor, True))
    cands = _candidates_after(span, state, axis)
    if cands:
        return ("answer", min(cands, key=axis.key))
    if axis.reaches_worse_extreme(span.interval):
        return ("exhausted",)
    return ("search", axis.resume_bound(span.interval))


def _seed_best(state: GetNextState1D, axis: _Axis, region: Interval,
               session_cache) -> Tuple | None:
    best = None
    pools = [span.tuples.values() for span in state.spans]
    if session_cache is not None:
        pools.append(session_cache.seen.values())
    for pool in pools:
        for t in pool:
            if t.id in state.discovered_ids:
                continue
            if not matches(state.base_query, t):
                continue
            v = t.values.get(axis.attribute)
            if not isinstance(v, (int, float)) or not region.contains(float(v)):
                continue
            if best is None or axis.key(t) < axis.key(best):
                best = t
    return best


def _range_query(state: GetNextState1D, iv: Interval) -> SearchQuery:
    return refine(state.base_query,
                  range_pred(state.attribute, iv.lo, iv.hi, iv.lo_open, iv.hi_open))


def _undiscovered(state: GetNextState1D, tuples) -> list[Tuple]:
    return [t for t in tuples if t.id not in state.discovered_ids]


def _finish_at_value(state: GetNextState1D, axis: _Axis, value: float,
                     resolver: _Resolver) -> Tuple:
    tuples = resolver.value_slab(value)
    _add_span(state, Interval(value, value), tuples)
    und = _undiscovered(state, tuples)
    return min(und, key=axis.key)


def _search_baseline(state: GetNextState1D, axis: _Axis, start: _Bound,
                     executor: Executor, resolver: _Resolver,
                     config: EngineConfig) -> Tuple | None:
    full = axis.full_region(start)
    if full.is_empty:
        return None
    best = _seed_best(state, axis, full, executor.session_cache)
    if best is None:
        resp = executor.submit(_range_query(state, full))
        if not resp.overflowed:
            _add_span(state, full, resp.tuples)
            und = _undiscovered(state, resp.tuples)
            return min(und, key=axis.key) if und else None
        best = min(resp.tuples, key=axis.key)
    closed_tried_at: float | None = None
    while True:
        bv = axis.value(best)
        use_closed = closed_tried_at != bv
        region = axis.region(start, _Bound(bv, use_closed))
        if region.is_empty:
            return _finish_at_value(state, axis, bv, resolver)
        resp = executor.submit(_range_query(state, region))
        if not resp.overflowed:
            _add_span(state, region, resp.tuples)
            und = _undiscovered(state, resp.tuples)
            if use_closed:
                return min(und, key=axis.key)  # best itself is in the region
            if und:
                return min(und, key=axis.key)
            return _finish_at_value(state, axis, bv, resolver)
        page_best = min(resp.tuples, key=axis.key)
        if axis.key(page_best) < axis.key(best):
            best = page_best
        if axis.value(best) == bv and use_closed:
            closed_tried_at = bv
        elif axis.value(best) != bv:
            closed_tried_at = None


def _search_binary(state: GetNextState1D, axis: _Axis, start: _Bound,
                   executor: Executor, resolver: _Resolver,
                   config: EngineConfig) -> Tuple | None:
    window = axis.full_region(start)
    best = _seed_best(state, axis, window, executor.session_cache)
    if best is not None:
        window = axis.cap(window, axis.value(best))
    while True:
        if window.is_empty:
            return None
        cached = resolver.region_probe(window)
        if cached is not None:
            _add_span(state, window, cached)
            und = _undiscovered(state, cached)
            return min(und, key=axis.key) if und else None
        if axis.norm_width(window) < config.dense_threshold_1d:
            return _finish_window(state, axis, window, best, executor, resolver)
        better, worse = axis.split(window)
        if better.is_empty:  # midpoint could not separate the bounds
            return _finish_window(state, axis, window, best, executor, resolver)
        resp = executor.submit(_range_query(state, better))
        if resp.overflowed:
            page_best = min(resp.tuples, key=axis.key)
            if best is None or axis.key(page_best) < axis.key(best):
                best = page_best
            window = axis.cap(better, axis.value(best))
            continue
        _add_span(state, better, resp.tuples)
        und = _undiscovered(state, resp.tuples)
        if und:
            return min(und, key=axis.key)
        window = worse
        if best is not None:
            window = axis.cap(window, axis.value(best))


def _finish_window(state: GetNextState1D, axis: _Axis, window: Interval,
                   best: Tuple | None, executor: Executor,
                   resolver: _Resolver) -> Tuple | None:
    cached = resolver.region_probe(window)
    if cached is not None:
        _add_span(state, window, cached)
        und = _undiscovered(state, cached)
        return min(und, key=axis.key) if und else None
    resp = executor.submit(_range_query(state, window))
    if not resp.overflowed:
        _add_span(state, window, resp.tuples)
        und = _undiscovered(state, resp.tuples)
        return min(und, key=axis.key) if und else None
    slab = resolver.region_slab(window, resp)
    _add_span(state, window, slab)
    und = _undiscovered(state, slab)
    return min(und, key=axis.key)


def _get_next(state: GetNextState1D, executor: Executor, search,
              resolver: _Resolver, config: EngineConfig) -> Tuple | None:
    if state.exhausted:
        return None
    schema = executor.descriptor.schemas.get(state.attribute)
    if schema is None:
        raise SchemaError(f"unknown attribute {state.attribute!r}")
    axis = _Axis(schema, state.attribute, state.direction)
    while True:
        outcome = _resolve_known(state, axis)
        if outcome[0] == "answer":
            ans = outcome[1]
        elif outcome[0] == "exhausted":
            state.exhausted = True
            return None
        elif outcome[0] == "tie":
            tuples = resolver.value_slab(outcome[1])
            _add_span(state, Interval(outcome[1], outcome[1]), tuples)
            continue
        else:
            ans = search(state, axis, outcome[1], executor, resolver, config)
            if ans is None:
                state.exhausted = True
                return None
        state.discovered.append(ans)
        state.discovered_ids.add(ans.id)
        state.frontier_value = axis.value(ans)
        return ans


def get_next_1d_baseline(state: GetNextState1D, executor: Executor,
                         config: EngineConfig = DEFAULT_CONFIG) -> Tuple | None:
    return _get_next(state, executor, _search_baseline, _Resolver(state, executor, None), config)


def get_next_1d_binary(state: GetNextState1D, executor: Executor,
                       config: EngineConfig = DEFAULT_CONFIG) -> Tuple | None:
    return _get_next(state, executor, _search_binary, _Resolver(state, executor, None), config)


def get_next_1d_rerank(state: GetNextState1D, executor: Executor,
                       dense_store: DenseRegionStore | None,
                       config: EngineConfig = DEFAULT_CONFIG) -> Tuple | None:
    return _get_next(state, executor, _search_binary,
                     _Resolver(state, executor, dense_store), config)


def discover_extremes(base_query: SearchQuery, attribute: str,
                      executor: Executor,
                      config: EngineConfig = DEFAULT_CONFIG) -> tuple[float, float]:
    """(min value, max value) of an attribute over the filtered matches,
    found with two fresh h=0 get-next runs. Raises NoMatchesError when the
    filter selects nothing."""
    lo_state = make_state_1d(base_query, attribute, ASCENDING)
    lo = get_next_1d_binary(lo_state, executor, config)
    if lo is None:
        raise NoMatchesError("no tuple matches the base query")
    hi_state = make_state_1d(base_query, attribute, DESCENDING)
    hi = get_next_1d_binary(hi_state, executor, config)
    return (float(lo.value(attribute)), float(hi.value(attribute)))
