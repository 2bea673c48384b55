"""Multi-attribute get-next over a top-k source.

The ranking is a weighted sum of normalized attribute values, minimized.
Four strategies:

  md baseline  re-covers the region under the best candidate's score level
               set every improvement round and queries the cover as a batch,
  md binary    keeps a persistent tree of axis-aligned boxes, halves
               overflowing boxes along their longest normalized edge, and
               skips boxes that cannot hold anything better,
  md rerank    is binary plus the persistent dense-slab store,
  md ta        runs one 1D cursor per ranking attribute and stops on the
               classic aggregation threshold.

Certification is tie-exact: a candidate is returned only once every
unresolved region provably cannot hold a tuple with a smaller (score, id)
key. Corner bounds are summed in the same term order as the score function,
which keeps the bound sound in floating point, not just in the reals.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .caches import DenseEntry, DenseRegion, DenseRegionStore, region_volume
from .engine1d import (
    ASCENDING,
    DESCENDING,
    DEFAULT_CONFIG,
    EngineConfig,
    GetNextState1D,
    crawl_complete,
    crawl_equal_value,
    get_next_1d_rerank,
    make_state_1d,
)
from .executor import Executor
from .model import (
    AttributeSchema,
    Interval,
    RankingSpec,
    SchemaError,
    SearchQuery,
    Tuple,
    canonicalize,
    filter_signature,
    matches,
    normalize,
    range_pred,
    refine,
    score,
)
from .source import TopKResponse

Box = dict[str, Interval]


@dataclass(frozen=True)
class Contour:
    """The level set of a ranking at the best-known score; the region of
    interest is the strictly better side."""

    spec: RankingSpec
    bound: float


@dataclass
class _Leaf:
    box: Box
    corner: float
    created: int


@dataclass
class GetNextStateMD:
    """Cross-call state for one multi-attribute ranking run."""

    base_query: SearchQuery
    spec: RankingSpec
    discovered: list[Tuple] = field(default_factory=list)
    discovered_ids: set[str] = field(default_factory=set)
    frontier_key: tuple[float, str] | None = None
    known: dict[str, Tuple] = field(default_factory=dict)
    scores: dict[str, float] = field(default_factory=dict)
    leaves: list[_Leaf] | None = None
    next_leaf_id: int = 0
    full_certified: bool = False
    exhausted: bool = False
    # ta-only scratch
    ta_cursors: list[GetNextState1D] | None = None
    ta_latest: list[float] | None = None
    ta_last_id: list[str] | None = None
    ta_next: int = 0
    ta_complete: bool = False
    ta_trace: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.base_query = canonicalize(self.base_query)


def make_state_md(base_query: SearchQuery, spec: RankingSpec) -> GetNextStateMD:
    return GetNextStateMD(base_query=base_query, spec=spec)


# Score geometry -----------------------------------------------------------------

def _axis_interval(base_query: SearchQuery, schema: AttributeSchema) -> Interval:
    iv = Interval(schema.domain_min, schema.domain_max)
    for p in base_query.predicates:
        if p.attribute != schema.name:
            continue
        if p.value is not None:
            v = float(p.value)
            return Interval(v, v)
        iv = iv.intersect(p.interval)
    return iv


def _corner_score(spec: RankingSpec, box: Box,
                  schemas: dict[str, AttributeSchema]) -> float:
    """Lower bound on the score of any point in the box. Summed in spec term
    order so the bound also holds under floating-point rounding."""
    total = 0.0
    for attr, w in spec.terms:
        iv = box[attr]
        end = iv.lo if w > 0 else iv.hi
        total += w * normalize(schemas[attr], end)
    return total


def _tuple_key(spec: RankingSpec, t: Tuple,
               schemas: dict[str, AttributeSchema]) -> tuple[float, str]:
    return (score(spec, t, schemas), t.id)


# Contour covering ---------------------------------------------------------------

def _axis_segments(iv: Interval, granularity: int) -> list[Interval]:
    if iv.width == 0:
        return [iv]
    step = iv.width / granularity
    segs = []
    for j in range(granularity):
        lo = iv.lo + j * step
        hi = iv.hi if j == granularity - 1 else iv.lo + (j + 1) * step
        segs.append(Interval(lo, hi, j > 0, False))
    return segs


def _cover_cells(contour: Contour, bounding_box: Box, granularity: int,
                 schemas: dict[str, AttributeSchema], inclusive: bool) -> list[Box]:
    attrs = [attr for attr, _ in contour.spec.terms]
    axes = [_axis_segments(bounding_box[a], granularity) for a in attrs]
    cells: list[Box] = []

    def walk(i: int, partial: Box) -> None:
        if i == len(attrs):
            c = _corner_score(contour.spec, partial, schemas)
            if c < contour.bound or (inclusive and c == contour.bound):
                cells.append(dict(partial))
            return
        for seg in axes[i]:
            partial[attrs[i]] = seg
            walk(i + 1, partial)
        del partial[attrs[i]]

    walk(0, {})
    return _merge_last_axis(cells, attrs[-1])


def _merge_last_axis(cells: list[Box], last: str) -> list[Box]:
    """Fuse runs of cells adjacent along the last axis into maximal slabs.
    Cells arrive in depth-first grid order, so a run is a consecutive block
    agreeing on every other axis."""
    merged: list[Box] = []
    for cell in cells:
        if merged:
            prev = merged[-1]
            same_prefix = all(prev[a] == cell[a] for a in cell if a != last)
            if same_prefix and prev[last].hi == cell[last].lo:
                merged[-1] = dict(prev)
                merged[-1][last] = Interval(prev[last].lo, cell[last].hi,
                                            prev[last].lo_open, cell[last].hi_open)
                continue
        merged.append(cell)
    return merged


def cover_contour(contour: Contour, bounding_box: Box, granularity: int,
                  schemas: dict[str, AttributeSchema]) -> list[Box]:
    """Boxes whose union covers {x : score(x) < bound} inside bounding_box.

    Each weighted axis is cut into `granularity` equal segments; a grid cell
    survives when its best corner scores strictly below the bound. Adjacent
    survivors merge along the last axis. The union over-covers by at most
    one cell width per axis and shrinks as granularity grows.
    """
    if granularity < 1:
        raise ValueError("granularity must be >= 1")
    return _cover_cells(contour, bounding_box, granularity, schemas, inclusive=False)


# Subspace partitioning ----------------------------------------------------------

@dataclass(frozen=True)
class EqualSlicePlan:
    """Deferred crawl of the pivot's equal-value slice."""

    base_query: SearchQuery
    attribute: str
    value: float

    def run(self, executor: Executor) -> list[Tuple]:
        return crawl_equal_value(self.base_query, self.attribute, self.value, executor)


def partition_subspaces(state: GetNextStateMD, found: Tuple,
                        pivot_attribute: str | None = None,
                        schemas: dict[str, AttributeSchema] | None = None,
                        ) -> tuple[Box, Box, EqualSlicePlan]:
    """Split the search space at `found` on the pivot attribute: the strictly
    lower box, the strictly upper box, and a crawl plan for the equal slice.
    The next tuple is the best of the three partial results. Pivot defaults
    to the ranking attribute with the largest absolute weight."""
    if pivot_attribute is None:
        pivot_attribute = min(state.spec.terms,
                              key=lambda t: (-abs(t[1]), t[0]))[0]
    if pivot_attribute not in state.spec.attributes:
        raise SchemaError(f"{pivot_attribute!r} is not a ranking attribute")
    v = float(found.value(pivot_attribute))
    lower: Box = {}
    upper: Box = {}
    for attr, _ in state.spec.terms:
        if schemas is not None:
            full = _axis_interval(state.base_query, schemas[attr])
        else:
            full = Interval(float("-inf"), float("inf"))
        if attr == pivot_attribute:
            lower[attr] = Interval(full.lo, v, full.lo_open, True)
            upper[attr] = Interval(v, full.hi, True, full.hi_open)
        else:
            lower[attr] = full
            upper[attr] = full
    plan = EqualSlicePlan(state.base_query, pivot_attribute, v)
    return lower, upper, plan


# Shared engine plumbing ---------------------------------------------------------

def _absorb(state: GetNextStateMD, tuples, schemas) -> None:
    for t in tuples:
        if t.id in state.known:
            continue
        state.known[t.id] = t
        state.scores[t.id] = score(state.spec, t, schemas)


def _best_unseen(state: GetNextStateMD) -> tuple[float, str] | None:
    best: tuple[float, str] | None = None
    for tid, s in state.scores.items():
        if tid in state.discovered_ids:
            continue
        key = (s, tid)
        if state.frontier_key is not None and key <= state.frontier_key:
            continue
        if best is None or key < best:
            best = key
    return best


def _accept(state: GetNextStateMD, key: tuple[float, str]) -> Tuple:
    t = state.known[key[1]]
    state.discovered.append(t)
    state.discovered_ids.add(t.id)
    state.frontier_key = key
    return t


def _box_query(state: GetNextStateMD, box: Box) -> SearchQuery:
    preds = [range_pred(a, iv.lo, iv.hi, iv.lo_open, iv.hi_open)
             for a, iv in sorted(box.items())]
    return refine(state.base_query, *preds)


def _root_box(state: GetNextStateMD, schemas) -> Box:
    box: Box = {}
    for attr, _ in state.spec.terms:
        schema = schemas.get(attr)
        if schema is None or not schema.is_numeric:
            raise SchemaError(f"ranking needs numeric attribute {attr!r}")
        box[attr] = _axis_interval(state.base_query, schema)
    return box


def _seed_known(state: GetNextStateMD, executor: Executor, schemas) -> None:
    cache = executor.session_cache
    if cache is None:
        return
    for t in cache.seen.values():
        if t.id in state.known or not matches(state.base_query, t):
            continue
        vals = (t.values.get(a) for a in state.spec.attributes)
        if all(isinstance(v, (int, float)) for v in vals):
            _absorb(state, [t], schemas)


def _new_leaf(state: GetNextStateMD, box: Box, schemas) -> _Leaf:
    leaf = _Leaf(box, _corner_score(state.spec, box, schemas), state.next_leaf_id)
    state.next_leaf_id += 1
    return leaf


def _split_leaf(state: GetNextStateMD, leaf: _Leaf, schemas) -> list[_Leaf] | None:
    """Halve along the longest normalized edge that still separates; None
    when the box is a point in ranked space."""
    edges = []
    for attr, iv in leaf.box.items():
        dom = schemas[attr].width
        edges.append((iv.width / dom if dom > 0 else 0.0, attr))
    for _, attr in sorted(edges, key=lambda e: (-e[0], e[1])):
        iv = leaf.box[attr]
        mid = iv.lo + (iv.hi - iv.lo) / 2.0
        if not (iv.lo < mid < iv.hi):
            continue
        low = dict(leaf.box)
        low[attr] = Interval(iv.lo, mid, iv.lo_open, False)
        high = dict(leaf.box)
        high[attr] = Interval(mid, iv.hi, True, iv.hi_open)
        return [_new_leaf(state, low, schemas), _new_leaf(state, high, schemas)]
    return None


def _box_volume(box: Box, schemas) -> float:
    vol = 1.0
    for attr, iv in box.items():
        dom = schemas[attr].width
        vol *= iv.width / dom if dom > 0 else 0.0
    return vol


class _SlabAccess:
    """Dense-slab store access for one (base query, attribute set)."""

    def __init__(self, state: GetNextStateMD, executor: Executor,
                 store: DenseRegionStore | None) -> None:
        self.state = state
        self.executor = executor
        self.store = store
        self.attrs = tuple(sorted(state.spec.attributes))
        self._sig: str | None = None
        self._version: str | None = None

    def _signature(self) -> str:
        if self._sig is None:
            self._sig = filter_signature(self.state.base_query, self.attrs)
        return self._sig

    def _source_version(self) -> str:
        if self._version is None:
            self._version = self.executor.source_version()
        return self._version

    def _request(self, box: Box) -> DenseRegion:
        schemas = self.executor.descriptor.schemas
        clipped = {a: iv.intersect(_axis_interval(self.state.base_query, schemas[a]))
                   for a, iv in box.items()}
        return DenseRegion.box(clipped)

    def probe(self, box: Box) -> list[Tuple] | None:
        if self.store is None:
            return None
        request = self._request(box)
        try:
            entry = self.store.get(self.executor.descriptor.source_id,
                                   self._signature(), request, self._source_version())
        except OSError:
            return None
        return None if entry is None else entry.tuples_in(request)

    def crawl(self, box: Box, first_response: TopKResponse | None) -> list[Tuple]:
        q = _box_query(self.state, box)
        tuples = crawl_complete(q, self.executor, first_response=first_response)
        if self.store is not None:
            request = self._request(box)
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
        return tuples


# Worklist engine (binary and rerank) --------------------------------------------

def _ensure_leaves(state: GetNextStateMD, executor: Executor, schemas) -> None:
    if state.leaves is None:
        state.leaves = [_new_leaf(state, _root_box(state, schemas), schemas)]
        _seed_known(state, executor, schemas)


def _get_next_worklist(state: GetNextStateMD, executor: Executor,
                       store: DenseRegionStore | None,
                       config: EngineConfig) -> Tuple | None:
    schemas = executor.descriptor.schemas
    _ensure_leaves(state, executor, schemas)
    slabs = _SlabAccess(state, executor, store)
    while True:
        best = _best_unseen(state)
        assert state.leaves is not None
        if not state.leaves:
            if best is None:
                state.exhausted = True
                return None
            return _accept(state, best)
        if best is None:
            blockers = list(state.leaves)
        else:
            blockers = [lf for lf in state.leaves if lf.corner <= best[0]]
            if not blockers:
                return _accept(state, best)
        blockers.sort(key=lambda lf: (lf.corner, lf.created))

        survivors = list(blockers)
        if store is not None:
            survivors = []
            for leaf in blockers:
                if _box_volume(leaf.box, schemas) < config.dense_threshold_md:
                    cached = slabs.probe(leaf.box)
                    if cached is not None:
                        _absorb(state, cached, schemas)
                        state.leaves.remove(leaf)
                        continue
                survivors.append(leaf)
        if not survivors:
            continue

        queries = [_box_query(state, leaf.box) for leaf in survivors]
        if len(queries) == 1:
            responses = [executor.submit(queries[0])]
        else:
            responses = executor.submit_batch(queries)
        for leaf, resp in zip(survivors, responses):
            _absorb(state, resp.tuples, schemas)
            if not resp.overflowed:
                state.leaves.remove(leaf)
                continue
            children = None
            if _box_volume(leaf.box, schemas) >= config.dense_threshold_md:
                children = _split_leaf(state, leaf, schemas)
            if children is None:
                slab = slabs.crawl(leaf.box, resp)
                _absorb(state, slab, schemas)
                state.leaves.remove(leaf)
            else:
                idx = state.leaves.index(leaf)
                state.leaves[idx:idx + 1] = children


def get_next_md_binary(state: GetNextStateMD, executor: Executor,
                       config: EngineConfig = DEFAULT_CONFIG) -> Tuple | None:
    if state.exhausted:
        return None
    return _get_next_worklist(state, executor, None, config)


def get_next_md_rerank(state: GetNextStateMD, executor: Executor,
                       dense_store: DenseRegionStore | None,
                       config: EngineConfig = DEFAULT_CONFIG) -> Tuple | None:
    if state.exhausted:
        return None
    return _get_next_worklist(state, executor, dense_store, config)


# Re-covering engine (baseline) ---------------------------------------------------

def _resolve_temp_worklist(state: GetNextStateMD, executor: Executor,
                           slabs: _SlabAccess, config: EngineConfig,
                           work: list[_Leaf], prune_above: float | None) -> None:
    """Drive boxes to completion, halving on overflow. Boxes whose corner
    exceeds the (shrinking) candidate score are dropped unqueried."""
    schemas = executor.descriptor.schemas
    while work:
        if prune_above is not None:
            best = _best_unseen(state)
            if best is not None:
                prune_above = min(prune_above, best[0])
            work = [lf for lf in work if lf.corner <= prune_above]
            if not work:
                return
        batch, work = work, []
        queries = [_box_query(state, leaf.box) for leaf in batch]
        if len(queries) == 1:
            responses = [executor.submit(queries[0])]
        else:
            responses = executor.submit_batch(queries)
        for leaf, resp in zip(batch, responses):
            _absorb(state, resp.tuples, schemas)
            if not resp.overflowed:
                continue
            children = None
            if _box_volume(leaf.box, schemas) >= config.dense_threshold_md:
                children = _split_leaf(state, leaf, schemas)
            if children is None:
                slab = slabs.crawl(leaf.box, resp)
                _absorb(state, slab, schemas)
            else:
                work.extend(children)


def get_next_md_baseline(state: GetNextStateMD, executor: Executor,
                         config: EngineConfig = DEFAULT_CONFIG) -> Tuple | None:
    if state.exhausted:
        return None
    schemas = executor.descriptor.schemas
    if not state.known:
        _seed_known(state, executor, schemas)
    slabs = _SlabAccess(state, executor, None)
    best = _best_unseen(state)

    if state.full_certified:
        if best is None:
            state.exhausted = True
            return None
        return _accept(state, best)

    if best is None:
        resp = executor.submit(state.base_query)
        _absorb(state, resp.tuples, schemas)
        if not resp.overflowed:
            state.full_certified = True
            best = _best_unseen(state)
            if best is None:
                state.exhausted = True
                return None
            return _accept(state, best)
        best = _best_unseen(state)
        if best is None:
            # the page held nothing new; resolve the whole space
            work = [_new_leaf(state, _root_box(state, schemas), schemas)]
            _resolve_temp_worklist(state, executor, slabs, config, work, None)
            state.full_certified = True
            best = _best_unseen(state)
            if best is None:
                state.exhausted = True
                return None
            return _accept(state, best)

    # improvement rounds: re-cover the region at or below the candidate's
    # score, query the whole cover as a batch, and repeat while it improves
    root = _root_box(state, schemas)
    while True:
        contour = Contour(state.spec, best[0])
        cover = _cover_cells(contour, root, config.cover_granularity,
                             schemas, inclusive=True)
        work = [_new_leaf(state, box, schemas) for box in cover]
        _resolve_temp_worklist(state, executor, slabs, config, work, best[0])
        improved = _best_unseen(state)
        if improved is not None and improved < best:
            best = improved
            continue
        return _accept(state, best)


# Threshold-aggregation engine -----------------------------------------------------

def _ta_tau(state: GetNextStateMD, schemas) -> float:
    total = 0.0
    assert state.ta_latest is not None
    for i, (attr, w) in enumerate(state.spec.terms):
        total += w * normalize(schemas[attr], state.ta_latest[i])
    return total


def get_next_md_ta(state: GetNextStateMD, executor: Executor,
                   dense_store: DenseRegionStore | None,
                   config: EngineConfig = DEFAULT_CONFIG) -> Tuple | None:
    """One 1D cursor per ranking attribute, ascending when its weight is
    positive, descending otherwise. Sorted accesses go round-robin; the
    threshold is the score a tuple would have if it sat at every cursor's
    current position. A candidate is returned once no unseen tuple can beat
    its (score, id) key, which also resolves exact score ties."""
    if state.exhausted:
        return None
    schemas = executor.descriptor.schemas
    if state.ta_cursors is None:
        state.ta_cursors = []
        state.ta_latest = []
        state.ta_last_id = []
        for attr, w in state.spec.terms:
            direction = ASCENDING if w > 0 else DESCENDING
            state.ta_cursors.append(make_state_1d(state.base_query, attr, direction))
            state.ta_latest.append(float("nan"))
            state.ta_last_id.append("")
        _seed_known(state, executor, schemas)

    assert state.ta_latest is not None and state.ta_last_id is not None
    while True:
        best = _best_unseen(state)
        if state.ta_complete:
            if best is None:
                state.exhausted = True
                return None
            return _accept(state, best)
        primed = all(c.discovered for c in state.ta_cursors)
        if primed and best is not None:
            tau = _ta_tau(state, schemas)
            state.ta_trace.append(tau)
            if best[0] < tau or (best[0] == tau and best[1] <= max(state.ta_last_id)):
                return _accept(state, best)
        i = state.ta_next
        state.ta_next = (state.ta_next + 1) % len(state.ta_cursors)
        cursor = state.ta_cursors[i]
        if cursor.exhausted:
            continue
        pulled = get_next_1d_rerank(cursor, executor, dense_store, config)
        if pulled is None:
            # one cursor ran dry, so every match has been seen
            state.ta_complete = True
            state.ta_trace.append(float("inf"))
            continue
        _absorb(state, [pulled], schemas)
        state.ta_latest[i] = float(pulled.value(state.spec.terms[i][0]))
        state.ta_last_id[i] = pulled.id
