from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import build_source, fresh_executor, mixed_source
from oracles import equal_value_ids, ranked_ids_1d
from rankgate.caches import DenseRegionStore
from rankgate.engine1d import (
    ASCENDING,
    DESCENDING,
    IndistinguishableTuplesError,
    NoMatchesError,
    crawl_complete,
    crawl_equal_value,
    crawl_region,
    discover_extremes,
    get_next_1d_baseline,
    get_next_1d_binary,
    get_next_1d_rerank,
    make_state_1d,
)
from rankgate.model import Interval, equals_pred, query, range_pred

ALGORITHMS = ["baseline", "binary", "rerank"]


def stepper(name: str, store: DenseRegionStore | None = None):
    if name == "baseline":
        return get_next_1d_baseline
    if name == "binary":
        return get_next_1d_binary
    return lambda state, ex: get_next_1d_rerank(state, ex, store)


def walk(sim, base, attribute, direction, algorithm, depth=None,
         store=None):
    ex, cache = fresh_executor(sim)
    state = make_state_1d(base, attribute, direction)
    step = stepper(algorithm, store)
    out = []
    limit = depth if depth is not None else len(sim.all_tuples()) + 5
    for _ in range(limit):
        t = step(state, ex)
        if t is None:
            break
    # after exhaustion, get-next stays exhausted and free
        out.append(t.id)
    return out, cache.meter, state


def test_discover_extremes_frozen(tiny_sim):
    ex, _ = fresh_executor(tiny_sim)
    assert discover_extremes(query(), "x", ex) == (3.0, 9.0)


def test_discover_extremes_raises_on_empty_filter(tiny_sim):
    ex, _ = fresh_executor(tiny_sim)
    with pytest.raises(NoMatchesError):
        discover_extremes(query(range_pred("x", 4.0, 5.0)), "x", ex)


def test_underflow_needs_one_query():
    sim = build_source({"x": [2.0, 8.0]}, k=5)
    ex, cache = fresh_executor(sim)
    state = make_state_1d(query(), "x", ASCENDING)
    assert get_next_1d_baseline(state, ex).id == "t000"
    assert cache.meter.total_queries == 1
    # the single complete response certified the whole axis
    assert get_next_1d_binary(state, ex).id == "t001"
    assert get_next_1d_binary(state, ex) is None
    assert state.exhausted
    assert cache.meter.total_queries == 1


@pytest.mark.parametrize("algorithm", ALGORITHMS)
@pytest.mark.parametrize("direction", [ASCENDING, DESCENDING])
def test_full_walk_matches_reference(algorithm, direction):
    sim = mixed_source(n=260, k=5)
    got, meter, state = walk(sim, query(), "x", direction, algorithm)
    want = ranked_ids_1d(sim.all_tuples(), "x", direction == DESCENDING)
    assert got == want
    assert state.exhausted
    assert meter.total_queries == meter.sequential_queries + meter.parallel_batch_queries


@pytest.mark.parametrize("algorithm", ALGORITHMS)
def test_filtered_walk_matches_reference(algorithm):
    sim = mixed_source(n=260, k=5)
    base = query(equals_pred("color", "red"), range_pred("x", 1.5, 8.5))
    got, _, _ = walk(sim, base, "x", ASCENDING, algorithm)
    want = ranked_ids_1d(sim.all_tuples(), "x", False,
                         [("equals", "color", "red"),
                          ("range", "x", 1.5, 8.5, False, False)])
    assert got == want


def test_walks_are_deterministic():
    sim = mixed_source(n=180, k=5)
    a, _, _ = walk(sim, query(), "x", ASCENDING, "binary", depth=40)
    b, _, _ = walk(sim, query(), "x", ASCENDING, "binary", depth=40)
    assert a == b


def test_cluster_ties_resolve_in_id_order():
    sim = mixed_source(n=120, k=5, cluster=30, cluster_value=2.0)
    got, _, _ = walk(sim, query(), "x", ASCENDING, "binary", depth=60)
    cluster_ids = sorted(t.id for t in sim.all_tuples() if t.value("x") == 2.0)
    start = got.index(cluster_ids[0])
    assert got[start:start + 30] == cluster_ids


def test_binary_beats_baseline_on_anticorrelated_data():
    # system order descends exactly where the user wants ascending
    xs = [float(i) for i in range(150)]
    sim = build_source({"x": xs}, k=5, domain=(0.0, 150.0),
                       system_weights={"x": -1.0})
    _, base_meter, _ = walk(sim, query(), "x", ASCENDING, "baseline", depth=15)
    _, bin_meter, _ = walk(sim, query(), "x", ASCENDING, "binary", depth=15)
    assert bin_meter.total_queries < base_meter.total_queries


@pytest.mark.parametrize("size_name,size", [
    ("empty", 0), ("k_minus_1", 4), ("k", 5), ("3k_plus_5", 20)])
def test_crawl_equal_value_boundary_sizes(size_name, size):
    values = [7.5] * size + [round(0.05 * i, 2) for i in range(90)]
    aux = [round(0.09 * i, 2) for i in range(len(values))]
    sim = build_source({"x": values, "y": aux}, k=5)
    ex, _ = fresh_executor(sim)
    got = {t.id for t in crawl_equal_value(query(), "x", 7.5, ex)}
    assert got == equal_value_ids(sim.all_tuples(), "x", 7.5)
    assert len(got) == size


def test_crawl_complete_visits_enough_partitions():
    xs = [round(i * 0.025, 3) for i in range(400)]
    sim = build_source({"x": xs}, k=10)
    ex, cache = fresh_executor(sim)
    got = crawl_complete(query(), ex)
    assert [t.id for t in got] == sorted(t.id for t in sim.all_tuples())
    # 400 distinct tuples through a k=10 window: at least ceil(400/10) queries
    assert cache.meter.total_queries >= 40


def test_crawl_region_respects_bounds_and_order():
    sim = mixed_source(n=150, k=5)
    ex, _ = fresh_executor(sim)
    got = crawl_region(query(), "x", Interval(2.0, 6.0, lo_open=True), ex)
    want = [t for t in sim.all_tuples()
            if 2.0 < float(t.value("x")) <= 6.0]
    want.sort(key=lambda t: (float(t.value("x")), t.id))
    assert [t.id for t in got] == [t.id for t in want]


def test_indistinguishable_tuples_refuse_to_crawl():
    sim = build_source({"x": [3.0] * 6}, k=3)
    ex, _ = fresh_executor(sim)
    with pytest.raises(IndistinguishableTuplesError):
        crawl_complete(query(), ex)


def test_dense_store_cuts_second_session_cost(tmp_path):
    sim = mixed_source(n=240, k=5, cluster=50, cluster_value=1.25)
    store = DenseRegionStore(tmp_path)
    first, cold_meter, _ = walk(sim, query(), "x", ASCENDING, "rerank",
                                depth=60, store=store)
    second, warm_meter, _ = walk(sim, query(), "x", ASCENDING, "rerank",
                                 depth=60, store=store)
    assert first == second
    assert warm_meter.total_queries < cold_meter.total_queries


def test_rerank_in_slab_answers_without_queries(tmp_path):
    sim = mixed_source(n=240, k=5, cluster=50, cluster_value=1.25)
    store = DenseRegionStore(tmp_path)
    walk(sim, query(), "x", ASCENDING, "rerank", depth=60, store=store)
    assert list(store.iter_keys())

    # a base query pinned inside the cached slab never touches the backend
    base = query(range_pred("x", 1.25, 1.25))
    got, meter, _ = walk(sim, base, "x", ASCENDING, "rerank", store=store)
    assert got == ranked_ids_1d(sim.all_tuples(), "x", False,
                                [("range", "x", 1.25, 1.25, False, False)])
    assert meter.total_queries == 0


@settings(max_examples=60, deadline=None)
@given(
    xs=st.lists(st.integers(0, 30), min_size=1, max_size=40),
    k=st.integers(1, 6),
    descending=st.booleans(),
)
def test_property_walk_equals_reference(xs, k, descending):
    # the aux column keeps equal-x clusters reachable through the interface
    aux = [float(i) for i in range(len(xs))]
    sim = build_source({"x": [float(v) for v in xs], "y": aux},
                       k=k, domain=(0.0, 40.0))
    direction = DESCENDING if descending else ASCENDING
    got, _, _ = walk(sim, query(), "x", direction, "binary")
    assert got == ranked_ids_1d(sim.all_tuples(), "x", descending)
