from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import matches_filter, user_score
from rankgate.model import (
    CATEGORICAL,
    NUMERIC_CONTINUOUS,
    AttributeSchema,
    DomainValueError,
    Interval,
    RankingSpec,
    SchemaError,
    Tuple,
    canonicalize,
    equals_pred,
    filter_signature,
    matches,
    normalize,
    query,
    query_digest,
    range_pred,
    rank_key,
    refine,
    score,
)


def test_normalize_frozen_value():
    schema = AttributeSchema("a", NUMERIC_CONTINUOUS, 2.0, 6.0)
    assert normalize(schema, 5.0) == 0.75
    assert normalize(schema, 2.0) == 0.0
    assert normalize(schema, 6.0) == 1.0


def test_normalize_rejects_out_of_domain():
    schema = AttributeSchema("a", NUMERIC_CONTINUOUS, 2.0, 6.0)
    with pytest.raises(DomainValueError):
        normalize(schema, 1.999)
    with pytest.raises(SchemaError):
        normalize(AttributeSchema("c", CATEGORICAL, categories=("x",)), 0.0)


def test_degenerate_domain_normalizes_to_zero():
    schema = AttributeSchema("a", NUMERIC_CONTINUOUS, 4.0, 4.0)
    assert normalize(schema, 4.0) == 0.0


def test_score_frozen_value():
    # price - 0.1 carat - 0.5 depth at the normalized midpoint of every axis
    schemas = {a: AttributeSchema(a, NUMERIC_CONTINUOUS, 0.0, 1.0)
               for a in ("price", "carat", "depth")}
    spec = RankingSpec.from_weights({"price": 1.0, "carat": -0.1, "depth": -0.5})
    t = Tuple("t0", {"price": 0.5, "carat": 0.5, "depth": 0.5})
    assert score(spec, t, schemas) == pytest.approx(0.2, abs=1e-12)
    assert score(spec, t, schemas) == user_score(
        {"price": 1.0, "carat": -0.1, "depth": -0.5}, t, schemas)


def test_ranking_spec_validation():
    with pytest.raises(ValueError):
        RankingSpec.from_weights({"a": 1.5})
    with pytest.raises(ValueError):
        RankingSpec.from_weights({"a": 0.0})
    with pytest.raises(ValueError):
        RankingSpec((("a", 0.5), ("a", 0.25)))
    spec = RankingSpec.from_weights({"b": 0.5, "a": -1.0, "c": 0.0})
    assert spec.terms == (("a", -1.0), ("b", 0.5))
    assert spec.attributes == ("a", "b")


def test_rank_key_breaks_ties_by_id():
    schemas = {"a": AttributeSchema("a", NUMERIC_CONTINUOUS, 0.0, 1.0)}
    spec = RankingSpec.from_weights({"a": 1.0})
    t1 = Tuple("t1", {"a": 0.5})
    t2 = Tuple("t2", {"a": 0.5})
    assert rank_key(spec, t1, schemas) < rank_key(spec, t2, schemas)


def test_canonicalize_merges_ranges():
    q = query(range_pred("a", 0.0, 8.0), range_pred("a", 3.0, 12.0, hi_open=True))
    c = canonicalize(q)
    assert len(c.predicates) == 1
    iv = c.predicates[0].interval
    assert (iv.lo, iv.hi, iv.lo_open, iv.hi_open) == (3.0, 8.0, False, False)


def test_canonicalize_collapses_degenerate_range_to_equality():
    c = canonicalize(query(range_pred("a", 5.0, 9.0), range_pred("a", 1.0, 5.0)))
    assert c.predicates[0].value == 5.0
    assert c.predicates[0].interval is None


def test_canonicalize_detects_impossible():
    assert canonicalize(query(range_pred("a", 6.0, 2.0))).impossible
    assert canonicalize(query(equals_pred("c", "red"), equals_pred("c", "blue"))).impossible
    assert canonicalize(query(range_pred("a", 0.0, 1.0),
                              range_pred("a", 2.0, 3.0))).impossible
    # open endpoints meeting at a point leave nothing
    assert canonicalize(query(range_pred("a", 0.0, 5.0, hi_open=True),
                              range_pred("a", 5.0, 9.0))).impossible


def test_refine_conjoins():
    base = query(range_pred("a", 0.0, 10.0))
    r = refine(base, range_pred("a", 4.0, 20.0))
    assert r.predicates[0].interval.lo == 4.0
    assert r.predicates[0].interval.hi == 10.0


def test_digest_ignores_predicate_order():
    q1 = query(range_pred("a", 0.0, 5.0), equals_pred("c", "red"))
    q2 = query(equals_pred("c", "red"), range_pred("a", 0.0, 5.0))
    assert query_digest(q1) == query_digest(q2)
    assert query_digest(q1) != query_digest(query(range_pred("a", 0.0, 6.0)))


def test_filter_signature_drops_ranking_attributes():
    base = query(equals_pred("c", "red"), range_pred("a", 0.0, 5.0))
    wider = query(equals_pred("c", "red"), range_pred("a", 2.0, 3.0))
    assert filter_signature(base, ("a",)) == filter_signature(wider, ("a",))
    assert filter_signature(base, ("a",)) != filter_signature(base, ())


# Data-level predicate specs: ("range", attr, lo, hi, lo_open, hi_open) or
# ("equals", attr, value). Both the query under test and the independent
# matcher are built from these, so neither side trusts the other's parsing.
_VALS = [-1.0, 0.0, 1.0, 2.5, 5.0, 7.0, 10.0]


def _pred_spec():
    ranges = st.tuples(st.just("range"), st.sampled_from("ab"),
                       st.sampled_from(_VALS), st.sampled_from(_VALS),
                       st.booleans(), st.booleans())
    equals = st.tuples(st.just("equals"), st.sampled_from("ab"),
                       st.sampled_from(_VALS))
    return st.one_of(ranges, equals)


def _to_predicate(spec):
    if spec[0] == "range":
        return range_pred(spec[1], spec[2], spec[3], spec[4], spec[5])
    return equals_pred(spec[1], spec[2])


def _to_filter(spec):
    if spec[0] == "range":
        return ("range", spec[1], spec[2], spec[3], spec[4], spec[5])
    return ("equals", spec[1], spec[2])


@settings(max_examples=150, deadline=None)
@given(specs=st.lists(_pred_spec(), max_size=5),
       values=st.tuples(st.sampled_from(_VALS), st.sampled_from(_VALS)))
def test_canonicalize_preserves_match_semantics(specs, values):
    t = Tuple("t0", {"a": values[0], "b": values[1]})
    q = query(*[_to_predicate(s) for s in specs])
    expected = matches_filter(t, [_to_filter(s) for s in specs])
    assert matches(q, t) == expected
    assert matches(canonicalize(q), t) == expected


@settings(max_examples=100, deadline=None)
@given(specs=st.lists(_pred_spec(), max_size=5))
def test_canonicalize_idempotent(specs):
    q = query(*[_to_predicate(s) for s in specs])
    once = canonicalize(q)
    assert canonicalize(once) == once


@settings(max_examples=60, deadline=None)
@given(data=st.lists(st.tuples(st.integers(0, 1024), st.integers(0, 1024)),
                     min_size=2, max_size=30),
       shift=st.integers(-512, 512),
       exponent=st.integers(-3, 3),
       weights=st.tuples(st.sampled_from([-1.0, -0.5, 0.25, 1.0]),
                         st.sampled_from([-1.0, -0.5, 0.25, 1.0])))
def test_ranking_invariant_under_exact_affine_transforms(data, shift, exponent,
                                                         weights):
    """Rescaling an attribute by a power of two and an integer shift keeps
    every normalized value bit-identical, so the induced order must too.
    General affine maps do not have this property in floats, which is why the
    transform family here is deliberately narrow."""
    scale = 2.0 ** exponent
    spec = RankingSpec.from_weights({"a": weights[0], "b": weights[1]})
    plain_schemas = {a: AttributeSchema(a, NUMERIC_CONTINUOUS, 0.0, 1024.0)
                     for a in ("a", "b")}
    moved_schemas = {
        "a": AttributeSchema("a", NUMERIC_CONTINUOUS, shift, 1024.0 * scale + shift),
        "b": plain_schemas["b"],
    }
    plain, moved = [], []
    for i, (va, vb) in enumerate(data):
        plain.append(Tuple(f"t{i:03d}", {"a": float(va), "b": float(vb)}))
        moved.append(Tuple(f"t{i:03d}", {"a": va * scale + shift, "b": float(vb)}))
    order_plain = sorted(plain, key=lambda t: rank_key(spec, t, plain_schemas))
    order_moved = sorted(moved, key=lambda t: rank_key(spec, t, moved_schemas))
    assert [t.id for t in order_plain] == [t.id for t in order_moved]


def test_interval_empty_and_containment():
    assert Interval(2.0, 1.0).is_empty
    assert Interval(2.0, 2.0, lo_open=True).is_empty
    assert not Interval(2.0, 2.0).is_empty
    outer = Interval(0.0, 10.0, lo_open=True)
    assert outer.contains_interval(Interval(1.0, 9.0))
    assert not outer.contains_interval(Interval(0.0, 9.0))  # closed lo vs open
    assert outer.contains_interval(Interval(0.0, 9.0, lo_open=True))
