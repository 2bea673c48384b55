"""Core vocabulary for talking to top-k sources: attribute schemas, tuples,
conjunctive predicates, and linear ranking functions over normalized values.

Everything here is a plain value with no I/O. Scores are minimized and ties
are always broken by lexicographic tuple id, so orderings are total.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

NUMERIC_CONTINUOUS = "numeric-continuous"
NUMERIC_DISCRETE = "numeric-discrete"
CATEGORICAL = "categorical"

_KINDS = (NUMERIC_CONTINUOUS, NUMERIC_DISCRETE, CATEGORICAL)


class SchemaError(ValueError):
    """An attribute is unknown, or used in a way its kind does not allow."""


class DomainValueError(ValueError):
    """A raw value lies outside the declared domain of its attribute."""


@dataclass(frozen=True)
class AttributeSchema:
    """Declared shape of one source attribute.

    Numeric kinds carry [domain_min, domain_max] bounds used for min-max
    normalization. Discrete attributes additionally carry a resolution (the
    smallest distinguishable step). Categorical attributes carry the closed
    set of admissible categories instead of bounds.
    """

    name: str
    kind: str
    domain_min: float | None = None
    domain_max: float | None = None
    resolution: float | None = None
    categories: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise SchemaError(f"unknown attribute kind: {self.kind!r}")
        if not self.name or not all(c.isalnum() or c == "_" for c in self.name):
            raise SchemaError(f"bad attribute name: {self.name!r}")
        if self.is_numeric:
            if self.domain_min is None or self.domain_max is None:
                raise SchemaError(f"{self.name}: numeric attribute needs domain bounds")
            if self.domain_min > self.domain_max:
                raise SchemaError(f"{self.name}: domain_min exceeds domain_max")
            if self.kind == NUMERIC_DISCRETE and (self.resolution is None or self.resolution <= 0):
                raise SchemaError(f"{self.name}: discrete attribute needs a positive resolution")
        else:
            if not self.categories:
                raise SchemaError(f"{self.name}: categorical attribute needs categories")

    @property
    def is_numeric(self) -> bool:
        return self.kind in (NUMERIC_CONTINUOUS, NUMERIC_DISCRETE)

    @property
    def width(self) -> float:
        if not self.is_numeric:
            raise SchemaError(f"{self.name}: categorical attributes have no width")
        return self.domain_max - self.domain_min


@dataclass(frozen=True)
class Tuple:
    """One row of a source, identified by a unique id.

    Values map attribute names to floats (numeric kinds) or strings
    (categorical). Treat instances as immutable; they are shared freely
    between caches and engine states.
    """

    id: str
    values: dict[str, object]

    def value(self, attribute: str) -> object:
        try:
            return self.values[attribute]
        except KeyError:
            raise SchemaError(f"tuple {self.id} has no attribute {attribute!r}") from None


@dataclass(frozen=True)
class Interval:
    """A numeric interval with independently open or closed endpoints."""

    lo: float
    hi: float
    lo_open: bool = False
    hi_open: bool = False

    def __post_init__(self) -> None:
        if math.isnan(self.lo) or math.isnan(self.hi):
            raise ValueError("interval bounds must not be NaN")

    @property
    def is_empty(self) -> bool:
        if self.lo > self.hi:
            return True
        return self.lo == self.hi and (self.lo_open or self.hi_open)

    @property
    def width(self) -> float:
        return 0.0 if self.is_empty else self.hi - self.lo

    def contains(self, v: float) -> bool:
        if v < self.lo or v > self.hi:
            return False
        if v == self.lo and self.lo_open:
            return False
        if v == self.hi and self.hi_open:
            return False
        return True

    def contains_interval(self, other: Interval) -> bool:
        """True when every point of `other` lies inside self."""
        if other.is_empty:
            return True
        if other.lo < self.lo or (other.lo == self.lo and self.lo_open and not other.lo_open):
            return False
        if other.hi > self.hi or (other.hi == self.hi and self.hi_open and not other.hi_open):
            return False
        return True

    def intersect(self, other: Interval) -> Interval:
        if other.lo > self.lo or (other.lo == self.lo and other.lo_open):
            lo, lo_open = other.lo, other.lo_open
        else:
            lo, lo_open = self.lo, self.lo_open
        if other.hi < self.hi or (other.hi == self.hi and other.hi_open):
            hi, hi_open = other.hi, other.hi_open
        else:
            hi, hi_open = self.hi, self.hi_open
        return Interval(lo, hi, lo_open, hi_open)


@dataclass(frozen=True)
class Predicate:
    """One conjunct of a search query: a range or an equality on an attribute.

    Exactly one of `interval` and `value` is set. Equality carries a float
    for numeric attributes or a category string for categorical ones.
    """

    attribute: str
    interval: Interval | None = None
    value: object | None = None

    def __post_init__(self) -> None:
        if (self.interval is None) == (self.value is None):
            raise ValueError("predicate needs exactly one of interval or value")


def range_pred(attribute: str, lo: float, hi: float,
               lo_open: bool = False, hi_open: bool = False) -> Predicate:
    return Predicate(attribute, interval=Interval(lo, hi, lo_open, hi_open))


def equals_pred(attribute: str, value: object) -> Predicate:
    return Predicate(attribute, value=value)


@dataclass(frozen=True)
class SearchQuery:
    """A conjunction of predicates. `impossible` marks a query that was
    proven unsatisfiable during canonicalization and matches nothing."""

    predicates: tuple[Predicate, ...] = ()
    impossible: bool = False


def query(*predicates: Predicate) -> SearchQuery:
    return SearchQuery(tuple(predicates))


def _merge_onto_interval(acc: Interval | None, acc_eq: object, pred: Predicate):
    """Fold one predicate into the running (interval, equality) state for a
    single attribute. Returns (interval, equality, impossible)."""
    if pred.value is not None and not isinstance(pred.value, (int, float)):
        # Categorical equality: only identical values can coexist.
        if acc is not None:
            return None, None, True
        if acc_eq is not None and acc_eq != pred.value:
            return None, None, True
        return None, pred.value, False
    if pred.value is not None:
        pin = Interval(float(pred.value), float(pred.value))
    else:
        pin = pred.interval
    if acc_eq is not None and not isinstance(acc_eq, (int, float)):
        return None, None, True
    if acc_eq is not None:
        acc = Interval(float(acc_eq), float(acc_eq))
    merged = pin if acc is None else acc.intersect(pin)
    if merged.is_empty:
        return None, None, True
    if merged.lo == merged.hi:
        return None, merged.lo, False
    return merged, None, False


def canonicalize(q: SearchQuery) -> SearchQuery:
    """Normalize a query so that equal matching semantics yield equal values.

    Predicates are sorted by attribute and intersected per attribute;
    degenerate numeric ranges collapse to equalities; any empty intersection
    marks the whole query impossible.
    """
    if q.impossible:
        return SearchQuery((), impossible=True)
    by_attr: dict[str, tuple[Interval | None, object]] = {}
    for pred in q.predicates:
        acc, acc_eq = by_attr.get(pred.attribute, (None, None))
        acc, acc_eq, dead = _merge_onto_interval(acc, acc_eq, pred)
        if dead:
            return SearchQuery((), impossible=True)
        by_attr[pred.attribute] = (acc, acc_eq)
    preds = []
    for attr in sorted(by_attr):
        interval, eq = by_attr[attr]
        if eq is not None:
            preds.append(Predicate(attr, value=eq))
        elif interval is not None:
            preds.append(Predicate(attr, interval=interval))
    return SearchQuery(tuple(preds))


def refine(base: SearchQuery, *extra: Predicate) -> SearchQuery:
    """Conjoin extra predicates onto a query and canonicalize the result."""
    return canonicalize(SearchQuery(base.predicates + tuple(extra), base.impossible))


def matches(q: SearchQuery, t: Tuple) -> bool:
    if q.impossible:
        return False
    for pred in q.predicates:
        v = t.values.get(pred.attribute)
        if v is None:
            return False
        if pred.value is not None:
            if v != pred.value:
                return False
        else:
            if not isinstance(v, (int, float)) or not pred.interval.contains(float(v)):
                return False
    return True


def normalize(schema: AttributeSchema, raw: float) -> float:
    """Min-max normalize a raw numeric value into [0, 1].

    Degenerate domains (min == max) normalize to 0.0. Values outside the
    declared domain raise DomainValueError; categorical attributes raise
    SchemaError.
    """
    if not schema.is_numeric:
        raise SchemaError(f"{schema.name}: cannot normalize a categorical attribute")
    if raw < schema.domain_min or raw > schema.domain_max:
        raise DomainValueError(
            f"{schema.name}: value {raw!r} outside [{schema.domain_min}, {schema.domain_max}]")
    if schema.domain_min == schema.domain_max:
        return 0.0
    return (raw - schema.domain_min) / (schema.domain_max - schema.domain_min)


def denormalize(schema: AttributeSchema, unit: float) -> float:
    if schema.domain_min == schema.domain_max:
        return schema.domain_min
    return schema.domain_min + unit * (schema.domain_max - schema.domain_min)


@dataclass(frozen=True)
class RankingSpec:
    """A user ranking function: sum of weight * normalized(attribute).

    Weights live in [-1, 1]; zero-weight terms are dropped at construction
    and at least one term must survive. Lower scores rank earlier.
    """

    terms: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        kept = []
        seen = set()
        for attr, w in self.terms:
            if attr in seen:
                raise ValueError(f"duplicate ranking term for {attr!r}")
            seen.add(attr)
            if not -1.0 <= w <= 1.0:
                raise ValueError(f"weight for {attr!r} outside [-1, 1]: {w}")
            if w != 0.0:
                kept.append((attr, float(w)))
        if not kept:
            raise ValueError("ranking needs at least one non-zero weight")
        object.__setattr__(self, "terms", tuple(sorted(kept)))

    @classmethod
    def from_weights(cls, weights: dict[str, float]) -> RankingSpec:
        return cls(tuple(weights.items()))

    @property
    def attributes(self) -> tuple[str, ...]:
        return tuple(a for a, _ in self.terms)


def score(spec: RankingSpec, t: Tuple, schemas: dict[str, AttributeSchema]) -> float:
    total = 0.0
    for attr, w in spec.terms:
        schema = schemas.get(attr)
        if schema is None:
            raise SchemaError(f"ranking references unknown attribute {attr!r}")
        total += w * normalize(schema, float(t.value(attr)))
    return total


def rank_key(spec: RankingSpec, t: Tuple,
             schemas: dict[str, AttributeSchema]) -> tuple[float, str]:
    """Total-order sort key: (score, id). Lower is better."""
    return (score(spec, t, schemas), t.id)


# Serialization ---------------------------------------------------------------

def schema_to_dict(schema: AttributeSchema) -> dict:
    d: dict[str, object] = {"name": schema.name, "kind": schema.kind}
    if schema.is_numeric:
        d["min"] = schema.domain_min
        d["max"] = schema.domain_max
        if schema.resolution is not None:
            d["resolution"] = schema.resolution
    else:
        d["categories"] = list(schema.categories)
    return d


def schema_from_dict(d: dict) -> AttributeSchema:
    return AttributeSchema(
        name=d["name"],
        kind=d["kind"],
        domain_min=d.get("min"),
        domain_max=d.get("max"),
        resolution=d.get("resolution"),
        categories=tuple(d.get("categories", ())),
    )


def schemas_to_doc(schemas: dict[str, AttributeSchema]) -> dict:
    return {"attributes": [schema_to_dict(s) for s in schemas.values()]}


def schemas_from_doc(doc: dict) -> dict[str, AttributeSchema]:
    out: dict[str, AttributeSchema] = {}
    for entry in doc["attributes"]:
        s = schema_from_dict(entry)
        out[s.name] = s
    return out


def interval_to_dict(iv: Interval) -> dict:
    return {"lo": iv.lo, "hi": iv.hi, "lo_open": iv.lo_open, "hi_open": iv.hi_open}


def interval_from_dict(d: dict) -> Interval:
    return Interval(d["lo"], d["hi"], bool(d.get("lo_open")), bool(d.get("hi_open")))


def predicate_to_dict(p: Predicate) -> dict:
    if p.value is not None:
        return {"attribute": p.attribute, "equals": p.value}
    return {"attribute": p.attribute, "range": interval_to_dict(p.interval)}


def predicate_from_dict(d: dict) -> Predicate:
    if "equals" in d:
        return Predicate(d["attribute"], value=d["equals"])
    return Predicate(d["attribute"], interval=interval_from_dict(d["range"]))


def query_to_dict(q: SearchQuery) -> dict:
    d: dict[str, object] = {"predicates": [predicate_to_dict(p) for p in q.predicates]}
    if q.impossible:
        d["impossible"] = True
    return d


def query_from_dict(d: dict) -> SearchQuery:
    return SearchQuery(
        tuple(predicate_from_dict(p) for p in d.get("predicates", ())),
        impossible=bool(d.get("impossible")),
    )


def _canonical_json(obj: object) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def query_digest(q: SearchQuery) -> str:
    """Stable hex digest of a query's canonical form, usable as a cache key."""
    return hashlib.sha256(
        _canonical_json(query_to_dict(canonicalize(q))).encode()).hexdigest()


def filter_signature(base: SearchQuery, ranking_attributes: tuple[str, ...]) -> str:
    """Digest of the base filter with ranking-attribute constraints dropped.

    Dense slabs are keyed by this signature so one crawl serves every ranking
    function over the same residual filter.
    """
    skip = set(ranking_attributes)
    residual = SearchQuery(
        tuple(p for p in canonicalize(base).predicates if p.attribute not in skip),
        impossible=base.impossible,
    )
    return query_digest(residual)
