"""Two caching layers with very different lifetimes.

The session cache is a per-session, memory-only record of every tuple any
backend response has returned, so later steps of the same session can reuse
them as free candidates. The dense region store is shared and persistent: it
holds fully crawled slabs of regions that kept overflowing, keyed by source,
residual filter signature, and region, and is validated against the source's
snapshot version at boot.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .model import Interval, Tuple, interval_from_dict, interval_to_dict
from .source import QueryMeter, TransientSourceError


class SessionCache:
    """Everything one session has learned: seen tuples keyed by id, the
    pages already served, and the session's query meter."""

    def __init__(self, session_id: str, idle_expiry_s: float = 1800.0) -> None:
        self.session_id = session_id
        self.idle_expiry_s = idle_expiry_s
        self.seen: dict[str, Tuple] = {}
        self.pages_served: list[object] = []
        self.meter = QueryMeter()
        self.created_at = time.time()
        self.last_access = self.created_at
        self._lock = threading.Lock()

    def mark_seen(self, tuples) -> None:
        with self._lock:
            for t in tuples:
                self.seen[t.id] = t

    def touch(self) -> None:
        self.last_access = time.time()

    def expired(self, now: float | None = None) -> bool:
        now = time.time() if now is None else now
        return now - self.last_access > self.idle_expiry_s


@dataclass(frozen=True)
class DenseRegion:
    """The footprint of a crawled slab: one interval per constrained
    attribute. A single pair is a 1D interval; several form a box."""

    intervals: tuple[tuple[str, Interval], ...]

    def __post_init__(self) -> None:
        names = [a for a, _ in self.intervals]
        if sorted(names) != names or len(set(names)) != len(names):
            object.__setattr__(
                self, "intervals", tuple(sorted(self.intervals, key=lambda p: p[0])))

    @classmethod
    def axis(cls, attribute: str, interval: Interval) -> DenseRegion:
        return cls(((attribute, interval),))

    @classmethod
    def box(cls, intervals: dict[str, Interval]) -> DenseRegion:
        return cls(tuple(sorted(intervals.items())))

    @property
    def attributes(self) -> tuple[str, ...]:
        return tuple(a for a, _ in self.intervals)

    def interval_for(self, attribute: str) -> Interval | None:
        for a, iv in self.intervals:
            if a == attribute:
                return iv
        return None

    def contains(self, other: DenseRegion) -> bool:
        """True when a slab crawled over self can answer requests for
        `other`: every attribute self constrains, other constrains at least
        as tightly. Extra constraints on other's side are plain filters."""
        for attr, iv in self.intervals:
            o = other.interval_for(attr)
            if o is None or not iv.contains_interval(o):
                return False
        return True

    def clips(self, t: Tuple) -> bool:
        for attr, iv in self.intervals:
            v = t.values.get(attr)
            if not isinstance(v, (int, float)) or not iv.contains(float(v)):
                return False
        return True

    def to_dict(self) -> dict:
        return {"intervals": {a: interval_to_dict(iv) for a, iv in self.intervals}}

    @classmethod
    def from_dict(cls, d: dict) -> DenseRegion:
        return cls(tuple((a, interval_from_dict(iv)) for a, iv in sorted(d["intervals"].items())))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def region_volume(region: DenseRegion, schemas) -> float:
    """Product of normalized interval widths; degenerate axes give 0."""
    vol = 1.0
    for attr, iv in region.intervals:
        schema = schemas[attr]
        vol *= 0.0 if schema.width == 0 else iv.width / schema.width
    return vol


@dataclass(frozen=True)
class DenseEntry:
    """One stored slab: every tuple of the source matching the residual
    filter inside the region, frozen at a specific snapshot version."""

    source_id: str
    filter_signature: str
    region: DenseRegion
    source_version: str
    created_at: float
    volume: float
    tuples: tuple[Tuple, ...]

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.source_id, self.filter_signature, self.region.digest())

    def tuples_in(self, request: DenseRegion) -> list[Tuple]:
        """Slab rows clipped to a requested sub-region, sorted by id."""
        return [t for t in self.tuples if request.clips(t)]


@dataclass
class ValidationReport:
    source_id: str
    kept: list[tuple[str, str, str]] = field(default_factory=list)
    evicted: list[tuple[str, str, str]] = field(default_factory=list)
    deferred: bool = False


def _encode_entry(entry: DenseEntry) -> bytes:
    columns: list[dict] = []
    if entry.tuples:
        first = entry.tuples[0]
        for name in sorted(first.values):
            columns.append({"name": name,
                            "numeric": isinstance(first.values[name], (int, float))})
    header = {
        "source_id": entry.source_id,
        "filter_signature": entry.filter_signature,
        "region": entry.region.to_dict(),
        "source_version": entry.source_version,
        "created_at": entry.created_at,
        "volume": entry.volume,
        "count": len(entry.tuples),
        "columns": columns,
    }
    buf = io.StringIO()
    buf.write(json.dumps(header, sort_keys=True, separators=(",", ":")))
    buf.write("\n")
    w = csv.writer(buf, lineterminator="\n")
    names = [c["name"] for c in columns]
    w.writerow(["id"] + names)
    for t in sorted(entry.tuples, key=lambda t: t.id):
        row = [t.id]
        for c in columns:
            v = t.values[c["name"]]
            row.append(repr(float(v)) if c["numeric"] else str(v))
        w.writerow(row)
    return buf.getvalue().encode("utf-8")


def _decode_entry(blob: bytes) -> DenseEntry:
    text = blob.decode("utf-8")
    nl = text.index("\n")
    header = json.loads(text[:nl])
    rows = list(csv.reader(io.StringIO(text[nl + 1:])))
    columns = header["columns"]
    tuples = []
    for row in rows[1:]:
        values: dict[str, object] = {}
        for c, raw in zip(columns, row[1:]):
            values[c["name"]] = float(raw) if c["numeric"] else raw
        tuples.append(Tuple(row[0], values))
    return DenseEntry(
        source_id=header["source_id"],
        filter_signature=header["filter_signature"],
        region=DenseRegion.from_dict(header["region"]),
        source_version=header["source_version"],
        created_at=header["created_at"],
        volume=header["volume"],
        tuples=tuple(tuples),
    )


class DenseRegionStore:
    """File-per-entry persistent store under one root directory.

    Layout: root/<source_id>/<filter_signature>/<region_digest>.entry with a
    JSON header line followed by CSV rows. Writes go to a temp file and are
    renamed into place, so readers never observe a partial slab.
    """

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._write_lock = threading.Lock()
        self._suspect: set[tuple[str, str, str]] = set()

    def _entry_path(self, key: tuple[str, str, str]) -> Path:
        source_id, signature, digest = key
        return self.root / source_id / signature / f"{digest}.entry"

    def put(self, entry: DenseEntry) -> None:
        path = self._entry_path(entry.key)
        blob = _encode_entry(entry)
        with self._write_lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(blob)
            os.replace(tmp, path)
            self._suspect.discard(entry.key)

    def _read(self, path: Path) -> DenseEntry | None:
        try:
            return _decode_entry(path.read_bytes())
        except (OSError, ValueError, KeyError):
            return None

    def iter_keys(self, source_id: str | None = None):
        pattern = f"{source_id or '*'}/*/*.entry"
        for path in sorted(self.root.glob(pattern)):
            yield (path.parent.parent.name, path.parent.name, path.stem)

    def get(self, source_id: str, filter_signature: str, request: DenseRegion,
            source_version: str, include_stale: bool = False) -> DenseEntry | None:
        """Best stored slab able to answer the request: the smallest
        containing region at the right version, newest on ties."""
        sig_dir = self.root / source_id / filter_signature
        if not sig_dir.is_dir():
            return None
        best: DenseEntry | None = None
        for path in sorted(sig_dir.glob("*.entry")):
            key = (source_id, filter_signature, path.stem)
            if key in self._suspect and not include_stale:
                continue
            entry = self._read(path)
            if entry is None or entry.source_version != source_version:
                continue
            if not entry.region.contains(request):
                continue
            if best is None or (entry.volume, -entry.created_at) < (best.volume, -best.created_at):
                best = entry
        return best

    def evict(self, key: tuple[str, str, str]) -> None:
        with self._write_lock:
            try:
                os.remove(self._entry_path(key))
            except FileNotFoundError:
                pass
            self._suspect.discard(key)

    def validate(self, source) -> ValidationReport:
        """Compare every entry for a source against its current snapshot
        version; evict mismatches. If the source cannot be reached the
        entries are kept but flagged suspect and served only on request."""
        source_id = source.source_id
        report = ValidationReport(source_id=source_id)
        keys = list(self.iter_keys(source_id))
        try:
            current = source.snapshot_version()
        except TransientSourceError:
            report.deferred = True
            for key in keys:
                self._suspect.add(key)
                report.kept.append(key)
            return report
        for key in keys:
            entry = self._read(self._entry_path(key))
            if entry is None or entry.source_version != current:
                self.evict(key)
                report.evicted.append(key)
            else:
                self._suspect.discard(key)
                report.kept.append(key)
        return report
