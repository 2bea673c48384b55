"""HTTP gateway: sessions, query submission, get-next paging, stats, admin.

Every request body is validated against the source schema before any
backend query is issued, so malformed input never costs quota. One engine
operation runs per session at a time; a second concurrent call gets a busy
error rather than a queue. Re-posting the identical query to a session
replays the already-served first page instead of re-running the engine.
"""

from __future__ import annotations

import json
import logging
import secrets
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .caches import DenseRegionStore, SessionCache, ValidationReport
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
    Predicate,
    RankingSpec,
    SearchQuery,
    Tuple,
    interval_from_dict,
    query_digest,
    schema_to_dict,
    score,
)
from .source import TopKSimulator, TransientSourceError, simulator_from_files

log = logging.getLogger("rankgate.service")

MAX_PAGE_SIZE = 100
ALGORITHMS_1D = ("baseline", "binary", "rerank")
ALGORITHMS_MD = ("baseline", "binary", "rerank", "ta")


@dataclass
class SourceEntry:
    simulator: TopKSimulator
    popular_functions: list[dict] = field(default_factory=list)
    detail_url_template: str | None = None


@dataclass
class ServiceConfig:
    sources: dict[str, SourceEntry]
    dense_store_root: str
    admin_token: str
    session_expiry_s: float = 1800.0
    rate_limit: RateLimit = field(default_factory=RateLimit)
    engine: EngineConfig = field(default_factory=EngineConfig)
    host: str = "127.0.0.1"
    port: int = 8180

    @classmethod
    def load(cls, path: str | Path) -> ServiceConfig:
        path = Path(path)
        doc = json.loads(path.read_text(encoding="utf-8"))
        base = path.parent
        sources: dict[str, SourceEntry] = {}
        for s in doc.get("sources", []):
            sim = simulator_from_files(
                s["id"], s.get("name", s["id"]),
                base / s["config"], base / s["schema"])
            sources[s["id"]] = SourceEntry(
                simulator=sim,
                popular_functions=s.get("popular_functions", []),
                detail_url_template=s.get("detail_url_template"),
            )
        limits = doc.get("rate_limit", {})
        engine = doc.get("engine", {})
        listen = doc.get("listen", {})
        return cls(
            sources=sources,
            dense_store_root=str(base / doc.get("dense_store", "dense-store")),
            admin_token=doc.get("admin_token", ""),
            session_expiry_s=float(doc.get("session_expiry_s", 1800.0)),
            rate_limit=RateLimit(
                max_in_flight=int(limits.get("max_in_flight", 8)),
                min_gap_ms=float(limits.get("min_gap_ms", 0.0))),
            engine=EngineConfig(
                dense_threshold_1d=float(engine.get("dense_threshold_1d", 1e-3)),
                dense_threshold_md=float(engine.get("dense_threshold_md", 1e-4)),
                cover_granularity=int(engine.get("cover_granularity", 4))),
            host=listen.get("host", "127.0.0.1"),
            port=int(listen.get("port", 8180)),
        )


class RequestError(Exception):
    def __init__(self, status: int, code: str, message: str,
                 fieldname: str | None = None) -> None:
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.field = fieldname

    def response(self) -> JSONResponse:
        body = {"code": self.code, "message": self.message}
        if self.field is not None:
            body["field"] = self.field
        return JSONResponse(body, status_code=self.status)


@dataclass
class ActiveQuery:
    digest: str
    page_size: int
    step: object  # () -> Tuple | None
    score_of: object  # Tuple -> float
    pages: list[dict] = field(default_factory=list)
    exhausted: bool = False
    last_totals: dict = field(default_factory=dict)


class Session:
    def __init__(self, session_id: str, source_id: str, executor: Executor,
                 cache: SessionCache) -> None:
        self.id = session_id
        self.source_id = source_id
        self.executor = executor
        self.cache = cache
        self.active: ActiveQuery | None = None
        self.busy = threading.Lock()


def _parse_predicates(raw, sim: TopKSimulator) -> list[Predicate]:
    if not isinstance(raw, list):
        raise RequestError(422, "validation_error", "predicates must be a list",
                           "predicates")
    preds = []
    for i, p in enumerate(raw):
        where = f"predicates[{i}]"
        if not isinstance(p, dict):
            raise RequestError(422, "validation_error", "predicate must be an object",
                               where)
        attr = p.get("attribute")
        schema = sim.schemas.get(attr) if isinstance(attr, str) else None
        if schema is None:
            raise RequestError(422, "validation_error",
                               f"unknown attribute {attr!r}", f"{where}.attribute")
        has_eq = "equals" in p
        has_rng = "range" in p
        if has_eq == has_rng:
            raise RequestError(422, "validation_error",
                               "predicate needs exactly one of equals/range", where)
        if has_eq:
            v = p["equals"]
            if schema.is_numeric and not isinstance(v, (int, float)):
                raise RequestError(422, "validation_error",
                                   "equals on a numeric attribute needs a number",
                                   f"{where}.equals")
            if not schema.is_numeric and v not in schema.categories:
                raise RequestError(422, "validation_error",
                                   f"{v!r} is not a known category",
                                   f"{where}.equals")
            preds.append(Predicate(attr, value=float(v) if schema.is_numeric else v))
        else:
            if not schema.is_numeric:
                raise RequestError(422, "validation_error",
                                   "range predicates need a numeric attribute",
                                   f"{where}.range")
            try:
                iv = interval_from_dict(p["range"])
            except (TypeError, KeyError, ValueError):
                raise RequestError(422, "validation_error",
                                   "range needs numeric lo and hi",
                                   f"{where}.range") from None
            preds.append(Predicate(attr, interval=iv))
    return preds


def _parse_ranking(raw, sim: TopKSimulator):
    """Returns (digest_payload, make_step(executor, store, config) factory)."""
    if not isinstance(raw, dict):
        raise RequestError(422, "validation_error", "ranking must be an object",
                           "ranking")
    mode = raw.get("mode")
    if mode == "1d":
        attr = raw.get("attribute")
        schema = sim.schemas.get(attr) if isinstance(attr, str) else None
        if schema is None or not schema.is_numeric:
            raise RequestError(422, "validation_error",
                               "1d ranking needs a numeric attribute",
                               "ranking.attribute")
        direction = raw.get("direction")
        if direction not in (ASCENDING, DESCENDING):
            raise RequestError(422, "validation_error",
                               "direction must be ascending or descending",
                               "ranking.direction")
        algorithm = raw.get("algorithm", "rerank")
        if algorithm not in ALGORITHMS_1D:
            raise RequestError(422, "validation_error",
                               f"unknown 1d algorithm {algorithm!r}",
                               "ranking.algorithm")

        def build(base: SearchQuery, executor, store, config):
            state = make_state_1d(base, attr, direction)
            if algorithm == "baseline":
                step = lambda: get_next_1d_baseline(state, executor, config)
            elif algorithm == "binary":
                step = lambda: get_next_1d_binary(state, executor, config)
            else:
                step = lambda: get_next_1d_rerank(state, executor, store, config)
            return step, lambda t: float(t.value(attr))

        payload = {"mode": "1d", "attribute": attr, "direction": direction,
                   "algorithm": algorithm}
        return payload, build
    if mode == "md":
        weights = raw.get("weights")
        if not isinstance(weights, dict) or not weights:
            raise RequestError(422, "validation_error",
                               "md ranking needs a weights map", "ranking.weights")
        clean: dict[str, float] = {}
        for attr, w in sorted(weights.items()):
            schema = sim.schemas.get(attr)
            if schema is None or not schema.is_numeric:
                raise RequestError(422, "validation_error",
                                   f"unknown numeric attribute {attr!r}",
                                   f"ranking.weights.{attr}")
            if not isinstance(w, (int, float)) or not -1.0 <= float(w) <= 1.0:
                raise RequestError(422, "validation_error",
                                   "weights must lie in [-1, 1]",
                                   f"ranking.weights.{attr}")
            if float(w) != 0.0:
                clean[attr] = float(w)
        if not clean:
            raise RequestError(422, "validation_error",
                               "at least one weight must be non-zero",
                               "ranking.weights")
        algorithm = raw.get("algorithm", "rerank")
        if algorithm not in ALGORITHMS_MD:
            raise RequestError(422, "validation_error",
                               f"unknown md algorithm {algorithm!r}",
                               "ranking.algorithm")
        spec = RankingSpec.from_weights(clean)

        def build(base: SearchQuery, executor, store, config):
            state = make_state_md(base, spec)
            if algorithm == "baseline":
                step = lambda: get_next_md_baseline(state, executor, config)
            elif algorithm == "binary":
                step = lambda: get_next_md_binary(state, executor, config)
            elif algorithm == "ta":
                step = lambda: get_next_md_ta(state, executor, store, config)
            else:
                step = lambda: get_next_md_rerank(state, executor, store, config)
            schemas = executor.descriptor.schemas
            return step, lambda t: score(spec, t, schemas)

        payload = {"mode": "md", "weights": clean, "algorithm": algorithm}
        return payload, build
    raise RequestError(422, "validation_error", "mode must be 1d or md",
                       "ranking.mode")


def _tuple_doc(t: Tuple, score_value: float) -> dict:
    return {"id": t.id, "values": dict(t.values), "score": score_value}


def create_app(config: ServiceConfig) -> FastAPI:
    app = FastAPI(title="rankgate", docs_url=None, redoc_url=None)
    store = DenseRegionStore(config.dense_store_root)
    sessions: dict[str, Session] = {}
    sessions_lock = threading.Lock()

    boot_reports: dict[str, ValidationReport] = {}
    for source_id, entry in config.sources.items():
        try:
            report = store.validate(entry.simulator)
        except Exception:  # noqa: BLE001 - boot must not die on cache trouble
            log.exception("cache validation failed for %s", source_id)
            continue
        boot_reports[source_id] = report
        log.info("cache validation %s: kept=%d evicted=%d deferred=%s",
                 source_id, len(report.kept), len(report.evicted), report.deferred)
    app.state.boot_reports = boot_reports
    app.state.store = store
    app.state.sessions = sessions

    def fail(exc: RequestError) -> JSONResponse:
        return exc.response()

    def get_session(session_id: str) -> Session:
        with sessions_lock:
            sess = sessions.get(session_id)
            if sess is None:
                raise RequestError(404, "unknown_session", "no such session")
            if sess.cache.expired():
                del sessions[session_id]
                raise RequestError(410, "session_expired", "session expired")
            sess.cache.touch()
            return sess

    def stats_doc(sess: Session, last_totals: dict | None = None) -> dict:
        snap = sess.cache.meter.snapshot()
        doc = {
            "queries_issued": snap["total_queries"],
            "sequential_queries": snap["sequential_queries"],
            "parallel_batch_queries": snap["parallel_batch_queries"],
            "parallel_fraction": sess.cache.meter.parallel_fraction,
            "elapsed_ms": snap["wall_seconds"] * 1000.0,
        }
        if last_totals is not None:
            doc["page_queries"] = snap["total_queries"] - last_totals.get("total_queries", 0)
            doc["page_elapsed_ms"] = (snap["wall_seconds"]
                                      - last_totals.get("wall_seconds", 0.0)) * 1000.0
        return doc

    def run_page(sess: Session, active: ActiveQuery) -> dict:
        before = sess.cache.meter.snapshot()
        started = time.perf_counter()
        rows = []
        for _ in range(active.page_size):
            t = active.step()
            if t is None:
                active.exhausted = True
                break
            rows.append(_tuple_doc(t, active.score_of(t)))
        elapsed = time.perf_counter() - started
        stats = stats_doc(sess, before)
        stats["page_wall_ms"] = elapsed * 1000.0
        page = {
            "tuples": rows,
            "page_index": len(active.pages),
            "exhausted": active.exhausted,
            "stats": stats,
        }
        active.pages.append(page)
        sess.cache.pages_served.append(page)
        return page

    @app.get("/sources")
    def list_sources():
        out = []
        for source_id, entry in sorted(config.sources.items()):
            desc = entry.simulator.describe()
            out.append({
                "source_id": source_id,
                "name": desc.name,
                "k": desc.k,
                "attributes": [schema_to_dict(s)
                               for _, s in sorted(desc.schemas.items())],
                "popular_functions": entry.popular_functions,
                "detail_url_template": entry.detail_url_template,
            })
        return out

    @app.post("/sessions")
    def create_session(body: dict):
        source_id = body.get("source_id")
        entry = config.sources.get(source_id) if isinstance(source_id, str) else None
        if entry is None:
            return fail(RequestError(404, "unknown_source",
                                     f"no source {source_id!r}", "source_id"))
        session_id = secrets.token_urlsafe(16)
        cache = SessionCache(session_id, idle_expiry_s=config.session_expiry_s)
        executor = Executor(entry.simulator, cache.meter, session_cache=cache,
                            rate_limit=config.rate_limit)
        with sessions_lock:
            sessions[session_id] = Session(session_id, source_id, executor, cache)
        return {"session_id": session_id, "source_id": source_id}

    @app.post("/sessions/{session_id}/query")
    def post_query(session_id: str, request_body: dict):
        try:
            sess = get_session(session_id)
            entry = config.sources[sess.source_id]
            sim = entry.simulator
            preds = _parse_predicates(request_body.get("predicates", []), sim)
            ranking_payload, build = _parse_ranking(request_body.get("ranking"), sim)
            page_size = request_body.get("page_size", 10)
            if not isinstance(page_size, int) or not 1 <= page_size <= MAX_PAGE_SIZE:
                raise RequestError(422, "validation_error",
                                   f"page_size must be 1..{MAX_PAGE_SIZE}",
                                   "page_size")
        except RequestError as exc:
            return fail(exc)
        base = SearchQuery(tuple(preds))
        digest = query_digest(base) + "|" + json.dumps(
            {"ranking": ranking_payload, "page_size": page_size}, sort_keys=True)
        if not sess.busy.acquire(blocking=False):
            return fail(RequestError(409, "busy", "session is already running a query"))
        try:
            if sess.active is not None and sess.active.digest == digest:
                return sess.active.pages[0]
            step, score_of = build(base, sess.executor, app.state.store, config.engine)
            active = ActiveQuery(digest=digest, page_size=page_size,
                                 step=step, score_of=score_of)
            sess.active = active
            return run_page(sess, active)
        except TransientSourceError:
            return fail(RequestError(503, "source_unavailable",
                                     "backend did not answer"))
        finally:
            sess.busy.release()

    @app.post("/sessions/{session_id}/next")
    def post_next(session_id: str):
        try:
            sess = get_session(session_id)
        except RequestError as exc:
            return fail(exc)
        if not sess.busy.acquire(blocking=False):
            return fail(RequestError(409, "busy", "session is already running a query"))
        try:
            active = sess.active
            if active is None:
                return fail(RequestError(409, "no_active_query",
                                         "submit a query before paging"))
            if active.exhausted:
                page = {"tuples": [], "page_index": len(active.pages),
                        "exhausted": True, "stats": stats_doc(sess)}
                active.pages.append(page)
                return page
            return run_page(sess, active)
        except TransientSourceError:
            return fail(RequestError(503, "source_unavailable",
                                     "backend did not answer"))
        finally:
            sess.busy.release()

    @app.get("/sessions/{session_id}/stats")
    def session_stats(session_id: str):
        try:
            sess = get_session(session_id)
        except RequestError as exc:
            return fail(exc)
        doc = stats_doc(sess)
        doc["pages_served"] = len(sess.cache.pages_served)
        return doc

    def report_doc(report) -> dict:
        return {
            "kept": [list(k) for k in report.kept],
            "evicted": [list(k) for k in report.evicted],
            "deferred": report.deferred,
        }

    @app.post("/admin/validate-cache")
    def admin_validate(request: Request, body: dict | None = None):
        token = request.headers.get("x-admin-token", "")
        if not config.admin_token or token != config.admin_token:
            return fail(RequestError(401, "unauthorized", "bad admin token"))
        source_id = (body or {}).get("source_id")
        if source_id is None:
            return {sid: report_doc(app.state.store.validate(entry.simulator))
                    for sid, entry in sorted(config.sources.items())}
        entry = config.sources.get(source_id) if isinstance(source_id, str) else None
        if entry is None:
            return fail(RequestError(404, "unknown_source",
                                     f"no source {source_id!r}", "source_id"))
        return {source_id: report_doc(app.state.store.validate(entry.simulator))}

    ui_dir = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if ui_dir.is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
