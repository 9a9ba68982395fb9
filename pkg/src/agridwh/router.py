"""Request routing between the hot document tier and the analytical tier.

Classification rules, applied in order:

1. a point lookup by document id on a hot collection is ``realtime_point``;
2. a filter-only scan of a hot collection bounded by the recency window is
   ``realtime_recent``;
3. SQL text, a parsed query or a cube query is ``analytical``.

Every execution records which tier resources it read, so isolation between
the two paths can be checked from the trace alone.
"""
from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .olap import CubeCache, CubeQuery, holap_answer
from .query import Query, ResultSet, execute_plan, parse_query, plan_query
from .storage import TieredWarehouse, record_access

REALTIME_POINT = "realtime_point"
REALTIME_RECENT = "realtime_recent"
ANALYTICAL = "analytical"
DEFAULT_RECENCY_WINDOW_S = 24 * 3600


class RouterError(Exception):
    pass


class TierUnavailableError(RouterError):
    def __init__(self, tier: str):
        super().__init__(f"tier unavailable: {tier}")
        self.tier = tier


class SyncTargetWriteError(RouterError):
    pass


class UnroutableRequestError(RouterError):
    pass


@dataclass(frozen=True)
class HotGet:
    collection: str
    doc_id: str


@dataclass(frozen=True)
class HotScan:
    """Documents of ``collection`` whose timestamp lies within the recency window.

    ``where`` holds field equalities; ``now`` and ``window_s`` default to the
    wall clock and the configured window.
    """
    collection: str
    where: tuple = ()
    now: float | None = None
    window_s: float | None = None


@dataclass(frozen=True)
class QueryClass:
    value: str
    rationale: str


def classify_query(request) -> QueryClass:
    if isinstance(request, HotGet):
        return QueryClass(REALTIME_POINT, "rule 1: point lookup by doc_id on a hot collection")
    if isinstance(request, HotScan):
        return QueryClass(REALTIME_RECENT, "rule 2: filter-only hot scan bounded by recency window")
    if isinstance(request, (str, Query, CubeQuery)):
        return QueryClass(ANALYTICAL, "rule 3: warehouse tables, joins or aggregates")
    raise UnroutableRequestError(f"cannot classify request of type {type(request).__name__}")


@dataclass
class SyncJob:
    name: str
    source: str  # SQL text
    target: str  # hot collection reserved for this job
    refresh_interval_s: float = 3600.0
    last_run: float | None = None
    key_columns: tuple = ()

    def due(self, now: float) -> bool:
        return self.last_run is None or now - self.last_run >= self.refresh_interval_s


@dataclass
class RoutingConfig:
    recency_window_s: float = DEFAULT_RECENCY_WINDOW_S
    timestamp_field: str = "ts"
    sync_jobs: list = field(default_factory=list)

    @classmethod
    def load(cls, path) -> "RoutingConfig":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        jobs = [SyncJob(j["name"], j["sql"], j["target"], float(j.get("refresh_interval_s", 3600)),
                        None, tuple(j.get("key_columns", ())))
                for j in doc.get("sync_jobs", [])]
        return cls(float(doc.get("recency_window_s", DEFAULT_RECENCY_WINDOW_S)),
                   doc.get("timestamp_field", "ts"), jobs)

    def to_dict(self) -> dict:
        return {"recency_window_s": self.recency_window_s, "timestamp_field": self.timestamp_field,
                "sync_jobs": [{"name": j.name, "sql": j.source, "target": j.target,
                               "refresh_interval_s": j.refresh_interval_s,
                               "key_columns": list(j.key_columns)} for j in self.sync_jobs]}


@dataclass
class Tiers:
    warehouse: TieredWarehouse
    config: RoutingConfig = field(default_factory=RoutingConfig)
    cubes: CubeCache = field(default_factory=CubeCache)
    available: set = field(default_factory=lambda: {"hot", "analytical"})
    _sync_lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def sync_targets(self) -> set:
        return {j.target for j in self.config.sync_jobs}

    def require(self, tier: str) -> None:
        if tier not in self.available:
            raise TierUnavailableError(tier)


@dataclass
class Trace:
    request_class: str
    tier: str
    provenance: str
    elapsed_s: float
    reads: list

    @property
    def violations(self) -> list:
        """Reads outside the tier the request class is allowed to use."""
        allowed = "analytical" if self.request_class == ANALYTICAL else "hot"
        return [r for r in self.reads if r[0] != allowed]

    def to_json(self) -> str:
        return json.dumps({**asdict(self), "reads": [list(r) for r in self.reads]}, sort_keys=True)


def _docs_result(docs) -> ResultSet:
    rows = [(d.doc_id, d.version, json.dumps(d.body, sort_keys=True)) for d in docs]
    rows.sort()
    return ResultSet(["doc_id", "version", "body"], ["text", "int64", "text"], rows)


def route_and_execute(request, tiers: Tiers) -> tuple[ResultSet, Trace]:
    cls = classify_query(request)
    t0 = time.perf_counter_ns()
    with record_access() as reads:
        if cls.value == REALTIME_POINT:
            tiers.require("hot")
            doc = tiers.warehouse.hot.get(request.collection, request.doc_id)
            result, tier, prov = _docs_result([doc] if doc else []), "hot", "hot"
        elif cls.value == REALTIME_RECENT:
            tiers.require("hot")
            now = time.time() if request.now is None else request.now
            window = tiers.config.recency_window_s if request.window_s is None else request.window_s
            ts_field = tiers.config.timestamp_field
            eq = dict(request.where)

            def keep(body):
                ts = body.get(ts_field)
                if not isinstance(ts, (int, float)) or not now - window <= ts <= now:
                    return False
                return all(body.get(k) == v for k, v in eq.items())
            docs = tiers.warehouse.hot.scan(request.collection, keep)
            result, tier, prov = _docs_result(docs), "hot", "hot"
        else:
            tiers.require("analytical")
            tier = "analytical"
            if isinstance(request, CubeQuery):
                result, prov = holap_answer(request, tiers.cubes, tiers.warehouse)
            else:
                ast = parse_query(request) if isinstance(request, str) else request
                result = execute_plan(plan_query(ast, tiers.warehouse), tiers.warehouse)
                prov = "ROLAP"
    trace = Trace(cls.value, tier, prov, (time.perf_counter_ns() - t0) / 1e9, list(reads))
    return result, trace


def hot_upsert(tiers: Tiers, collection: str, doc_id: str, body: dict) -> int:
    if collection in tiers.sync_targets:
        raise SyncTargetWriteError(f"{collection} is a sync target; direct writes are rejected")
    tiers.require("hot")
    return tiers.warehouse.hot.upsert(collection, doc_id, body)


def hot_get(tiers: Tiers, collection: str, doc_id: str):
    tiers.require("hot")
    return tiers.warehouse.hot.get(collection, doc_id)


def sync_doc_id(row: dict, key_columns) -> str:
    return "|".join("" if row[k] is None else str(row[k]) for k in key_columns)


def run_sync(job: SyncJob, tiers: Tiers, now: float | None = None) -> int:
    """Full refresh of ``job.target`` from the analytical result; returns the doc count.

    The new collection contents are written as one batch, so a failure
    anywhere leaves the previous contents in place.
    """
    result, trace = route_and_execute(job.source, tiers)
    keys = job.key_columns or (result.columns[0],)
    for k in keys:
        if k not in result.columns:
            raise RouterError(f"sync job {job.name}: key column {k!r} not in result")
    docs = {}
    for row in result.rows:
        body = dict(zip(result.columns, row))
        doc_id = sync_doc_id(body, keys)
        if doc_id in docs:
            raise RouterError(f"sync job {job.name}: key columns {list(keys)} are not unique ({doc_id})")
        docs[doc_id] = body
    tiers.require("hot")
    with tiers._sync_lock:
        tiers.warehouse.hot.replace_collection(job.target, docs)
    job.last_run = time.time() if now is None else now
    return len(docs)


def run_due_syncs(tiers: Tiers, now: float | None = None) -> dict:
    now = time.time() if now is None else now
    return {j.name: run_sync(j, tiers, now) for j in tiers.config.sync_jobs if j.due(now)}


class TraceLog:
    """Append-only JSON-lines trace file."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def write(self, trace: Trace) -> None:
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(trace.to_json() + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def read(self) -> list[dict]:
        if not self.path.exists():
            return []
        return [json.loads(line) for line in self.path.read_text(encoding="utf-8").splitlines() if line]


def drain_to_staging(tiers: Tiers, collection: str, dataset_id: str):
    """Export a hot collection as a staged dataset for the next ETL run."""
    records = tiers.warehouse.hot.export_records(collection)
    return tiers.warehouse.raw.stage_records(dataset_id, {collection: records})
