"""Conform staged datasets into the constellation schema and load the warehouse."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..schema import ColumnDef, ConstellationSchema, build_default_schema
from ..storage import RawStagingStore, StagedDataset, TieredWarehouse
from ..storage.staging import MANIFEST
from ..storage.values import build_column, coerce_text

REASONS = ("unresolved_fk", "type_error", "duplicate_natural_key_conflict")


@dataclass(frozen=True)
class QuarantineRecord:
    dataset_id: str
    table: str
    row_index: int
    reason: str
    payload: dict
    detail: str = ""

    @property
    def source(self) -> tuple[str, str, int]:
        return self.dataset_id, self.table, self.row_index


@dataclass
class ConformedDimension:
    """One deduplicated dimension.

    ``key_map`` maps (dataset_id, natural key) to the surrogate key;
    ``source_ids`` maps (dataset_id, source id) the same way and is what fact
    and link translation use.
    """
    dimension: str
    columns: tuple[ColumnDef, ...]
    key_map: dict = field(default_factory=dict)
    source_ids: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)  # typed tuples in column order, surrogate first

    def __len__(self):
        return len(self.rows)


@dataclass
class FactLoad:
    fact: str
    staged: int
    loaded: int
    columns: dict  # column -> (values, nulls)
    quarantine: list


@dataclass
class EtlReport:
    tables: dict  # table -> {"staged", "loaded", "quarantined"}
    quarantine: dict  # reason -> count
    missing_tables: list
    datasets: list
    duration_s: float

    @property
    def conserved(self) -> bool:
        return all(t["staged"] == t["loaded"] + t["quarantined"] for t in self.tables.values())

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)


class EtlError(Exception):
    pass


def _parse_row(columns, raw: dict):
    """Typed values for ``columns`` from a raw record; raises ValueError naming the column."""
    out = []
    for c in columns:
        text = raw.get(c.name)
        if text is None:
            raise ValueError(f"column {c.name} missing")
        try:
            v = coerce_text(c.kind, text)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"column {c.name}: {exc}") from None
        if v is None and not c.nullable:
            raise ValueError(f"column {c.name}: empty value in non-nullable column")
        out.append(v)
    return out


def conform_dimensions(staged: list[StagedDataset], schema: ConstellationSchema | None = None):
    """Deduplicate every dimension across datasets.

    Returns ``(conformed by name, quarantine records, missing (dataset, table) pairs)``.
    Datasets are processed in dataset-id order and dimensions parents-first, so
    first-seen-wins is deterministic.
    """
    schema = schema or build_default_schema()
    staged = sorted(staged, key=lambda d: d.dataset_id)
    conformed: dict[str, ConformedDimension] = {}
    quarantine: list[QuarantineRecord] = []
    missing: list[tuple[str, str]] = []
    for name in schema.dimension_order():
        dim = schema.dimension(name)
        cols = dim.columns
        sk_pos = [c.name for c in cols].index(dim.surrogate_key)
        nk_pos = [[c.name for c in cols].index(k) for k in dim.natural_key]
        link_pos = {[c.name for c in cols].index(col): parent for col, parent in dim.links}
        cd = ConformedDimension(name, cols)
        by_key: dict[tuple, int] = {}
        for ds in staged:
            if not ds.has_table(name):
                missing.append((ds.dataset_id, name))
                continue
            for i, raw in enumerate(ds.iter_records(name)):
                def reject(reason, detail):
                    quarantine.append(QuarantineRecord(ds.dataset_id, name, i, reason, raw, detail))
                try:
                    vals = _parse_row(cols, raw)
                except ValueError as exc:
                    reject("type_error", str(exc))
                    continue
                unresolved = None
                for pos, parent in link_pos.items():
                    sk = conformed[parent].source_ids.get((ds.dataset_id, vals[pos]))
                    if sk is None:
                        unresolved = cols[pos].name
                        break
                    vals[pos] = sk
                if unresolved:
                    reject("unresolved_fk", f"{unresolved}={raw[unresolved]}")
                    continue
                source_id = vals[sk_pos]
                nk = tuple(vals[p] for p in nk_pos)
                attrs = tuple(v for p, v in enumerate(vals) if p != sk_pos)
                sk = by_key.get(nk)
                if (ds.dataset_id, source_id) in cd.source_ids:
                    reject("duplicate_natural_key_conflict", f"source id {source_id} repeated")
                    continue
                if sk is None:
                    sk = len(cd.rows) + 1
                    by_key[nk] = sk
                    row = list(vals)
                    row[sk_pos] = sk
                    cd.rows.append(tuple(row))
                elif cd.rows[sk - 1][:sk_pos] + cd.rows[sk - 1][sk_pos + 1:] != attrs:
                    # first seen wins; the source id still resolves to it
                    reject("duplicate_natural_key_conflict", f"natural key {nk} differs from first seen")
                    cd.source_ids[(ds.dataset_id, source_id)] = sk
                    continue
                cd.source_ids[(ds.dataset_id, source_id)] = sk
                cd.key_map[(ds.dataset_id, nk)] = sk
        conformed[name] = cd
    return conformed, quarantine, missing


def _parse_column(kind: str, texts: list[str]):
    """(values, nulls, bad row mask) for one raw column."""
    n = len(texts)
    if kind in ("int64", "float64") and n:
        try:
            arr = np.array(texts, dtype=object)
            nulls = arr == ""
            vals = np.where(nulls, "0", arr).astype(str).astype(np.float64 if kind == "float64" else np.int64)
            if kind == "float64" and np.isnan(vals).any():
                raise ValueError("nan")
            return vals, nulls, np.zeros(n, dtype=bool)
        except (ValueError, OverflowError):
            pass
    parsed, bad = [], np.zeros(n, dtype=bool)
    for i, t in enumerate(texts):
        try:
            parsed.append(coerce_text(kind, t))
        except (TypeError, ValueError):
            parsed.append(None)
            bad[i] = True
    vals, nulls = build_column(kind, parsed)
    return vals, nulls, bad


def load_fact_table(fact: str, staged: list[StagedDataset], conformed: dict,
                    schema: ConstellationSchema | None = None) -> FactLoad:
    """Resolve foreign keys to surrogate keys; rows that cannot be resolved are quarantined."""
    schema = schema or build_default_schema()
    fdef = schema.fact(fact)
    columns = schema.fact_columns(fact)
    fk = {schema.dimension(d).surrogate_key: d for d in fdef.dimension_refs}
    parts: dict[str, list] = {c.name: [] for c in columns}
    quarantine: list[QuarantineRecord] = []
    staged_total = loaded = 0
    for ds in sorted(staged, key=lambda d: d.dataset_id):
        if not ds.has_table(fact):
            continue
        header, rows = ds.table_rows(fact)
        n = len(rows)
        staged_total += n
        if n == 0:
            continue
        raw_cols = dict(zip(header, map(list, zip(*rows))))
        type_bad = np.zeros(n, dtype=bool)
        fk_bad = np.zeros(n, dtype=bool)
        detail: dict[int, str] = {}
        typed = {}
        for c in columns:
            if c.name not in raw_cols:
                type_bad[:] = True
                detail.update({i: f"column {c.name} missing" for i in range(n)})
                typed[c.name] = (np.zeros(n, dtype=np.int64 if c.kind != "float64" else np.float64),
                                 np.ones(n, dtype=bool))
                continue
            vals, nulls, bad = _parse_column(c.kind, raw_cols[c.name])
            if not c.nullable:
                bad = bad | nulls
            for i in np.flatnonzero(bad & ~type_bad):
                detail[int(i)] = f"column {c.name}: bad value {raw_cols[c.name][i]!r}"
            type_bad |= bad
            typed[c.name] = (vals, nulls)
        for col, dim in fk.items():
            vals, nulls = typed[col]
            lookup = conformed[dim].source_ids
            keys = sorted(sid for d, sid in lookup if d == ds.dataset_id)
            src = np.array(keys, dtype=np.int64)
            sks = np.array([lookup[(ds.dataset_id, k)] for k in keys], dtype=np.int64)
            pos = np.searchsorted(src, vals)
            pos_c = np.minimum(pos, max(len(src) - 1, 0))
            found = (len(src) > 0) & (src[pos_c] == vals) if len(src) else np.zeros(n, dtype=bool)
            miss = ~found & ~type_bad & ~nulls
            for i in np.flatnonzero(miss & ~fk_bad):
                detail.setdefault(int(i), f"{col}={raw_cols[col][i]}")
            fk_bad |= miss
            typed[col] = (np.where(found, sks[pos_c] if len(sks) else 0, 0).astype(np.int64), nulls)
        fk_bad &= ~type_bad
        for i in np.flatnonzero(type_bad | fk_bad):
            reason = "type_error" if type_bad[i] else "unresolved_fk"
            quarantine.append(QuarantineRecord(ds.dataset_id, fact, int(i), reason,
                                               dict(zip(header, rows[i])), detail.get(int(i), "")))
        keep = ~(type_bad | fk_bad)
        loaded += int(keep.sum())
        for c in columns:
            vals, nulls = typed[c.name]
            parts[c.name].append((vals[keep], nulls[keep]))
    out = {}
    for c in columns:
        if parts[c.name]:
            out[c.name] = (np.concatenate([p[0] for p in parts[c.name]]),
                           np.concatenate([p[1] for p in parts[c.name]]))
        else:
            out[c.name] = build_column(c.kind, [])
    return FactLoad(fact, staged_total, loaded, out, quarantine)


def _dimension_arrays(cd: ConformedDimension) -> dict:
    cols = list(zip(*cd.rows)) if cd.rows else [() for _ in cd.columns]
    return {c.name: build_column(c.kind, list(v)) for c, v in zip(cd.columns, cols)}


def _write_quarantine(root: Path, records: list[QuarantineRecord]) -> None:
    qdir = root / "quarantine"
    qdir.mkdir(parents=True, exist_ok=True)
    for old in qdir.glob("*.csv"):
        old.unlink()
    by_table: dict[str, list[QuarantineRecord]] = {}
    for r in records:
        by_table.setdefault(r.table, []).append(r)
    for table, recs in sorted(by_table.items()):
        src_cols = list(dict.fromkeys(k for r in recs for k in r.payload))
        with open(qdir / f"{table}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(src_cols + ["dataset_id", "row_index", "reason"])
            for r in recs:
                w.writerow([r.payload.get(c, "") for c in src_cols] + [r.dataset_id, r.row_index, r.reason])


def source_directories(source_root) -> list[Path]:
    root = Path(source_root)
    if (root / MANIFEST).exists():
        return [root]
    return sorted(d for d in root.iterdir() if (d / MANIFEST).exists())


def etl_run(source_root, warehouse, schema: ConstellationSchema | None = None,
            partition_size: int | None = None):
    """Stage every dataset under ``source_root`` and (re)load all 22 tables.

    ``warehouse`` is a TieredWarehouse or a root path.  Tables are replaced
    whole, each in one atomic swap, so rerunning on the same inputs is
    idempotent and a failure leaves the previous table in place.
    Returns ``(EtlReport, quarantine records)``.
    """
    t0 = time.perf_counter()
    schema = schema or build_default_schema()
    wh = warehouse if isinstance(warehouse, TieredWarehouse) else TieredWarehouse(warehouse)
    raw: RawStagingStore = wh.raw
    staged = [raw.stage(d) for d in source_directories(source_root)]
    if not staged:
        raise EtlError(f"no source datasets under {source_root}")
    conformed, quarantine, missing = conform_dimensions(staged, schema)
    tables = {}
    q_by_table: dict[str, int] = {}
    for r in quarantine:
        q_by_table[r.table] = q_by_table.get(r.table, 0) + 1
    for name in schema.dimension_order():
        cd = conformed[name]
        staged_n = sum(ds.row_count(name) for ds in staged if ds.has_table(name))
        wh.store.load_columns(name, _dimension_arrays(cd), cd.columns, partition_size)
        tables[name] = {"staged": staged_n, "loaded": staged_n - q_by_table.get(name, 0),
                        "quarantined": q_by_table.get(name, 0), "rows": len(cd)}
    for fdef in schema.facts:
        load = load_fact_table(fdef.name, staged, conformed, schema)
        wh.store.load_columns(fdef.name, load.columns, schema.fact_columns(fdef.name), partition_size)
        quarantine.extend(load.quarantine)
        tables[fdef.name] = {"staged": load.staged, "loaded": load.loaded,
                             "quarantined": len(load.quarantine), "rows": load.loaded}
    reasons = {r: 0 for r in REASONS}
    for rec in quarantine:
        reasons[rec.reason] += 1
    report = EtlReport(tables, reasons, [list(m) for m in missing],
                       [d.dataset_id for d in staged], time.perf_counter() - t0)
    if wh.root is not None:
        _write_quarantine(wh.root, quarantine)
        (wh.root / "etl_report.json").write_text(report.to_json(), encoding="utf-8")
    return report, quarantine
