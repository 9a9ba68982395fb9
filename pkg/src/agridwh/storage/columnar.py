"""Partitioned columnar store (the analytical tier)."""
from __future__ import annotations

import json
import logging
import math
import os
import shutil
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from ..schema import ColumnDef
from . import segfile
from .access import note
from .values import TypeMismatchError, build_column, coerce, empty_array, to_output

log = logging.getLogger(__name__)

DEFAULT_PARTITION_SIZE = 65_536


class StorageError(Exception):
    pass


class UnknownTableError(StorageError, KeyError):
    def __str__(self):
        return f"unknown table: {self.args[0]!r}"


class UnknownColumnError(StorageError, KeyError):
    def __str__(self):
        return f"unknown column: {self.args[0]!r}"


class UnknownSnapshotError(StorageError, KeyError):
    def __str__(self):
        return f"unknown snapshot: {self.args[0]!r}"


class WriteInProgressError(StorageError):
    pass


@dataclass(frozen=True)
class ColumnSegment:
    table: str
    column: str
    partition_id: int
    values: np.ndarray
    null_mask: np.ndarray


@dataclass(frozen=True)
class Partition:
    id: int
    rows: int
    segments: Mapping[str, ColumnSegment]


@dataclass(frozen=True)
class TableEntry:
    name: str
    columns: tuple[ColumnDef, ...]
    partitions: tuple[Partition, ...] = ()

    @property
    def row_count(self) -> int:
        return sum(p.rows for p in self.partitions)

    def kind(self, column: str) -> str:
        for c in self.columns:
            if c.name == column:
                return c.kind
        raise UnknownColumnError(f"{self.name}.{column}")

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]


@dataclass
class Catalog:
    tables: dict[str, TableEntry] = field(default_factory=dict)
    snapshots: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "tables": {
                name: {
                    "columns": [{"name": c.name, "kind": c.kind, "nullable": c.nullable}
                                for c in t.columns],
                    "partitions": [{"id": p.id, "rows": p.rows} for p in t.partitions],
                    "row_count": t.row_count,
                }
                for name, t in sorted(self.tables.items())
            },
            "snapshots": list(self.snapshots),
        }


class ColumnStore:
    """Tables split into fixed-size partitions of aligned column segments.

    With ``root=None`` everything stays in memory.  Otherwise each partition is
    a segment file under ``<root>/tables/<table>/`` and ``<root>/catalog.json``
    records the table list.
    """

    def __init__(self, root: str | os.PathLike | None = None,
                 partition_size: int = DEFAULT_PARTITION_SIZE):
        self.root = Path(root) if root is not None else None
        self.partition_size = partition_size
        self.catalog = Catalog()
        self._write_lock = threading.Lock()
        self._row_cache: dict[str, tuple] = {}
        self._memory_snapshots: dict[str, dict[str, TableEntry]] = {}
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
            if (self.root / "catalog.json").exists():
                self._load_from_disk()

    # -- catalog access ----------------------------------------------------

    def table(self, name: str) -> TableEntry:
        try:
            return self.catalog.tables[name]
        except KeyError:
            raise UnknownTableError(name) from None

    def has_table(self, name: str) -> bool:
        return name in self.catalog.tables

    def tables(self) -> list[str]:
        return sorted(self.catalog.tables)

    def row_count(self, name: str) -> int:
        return self.table(name).row_count

    def columns(self, name: str) -> tuple[ColumnDef, ...]:
        return self.table(name).columns

    # -- writes ------------------------------------------------------------

    def load_partitioned_table(self, name: str, rows: Iterable, columns: Sequence[ColumnDef] | None = None,
                               partition_size: int | None = None, mode: str = "replace") -> list[int]:
        """Load row records (mappings, or sequences in column order).

        Returns the ids of the partitions created.
        """
        columns = tuple(columns) if columns is not None else self.table(name).columns
        names = [c.name for c in columns]
        data: dict[str, list] = {c: [] for c in names}
        for i, row in enumerate(rows):
            if isinstance(row, Mapping):
                extra = set(row) - set(names)
                if extra:
                    raise UnknownColumnError(f"{name}.{sorted(extra)[0]}")
                items = [row.get(c) for c in names]
            else:
                items = list(row)
                if len(items) != len(names):
                    raise TypeMismatchError(f"row {i}: expected {len(names)} values, got {len(items)}",
                                            row=i)
            for c, v in zip(columns, items):
                try:
                    v = coerce(c.kind, v)
                except (TypeError, ValueError) as exc:
                    raise TypeMismatchError(f"row {i}, column {c.name}: {exc}", row=i,
                                            column=c.name) from None
                if v is None and not c.nullable:
                    raise TypeMismatchError(f"row {i}, column {c.name}: null in non-nullable column",
                                            row=i, column=c.name)
                data[c.name].append(v)
        arrays = {c.name: build_column(c.kind, data[c.name]) for c in columns}
        return self.load_columns(name, arrays, columns, partition_size, mode)

    def load_columns(self, name: str, arrays: Mapping[str, tuple[np.ndarray, np.ndarray]],
                     columns: Sequence[ColumnDef] | None = None, partition_size: int | None = None,
                     mode: str = "replace") -> list[int]:
        """Load already-typed column arrays ``{column: (values, null_mask)}``."""
        if mode not in ("replace", "append"):
            raise ValueError(f"mode must be 'replace' or 'append', not {mode!r}")
        columns = tuple(columns) if columns is not None else self.table(name).columns
        psize = partition_size or self.partition_size
        if psize < 1:
            raise ValueError("partition_size must be >= 1")
        lengths = {len(arrays[c.name][0]) for c in columns}
        if len(lengths) > 1:
            raise StorageError(f"{name}: column arrays differ in length {sorted(lengths)}")
        n = lengths.pop() if lengths else 0

        if not self._write_lock.acquire(blocking=False):
            raise WriteInProgressError(f"another write is active while loading {name}")
        try:
            existing = self.catalog.tables.get(name)
            if mode == "append" and existing is not None:
                if existing.columns != columns:
                    raise StorageError(f"{name}: append with different columns")
                base = existing.partitions
                first_id = max((p.id for p in base), default=-1) + 1
            else:
                base = ()
                first_id = 0
            new_parts = []
            for k in range(math.ceil(n / psize)):
                lo, hi = k * psize, min(n, (k + 1) * psize)
                pid = first_id + k
                segs = {}
                for c in columns:
                    vals, nulls = arrays[c.name]
                    segs[c.name] = ColumnSegment(name, c.name, pid, np.asarray(vals[lo:hi]).copy(),
                                                 np.asarray(nulls[lo:hi], dtype=bool).copy())
                new_parts.append(Partition(pid, hi - lo, segs))
            entry = TableEntry(name, columns, tuple(base) + tuple(new_parts))
            if self.root is not None:
                self._persist_table(entry, new_parts, replace=(mode == "replace" or existing is None))
            self.catalog.tables[name] = entry
            self._row_cache.pop(name, None)
            if self.root is not None:
                self._write_catalog()
            return [p.id for p in new_parts]
        finally:
            self._write_lock.release()

    def create_table(self, name: str, columns: Sequence[ColumnDef]) -> None:
        self.load_columns(name, {c.name: (empty_array(c.kind), np.zeros(0, bool)) for c in columns},
                          columns)

    def drop_table(self, name: str) -> None:
        with self._write_lock:
            self.catalog.tables.pop(name, None)
            self._row_cache.pop(name, None)
            if self.root is not None:
                shutil.rmtree(self.root / "tables" / name, ignore_errors=True)
                self._write_catalog()

    # -- reads -------------------------------------------------------------

    def scan(self, table: str, predicate=None, projection: Iterable[str] | None = None) -> Iterator[dict]:
        """Stream records in partition order; the predicate is evaluated per segment first."""
        entry = self.table(table)
        cols = self._projection(entry, projection)
        kinds = {c: entry.kind(c) for c in cols}
        for part, mask in self._filtered_partitions(entry, predicate):
            lists = {}
            for c in cols:
                seg = part.segments[c]
                vals = seg.values[mask] if mask is not None else seg.values
                nulls = seg.null_mask[mask] if mask is not None else seg.null_mask
                lists[c] = [None if isn else to_output(kinds[c], v)
                            for v, isn in zip(vals.tolist(), nulls.tolist())]
            count = int(mask.sum()) if mask is not None else part.rows
            for i in range(count):
                yield {c: lists[c][i] for c in cols}

    def scan_arrays(self, table: str, predicate=None, projection: Iterable[str] | None = None
                    ) -> tuple[dict[str, tuple[np.ndarray, np.ndarray]], int]:
        """Vectorized scan: ``({column: (values, nulls)}, row_count)`` after pushdown."""
        entry = self.table(table)
        cols = self._projection(entry, projection)
        chunks: dict[str, list] = {c: [] for c in cols}
        nchunks: dict[str, list] = {c: [] for c in cols}
        total = 0
        for part, mask in self._filtered_partitions(entry, predicate):
            for c in cols:
                seg = part.segments[c]
                if mask is None:
                    chunks[c].append(seg.values)
                    nchunks[c].append(seg.null_mask)
                else:
                    chunks[c].append(seg.values[mask])
                    nchunks[c].append(seg.null_mask[mask])
            total += part.rows if mask is None else int(mask.sum())
        out = {}
        for c in cols:
            kind = entry.kind(c)
            if chunks[c]:
                vals = np.concatenate(chunks[c]) if len(chunks[c]) > 1 else chunks[c][0]
                nulls = np.concatenate(nchunks[c]) if len(nchunks[c]) > 1 else nchunks[c][0]
            else:
                vals, nulls = empty_array(kind), np.zeros(0, dtype=bool)
            out[c] = (vals, nulls)
        return out, total

    def row_view(self, table: str) -> tuple[list[str], list[str], list[tuple]]:
        """Whole table as a list of row tuples (nulls as ``None``), cached until the next write."""
        entry = self.table(table)
        note("analytical", table)
        cached = self._row_cache.get(table)
        if cached is not None and cached[0] is entry:
            return cached[1]
        names = entry.column_names
        kinds = [c.kind for c in entry.columns]
        rows: list[tuple] = []
        for part in entry.partitions:
            cols = []
            for c in names:
                seg = part.segments[c]
                vals = seg.values.tolist()
                if seg.null_mask.any():
                    vals = [None if isn else v for v, isn in zip(vals, seg.null_mask.tolist())]
                cols.append(vals)
            rows.extend(zip(*cols))
        view = (names, kinds, rows)
        self._row_cache[table] = (entry, view)
        return view

    def _projection(self, entry: TableEntry, projection) -> list[str]:
        if projection is None:
            return entry.column_names
        cols = list(projection)
        known = set(entry.column_names)
        for c in cols:
            if c not in known:
                raise UnknownColumnError(f"{entry.name}.{c}")
        return cols

    def _filtered_partitions(self, entry: TableEntry, predicate):
        note("analytical", entry.name)
        if predicate is not None:
            known = set(entry.column_names)
            for c in predicate.columns():
                if c not in known:
                    raise UnknownColumnError(f"{entry.name}.{c}")
        for part in entry.partitions:  # captured tuple: immune to concurrent loads
            if predicate is None:
                yield part, None
                continue

            def get(col, _p=part):
                seg = _p.segments[col]
                return seg.values, seg.null_mask, entry.kind(col)

            yield part, predicate.mask(get, part.rows)

    # -- persistence -------------------------------------------------------

    def _persist_table(self, entry: TableEntry, new_parts, replace: bool) -> None:
        tables_dir = self.root / "tables"
        tables_dir.mkdir(exist_ok=True)
        final = tables_dir / entry.name
        target = tables_dir / f"{entry.name}.new" if replace else final
        if replace:
            shutil.rmtree(target, ignore_errors=True)
        target.mkdir(parents=True, exist_ok=True)
        for part in new_parts:
            cols = [(c.name, c.kind, part.segments[c.name].values, part.segments[c.name].null_mask)
                    for c in entry.columns]
            segfile.write_file(target / f"{part.id}.seg", segfile.encode(entry.name, part.id, cols))
        if replace:
            old = tables_dir / f"{entry.name}.old"
            shutil.rmtree(old, ignore_errors=True)
            if final.exists():
                os.replace(final, old)
            os.replace(target, final)
            shutil.rmtree(old, ignore_errors=True)

    def _write_catalog(self) -> None:
        path = self.root / "catalog.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(self.catalog.to_dict(), indent=1, sort_keys=True), encoding="utf-8")
        os.replace(tmp, path)

    def _load_from_disk(self) -> None:
        doc = json.loads((self.root / "catalog.json").read_text(encoding="utf-8"))
        tables = {}
        for name, t in doc["tables"].items():
            columns = tuple(ColumnDef(c["name"], c["kind"], c.get("nullable", True)) for c in t["columns"])
            parts = []
            for p in t["partitions"]:
                header, data = segfile.decode((self.root / "tables" / name / f"{p['id']}.seg").read_bytes())
                if header["rows"] != p["rows"]:
                    raise StorageError(f"{name} partition {p['id']}: row count mismatch")
                segs = {c: ColumnSegment(name, c, p["id"], v, m) for c, (v, m) in data.items()}
                parts.append(Partition(p["id"], p["rows"], segs))
            tables[name] = TableEntry(name, columns, tuple(parts))
        self.catalog = Catalog(tables, list(doc.get("snapshots", [])))
        self._row_cache.clear()

    # -- snapshots ---------------------------------------------------------

    def snapshot(self, snapshot_id: str | None = None) -> str:
        """Freeze the current table contents; rejected while a write is active."""
        if not self._write_lock.acquire(blocking=False):
            raise WriteInProgressError("snapshot requested while a write is active")
        try:
            if snapshot_id is None:
                snapshot_id = f"snap-{len(self.catalog.snapshots) + 1:04d}"
                while snapshot_id in self.catalog.snapshots:
                    snapshot_id += "x"
            if self.root is None:
                self._memory_snapshots[snapshot_id] = dict(self.catalog.tables)
            else:
                dest = self.root / "snapshots" / snapshot_id
                if dest.exists():
                    shutil.rmtree(dest)
                dest.mkdir(parents=True)
                if (self.root / "tables").exists():
                    shutil.copytree(self.root / "tables", dest / "tables")
                (dest / "catalog.json").write_text(
                    json.dumps(self.catalog.to_dict(), indent=1, sort_keys=True), encoding="utf-8")
            self.catalog.snapshots.append(snapshot_id)
            if self.root is not None:
                self._write_catalog()
            return snapshot_id
        finally:
            self._write_lock.release()

    def snapshot_dir(self, snapshot_id: str) -> Path | None:
        if self.root is None:
            return None
        return self.root / "snapshots" / snapshot_id

    def recover(self, snapshot_id: str) -> Catalog:
        if snapshot_id not in self.catalog.snapshots:
            raise UnknownSnapshotError(snapshot_id)
        if not self._write_lock.acquire(blocking=False):
            raise WriteInProgressError("recover requested while a write is active")
        try:
            snapshots = list(self.catalog.snapshots)
            if self.root is None:
                self.catalog = Catalog(dict(self._memory_snapshots[snapshot_id]), snapshots)
            else:
                src = self.root / "snapshots" / snapshot_id
                shutil.rmtree(self.root / "tables", ignore_errors=True)
                if (src / "tables").exists():
                    shutil.copytree(src / "tables", self.root / "tables")
                shutil.copyfile(src / "catalog.json", self.root / "catalog.json")
                self._load_from_disk()
                self.catalog.snapshots = snapshots
                self._write_catalog()
            self._row_cache.clear()
            log.info("recovered snapshot %s", snapshot_id)
            return self.catalog
        finally:
            self._write_lock.release()
