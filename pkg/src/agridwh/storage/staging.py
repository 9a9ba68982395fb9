"""Raw staging tier: verbatim landing zone for source datasets.

A source dataset is a directory holding one UTF-8 CSV per table (header row,
RFC 4180 quoting) and a ``manifest.json``::

    {"dataset_id": "ds01",
     "tables": {"Crop": {"file": "Crop.csv", "rows": 12, "crc32c": "0f3a99c1"}, ...}}

Staging copies the files unchanged after checking checksums, arity and row
counts.  Staged copies are never modified; records are read back lazily.
"""
from __future__ import annotations

import csv
import json
import os
import shutil
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import crc32c as _crc32c

MANIFEST = "manifest.json"


class StagingError(Exception):
    pass


class MalformedFileError(StagingError):
    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


class ChecksumMismatchError(StagingError):
    pass


def file_crc32c(path: str | os.PathLike) -> str:
    value = 0
    with open(path, "rb") as fh:
        while chunk := fh.read(1 << 20):
            value = _crc32c.crc32c(chunk, value)
    return f"{value:08x}"


def read_csv_table(path: str | os.PathLike) -> tuple[list[str], list[list[str]]]:
    """Header and rows of a CSV file; a row of the wrong arity raises with its line number."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, strict=True)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedFileError(path, 1, "missing header row") from None
        except csv.Error as exc:
            raise MalformedFileError(path, reader.line_num, str(exc)) from None
        rows = []
        try:
            for row in reader:
                if len(row) != len(header):
                    raise MalformedFileError(path, reader.line_num,
                                             f"expected {len(header)} fields, got {len(row)}")
                rows.append(row)
        except csv.Error as exc:
            raise MalformedFileError(path, reader.line_num, str(exc)) from None
    return header, rows


def write_csv_table(path: str | os.PathLike, header, rows) -> int:
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow(row)
            n += 1
    return n


def write_manifest(directory: str | os.PathLike, dataset_id: str, row_counts: Mapping[str, int]) -> dict:
    directory = Path(directory)
    doc = {"dataset_id": dataset_id, "tables": {}}
    for table in sorted(row_counts):
        fname = f"{table}.csv"
        doc["tables"][table] = {"file": fname, "rows": row_counts[table],
                                "crc32c": file_crc32c(directory / fname)}
    (directory / MANIFEST).write_text(json.dumps(doc, indent=1, sort_keys=True), encoding="utf-8")
    return doc


class _LazyTables(Mapping):
    def __init__(self, ds: "StagedDataset"):
        self._ds = ds

    def __getitem__(self, table):
        if table not in self._ds.source_manifest["tables"]:
            raise KeyError(table)
        header, rows = self._ds.table_rows(table)
        return [dict(zip(header, r)) for r in rows]

    def __iter__(self):
        return iter(sorted(self._ds.source_manifest["tables"]))

    def __len__(self):
        return len(self._ds.source_manifest["tables"])


@dataclass
class StagedDataset:
    dataset_id: str
    path: Path
    source_manifest: dict = field(repr=False)

    @property
    def tables(self) -> Mapping[str, list[dict]]:
        """Table name -> raw records (all values are the original strings)."""
        return _LazyTables(self)

    def table_names(self) -> list[str]:
        return sorted(self.source_manifest["tables"])

    def has_table(self, table: str) -> bool:
        return table in self.source_manifest["tables"]

    def row_count(self, table: str) -> int:
        return self.source_manifest["tables"][table]["rows"]

    def table_rows(self, table: str) -> tuple[list[str], list[list[str]]]:
        meta = self.source_manifest["tables"][table]
        return read_csv_table(self.path / meta["file"])

    def iter_records(self, table: str) -> Iterator[dict]:
        header, rows = self.table_rows(table)
        for r in rows:
            yield dict(zip(header, r))


def verify_dataset(source: Path) -> dict:
    """Check a source directory against its manifest; returns the manifest."""
    mpath = source / MANIFEST
    if not mpath.exists():
        raise MalformedFileError(mpath, 0, "manifest.json missing")
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedFileError(mpath, exc.lineno, str(exc)) from None
    for table, meta in sorted(manifest.get("tables", {}).items()):
        path = source / meta["file"]
        if not path.exists():
            raise MalformedFileError(path, 0, "file listed in manifest is missing")
        crc = file_crc32c(path)
        if crc != meta["crc32c"]:
            raise ChecksumMismatchError(f"{path}: crc32c {crc} != manifest {meta['crc32c']}")
        _, rows = read_csv_table(path)
        if len(rows) != meta["rows"]:
            raise MalformedFileError(path, len(rows) + 1,
                                     f"{len(rows)} rows but manifest says {meta['rows']}")
    return manifest


class RawStagingStore:
    """Append-only store of verbatim dataset copies under ``<root>/<dataset_id>/``."""

    def __init__(self, root: str | os.PathLike | None = None):
        self.root = Path(root) if root is not None else None
        self._datasets: dict[str, StagedDataset] = {}
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
            for d in sorted(self.root.iterdir()):
                if (d / MANIFEST).exists():
                    m = json.loads((d / MANIFEST).read_text(encoding="utf-8"))
                    self._datasets[m["dataset_id"]] = StagedDataset(m["dataset_id"], d, m)

    def datasets(self) -> list[StagedDataset]:
        return [self._datasets[k] for k in sorted(self._datasets)]

    def get(self, dataset_id: str) -> StagedDataset:
        return self._datasets[dataset_id]

    def __contains__(self, dataset_id) -> bool:
        return dataset_id in self._datasets

    def stage(self, source: str | os.PathLike) -> StagedDataset:
        source = Path(source)
        manifest = verify_dataset(source)
        ds_id = manifest.get("dataset_id") or source.name
        manifest["dataset_id"] = ds_id
        existing = self._datasets.get(ds_id)
        if existing is not None:
            if _content_key(existing.source_manifest) != _content_key(manifest):
                raise StagingError(f"dataset {ds_id} already staged with different content")
            return existing
        if self.root is None:
            ds = StagedDataset(ds_id, source, manifest)
        else:
            dest = self.root / ds_id
            tmp = self.root / f".{ds_id}.tmp"
            shutil.rmtree(tmp, ignore_errors=True)
            tmp.mkdir()
            for meta in manifest["tables"].values():
                shutil.copyfile(source / meta["file"], tmp / meta["file"])
            (tmp / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True), encoding="utf-8")
            os.replace(tmp, dest)
            ds = StagedDataset(ds_id, dest, manifest)
        self._datasets[ds_id] = ds
        return ds

    def stage_records(self, dataset_id: str, tables: Mapping[str, list[dict]]) -> StagedDataset:
        """Stage in-memory records (e.g. a drained hot collection) as a new dataset."""
        if dataset_id in self._datasets:
            raise StagingError(f"dataset {dataset_id} already staged")
        if self.root is None:
            raise StagingError("record staging needs an on-disk staging root")
        tmp = self.root / f".{dataset_id}.src"
        shutil.rmtree(tmp, ignore_errors=True)
        tmp.mkdir()
        counts = {}
        for table, records in tables.items():
            header = sorted({k for r in records for k in r})
            counts[table] = write_csv_table(
                tmp / f"{table}.csv", header,
                (["" if r.get(h) is None else str(r.get(h)) for h in header] for r in records))
        write_manifest(tmp, dataset_id, counts)
        try:
            return self.stage(tmp)
        finally:
            shutil.rmtree(tmp, ignore_errors=True)


def _content_key(manifest: dict):
    return sorted((t, m["rows"], m["crc32c"]) for t, m in manifest["tables"].items())


def stage_raw_dataset(source: str | os.PathLike, store: RawStagingStore | None = None) -> StagedDataset:
    return (store or RawStagingStore()).stage(source)
