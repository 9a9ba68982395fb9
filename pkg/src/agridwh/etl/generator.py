"""Seeded synthetic source datasets shaped like the farm-management exports.

Each dataset directory holds one CSV per table (19 dimensions, 3 facts) plus
``manifest.json``.  Within a dimension, the first ``m`` entities of every
dataset are *shared*: generated from a dataset-independent stream, so they
are identical everywhere except for their local source id.  The remaining
entities are unique to the dataset (their natural-key text carries the
dataset id), which makes the expected conformed count ``m + n * (k - m)``.

Randomness comes from per-table substreams keyed on (seed, table, scope),
so adding or resizing a table never changes the data of another.
"""
from __future__ import annotations

import datetime as _dt
import json
import shutil
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..schema import ConstellationSchema, build_default_schema
from ..storage.staging import write_csv_table, write_manifest

DIMENSION_SIZES = {
    "Business": 6, "Crop": 12, "CropState": 20, "Farmer": 8, "Fertiliser": 10, "Field": 30,
    "Inspection": 15, "Nutrient": 10, "OperationTime": 40, "Pest": 10, "Plan": 8, "Product": 12,
    "Site": 10, "Spray": 12, "Soil": 10, "Supplier": 6, "Task": 12, "Treatment": 10,
    "WeatherStation": 10,
}
# dimensions whose shared part must be non-empty for the Urea query to mean anything
MIN_SHARED = {"Fertiliser": 1, "OperationTime": 2}

CROPS = ["Wheat", "Barley", "Maize", "Oats", "Canola", "Potato", "Rye", "Sorghum"]
FERTILISERS = ["Urea", "Ammonium Nitrate", "Superphosphate", "Potash", "DAP", "MAP",
               "Calcium Nitrate", "Gypsum", "Lime", "Sulphate of Ammonia", "Kieserite", "Borax"]
FIRST = ["Aoife", "Brian", "Ciara", "Declan", "Eimear", "Fionn", "Grainne", "Hugh", "Kate", "Liam"]
LAST = ["Byrne", "Doyle", "Kelly", "Murphy", "Nolan", "Ryan", "Walsh", "Quinn"]
SPRING_2016 = "2016-04-12"
SPRING_2017 = "2017-04-20"
BASE_DATE = _dt.date(2015, 1, 1)
DATE_SPAN = 4 * 365
NULL_RATE = 0.03
MEASURE_NULL_RATE = 0.02
BAD_FK_BASE = 900_000_000


@dataclass(frozen=True)
class SourceGenSpec:
    seed: int = 0
    n_datasets: int = 29
    rows_per_fact: int = 1000
    overlap_fraction: float = 0.3
    trade_fact_ratio: float = 0.05  # Order and Sale rows per FieldFact row
    bad_fk_fraction: float = 0.0

    def __post_init__(self):
        if self.n_datasets < 1:
            raise ValueError("n_datasets must be >= 1")
        if self.rows_per_fact < 0:
            raise ValueError("rows_per_fact must be >= 0")
        if not 0.0 <= self.overlap_fraction <= 1.0:
            raise ValueError("overlap_fraction must lie in [0, 1]")
        if not 0.0 <= self.bad_fk_fraction <= 1.0:
            raise ValueError("bad_fk_fraction must lie in [0, 1]")


def dataset_ids(n: int) -> list[str]:
    width = max(2, len(str(n)))
    return [f"ds{i + 1:0{width}d}" for i in range(n)]


def shared_count(spec: SourceGenSpec, dimension: str) -> int:
    k = DIMENSION_SIZES[dimension]
    return min(k, max(int(round(spec.overlap_fraction * k)), MIN_SHARED.get(dimension, 0)))


def expected_distinct(spec: SourceGenSpec, dimension: str) -> int:
    """Conformed row count the sharing model predicts for ``dimension``."""
    k, m = DIMENSION_SIZES[dimension], shared_count(spec, dimension)
    return m + spec.n_datasets * (k - m)


def fact_rows(spec: SourceGenSpec, fact: str) -> int:
    if fact == "FieldFact":
        return spec.rows_per_fact
    return int(round(spec.rows_per_fact * spec.trade_fact_ratio))


def _rng(seed: int, *scope: str) -> np.random.Generator:
    return np.random.default_rng([seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF,
                                  *(zlib.crc32(s.encode()) for s in scope)])


def season_of(month: int) -> str:
    if month in (3, 4, 5):
        return "Spring"
    if month in (6, 7, 8):
        return "Summer"
    if month in (9, 10, 11):
        return "Autumn"
    return "Winter"


def _iso(days: int) -> str:
    return (BASE_DATE + _dt.timedelta(days=int(days))).isoformat()


class _DimGen:
    """Attribute values for one dimension; shared rows come from a dataset-free stream."""

    def __init__(self, spec: SourceGenSpec, schema: ConstellationSchema, name: str):
        self.spec = spec
        self.dim = schema.dimension(name)
        self.k = DIMENSION_SIZES[name]
        self.m = shared_count(spec, name)
        self.links = dict(self.dim.links)
        rng = _rng(spec.seed, name, "shared")
        self.shared = [self._entity(rng, i, None) for i in range(self.m)]
        rng = _rng(spec.seed, name, "shared-parents")
        self.shared_parent = {col: [int(rng.integers(0, shared_count(spec, parent)))
                                    for _ in range(self.m)]
                              for col, parent in self.links.items()}

    def _entity(self, rng, idx: int, tag: str | None) -> dict:
        """Non-link attributes of entity ``idx`` (``tag`` None means shared)."""
        name = self.dim.name
        label = f"S{idx:02d}" if tag is None else f"{tag}-{idx:02d}"
        row = {}
        for c in self.dim.columns:
            if c.name == self.dim.surrogate_key or c.name in self.links:
                continue
            key = c.name in self.dim.natural_key
            # two draws per column whatever the outcome, so a null never shifts later columns
            z, x = rng.random(), rng.random()
            if c.nullable and not key and z < NULL_RATE:
                row[c.name] = ""
                continue
            row[c.name] = self._value(c, x, key, label, idx, tag)
        if name == "OperationTime":
            row.update(self._op_time(idx, tag))
        if name == "Crop":
            crop = CROPS[(idx if tag is None else int(rng.integers(0, len(CROPS)))) % len(CROPS)]
            row["CropName"] = crop
            row["VarietyName"] = f"{crop} {label}"
        return row

    def _value(self, c, x, key, label, idx, tag):
        name = self.dim.name
        if name == "Fertiliser" and c.name == "Name":
            if tag is None:
                return FERTILISERS[idx] if idx < len(FERTILISERS) else f"Blend {label}"
            return f"{FERTILISERS[1 + int(x * (len(FERTILISERS) - 1))]} {label}"
        if c.name in ("FarmerName", "SupplierContactName"):
            return f"{FIRST[int(x * len(FIRST))]} {LAST[idx % len(LAST)]} {label}"
        if c.name in ("Email", "ContactEmail"):
            return f"{name.lower()}.{label.lower()}@example.ie"
        if c.kind == "text":
            if key:
                return f"{c.name} {label}"
            return f"{c.name} {int(x * 6)}"
        if c.kind == "float64":
            return f"{x * 100:.2f}"
        if c.kind == "int64":
            return str(int(x * 20))
        if c.kind == "date":
            return _iso(int(x * DATE_SPAN))
        if c.kind == "bool":
            return "true" if x < 0.5 else "false"
        raise ValueError(c.kind)

    def _op_time(self, idx: int, tag: str | None) -> dict:
        if tag is None and idx < 2:
            start = end = (SPRING_2016, SPRING_2017)[idx]
        else:
            if tag is None:
                g = idx
            else:
                d = int(tag[2:]) - 1
                g = self.m + idx * self.spec.n_datasets + d
            s = g % DATE_SPAN
            start, end = _iso(s), _iso(s + 1 + g // DATE_SPAN)
        month = int(start[5:7])
        return {"StartDate": start, "EndDate": end, "Season": season_of(month)}

    def dataset_rows(self, ds: str, parent_ids: dict[str, list[int]]) -> tuple[list[dict], list[int]]:
        """Rows of this dimension for dataset ``ds`` plus source ids by position."""
        rng = _rng(self.spec.seed, self.dim.name, ds)
        ids = [int(v) for v in rng.permutation(self.k) + 1]
        rows = []
        for p in range(self.k):
            if p < self.m:
                row = dict(self.shared[p])
                for col, parent in self.links.items():
                    row[col] = str(parent_ids[parent][self.shared_parent[col][p]])
            else:
                row = self._entity(rng, p - self.m, ds)
                for col, parent in self.links.items():
                    pids = parent_ids[parent]
                    row[col] = str(pids[int(rng.integers(0, len(pids)))])
            row[self.dim.surrogate_key] = str(ids[p])
            rows.append(row)
        return rows, ids


def _fact_columns(schema, fact, n, dim_ids, rng):
    """Column-wise string values of ``n`` rows of ``fact`` for one dataset."""
    fdef = schema.fact(fact)
    cols = {}
    for dim in fdef.dimension_refs:
        ids = np.asarray(dim_ids[dim])
        pos = rng.integers(0, len(ids), size=n)
        if dim in ("Fertiliser", "OperationTime") and n:
            # Urea (shared entity 0) on the two spring anchor dates in every dataset
            pos[: min(n, 2)] = 0
            if dim == "OperationTime" and n > 1:
                pos[1] = 1
        cols[schema.dimension(dim).surrogate_key] = ids[pos]
    for m in fdef.measures:
        if m.kind == "int64":
            vals = rng.integers(1, 500, size=n)
            text = [str(v) for v in vals.tolist()]
        else:
            vals = np.round(rng.random(n) * 1000, 2)
            text = [f"{v:.2f}" for v in vals.tolist()]
        nulls = rng.random(n) < MEASURE_NULL_RATE
        cols[m.name] = [("" if z else t) for t, z in zip(text, nulls.tolist())]
    for k, v in cols.items():
        if isinstance(v, np.ndarray):
            cols[k] = [str(x) for x in v.tolist()]
    return cols


def generate_synthetic_sources(spec: SourceGenSpec, out, schema: ConstellationSchema | None = None
                               ) -> dict:
    """Write ``spec.n_datasets`` source directories under ``out``; returns a summary.

    The summary (also written as ``out/generation.json``) lists per-dataset row
    counts; injected bad foreign keys are logged in ``out/injections.json``.
    """
    schema = schema or build_default_schema()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    gens = {d: _DimGen(spec, schema, d) for d in schema.dimension_order()}
    injections = []
    summary = {"spec": asdict(spec), "datasets": {}}
    for ds in dataset_ids(spec.n_datasets):
        target = out / ds
        tmp = out / f".{ds}.tmp"
        shutil.rmtree(tmp, ignore_errors=True)
        tmp.mkdir()
        ids: dict[str, list[int]] = {}
        counts = {}
        for dim in schema.dimension_order():
            rows, ids[dim] = gens[dim].dataset_rows(ds, ids)
            header = list(schema.dimension(dim).column_names)
            rows.sort(key=lambda r: int(r[schema.dimension(dim).surrogate_key]))
            counts[dim] = write_csv_table(tmp / f"{dim}.csv", header,
                                          ([r[h] for h in header] for r in rows))
        for fact in (f.name for f in schema.facts):
            n = fact_rows(spec, fact)
            cols = _fact_columns(schema, fact, n, ids, _rng(spec.seed, fact, ds))
            fk_cols = [schema.dimension(d).surrogate_key for d in schema.fact(fact).dimension_refs]
            bad = int(round(spec.bad_fk_fraction * n))
            if bad:
                irng = _rng(spec.seed, fact, ds, "inject")
                for r in sorted(irng.choice(n, size=bad, replace=False).tolist()):
                    col = fk_cols[int(irng.integers(0, len(fk_cols)))]
                    cols[col][r] = str(BAD_FK_BASE + r)
                    injections.append({"dataset_id": ds, "table": fact, "row_index": r, "column": col})
            header = [c.name for c in schema.fact_columns(fact)]
            counts[fact] = write_csv_table(tmp / f"{fact}.csv", header,
                                           zip(*(cols[h] for h in header)) if n else ())
        write_manifest(tmp, ds, counts)
        shutil.rmtree(target, ignore_errors=True)
        tmp.rename(target)
        summary["datasets"][ds] = counts
    (out / "injections.json").write_text(json.dumps(injections, indent=1), encoding="utf-8")
    (out / "generation.json").write_text(json.dumps(summary, indent=1, sort_keys=True),
                                         encoding="utf-8")
    summary["injections"] = injections
    return summary
