"""Shared fixtures: generated sources and loaded warehouses, built once per session."""
from __future__ import annotations

import shutil

import pytest

from agridwh.etl import SourceGenSpec, etl_run, generate_synthetic_sources
from agridwh.schema import ColumnDef, build_default_schema
from agridwh.storage import TieredWarehouse


@pytest.fixture(scope="session")
def schema():
    return build_default_schema()


def _build(tmp_path_factory, name, spec):
    base = tmp_path_factory.mktemp(name)
    summary = generate_synthetic_sources(spec, base / "src")
    wh = TieredWarehouse(base / "wh")
    report, quarantine = etl_run(base / "src", wh)
    return {"root": base, "src": base / "src", "wh": wh, "summary": summary, "report": report,
            "quarantine": quarantine, "spec": spec}


@pytest.fixture(scope="session")
def small(tmp_path_factory):
    """29 datasets, 200 rows per fact, no injected errors.  Treat as read-only."""
    return _build(tmp_path_factory, "small", SourceGenSpec(seed=42, n_datasets=29, rows_per_fact=200))


@pytest.fixture(scope="session")
def medium(tmp_path_factory):
    """29 datasets, 1000 rows per fact, 1% injected bad foreign keys."""
    return _build(tmp_path_factory, "medium", SourceGenSpec(seed=42, n_datasets=29, rows_per_fact=1000,
                                                             overlap_fraction=0.3, bad_fk_fraction=0.01))


@pytest.fixture
def small_copy(small, tmp_path):
    """A private, writable copy of the small warehouse."""
    dest = tmp_path / "wh"
    shutil.copytree(small["root"] / "wh", dest)
    return TieredWarehouse(dest)


def make_warehouse(tables: dict, root=None) -> TieredWarehouse:
    """In-memory warehouse from ``{name: (["col:kind", ...], rows)}``."""
    wh = TieredWarehouse(root)
    for name, (spec, rows) in tables.items():
        cols = [ColumnDef(*c.split(":")) for c in spec]
        wh.store.load_partitioned_table(name, rows, cols, partition_size=4)
    return wh


# acceptance criteria outcomes, filled in by test_acceptance and printed at the end of the run
CRITERIA: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        status, title, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n} {status}: {title} ({detail})")
