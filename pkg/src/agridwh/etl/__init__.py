"""Synthetic sources, dimension conforming and fact loading."""
from __future__ import annotations

from .generator import (DIMENSION_SIZES, SourceGenSpec, dataset_ids, expected_distinct, fact_rows,
                        generate_synthetic_sources, shared_count)
from .pipeline import (REASONS, ConformedDimension, EtlError, EtlReport, FactLoad, QuarantineRecord,
                       conform_dimensions, etl_run, load_fact_table)

__all__ = [
    "ConformedDimension", "DIMENSION_SIZES", "EtlError", "EtlReport", "FactLoad", "QuarantineRecord",
    "REASONS", "SourceGenSpec", "conform_dimensions", "dataset_ids", "etl_run", "expected_distinct",
    "fact_rows", "generate_synthetic_sources", "load_fact_table", "shared_count",
]
