"""Storage tiers: raw staging, columnar analytical store, document hot store."""
from __future__ import annotations

import os
import shutil
from pathlib import Path

from .access import record_access
from .columnar import (DEFAULT_PARTITION_SIZE, Catalog, ColumnSegment, ColumnStore, Partition,
                       StorageError, TableEntry, UnknownColumnError, UnknownSnapshotError,
                       UnknownTableError, WriteInProgressError)
from .hot import HotDocument, HotStore
from .predicates import And, Cmp, Col, In, Or, evaluate_row
from .staging import (ChecksumMismatchError, MalformedFileError, RawStagingStore, StagedDataset,
                      StagingError, stage_raw_dataset)
from .values import TypeMismatchError

__all__ = [
    "And", "Catalog", "ChecksumMismatchError", "Cmp", "Col", "ColumnSegment", "ColumnStore",
    "DEFAULT_PARTITION_SIZE", "HotDocument", "HotStore", "In", "MalformedFileError", "Or",
    "Partition", "RawStagingStore", "StagedDataset", "StagingError", "StorageError", "TableEntry",
    "TieredWarehouse", "TypeMismatchError", "UnknownColumnError", "UnknownSnapshotError",
    "UnknownTableError", "WriteInProgressError", "evaluate_row", "record_access",
    "stage_raw_dataset",
]


class TieredWarehouse:
    """The three tiers under one root.

    ``<root>/raw/`` staging copies, ``<root>/catalog.json`` + ``<root>/tables/``
    for the columnar store, ``<root>/hot/`` collection logs and
    ``<root>/snapshots/<id>/`` for frozen copies of the last two.
    """

    def __init__(self, root: str | os.PathLike | None = None,
                 partition_size: int = DEFAULT_PARTITION_SIZE):
        self.root = Path(root) if root is not None else None
        self.raw = RawStagingStore(self.root / "raw" if self.root else None)
        self.store = ColumnStore(self.root, partition_size)
        self.hot = HotStore(self.root / "hot" if self.root else None)
        self._hot_snapshots: dict[str, object] = {}

    @property
    def catalog(self) -> Catalog:
        return self.store.catalog

    def snapshot(self) -> str:
        snap = self.store.snapshot()
        if self.root is None:
            self._hot_snapshots[snap] = self.hot.copy_state()
        else:
            dest = self.store.snapshot_dir(snap) / "hot"
            if self.hot.root.exists():
                shutil.copytree(self.hot.root, dest)
        return snap

    def recover(self, snapshot_id: str) -> Catalog:
        catalog = self.store.recover(snapshot_id)
        if self.root is None:
            state = self._hot_snapshots.get(snapshot_id)
            if state is not None:
                self.hot.restore_state(state)
        else:
            src = self.store.snapshot_dir(snapshot_id) / "hot"
            shutil.rmtree(self.hot.root, ignore_errors=True)
            if src.exists():
                shutil.copytree(src, self.hot.root)
            else:
                self.hot.root.mkdir(parents=True, exist_ok=True)
            self.hot.reload()
        return catalog
