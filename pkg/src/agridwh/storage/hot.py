"""Document-style hot store backed by append-only JSON-lines logs.

Each collection is ``<root>/hot/<collection>.log``.  A line is one of::

    {"op": "put", "id": ..., "v": version, "body": {...}}
    {"op": "del", "id": ..., "v": version}
    {"op": "batch", "ops": [ ...put/del... ]}

A batch is a single line so a torn write loses the whole batch or none of it.
"""
from __future__ import annotations

import copy
import json
import logging
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .access import note

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HotDocument:
    collection: str
    doc_id: str
    body: dict
    version: int


class HotStore:
    def __init__(self, root: str | os.PathLike | None = None):
        self.root = Path(root) if root is not None else None
        self._docs: dict[str, dict[str, HotDocument]] = {}
        self._versions: dict[str, dict[str, int]] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
            for path in sorted(self.root.glob("*.log")):
                self._replay(path.stem, path)

    def _lock(self, collection: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(collection, threading.Lock())

    def collections(self) -> list[str]:
        return sorted(self._docs)

    # -- writes ------------------------------------------------------------

    def upsert(self, collection: str, doc_id: str, body: dict) -> int:
        with self._lock(collection):
            version = self._versions.get(collection, {}).get(doc_id, 0) + 1
            op = {"op": "put", "id": doc_id, "v": version, "body": body}
            self._append(collection, [op])
            self._apply(collection, op)
            return version

    def delete(self, collection: str, doc_id: str) -> bool:
        with self._lock(collection):
            if doc_id not in self._docs.get(collection, {}):
                return False
            op = {"op": "del", "id": doc_id, "v": self._versions[collection][doc_id]}
            self._append(collection, [op])
            self._apply(collection, op)
            return True

    def replace_collection(self, collection: str, docs: dict[str, dict]) -> int:
        """Make the collection hold exactly ``docs`` in one atomic log record.

        Unchanged documents keep their version; returns the number of writes.
        """
        with self._lock(collection):
            current = self._docs.get(collection, {})
            versions = self._versions.get(collection, {})
            ops = []
            for doc_id in sorted(current):
                if doc_id not in docs:
                    ops.append({"op": "del", "id": doc_id, "v": versions[doc_id]})
            for doc_id in sorted(docs):
                old = current.get(doc_id)
                if old is not None and old.body == docs[doc_id]:
                    continue
                ops.append({"op": "put", "id": doc_id, "v": versions.get(doc_id, 0) + 1,
                            "body": docs[doc_id]})
            if ops:
                self._append(collection, ops)
                for op in ops:
                    self._apply(collection, op)
            self._docs.setdefault(collection, {})
            return len(ops)

    # -- reads -------------------------------------------------------------

    def get(self, collection: str, doc_id: str) -> HotDocument | None:
        note("hot", collection)
        doc = self._docs.get(collection, {}).get(doc_id)
        return None if doc is None else HotDocument(doc.collection, doc.doc_id,
                                                    copy.deepcopy(doc.body), doc.version)

    def scan(self, collection: str, where: Callable[[dict], bool] | None = None) -> list[HotDocument]:
        note("hot", collection)
        docs = self._docs.get(collection, {})
        out = [d for _, d in sorted(docs.items()) if where is None or where(d.body)]
        return [HotDocument(d.collection, d.doc_id, copy.deepcopy(d.body), d.version) for d in out]

    def count(self, collection: str) -> int:
        return len(self._docs.get(collection, {}))

    # -- log handling ------------------------------------------------------

    def _apply(self, collection: str, op: dict) -> None:
        docs = self._docs.setdefault(collection, {})
        versions = self._versions.setdefault(collection, {})
        if op["op"] == "batch":
            for sub in op["ops"]:
                self._apply(collection, sub)
        elif op["op"] == "put":
            docs[op["id"]] = HotDocument(collection, op["id"], copy.deepcopy(op["body"]), op["v"])
            versions[op["id"]] = op["v"]
        elif op["op"] == "del":
            docs.pop(op["id"], None)
            versions[op["id"]] = op["v"]

    def _append(self, collection: str, ops: list[dict]) -> None:
        if self.root is None:
            return
        record = ops[0] if len(ops) == 1 else {"op": "batch", "ops": ops}
        line = json.dumps(record, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n"
        with open(self.root / f"{collection}.log", "a", encoding="utf-8") as fh:
            fh.write(line)
            fh.flush()
            os.fsync(fh.fileno())

    def _replay(self, collection: str, path: Path) -> None:
        self._docs.setdefault(collection, {})
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.endswith("\n"):
                    log.warning("%s:%d: ignoring torn trailing record", path, lineno)
                    break
                self._apply(collection, json.loads(line))

    def reload(self) -> None:
        self._docs.clear()
        self._versions.clear()
        if self.root is not None:
            for path in sorted(self.root.glob("*.log")):
                self._replay(path.stem, path)

    def copy_state(self):
        return copy.deepcopy((self._docs, self._versions))

    def restore_state(self, state) -> None:
        self._docs, self._versions = copy.deepcopy(state)

    def export_records(self, collection: str) -> list[dict[str, Any]]:
        """Flatten a collection to string-keyed records (for draining into staging)."""
        out = []
        for d in self.scan(collection):
            rec = {"doc_id": d.doc_id, "version": d.version}
            rec.update(_flatten(d.body))
            out.append(rec)
        return out


def _flatten(body: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in body.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, (list, tuple)):
            out[key] = json.dumps(v, sort_keys=True)
        else:
            out[key] = v
    return out

