"""Binary segment files: one file per table partition.

Layout (all integers little-endian)::

    b"AGSEG001"
    u32 header length, header JSON {"table", "partition", "rows", "columns": [{"name", "kind"}]}
    per column, in header order:
        u64 n, n bytes   null mask packed with np.packbits(bitorder="little")
        numeric/date:    u64 n, n bytes of <i8 / <f8 values
        bool:            u64 n, n bytes of u1 values
        text:            u64 n, n bytes of <u8 offsets (rows + 1), u64 n, n bytes UTF-8 blob
"""
from __future__ import annotations

import io
import json
import os
import struct
from pathlib import Path

import numpy as np

from .values import DTYPES

MAGIC = b"AGSEG001"


class SegmentFormatError(ValueError):
    pass


def _put(buf: io.BytesIO, payload: bytes) -> None:
    buf.write(struct.pack("<Q", len(payload)))
    buf.write(payload)


def encode(table: str, partition: int, columns: list[tuple[str, str, np.ndarray, np.ndarray]]) -> bytes:
    n = len(columns[0][2]) if columns else 0
    header = {"table": table, "partition": partition, "rows": n,
              "columns": [{"name": c, "kind": k} for c, k, _, _ in columns]}
    hb = json.dumps(header, separators=(",", ":")).encode()
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", len(hb)))
    buf.write(hb)
    for _, kind, values, nulls in columns:
        _put(buf, np.packbits(nulls.astype(bool), bitorder="little").tobytes())
        if kind == "text":
            blobs = [s.encode("utf-8") for s in values]
            offsets = np.zeros(len(blobs) + 1, dtype="<u8")
            if blobs:
                np.cumsum([len(b) for b in blobs], out=offsets[1:])
            _put(buf, offsets.tobytes())
            _put(buf, b"".join(blobs))
        elif kind == "bool":
            _put(buf, values.astype("u1").tobytes())
        else:
            _put(buf, np.ascontiguousarray(values, dtype=DTYPES[kind]).tobytes())
    return buf.getvalue()


def decode(data: bytes):
    """Return (header, {column: (values, nulls)})."""
    if data[:8] != MAGIC:
        raise SegmentFormatError("bad segment magic")
    view = memoryview(data)
    pos = 8
    (hlen,) = struct.unpack_from("<I", data, pos)
    pos += 4
    header = json.loads(bytes(view[pos:pos + hlen]))
    pos += hlen
    n = header["rows"]

    def take():
        nonlocal pos
        (size,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        chunk = view[pos:pos + size]
        if len(chunk) != size:
            raise SegmentFormatError("truncated segment")
        pos += size
        return chunk

    out = {}
    for col in header["columns"]:
        kind = col["kind"]
        nulls = np.unpackbits(np.frombuffer(take(), dtype="u1"), count=n,
                              bitorder="little").astype(bool)
        if kind == "text":
            offsets = np.frombuffer(take(), dtype="<u8")
            blob = bytes(take())
            values = np.empty(n, dtype=object)
            values[:] = [blob[offsets[i]:offsets[i + 1]].decode("utf-8") for i in range(n)]
        elif kind == "bool":
            values = np.frombuffer(take(), dtype="u1").astype(bool)
        else:
            values = np.frombuffer(take(), dtype=DTYPES[kind]).copy()
        out[col["name"]] = (values, nulls)
    if pos != len(data):
        raise SegmentFormatError("trailing bytes in segment")
    return header, out


def write_file(path: Path, payload: bytes) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(payload)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
