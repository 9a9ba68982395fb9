"""Typed value handling shared by the storage tiers."""
from __future__ import annotations

import datetime as _dt
import functools
import math
import re

import numpy as np

EPOCH = _dt.date(1970, 1, 1)
_EPOCH_ORDINAL = EPOCH.toordinal()

DTYPES = {
    "int64": np.dtype("<i8"),
    "float64": np.dtype("<f8"),
    "date": np.dtype("<i8"),
    "bool": np.dtype("bool"),
    "text": np.dtype("O"),
}
PLACEHOLDER = {"int64": 0, "float64": 0.0, "date": 0, "bool": False, "text": ""}

INT64_MIN = -(2 ** 63)
INT64_MAX = 2 ** 63 - 1


class TypeMismatchError(ValueError):
    """A value cannot be stored in a column of the given kind."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


def to_epoch_days(value) -> int:
    if isinstance(value, _dt.datetime):
        value = value.date()
    if isinstance(value, _dt.date):
        return value.toordinal() - _EPOCH_ORDINAL
    if isinstance(value, str):
        return _dt.date.fromisoformat(value.strip()[:10]).toordinal() - _EPOCH_ORDINAL
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return int(value)
    raise TypeError(f"not a date: {value!r}")


@functools.lru_cache(maxsize=65536)
def iso_date(days: int) -> str:
    return _dt.date.fromordinal(int(days) + _EPOCH_ORDINAL).isoformat()


def coerce(kind: str, value):
    """Convert a Python value to the in-memory representation of ``kind``.

    ``None`` passes through (null).  Text for numeric kinds is parsed, so the
    same function serves both typed loads and CSV ingestion.
    """
    if value is None:
        return None
    if kind == "int64":
        if isinstance(value, bool):
            raise TypeError("bool in int64 column")
        if isinstance(value, (int, np.integer)):
            v = int(value)
        elif isinstance(value, str):
            v = int(value.strip())
        elif isinstance(value, (float, np.floating)) and float(value).is_integer():
            v = int(value)
        else:
            raise TypeError(f"not an int64: {value!r}")
        if not INT64_MIN <= v <= INT64_MAX:
            raise TypeError(f"int64 out of range: {value!r}")
        return v
    if kind == "float64":
        if isinstance(value, bool):
            raise TypeError("bool in float64 column")
        if isinstance(value, (int, float, np.integer, np.floating)):
            return float(value)
        if isinstance(value, str):
            v = float(value.strip())
            if math.isnan(v):
                raise TypeError("NaN not allowed")
            return v
        raise TypeError(f"not a float64: {value!r}")
    if kind == "date":
        return to_epoch_days(value)
    if kind == "bool":
        if isinstance(value, (bool, np.bool_)):
            return bool(value)
        if isinstance(value, str):
            low = value.strip().lower()
            if low in ("true", "1", "t", "yes"):
                return True
            if low in ("false", "0", "f", "no"):
                return False
        if isinstance(value, (int, np.integer)) and value in (0, 1):
            return bool(value)
        raise TypeError(f"not a bool: {value!r}")
    if kind == "text":
        if not isinstance(value, str):
            raise TypeError(f"not text: {value!r}")
        return value
    raise TypeError(f"unknown kind {kind!r}")


def coerce_text(kind: str, raw: str):
    """Parse one CSV cell; the empty string is null."""
    if raw == "":
        return None
    return coerce(kind, raw)


def to_output(kind: str, value):
    """Internal value -> user-facing value (dates become ISO strings)."""
    if value is None:
        return None
    if kind == "date":
        return iso_date(value)
    return value


@functools.lru_cache(maxsize=1024)
def like_regex(pattern: str) -> re.Pattern:
    """Compile a LIKE pattern (``%`` and ``_`` wildcards, case-insensitive)."""
    parts = []
    for ch in pattern:
        if ch == "%":
            parts.append(".*")
        elif ch == "_":
            parts.append(".")
        else:
            parts.append(re.escape(ch))
    return re.compile("".join(parts), re.IGNORECASE | re.DOTALL)


def like(value: str, pattern: str) -> bool:
    return like_regex(pattern).fullmatch(value) is not None


def empty_array(kind: str, n: int = 0) -> np.ndarray:
    if kind == "text":
        out = np.empty(n, dtype=object)
        out[:] = ""
        return out
    return np.zeros(n, dtype=DTYPES[kind])


def build_column(kind: str, values) -> tuple[np.ndarray, np.ndarray]:
    """List of already-coerced values (``None`` = null) -> (values, null mask)."""
    n = len(values)
    nulls = np.fromiter((v is None for v in values), dtype=bool, count=n)
    if nulls.any():
        fill = PLACEHOLDER[kind]
        values = [fill if v is None else v for v in values]
    if kind == "text":
        arr = np.empty(n, dtype=object)
        arr[:] = values
    else:
        arr = np.array(values, dtype=DTYPES[kind]) if n else empty_array(kind)
    return arr, nulls
