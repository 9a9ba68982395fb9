"""Column-level predicates evaluated segment-at-a-time by ``ColumnStore.scan``.

A comparison involving a null fails; AND/OR then combine plain booleans.
"""
from __future__ import annotations

import operator
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .values import coerce, like_regex

_OPS = {
    "=": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}

# column name -> (values, null mask, kind)
Getter = Callable[[str], tuple[np.ndarray, np.ndarray, str]]


@dataclass(frozen=True)
class Col:
    name: str


@dataclass(frozen=True)
class Cmp:
    left: object  # Col or literal
    op: str
    right: object

    def columns(self) -> set[str]:
        return {x.name for x in (self.left, self.right) if isinstance(x, Col)}

    def mask(self, get: Getter, n: int) -> np.ndarray:
        lv, ln, lk = _operand(self.left, get, n, _other_kind(self.right, get))
        rv, rn, rk = _operand(self.right, get, n, lk)
        if self.op == "LIKE":
            if not isinstance(self.right, Col):
                rx = like_regex(rv)
                if isinstance(lv, np.ndarray):
                    out = np.fromiter((rx.fullmatch(s) is not None for s in lv), bool, count=n)
                else:
                    out = np.full(n, rx.fullmatch(lv) is not None)
            else:
                out = np.fromiter((like_regex(p).fullmatch(s) is not None
                                   for s, p in zip(np.broadcast_to(lv, n), rv)), bool, count=n)
        else:
            out = np.asarray(_OPS[self.op](lv, rv), dtype=bool)
            if out.ndim == 0:
                out = np.full(n, bool(out))
        return out & ~ln & ~rn


@dataclass(frozen=True)
class In:
    column: str
    values: frozenset

    def columns(self) -> set[str]:
        return {self.column}

    def mask(self, get: Getter, n: int) -> np.ndarray:
        vals, nulls, kind = get(self.column)
        wanted = {coerce(kind, v) for v in self.values if v is not None}
        if not wanted:
            return np.zeros(n, dtype=bool)
        if kind == "text":
            out = np.fromiter((v in wanted for v in vals), bool, count=n)
        else:
            out = np.isin(vals, np.array(sorted(wanted), dtype=vals.dtype))
        return out & ~nulls


@dataclass(frozen=True)
class And:
    parts: tuple

    def columns(self) -> set[str]:
        return set().union(*(p.columns() for p in self.parts))

    def mask(self, get: Getter, n: int) -> np.ndarray:
        out = np.ones(n, dtype=bool)
        for p in self.parts:
            out &= p.mask(get, n)
        return out


@dataclass(frozen=True)
class Or:
    parts: tuple

    def columns(self) -> set[str]:
        return set().union(*(p.columns() for p in self.parts))

    def mask(self, get: Getter, n: int) -> np.ndarray:
        out = np.zeros(n, dtype=bool)
        for p in self.parts:
            out |= p.mask(get, n)
        return out


def _other_kind(x, get):
    return get(x.name)[2] if isinstance(x, Col) else None


def _operand(x, get, n, other_kind):
    if isinstance(x, Col):
        return get(x.name)
    kind = other_kind or "text"
    value = coerce(kind, x) if kind != "text" else x
    return value, np.zeros(n, dtype=bool), kind


def evaluate_row(pred, row: dict) -> bool:
    """Row-at-a-time reference semantics of a predicate (used by tests and hot scans)."""
    if isinstance(pred, And):
        return all(evaluate_row(p, row) for p in pred.parts)
    if isinstance(pred, Or):
        return any(evaluate_row(p, row) for p in pred.parts)
    if isinstance(pred, In):
        v = row.get(pred.column)
        return v is not None and v in pred.values
    lv = row.get(pred.left.name) if isinstance(pred.left, Col) else pred.left
    rv = row.get(pred.right.name) if isinstance(pred.right, Col) else pred.right
    if lv is None or rv is None:
        return False
    if pred.op == "LIKE":
        return like_regex(rv).fullmatch(lv) is not None
    try:
        return bool(_OPS[pred.op](lv, rv))
    except TypeError:
        return False
