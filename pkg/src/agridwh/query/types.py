"""Typing rules of the dialect, shared by both executors."""
from __future__ import annotations

from ..storage.values import to_epoch_days
from .parser import QueryError

NUMERIC = ("int64", "float64")


def literal_kind(value) -> str:
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int64"
    if isinstance(value, float):
        return "float64"
    return "text"


def literal_value(value, target_kind: str | None):
    """Internal value of a literal compared against a column of ``target_kind``."""
    if target_kind == "date" and isinstance(value, str):
        try:
            return to_epoch_days(value)
        except ValueError:
            raise QueryError(f"invalid date literal {value!r}") from None
    return value


def check_comparable(left: str, right: str, op: str, context: str = "") -> None:
    """Raise unless values of these kinds may be compared with ``op``.

    A text literal compared with a date column arrives here as ("date", "date").
    """
    if op == "LIKE":
        if left != "text" or right != "text":
            raise QueryError(f"LIKE needs text operands, got {left} and {right}{context}")
        return
    if left in NUMERIC and right in NUMERIC:
        return
    if left == right:
        if op == ">=" and left == "bool":
            raise QueryError(f">= is not defined for bool{context}")
        return
    raise QueryError(f"cannot compare {left} with {right}{context}")


def aggregate_kind(func: str, arg_kind: str | None) -> str:
    if func == "COUNT":
        return "int64"
    if func == "SUM":
        if arg_kind not in NUMERIC:
            raise QueryError(f"SUM needs a numeric column, got {arg_kind}")
        return arg_kind
    if func == "MAX":
        return arg_kind
    raise QueryError(f"unknown aggregate {func}")


def union_kind(a: str, b: str) -> str:
    if a == b:
        return a
    if a in NUMERIC and b in NUMERIC:
        return "float64"
    raise QueryError(f"UNION column kinds differ: {a} vs {b}")


def match_name(candidates: list[str], wanted: str) -> list[int]:
    """Indices whose name matches exactly, else case-insensitively."""
    exact = [i for i, c in enumerate(candidates) if c == wanted]
    if exact:
        return exact
    low = wanted.lower()
    return [i for i, c in enumerate(candidates) if c is not None and c.lower() == low]
