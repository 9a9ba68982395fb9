"""Immutable syntax tree for the supported SQL subset."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union


@dataclass(frozen=True)
class ColumnRef:
    table: str | None
    name: str


@dataclass(frozen=True)
class Literal:
    value: Union[int, float, str, bool]


@dataclass(frozen=True)
class Star:
    pass


@dataclass(frozen=True)
class Aggregate:
    func: str  # MAX, SUM, COUNT
    arg: ColumnRef | None  # None means COUNT(*)


Expr = Union[ColumnRef, Literal, Aggregate]


@dataclass(frozen=True)
class Comparison:
    left: Expr
    op: str  # "=", ">=", "LIKE"
    right: Expr


@dataclass(frozen=True)
class InSubquery:
    expr: ColumnRef
    query: "Query"


@dataclass(frozen=True)
class BoolOp:
    op: str  # AND, OR
    parts: tuple


Condition = Union[Comparison, InSubquery, BoolOp]


@dataclass(frozen=True)
class SelectItem:
    expr: Union[Expr, Star]
    alias: str | None = None


@dataclass(frozen=True)
class TableRef:
    name: str
    alias: str | None = None

    @property
    def label(self) -> str:
        return self.alias or self.name


@dataclass(frozen=True)
class SubqueryRef:
    query: "Query"
    alias: str

    @property
    def label(self) -> str:
        return self.alias


@dataclass(frozen=True)
class Join:
    kind: str  # INNER, LEFT, RIGHT
    source: Union[TableRef, SubqueryRef]
    on: tuple  # ((ColumnRef, ColumnRef), ...)


@dataclass(frozen=True)
class OrderItem:
    expr: Expr
    descending: bool = False


@dataclass(frozen=True)
class Select:
    items: tuple
    source: Union[TableRef, SubqueryRef]
    joins: tuple = ()
    where: Condition | None = None
    group_by: tuple = ()
    having: Condition | None = None

    def is_aggregate(self) -> bool:
        return bool(self.group_by) or any(isinstance(i.expr, Aggregate) for i in self.items)


@dataclass(frozen=True)
class Query:
    selects: tuple  # one Select, or several combined with UNION
    order_by: tuple = ()
    limit: int | None = None


QueryAst = Query


def walk_conditions(cond):
    """Yield every Comparison / InSubquery leaf of a condition tree."""
    if cond is None:
        return
    if isinstance(cond, BoolOp):
        for p in cond.parts:
            yield from walk_conditions(p)
    else:
        yield cond


def condition_exprs(cond):
    for leaf in walk_conditions(cond):
        if isinstance(leaf, Comparison):
            yield leaf.left
            yield leaf.right
        else:
            yield leaf.expr


def subqueries(query: Query):
    """Direct child queries (FROM/JOIN subqueries and IN subqueries)."""
    for sel in query.selects:
        for src in (sel.source, *(j.source for j in sel.joins)):
            if isinstance(src, SubqueryRef):
                yield src.query
        for cond in (sel.where, sel.having):
            for leaf in walk_conditions(cond):
                if isinstance(leaf, InSubquery):
                    yield leaf.query


def subquery_depth(query: Query) -> int:
    return max((1 + subquery_depth(q) for q in subqueries(query)), default=0)
