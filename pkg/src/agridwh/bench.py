"""Query-group workload, timing protocol and speedup reports.

Ten groups of five queries, each group defined by the SQL commands its
queries combine.  Every query is timed on both engines: one untimed warm-up,
then ``reps`` timed runs.  The two engines' answers must agree before any
timing is accepted.  Group ratios are ratios of group means, i.e.
``mean(baseline avgs) / mean(ours avgs)``, not means of per-query ratios.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .query import execute_naive_oracle, execute_plan, parse_query, plan_query
from .query.ast import Aggregate, BoolOp, Comparison, Query, subqueries

ENGINES = ("baseline", "ours")
GROUP_COMMANDS = {
    1: frozenset({"Where"}),
    2: frozenset({"Where", "GroupBy"}),
    3: frozenset({"Where", "LeftRightJoin"}),
    4: frozenset({"Where", "Union"}),
    5: frozenset({"Where", "OrderBy"}),
    6: frozenset({"Where", "LeftRightJoin", "OrderBy"}),
    7: frozenset({"Where", "GroupBy", "Having"}),
    8: frozenset({"Where", "GroupBy", "Having", "OrderBy"}),
    9: frozenset({"Where", "GroupBy", "Having", "LeftRightJoin", "OrderBy"}),
    10: frozenset({"Where", "GroupBy", "Having", "Union", "OrderBy"}),
}
QUERIES_PER_GROUP = 5
MAX_ATTEMPTS = 12


class BenchError(Exception):
    pass


class EmptyWarehouseError(BenchError):
    pass


class ResultMismatchError(BenchError):
    def __init__(self, query_id: int, detail: str = ""):
        super().__init__(f"query {query_id}: engines disagree{': ' + detail if detail else ''}")
        self.query_id = query_id


class IncompleteRecordsError(BenchError):
    pass


@dataclass(frozen=True)
class QueryGroupSpec:
    group_id: int
    commands: frozenset
    queries: tuple  # SQL texts

    def query_ids(self) -> list[int]:
        base = (self.group_id - 1) * QUERIES_PER_GROUP
        return [base + i + 1 for i in range(len(self.queries))]


@dataclass(frozen=True)
class TimingRecord:
    query_id: int
    group: int
    engine: str
    runs: tuple  # seconds

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}")
        if not self.runs or any(not (r > 0 and math.isfinite(r)) for r in self.runs):
            raise ValueError(f"query {self.query_id}: runs must be positive and finite")

    @property
    def avg(self) -> float:
        return math.fsum(self.runs) / len(self.runs)


@dataclass(frozen=True)
class QueryRatio:
    query_id: int
    group: int
    baseline_avg: float
    ours_avg: float
    times: float


@dataclass(frozen=True)
class GroupRatio:
    group: int
    baseline_avg: float
    ours_avg: float
    times: float
    members: int


@dataclass(frozen=True)
class SpeedupReport:
    per_query: tuple
    per_group: tuple
    overall_baseline_avg: float
    overall_ours_avg: float
    overall_times: float

    def group(self, group_id: int) -> GroupRatio:
        return next(g for g in self.per_group if g.group == group_id)


def urea_query(top_year: int = 2016, list_year: int = 2017, top_n: int = 3) -> str:
    """Crops, fertilisers and quantities applied in spring of ``list_year`` on every field and
    site of the ``top_n`` farmers who applied the most Urea in spring of ``top_year``.

    Two nested subqueries: an IN over a FROM-subquery that ranks farmers.
    The dialect has ``>=`` only, so the year's upper bound is written
    literal-first.
    """
    def spring(t, year):
        return (f"{t}.Season LIKE 'spring' AND {t}.StartDate >= '{year}-01-01' "
                f"AND '{year}-12-31' >= {t}.StartDate")
    ranked = (
        "SELECT s2.FarmerID, SUM(f2.appliedQuantity) AS total FROM FieldFact f2 "
        "JOIN Fertiliser fe2 ON f2.FertiliserID = fe2.FertiliserID "
        "JOIN OperationTime t2 ON f2.OperationTimeID = t2.OperationTimeID "
        "JOIN Field fl2 ON f2.FieldID = fl2.FieldID "
        "JOIN Site s2 ON fl2.SiteID = s2.SiteID "
        f"WHERE fe2.Name = 'Urea' AND {spring('t2', top_year)} "
        f"GROUP BY s2.FarmerID ORDER BY total DESC LIMIT {top_n}")
    return (
        "SELECT fa.FarmerName, s.SiteName, fl.FieldName, c.CropName, fe.Name, ff.appliedQuantity "
        "FROM FieldFact ff "
        "JOIN Crop c ON ff.CropID = c.CropID "
        "JOIN Fertiliser fe ON ff.FertiliserID = fe.FertiliserID "
        "JOIN OperationTime t ON ff.OperationTimeID = t.OperationTimeID "
        "JOIN Field fl ON ff.FieldID = fl.FieldID "
        "JOIN Site s ON fl.SiteID = s.SiteID "
        "JOIN Farmer fa ON s.FarmerID = fa.FarmerID "
        f"WHERE {spring('t', list_year)} "
        f"AND fa.FarmerID IN (SELECT top.FarmerID FROM ({ranked}) top)")


# -- command-set inspection ------------------------------------------------------

def query_commands(q: Query) -> frozenset:
    """SQL commands used anywhere in ``q``, subqueries included."""
    cmds = set()
    for sub in subqueries(q):
        cmds |= query_commands(sub)
    for sel in q.selects:
        if sel.where is not None:
            cmds.add("Where")
        if sel.group_by:
            cmds.add("GroupBy")
        if sel.having is not None:
            cmds.add("Having")
        if any(j.kind in ("LEFT", "RIGHT") for j in sel.joins):
            cmds.add("LeftRightJoin")
        if any(j.kind == "INNER" for j in sel.joins):
            cmds.add("InnerJoin")
    if len(q.selects) > 1:
        cmds.add("Union")
    if q.order_by:
        cmds.add("OrderBy")
    if q.limit is not None:
        cmds.add("Limit")
    return frozenset(cmds)


def query_operators(q: Query) -> set:
    """Which of And, Or, >=, Like, Max, Sum, Count the query uses, subqueries included."""
    ops = set()
    for sub in subqueries(q):
        ops |= query_operators(sub)

    def conds(c):
        if c is None:
            return
        if isinstance(c, BoolOp):
            ops.add(c.op.title())
            for p in c.parts:
                conds(p)
        elif isinstance(c, Comparison):
            if c.op == ">=":
                ops.add(">=")
            elif c.op == "LIKE":
                ops.add("Like")
            for e in (c.left, c.right):
                if isinstance(e, Aggregate):
                    ops.add(e.func.title())

    for sel in q.selects:
        conds(sel.where)
        conds(sel.having)
        for item in sel.items:
            if isinstance(item.expr, Aggregate):
                ops.add(item.expr.func.title())
    return ops


# -- literal sources -------------------------------------------------------------

class _Literals:
    """Draws literals from the loaded data so predicates select something."""

    def __init__(self, warehouse, rng: np.random.Generator):
        self.store = getattr(warehouse, "store", warehouse)
        self.wh = warehouse
        self.rng = rng
        self._cols = {}

    def _column(self, table, col):
        key = (table, col)
        if key not in self._cols:
            arrays, _ = self.store.scan_arrays(table, projection=[col])
            vals, nulls = arrays[col]
            self._cols[key] = vals[~nulls]
        return self._cols[key]

    def num(self, table, col, lo=0.5, hi=0.95) -> str:
        vals = self._column(table, col)
        if len(vals) == 0:
            return "0"
        q = float(np.quantile(vals, self.rng.uniform(lo, hi)))
        if vals.dtype.kind == "i":
            return str(int(q))
        return repr(math.floor(q * 100) / 100)

    def date(self, table, col, lo=0.3, hi=0.8) -> str:
        vals = self._column(table, col)
        q = int(np.quantile(vals, self.rng.uniform(lo, hi)))
        from .storage.values import iso_date
        return f"'{iso_date(q)}'"

    def text(self, table, col) -> str:
        vals = sorted(set(self._column(table, col).tolist()))
        return _quote(vals[int(self.rng.integers(0, len(vals)))])

    def prefix(self, table, col, n=3) -> str:
        vals = sorted(set(self._column(table, col).tolist()))
        v = vals[int(self.rng.integers(0, len(vals)))]
        return _quote(v[:n] + "%")

    def having(self, sql: str, col: int, lo=0.2, hi=0.7) -> str:
        """Threshold between the ``lo`` and ``hi`` quantiles of an aggregate column of ``sql``."""
        res = execute_plan(plan_query(parse_query(sql), self.wh), self.wh)
        vals = [r[col] for r in res.rows if r[col] is not None]
        if not vals:
            return "0"
        q = float(np.quantile(np.array(vals, dtype=float), self.rng.uniform(lo, hi)))
        if all(isinstance(v, int) for v in vals):
            return str(int(q))
        return repr(math.floor(q * 100) / 100)


def _quote(s: str) -> str:
    return "'" + s.replace("'", "''") + "'"


# each template: (literals) -> SQL text
def _g1(L):
    return [
        lambda: f"SELECT FieldID, appliedQuantity, appliedCost FROM FieldFact "
                f"WHERE appliedQuantity >= {L.num('FieldFact', 'appliedQuantity', 0.9, 0.99)} "
                f"AND appliedCost >= {L.num('FieldFact', 'appliedCost', 0.3, 0.7)}",
        lambda: f"SELECT Name, GroupName FROM Fertiliser WHERE Name LIKE {L.prefix('Fertiliser', 'Name')} "
                f"OR Status = {L.text('Fertiliser', 'Status')}",
        lambda: f'SELECT quantityOrdered, totalCost FROM "Order" '
                f"WHERE quantityOrdered >= {L.num('Order', 'quantityOrdered', 0.8, 0.95)} "
                f"OR discount >= {L.num('Order', 'discount', 0.9, 0.99)}",
        lambda: f"SELECT CropID, revenue FROM Sale WHERE revenue >= {L.num('Sale', 'revenue', 0.6, 0.9)} "
                f"AND margin >= {L.num('Sale', 'margin', 0.3, 0.6)}",
        lambda: f"SELECT FarmerName, Email FROM Farmer WHERE FarmerName LIKE {L.prefix('Farmer', 'FarmerName', 2)}",
    ]


def _g2(L):
    return [
        lambda: f"SELECT FertiliserID, SUM(appliedQuantity) AS total FROM FieldFact "
                f"WHERE appliedCost >= {L.num('FieldFact', 'appliedCost', 0.5, 0.9)} GROUP BY FertiliserID",
        lambda: f'SELECT SupplierID, COUNT(*) AS n, MAX(totalCost) FROM "Order" '
                f"WHERE deliveryDays >= {L.num('Order', 'deliveryDays', 0.3, 0.8)} GROUP BY SupplierID",
        lambda: f"SELECT BusinessID, SUM(quantitySold) FROM Sale WHERE discount >= "
                f"{L.num('Sale', 'discount', 0.6, 0.9)} OR margin >= {L.num('Sale', 'margin', 0.8, 0.95)} "
                f"GROUP BY BusinessID",
        lambda: f"SELECT Season, COUNT(*) FROM OperationTime WHERE StartDate >= "
                f"{L.date('OperationTime', 'StartDate')} GROUP BY Season",
        lambda: f"SELECT FieldID, MAX(yieldEstimate), COUNT(*) FROM FieldFact WHERE areaTreated >= "
                f"{L.num('FieldFact', 'areaTreated', 0.4, 0.8)} AND durationHours >= "
                f"{L.num('FieldFact', 'durationHours', 0.4, 0.8)} GROUP BY FieldID",
    ]


def _g3(L):
    return [
        lambda: f'SELECT o.quantityOrdered, s.SupplierName FROM "Order" o LEFT JOIN Supplier s '
                f"ON o.SupplierID = s.SupplierID WHERE o.totalCost >= {L.num('Order', 'totalCost', 0.7, 0.95)}",
        lambda: f"SELECT sa.revenue, b.Name FROM Sale sa RIGHT JOIN Business b ON sa.BusinessID = b.BusinessID "
                f"WHERE b.Name LIKE {L.prefix('Business', 'Name', 6)} OR sa.revenue >= "
                f"{L.num('Sale', 'revenue', 0.9, 0.99)}",
        lambda: f'SELECT o.totalCost, p.ProductName FROM "Order" o LEFT JOIN Product p ON o.ProductID = '
                f"p.ProductID WHERE p.GroupName = {L.text('Product', 'GroupName')} AND o.discount >= "
                f"{L.num('Order', 'discount', 0.5, 0.9)}",
        lambda: f"SELECT sa.quantitySold, f.FarmerName FROM Sale sa LEFT JOIN Farmer f ON sa.FarmerID = "
                f"f.FarmerID WHERE sa.margin >= {L.num('Sale', 'margin', 0.7, 0.95)}",
        lambda: f"SELECT fl.FieldName, s.SiteName FROM Field fl RIGHT JOIN Site s ON fl.SiteID = s.SiteID "
                f"WHERE s.Country = {L.text('Site', 'Country')} OR fl.Area >= {L.num('Field', 'Area', 0.6, 0.9)}",
    ]


def _g4(L):
    return [
        lambda: f"SELECT FertiliserID FROM FieldFact WHERE appliedQuantity >= "
                f"{L.num('FieldFact', 'appliedQuantity', 0.9, 0.99)} UNION SELECT FertiliserID FROM FieldFact "
                f"WHERE appliedCost >= {L.num('FieldFact', 'appliedCost', 0.9, 0.99)}",
        lambda: f'SELECT FarmerID, SupplierID FROM "Order" WHERE totalCost >= '
                f"{L.num('Order', 'totalCost', 0.7, 0.95)} UNION SELECT FarmerID, BusinessID FROM Sale "
                f"WHERE revenue >= {L.num('Sale', 'revenue', 0.7, 0.95)}",
        lambda: f"SELECT Name FROM Fertiliser WHERE Name LIKE {L.prefix('Fertiliser', 'Name')} UNION "
                f"SELECT ProductName FROM Product WHERE GroupName = {L.text('Product', 'GroupName')}",
        lambda: f"SELECT CropID, OperationTimeID FROM Sale WHERE quantitySold >= "
                f"{L.num('Sale', 'quantitySold', 0.8, 0.95)} UNION SELECT CropID, OperationTimeID FROM "
                f"FieldFact WHERE yieldEstimate >= {L.num('FieldFact', 'yieldEstimate', 0.95, 0.995)}",
        lambda: f"SELECT StartDate FROM OperationTime WHERE Season LIKE 'spring' AND StartDate >= "
                f"{L.date('OperationTime', 'StartDate', 0.1, 0.6)} UNION SELECT MeasureDate FROM "
                f"WeatherStation WHERE AirTemperature >= {L.num('WeatherStation', 'AirTemperature', 0.5, 0.9)}",
    ]


def _g5(L):
    return [
        lambda: f"SELECT FieldID, appliedQuantity FROM FieldFact WHERE appliedQuantity >= "
                f"{L.num('FieldFact', 'appliedQuantity', 0.97, 0.995)} ORDER BY appliedQuantity DESC",
        lambda: f'SELECT quantityOrdered, totalCost FROM "Order" WHERE totalCost >= '
                f"{L.num('Order', 'totalCost', 0.6, 0.9)} ORDER BY totalCost",
        lambda: f"SELECT CropName, VarietyName, EstYield FROM Crop WHERE EstYield >= "
                f"{L.num('Crop', 'EstYield', 0.5, 0.9)} OR CropName LIKE {L.prefix('Crop', 'CropName')} "
                f"ORDER BY EstYield DESC, VarietyName",
        lambda: f"SELECT revenue, margin FROM Sale WHERE revenue >= {L.num('Sale', 'revenue', 0.4, 0.8)} "
                f"AND margin >= {L.num('Sale', 'margin', 0.4, 0.8)} ORDER BY margin DESC",
        lambda: f"SELECT StartDate, EndDate, Season FROM OperationTime WHERE StartDate >= "
                f"{L.date('OperationTime', 'StartDate')} ORDER BY StartDate",
    ]


def _g6(L):
    return [
        lambda: f'SELECT o.totalCost, s.SupplierName FROM "Order" o LEFT JOIN Supplier s ON o.SupplierID = '
                f"s.SupplierID WHERE o.totalCost >= {L.num('Order', 'totalCost', 0.8, 0.95)} "
                f"ORDER BY o.totalCost DESC",
        lambda: f"SELECT sa.revenue, c.CropName FROM Sale sa LEFT JOIN Crop c ON sa.CropID = c.CropID "
                f"WHERE c.CropName LIKE {L.prefix('Crop', 'CropName')} AND sa.revenue >= "
                f"{L.num('Sale', 'revenue', 0.3, 0.7)} ORDER BY sa.revenue",
        lambda: f'SELECT p.ProductName, o.quantityOrdered FROM "Order" o RIGHT JOIN Product p ON '
                f"o.ProductID = p.ProductID WHERE o.quantityOrdered >= "
                f"{L.num('Order', 'quantityOrdered', 0.7, 0.95)} ORDER BY o.quantityOrdered DESC",
        lambda: f"SELECT f.FarmerName, sa.margin FROM Sale sa LEFT JOIN Farmer f ON sa.FarmerID = f.FarmerID "
                f"WHERE sa.margin >= {L.num('Sale', 'margin', 0.7, 0.95)} ORDER BY sa.margin DESC",
        lambda: f"SELECT b.Name, sa.quantitySold FROM Sale sa LEFT JOIN Business b ON sa.BusinessID = "
                f"b.BusinessID WHERE sa.quantitySold >= {L.num('Sale', 'quantitySold', 0.8, 0.95)} "
                f"OR b.Name LIKE {L.prefix('Business', 'Name', 8)} ORDER BY sa.quantitySold",
    ]


def _g7(L):
    def q1():
        c = L.num('FieldFact', 'appliedCost', 0.3, 0.8)
        base = f"SELECT FertiliserID, SUM(appliedQuantity) AS total FROM FieldFact WHERE appliedCost >= {c} " \
               f"GROUP BY FertiliserID"
        return f"{base} HAVING total >= {L.having(base, 1)}"

    def q2():
        d = L.num('Order', 'discount', 0.2, 0.6)
        base = f'SELECT SupplierID, COUNT(*) AS n FROM "Order" WHERE discount >= {d} GROUP BY SupplierID'
        return f"{base} HAVING n >= {L.having(base, 1)}"

    def q3():
        m = L.num('Sale', 'margin', 0.3, 0.7)
        base = f"SELECT CropID, MAX(revenue) AS best FROM Sale WHERE margin >= {m} GROUP BY CropID"
        return f"{base} HAVING best >= {L.having(base, 1)}"

    def q4():
        h = L.num('FieldFact', 'durationHours', 0.3, 0.7)
        base = f"SELECT FieldID, COUNT(*) AS n, SUM(waterVolume) AS water FROM FieldFact " \
               f"WHERE durationHours >= {h} GROUP BY FieldID"
        return f"{base} HAVING n >= {L.having(base, 1, 0.1, 0.4)} AND water >= {L.having(base, 2, 0.1, 0.4)}"

    def q5():
        d = L.date('OperationTime', 'StartDate', 0.1, 0.5)
        base = f"SELECT Season, COUNT(*) AS n FROM OperationTime WHERE StartDate >= {d} GROUP BY Season"
        return f"{base} HAVING n >= {L.having(base, 1)}"
    return [q1, q2, q3, q4, q5]


def _g8(L):
    def q1():
        a = L.num('FieldFact', 'areaTreated', 0.3, 0.8)
        base = f"SELECT PestID, SUM(areaTreated) AS area FROM FieldFact WHERE areaTreated >= {a} GROUP BY PestID"
        return f"{base} HAVING area >= {L.having(base, 1)} ORDER BY area DESC"

    def q2():
        p = L.num('Order', 'unitPrice', 0.2, 0.6)
        base = f'SELECT ProductID, SUM(quantityOrdered) AS qty FROM "Order" WHERE unitPrice >= {p} ' \
               f"GROUP BY ProductID"
        return f"{base} HAVING qty >= {L.having(base, 1)} ORDER BY qty DESC"

    def q3():
        r, d = L.num('Sale', 'revenue', 0.5, 0.8), L.num('Sale', 'discount', 0.7, 0.9)
        base = f"SELECT BusinessID, COUNT(*) AS n, MAX(margin) AS m FROM Sale WHERE revenue >= {r} " \
               f"OR discount >= {d} GROUP BY BusinessID"
        return f"{base} HAVING n >= {L.having(base, 1)} ORDER BY n DESC, BusinessID"

    def q4():
        h = L.num('FieldFact', 'durationHours', 0.5, 0.9)
        base = f"SELECT TaskID, MAX(durationHours) AS longest FROM FieldFact WHERE durationHours >= {h} " \
               f"GROUP BY TaskID"
        return f"{base} HAVING longest >= {L.having(base, 1)} ORDER BY longest"

    def q5():
        d = L.num('Order', 'deliveryDays', 0.2, 0.6)
        base = f'SELECT FarmerID, SUM(totalCost) AS spend FROM "Order" WHERE deliveryDays >= {d} ' \
               f"GROUP BY FarmerID"
        return f"{base} HAVING spend >= {L.having(base, 1)} ORDER BY spend DESC"
    return [q1, q2, q3, q4, q5]


def _g9(L):
    def q1():
        d = L.num('Order', 'discount', 0.2, 0.6)
        base = f'SELECT s.SupplierName, SUM(o.totalCost) AS spend FROM "Order" o LEFT JOIN Supplier s ' \
               f"ON o.SupplierID = s.SupplierID WHERE o.discount >= {d} GROUP BY s.SupplierName"
        return f"{base} HAVING spend >= {L.having(base, 1)} ORDER BY spend DESC"

    def q2():
        m = L.num('Sale', 'margin', 0.2, 0.6)
        base = f"SELECT c.CropName, COUNT(*) AS n FROM Sale sa LEFT JOIN Crop c ON sa.CropID = c.CropID " \
               f"WHERE sa.margin >= {m} GROUP BY c.CropName"
        return f"{base} HAVING n >= {L.having(base, 1)} ORDER BY n DESC"

    def q3():
        r = L.num('Sale', 'revenue', 0.3, 0.7)
        base = f"SELECT b.Name, MAX(sa.revenue) AS top FROM Sale sa RIGHT JOIN Business b ON " \
               f"sa.BusinessID = b.BusinessID WHERE sa.revenue >= {r} GROUP BY b.Name"
        return f"{base} HAVING top >= {L.having(base, 1)} ORDER BY top DESC"

    def q4():
        p = L.num('Order', 'unitPrice', 0.2, 0.6)
        base = f'SELECT p.GroupName, SUM(o.quantityOrdered) AS qty FROM "Order" o LEFT JOIN Product p ' \
               f"ON o.ProductID = p.ProductID WHERE o.unitPrice >= {p} GROUP BY p.GroupName"
        return f"{base} HAVING qty >= {L.having(base, 1)} ORDER BY qty DESC"

    def q5():
        d = L.num('Sale', 'discount', 0.2, 0.6)
        base = f"SELECT f.FarmerName, COUNT(*) AS n, SUM(sa.revenue) AS rev FROM Sale sa LEFT JOIN Farmer f " \
               f"ON sa.FarmerID = f.FarmerID WHERE sa.discount >= {d} GROUP BY f.FarmerName"
        return f"{base} HAVING n >= {L.having(base, 1)} ORDER BY rev DESC"
    return [q1, q2, q3, q4, q5]


def _g10(L):
    def pair(first, second, col, order):
        return f"{first} HAVING {col} >= {L.having(first, 1)} UNION {second} " \
               f"HAVING {col} >= {L.having(second, 1)} ORDER BY {order}"

    def q1():
        c, a = L.num('FieldFact', 'appliedCost', 0.3, 0.8), L.num('FieldFact', 'areaTreated', 0.3, 0.8)
        return pair(f"SELECT FertiliserID AS id, SUM(appliedQuantity) AS total FROM FieldFact "
                    f"WHERE appliedCost >= {c} GROUP BY FertiliserID",
                    f"SELECT PestID AS id, SUM(appliedQuantity) AS total FROM FieldFact "
                    f"WHERE areaTreated >= {a} GROUP BY PestID", "total", "total DESC")

    def q2():
        d, m = L.num('Order', 'discount', 0.2, 0.6), L.num('Sale', 'margin', 0.2, 0.6)
        return pair(f'SELECT SupplierID AS id, SUM(totalCost) AS amount FROM "Order" WHERE discount >= {d} '
                    f"GROUP BY SupplierID",
                    f"SELECT BusinessID AS id, SUM(revenue) AS amount FROM Sale WHERE margin >= {m} "
                    f"GROUP BY BusinessID", "amount", "amount DESC")

    def q3():
        t, r = L.num('Order', 'totalCost', 0.2, 0.6), L.num('Sale', 'revenue', 0.2, 0.6)
        return pair(f'SELECT FarmerID, COUNT(*) AS n FROM "Order" WHERE totalCost >= {t} GROUP BY FarmerID',
                    f"SELECT FarmerID, COUNT(*) AS n FROM Sale WHERE revenue >= {r} GROUP BY FarmerID",
                    "n", "n DESC, FarmerID")

    def q4():
        y, q = L.num('FieldFact', 'yieldEstimate', 0.5, 0.9), L.num('Sale', 'quantitySold', 0.2, 0.6)
        return pair(f"SELECT CropID, MAX(appliedCost) AS peak FROM FieldFact WHERE yieldEstimate >= {y} "
                    f"GROUP BY CropID",
                    f"SELECT CropID, MAX(revenue) AS peak FROM Sale WHERE quantitySold >= {q} GROUP BY CropID",
                    "peak", "peak")

    def q5():
        d1 = L.date('OperationTime', 'StartDate', 0.1, 0.5)
        d2 = L.date('OperationTime', 'EndDate', 0.3, 0.7)
        return pair(f"SELECT Season, COUNT(*) AS n FROM OperationTime WHERE StartDate >= {d1} GROUP BY Season",
                    f"SELECT Season, COUNT(*) AS n FROM OperationTime WHERE EndDate >= {d2} GROUP BY Season",
                    "n", "n DESC")
    return [q1, q2, q3, q4, q5]


_TEMPLATES = {1: _g1, 2: _g2, 3: _g3, 4: _g4, 5: _g5, 6: _g6, 7: _g7, 8: _g8, 9: _g9, 10: _g10}


def generate_query_suite(seed: int, schema, warehouse) -> list[QueryGroupSpec]:
    """Ten groups of five queries with literals drawn from ``warehouse``.

    Each query is retried with fresh literals until the analytical engine
    returns at least one row (or the attempts run out).
    """
    store = getattr(warehouse, "store", warehouse)
    for fact in ("FieldFact", "Order", "Sale"):
        if not store.has_table(fact) or store.row_count(fact) == 0:
            raise EmptyWarehouseError(f"warehouse has no {fact} rows; run the ETL first")
    suite = []
    for g in range(1, 11):
        texts = []
        for i in range(QUERIES_PER_GROUP):
            sql = None
            for attempt in range(MAX_ATTEMPTS):
                lit = _Literals(warehouse, np.random.default_rng([seed, g, i, attempt]))
                sql = _TEMPLATES[g](lit)[i]()
                ast = parse_query(sql)
                if query_commands(ast) != GROUP_COMMANDS[g]:
                    raise BenchError(f"group {g} template {i} uses {sorted(query_commands(ast))}")
                if not query_operators(ast):
                    raise BenchError(f"group {g} template {i} uses none of the benchmark operators")
                if len(execute_plan(plan_query(ast, warehouse), warehouse)):
                    break
            texts.append(sql)
        suite.append(QueryGroupSpec(g, GROUP_COMMANDS[g], tuple(texts)))
    return suite


def _default_executors():
    return {
        "baseline": lambda ast, wh: execute_naive_oracle(ast, wh),
        "ours": lambda ast, wh: execute_plan(plan_query(ast, wh), wh),
    }


def run_benchmark(suite, engines=ENGINES, reps: int = 3, warehouse=None, executors=None,
                  progress=None) -> list[TimingRecord]:
    """Warm up, cross-check, then time every query ``reps`` times per engine, strictly sequentially."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    executors = {**_default_executors(), **(executors or {})}
    records = []
    for spec in suite:
        for qid, sql in zip(spec.query_ids(), spec.queries):
            ast = parse_query(sql)
            warm = {e: executors[e](ast, warehouse) for e in engines}
            first = warm[engines[0]]
            for e in engines[1:]:
                if not first.same_as(warm[e]):
                    raise ResultMismatchError(qid, f"{engines[0]} returned {len(first)} rows, "
                                                   f"{e} returned {len(warm[e])}")
            for e in engines:
                runs = []
                for _ in range(reps):
                    t0 = time.perf_counter_ns()
                    executors[e](ast, warehouse)
                    runs.append(max(time.perf_counter_ns() - t0, 1) / 1e9)
                records.append(TimingRecord(qid, spec.group_id, e, tuple(runs)))
            if progress is not None:
                progress(qid, records[-len(engines):])
    return records


def compute_speedups(records, group_size: int | None = QUERIES_PER_GROUP) -> SpeedupReport:
    """Per-query, per-group (ratio of group means) and overall speedups."""
    by_query: dict[int, dict[str, TimingRecord]] = {}
    for r in records:
        slot = by_query.setdefault(r.query_id, {})
        if r.engine in slot:
            raise BenchError(f"duplicate record for query {r.query_id} on {r.engine}")
        slot[r.engine] = r
    if not by_query:
        raise IncompleteRecordsError("no timing records")
    for qid, slot in by_query.items():
        missing = [e for e in ENGINES if e not in slot]
        if missing:
            raise IncompleteRecordsError(f"query {qid} has no record for {', '.join(missing)}")
        if slot["baseline"].group != slot["ours"].group:
            raise BenchError(f"query {qid} is assigned to two groups")
    per_query = []
    for qid in sorted(by_query):
        b, o = by_query[qid]["baseline"], by_query[qid]["ours"]
        per_query.append(QueryRatio(qid, b.group, b.avg, o.avg, b.avg / o.avg))
    groups: dict[int, list[QueryRatio]] = {}
    for q in per_query:
        groups.setdefault(q.group, []).append(q)
    per_group = []
    for g in sorted(groups):
        members = groups[g]
        if group_size is not None and len(members) != group_size:
            raise IncompleteRecordsError(f"group {g} has {len(members)} queries, expected {group_size}")
        b = math.fsum(q.baseline_avg for q in members) / len(members)
        o = math.fsum(q.ours_avg for q in members) / len(members)
        per_group.append(GroupRatio(g, b, o, b / o, len(members)))
    ob = math.fsum(q.baseline_avg for q in per_query) / len(per_query)
    oo = math.fsum(q.ours_avg for q in per_query) / len(per_query)
    report = SpeedupReport(tuple(per_query), tuple(per_group), ob, oo, ob / oo)
    for x in [q.times for q in per_query] + [g.times for g in per_group] + [report.overall_times]:
        if not (math.isfinite(x) and x > 0):
            raise BenchError(f"non-finite or non-positive ratio {x}")
    return report


def emit_report(report: SpeedupReport, out) -> list[Path]:
    """Write per_query.csv, per_group.csv and summary.json; floats round-trip exactly."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    pq, pg, sj = out / "per_query.csv", out / "per_group.csv", out / "summary.json"
    with open(pq, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["query_id", "group", "baseline_avg", "ours_avg", "times"])
        for q in report.per_query:
            w.writerow([q.query_id, q.group, repr(q.baseline_avg), repr(q.ours_avg), repr(q.times)])
    with open(pg, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "baseline_avg", "ours_avg", "times", "members"])
        for g in report.per_group:
            w.writerow([g.group, repr(g.baseline_avg), repr(g.ours_avg), repr(g.times), g.members])
    summary = {"overall_baseline_avg": report.overall_baseline_avg,
               "overall_ours_avg": report.overall_ours_avg,
               "overall_times": report.overall_times,
               "queries": len(report.per_query), "groups": len(report.per_group),
               "groups_faster": sum(1 for g in report.per_group if g.times > 1.0)}
    sj.write_text(json.dumps(summary, indent=1), encoding="utf-8")
    return [pq, pg, sj]


def read_report(out) -> SpeedupReport:
    out = Path(out)
    with open(out / "per_query.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    per_query = tuple(QueryRatio(int(r["query_id"]), int(r["group"]), float(r["baseline_avg"]),
                                 float(r["ours_avg"]), float(r["times"])) for r in rows)
    with open(out / "per_group.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    per_group = tuple(GroupRatio(int(r["group"]), float(r["baseline_avg"]), float(r["ours_avg"]),
                                 float(r["times"]), int(r["members"])) for r in rows)
    s = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    return SpeedupReport(per_query, per_group, s["overall_baseline_avg"], s["overall_ours_avg"],
                         s["overall_times"])


def write_timings(records, path) -> None:
    """Raw timed runs, one line per (query, engine)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["query_id", "group", "engine", "runs", "avg"])
        for r in records:
            w.writerow([r.query_id, r.group, r.engine, " ".join(repr(x) for x in r.runs), repr(r.avg)])


@dataclass
class SuiteFile:
    """Suite texts serialized for reuse across processes."""
    seed: int
    groups: list = field(default_factory=list)

    @classmethod
    def from_suite(cls, seed, suite):
        return cls(seed, [{"group": s.group_id, "queries": list(s.queries)} for s in suite])

    def to_suite(self) -> list[QueryGroupSpec]:
        return [QueryGroupSpec(g["group"], GROUP_COMMANDS[g["group"]], tuple(g["queries"]))
                for g in self.groups]
