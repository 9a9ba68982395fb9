"""Independent cube oracle: GROUP BY on raw dimension columns, members derived here."""
from __future__ import annotations

import math

from agridwh.query import run_query

CONFIGS = {
    "fieldfact_season_farmer": ("FieldFact", ("time@season", "location@farmer"),
                                ("SUM(appliedQuantity)", "COUNT(*)", "MAX(appliedQuantity)")),
    "order_month_farmer": ("Order", ("time@month", "location@farmer"),
                           ("SUM(quantityOrdered)", "MAX(unitPrice)", "SUM(totalCost)", "COUNT(*)")),
    "sale_variety_year": ("Sale", ("crop@variety", "time@year"),
                          ("SUM(revenue)", "SUM(quantitySold)", "COUNT(*)")),
}

_TIME = {"day": lambda d, s: d, "month": lambda d, s: d[:7], "year": lambda d, s: d[:4],
         "season": lambda d, s: f"{d[:4]}-{s.lower()}"}


def _parse(axis):
    h, _, lv = axis.partition("@")
    return h, lv


def _measure(m):
    agg, _, rest = m.partition("(")
    return rest.rstrip(")"), agg


def groupby_oracle(warehouse, fact, axes, measures, engine="analytic"):
    """{member tuple: measure tuple}, from a SQL GROUP BY merged in Python."""
    joins, cols, member_fns = {}, [], []

    def col(expr):
        if expr not in cols:
            cols.append(expr)
        return cols.index(expr)

    for axis in axes:
        h, lv = _parse(axis)
        if h == "time":
            joins["o"] = 'INNER JOIN OperationTime o ON f.OperationTimeID = o.OperationTimeID'
            i, j = col("o.StartDate"), col("o.Season")
            member_fns.append(lambda r, i=i, j=j, fn=_TIME[lv]: fn(r[i], r[j]))
        elif h == "crop":
            joins["c"] = "INNER JOIN Crop c ON f.CropID = c.CropID"
            i = col("c.VarietyName" if lv == "variety" else "c.CropName")
            member_fns.append(lambda r, i=i: r[i])
        elif h == "location" and fact == "FieldFact":
            joins["fi"] = "INNER JOIN Field fi ON f.FieldID = fi.FieldID"
            if lv == "farmer":
                joins["s"] = "INNER JOIN Site s ON fi.SiteID = s.SiteID"
            i = col({"field": "fi.FieldID", "site": "fi.SiteID", "farmer": "s.FarmerID"}[lv])
            member_fns.append(lambda r, i=i: r[i])
        elif h == "location" and lv == "farmer":
            i = col("f.FarmerID")
            member_fns.append(lambda r, i=i: r[i])
        else:
            raise ValueError(axis)
    ms = [_measure(m) for m in measures]
    aggs = [f"{agg}(*)" if name == "*" else f"{agg}(f.{name})" for name, agg in ms]
    sql = (f"SELECT {', '.join(cols + aggs)} FROM {fact} f {' '.join(joins.values())}"
           f" GROUP BY {', '.join(cols)}")
    res = run_query(sql, warehouse, engine=engine)
    buckets = {}
    for r in res.rows:
        buckets.setdefault(tuple(fn(r) for fn in member_fns), []).append(r[len(cols):])
    out = {}
    for key, parts in buckets.items():
        vals = []
        for k, (_, agg) in enumerate(ms):
            xs = [p[k] for p in parts if p[k] is not None]
            if agg == "COUNT":
                vals.append(sum(xs))
            elif not xs:
                vals.append(None)
            elif agg == "MAX":
                vals.append(max(xs))
            else:
                vals.append(math.fsum(xs) if any(isinstance(x, float) for x in xs) else sum(xs))
        out[key] = tuple(vals)
    return out


def values_match(a, b, rel=1e-9):
    """Exact for ints and text, relative tolerance for floats."""
    if len(a) != len(b):
        return False
    for x, y in zip(a, b):
        if isinstance(x, float) or isinstance(y, float):
            if x is None or y is None or not math.isclose(x, y, rel_tol=rel, abs_tol=1e-9):
                return False
        elif x != y:
            return False
    return True


def cells_match(got: dict, want: dict, rel=1e-9) -> list:
    """Coordinates that differ (missing, extra or unequal)."""
    bad = sorted(set(got) ^ set(want), key=repr)
    bad += [k for k in got.keys() & want.keys() if not values_match(got[k], want[k], rel)]
    return bad


def rows_match(a, b, rel=1e-9) -> bool:
    return len(a) == len(b) and all(values_match(x, y, rel) for x, y in zip(a, b))
