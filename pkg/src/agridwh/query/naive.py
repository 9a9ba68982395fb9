"""Row-at-a-time reference engine.

Reads the row view of each table and interprets the syntax tree directly:
joins are nested loops, WHERE runs after all joins, grouping sorts the rows
and walks runs of equal keys.  No indexes, no pushdown.  It shares nothing with the vectorized path except the typing
rules, which makes it usable as a correctness oracle.
"""
from __future__ import annotations

import math
import itertools

from ..storage.values import INT64_MAX, INT64_MIN, iso_date, like_regex
from .ast import Aggregate, BoolOp, ColumnRef, Comparison, InSubquery, Literal, Query, Select, Star, TableRef
from .parser import QueryError, render_expr, render_literal
from .planner import UnknownColumnError, UnknownTableError
from .result import ResultSet, null_first_key
from .types import aggregate_kind, check_comparable, literal_kind, literal_value, match_name, union_kind


class _Rel:
    """An intermediate relation: qualified column headers plus row tuples."""

    def __init__(self, cols, rows):
        self.cols = cols  # [(label, name, kind)]
        self.rows = rows


class NaiveEngine:
    def __init__(self, store):
        self.store = getattr(store, "store", store)
        self.metadata: dict = {}

    # -- entry ---------------------------------------------------------------

    def run(self, query: Query):
        """Returns (names, kinds, internal rows, ordered)."""
        parts = [self._select(s, query if len(query.selects) == 1 else None) for s in query.selects]
        names, kinds, rows = parts[0]
        if len(parts) > 1:
            for n2, k2, _ in parts[1:]:
                if len(n2) != len(names):
                    raise QueryError("UNION members have different column counts")
                kinds = [union_kind(a, b) for a, b in zip(kinds, k2)]
            seen = {}
            for _, pkinds, prow in parts:
                for r in prow:
                    r = tuple(float(v) if v is not None and k == "float64" and pk == "int64" else v
                              for v, k, pk in zip(r, kinds, pkinds))
                    seen.setdefault(r, None)
            rows = list(seen)
        rows.sort(key=null_first_key)
        order = [self._order_index(o.expr, query, names) for o in query.order_by]
        for (idx, item) in reversed(list(zip(order, query.order_by))):
            rows.sort(key=lambda r, i=idx: (r[i] is not None, r[i]), reverse=item.descending)
        if query.limit is not None:
            rows = rows[:query.limit]
        return names, kinds, rows, bool(query.order_by)

    def _order_index(self, e, query, names) -> int:
        if isinstance(e, ColumnRef) and e.table is None:
            hits = match_name(names, e.name)
            if len(hits) == 1:
                return hits[0]
            if len(hits) > 1:
                raise QueryError(f"ORDER BY {e.name} is ambiguous")
        for i, item in enumerate(query.selects[0].items):
            if isinstance(item.expr, Star):
                break
            if _same(item.expr, e):
                return i
        raise QueryError(f"ORDER BY {render_expr(e)} must name a selected column")

    # -- FROM ----------------------------------------------------------------

    def _source(self, src) -> _Rel:
        if isinstance(src, TableRef):
            tables = self.store.tables()
            hits = match_name(tables, src.name)
            if len(hits) != 1:
                raise UnknownTableError(f"unknown table: {src.name!r}")
            name = tables[hits[0]]
            cols, kinds, rows = self.store.row_view(name)
            label = src.alias or name
            return _Rel([(label, c, k) for c, k in zip(cols, kinds)], rows)
        names, kinds, rows, _ = NaiveEngine(self.store).run(src.query)
        return _Rel([(src.alias, c, k) for c, k in zip(names, kinds)], rows)

    def _find(self, cols, ref: ColumnRef) -> int:
        if ref.table is not None:
            labels = list(dict.fromkeys(c[0] for c in cols))
            hit = match_name(labels, ref.table)
            if not hit:
                raise UnknownColumnError(f"unknown table or alias {ref.table!r} in {render_expr(ref)}")
            scope = [i for i, c in enumerate(cols) if c[0] == labels[hit[0]]]
        else:
            scope = list(range(len(cols)))
        found = [scope[j] for j in match_name([cols[i][1] for i in scope], ref.name)]
        if not found:
            raise UnknownColumnError(f"unknown column {render_expr(ref)}")
        if len(found) > 1:
            raise QueryError(f"column {render_expr(ref)} is ambiguous")
        return found[0]

    def _join(self, left: _Rel, right: _Rel, join) -> _Rel:
        cols = left.cols + right.cols
        width_l = len(left.cols)
        lidx, ridx = [], []
        for a, b in join.on:
            ia, ib = self._find(cols, a), self._find(cols, b)
            if ia >= width_l and ib < width_l:
                ia, ib = ib, ia
            elif not (ib >= width_l and ia < width_l):
                raise QueryError(f"join condition {render_expr(a)} = {render_expr(b)} must relate "
                                 f"{right.cols[0][0] if right.cols else '?'} to an earlier table")
            check_comparable(cols[ia][2], cols[ib][2], "=", " in join condition")
            lidx.append(ia)
            ridx.append(ib - width_l)
        # plain nested loop: every left row is compared with every right row
        never = object()
        rkeys = [never if None in k else k
                 for k in (tuple(r[i] for i in ridx) for r in right.rows)]
        rrows = right.rows
        out = []
        null_l = (None,) * width_l
        null_r = (None,) * len(right.cols)
        matched_right = set()
        for lr in left.rows:
            lk = tuple(lr[i] for i in lidx)
            hits = [] if None in lk else [j for j, rk in enumerate(rkeys) if rk == lk]
            for j in hits:
                out.append(lr + rrows[j])
            if join.kind == "RIGHT":
                matched_right.update(hits)
            elif not hits and join.kind == "LEFT":
                out.append(lr + null_r)
        if join.kind == "RIGHT":
            for j, rr in enumerate(rrows):
                if j not in matched_right:
                    out.append(null_l + rr)
        return _Rel(cols, out)

    # -- conditions ------------------------------------------------------------

    def _compile(self, cond, operand):
        """Condition -> predicate over a row; ``operand`` maps an expression to (getter, kind)."""
        if isinstance(cond, BoolOp):
            parts = [self._compile(p, operand) for p in cond.parts]
            if cond.op == "AND":
                return lambda r: all(p(r) for p in parts)
            return lambda r: any(p(r) for p in parts)
        if isinstance(cond, InSubquery):
            get, kind = operand(cond.expr)
            names, kinds, rows, _ = NaiveEngine(self.store).run(cond.query)
            if len(names) != 1:
                raise QueryError("IN subquery must return exactly one column")
            check_comparable(kind, kinds[0], "=", " in IN subquery")
            members = {r[0] for r in rows if r[0] is not None}
            return lambda r: (v := get(r)) is not None and v in members
        lget, lkind = operand(cond.left)
        rget, rkind = operand(cond.right)
        if isinstance(cond.right, Literal) and lkind == "date" and rkind == "text" \
                and not isinstance(cond.left, Literal):
            c = literal_value(cond.right.value, "date")
            rget, rkind = (lambda r: c), "date"
        if isinstance(cond.left, Literal) and rkind == "date" and lkind == "text" \
                and not isinstance(cond.right, Literal):
            c2 = literal_value(cond.left.value, "date")
            lget, lkind = (lambda r: c2), "date"
        check_comparable(lkind, rkind, cond.op,
                         f" in {render_expr(cond.left)} {cond.op} {render_expr(cond.right)}")
        op = cond.op

        def test(r):
            a, b = lget(r), rget(r)
            if a is None or b is None:
                return False
            if op == "=":
                return a == b
            if op == ">=":
                return a >= b
            return like_regex(b).fullmatch(a) is not None
        return test

    # -- SELECT ----------------------------------------------------------------

    def _select(self, sel: Select, query: Query | None):
        rel = self._source(sel.source)
        for j in sel.joins:
            rel = self._join(rel, self._source(j.source), j)
        cols = rel.cols

        def plain(e):
            if isinstance(e, ColumnRef):
                i = self._find(cols, e)
                return (lambda r: r[i]), cols[i][2]
            if isinstance(e, Literal):
                v = e.value
                return (lambda r: v), literal_kind(v)
            raise QueryError(f"aggregate {render_expr(e)} outside an aggregating query")

        rows = rel.rows
        if sel.where is not None:
            pred = self._compile(sel.where, plain)
            rows = [r for r in rows if pred(r)]

        if not sel.is_aggregate():
            getters, names, kinds = [], [], []
            for item in sel.items:
                if isinstance(item.expr, Star):
                    for i, c in enumerate(cols):
                        getters.append(lambda r, i=i: r[i])
                        names.append(c[1])
                        kinds.append(c[2])
                    continue
                g, k = plain(item.expr)
                getters.append(g)
                names.append(_name(item))
                kinds.append(k)
            return names, kinds, [tuple(g(r) for g in getters) for r in rows]

        key_idx = []
        for g in sel.group_by:
            i = self._find(cols, g)
            if i not in key_idx:
                key_idx.append(i)
        groups: dict = {}
        keyed = sorted(((tuple(r[i] for i in key_idx), r) for r in rows),
                       key=lambda kr: null_first_key(kr[0]))
        for key, run in itertools.groupby(keyed, key=lambda kr: kr[0]):
            groups[key] = [r for _, r in run]
        if not key_idx and not groups:
            groups[()] = []

        aggs: dict = {}  # (func, column index) -> per-group values

        def agg_value(a: Aggregate):
            ci = None if a.arg is None else self._find(cols, a.arg)
            spec = (a.func, ci)
            if spec not in aggs:
                kind = aggregate_kind(a.func, None if ci is None else cols[ci][2])
                aggs[spec] = self._aggregate(a.func, ci, kind, groups)
            return aggs[spec]

        def post(e):
            if isinstance(e, Aggregate):
                spec_vals, kind = agg_value(e)
                return (lambda key: spec_vals[key]), kind
            if isinstance(e, Literal):
                v = e.value
                return (lambda key: v), literal_kind(v)
            if isinstance(e, ColumnRef):
                if e.table is None:
                    for item in sel.items:
                        if item.alias is not None and item.alias == e.name:
                            return post(item.expr)
                i = self._find(cols, e)
                if i not in key_idx:
                    raise QueryError(f"{render_expr(e)} is neither grouped nor aggregated")
                p = key_idx.index(i)
                return (lambda key: key[p]), cols[i][2]
            raise QueryError(f"unsupported expression {e!r}")

        keys = list(groups)
        if sel.having is not None:
            pred = self._compile(sel.having, post)
            keys = [k for k in keys if pred(k)]
        getters, names, kinds = [], [], []
        for item in sel.items:
            g, k = post(item.expr)
            getters.append(g)
            names.append(_name(item))
            kinds.append(k)
        return names, kinds, [tuple(g(k) for g in getters) for k in keys]

    def _aggregate(self, func, ci, kind, groups):
        out = {}
        for key, rows in groups.items():
            if ci is None:
                out[key] = len(rows)
                continue
            vals = [r[ci] for r in rows if r[ci] is not None]
            if func == "COUNT":
                out[key] = len(vals)
            elif not vals:
                out[key] = None
            elif func == "MAX":
                out[key] = max(vals)
            elif kind == "float64":
                out[key] = math.fsum(vals)
            else:
                out[key] = sum(vals)
        if func == "SUM" and kind == "int64":
            if any(v is not None and not INT64_MIN <= v <= INT64_MAX for v in out.values()):
                self.metadata["int_sum_promoted"] = True
                out = {k: None if v is None else float(v) for k, v in out.items()}
                kind = "float64"
        return out, kind


def _name(item) -> str:
    if item.alias:
        return item.alias
    if isinstance(item.expr, ColumnRef):
        return item.expr.name
    if isinstance(item.expr, Literal):
        return render_literal(item.expr.value)
    return render_expr(item.expr)


def _same(a, b) -> bool:
    if isinstance(a, ColumnRef) and isinstance(b, ColumnRef):
        return a.name == b.name and (a.table is None or b.table is None or a.table == b.table)
    if isinstance(a, Aggregate) and isinstance(b, Aggregate):
        if a.func != b.func or (a.arg is None) != (b.arg is None):
            return False
        return a.arg is None or _same(a.arg, b.arg)
    return type(a) is type(b) and a == b


def execute_naive_oracle(ast: Query, store) -> ResultSet:
    """Evaluate ``ast`` row by row; the reference answer for the analytical engine."""
    engine = NaiveEngine(store)
    names, kinds, rows, ordered = engine.run(ast)
    date_cols = [i for i, k in enumerate(kinds) if k == "date"]
    if date_cols:
        rows = [tuple(iso_date(v) if i in date_cols and v is not None else v
                      for i, v in enumerate(r)) for r in rows]
    meta = {"engine": "naive", **engine.metadata}
    return ResultSet(names, kinds, rows, ordered=ordered, metadata=meta)
