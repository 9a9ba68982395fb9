"""Logical-to-physical planning for the analytical executor.

Two rewrite rules are applied, nothing cost-based beyond them:

* WHERE conjuncts that touch a single base table are pushed into that
  table's scan (unless the table sits on the null-extended side of an outer
  join, where pushing would change the answer);
* equality joins become hash joins whose build side is the smaller
  estimated input.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .ast import (Aggregate, BoolOp, ColumnRef, Comparison, InSubquery, Literal, Query, Select,
                  Star, SubqueryRef, TableRef)
from .parser import QueryError, render_expr, render_literal
from .types import (aggregate_kind, check_comparable, literal_kind, literal_value, match_name,
                    union_kind)


class UnknownTableError(QueryError):
    pass


class UnknownColumnError(QueryError):
    pass


# -- bound expressions -------------------------------------------------------

@dataclass(frozen=True)
class BCol:
    index: int
    kind: str


@dataclass(frozen=True)
class BLit:
    value: object
    kind: str


@dataclass(frozen=True)
class BCmp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class BBool:
    op: str
    parts: tuple


@dataclass(frozen=True, eq=False)
class BIn:
    column: BCol
    plan: "PhysicalPlan"


# -- plan nodes --------------------------------------------------------------

@dataclass(frozen=True)
class Field:
    qualifier: str | None
    name: str
    kind: str


@dataclass(eq=False)
class ScanNode:
    table: str
    alias: str
    fields: list
    pushed: list = field(default_factory=list)  # bound over this scan's fields
    estimate: float = 0.0

    @property
    def children(self):
        return []


@dataclass(eq=False)
class SubqueryNode:
    plan: "PhysicalPlan"
    alias: str
    fields: list
    estimate: float = 1000.0

    @property
    def children(self):
        return []


@dataclass(eq=False)
class FilterNode:
    child: object
    condition: object

    @property
    def fields(self):
        return self.child.fields

    @property
    def children(self):
        return [self.child]


@dataclass(eq=False)
class HashJoinNode:
    left: object
    right: object
    kind: str  # INNER, LEFT, RIGHT
    left_keys: list
    right_keys: list
    build: str  # "left" or "right"

    @property
    def fields(self):
        return self.left.fields + self.right.fields

    @property
    def children(self):
        return [self.left, self.right]


@dataclass(eq=False)
class AggregateNode:
    child: object
    keys: list  # child field indices
    aggregates: list  # (func, child index or None)
    fields: list

    @property
    def children(self):
        return [self.child]


@dataclass(eq=False)
class ProjectNode:
    child: object
    exprs: list  # BCol / BLit over child fields
    fields: list

    @property
    def children(self):
        return [self.child]


@dataclass(eq=False)
class UnionNode:
    inputs: list
    fields: list

    @property
    def children(self):
        return self.inputs


@dataclass(eq=False)
class PhysicalPlan:
    root: object
    columns: list
    kinds: list
    order_keys: list  # (output index, descending)
    limit: int | None

    @property
    def ordered(self) -> bool:
        return bool(self.order_keys)

    def nodes(self):
        stack = [self.root]
        while stack:
            n = stack.pop()
            yield n
            stack.extend(reversed(n.children))

    def explain(self) -> str:
        lines = []

        def label(n):
            if isinstance(n, ScanNode):
                push = f" pushdown={len(n.pushed)}" if n.pushed else ""
                return f"Scan {n.table} AS {n.alias}{push}"
            if isinstance(n, SubqueryNode):
                return f"Subquery AS {n.alias}"
            if isinstance(n, FilterNode):
                return "Filter"
            if isinstance(n, HashJoinNode):
                return f"HashJoin {n.kind} build={n.build}"
            if isinstance(n, AggregateNode):
                return f"HashAggregate keys={len(n.keys)} aggs={len(n.aggregates)}"
            if isinstance(n, ProjectNode):
                return "Project " + ", ".join(f.name for f in n.fields)
            if isinstance(n, UnionNode):
                return "UnionDistinct"
            return type(n).__name__

        def walk(n, depth):
            lines.append("  " * depth + label(n))
            for c in n.children:
                walk(c, depth + 1)

        if self.order_keys or self.limit is not None:
            lines.append(f"Sort keys={len(self.order_keys)} limit={self.limit}")
            walk(self.root, 1)
        else:
            walk(self.root, 0)
        return "\n".join(lines)


# -- planner -------------------------------------------------------------------

@dataclass
class _Leaf:
    label: str
    columns: list  # [(name, kind)]
    source: object
    subplan: PhysicalPlan | None = None
    needed: set = field(default_factory=set)
    nullable: bool = False


class Planner:
    def __init__(self, store, pushdown: bool = True):
        self.store = store
        self.pushdown = pushdown

    def plan(self, query: Query) -> PhysicalPlan:
        roots = [self._plan_select(s, query if len(query.selects) == 1 else None)
                 for s in query.selects]
        if len(roots) == 1:
            root = roots[0]
        else:
            width = len(roots[0].fields)
            for r in roots[1:]:
                if len(r.fields) != width:
                    raise QueryError("UNION members have different column counts")
            kinds = [f.kind for f in roots[0].fields]
            for r in roots[1:]:
                kinds = [union_kind(a, f.kind) for a, f in zip(kinds, r.fields)]
            fields = [Field(None, f.name, k) for f, k in zip(roots[0].fields, kinds)]
            root = UnionNode(roots, fields)
        columns = [f.name for f in root.fields]
        order_keys = [(self._order_index(o, query, root), o.descending) for o in query.order_by]
        return PhysicalPlan(root, columns, [f.kind for f in root.fields], order_keys, query.limit)

    # ORDER BY items refer to output columns, by name/alias or by repeating a select expression
    def _order_index(self, item, query: Query, root) -> int:
        names = [f.name for f in root.fields]
        e = item.expr
        if isinstance(e, ColumnRef) and e.table is None:
            hits = match_name(names, e.name)
            if len(hits) == 1:
                return hits[0]
            if len(hits) > 1:
                raise QueryError(f"ORDER BY {e.name} is ambiguous")
        first = query.selects[0]
        for i, it in enumerate(first.items):
            if isinstance(it.expr, Star):
                break
            if _same_expr(it.expr, e):
                return i
        raise QueryError(f"ORDER BY {render_expr(e)} must name a selected column")

    def _leaf_for(self, src) -> _Leaf:
        if isinstance(src, TableRef):
            name = self._table_name(src.name)
            cols = [(c.name, c.kind) for c in self.store.columns(name)]
            return _Leaf(src.alias or name, cols, TableRef(name, src.alias))
        sub = Planner(self.store, self.pushdown).plan(src.query)
        return _Leaf(src.alias, list(zip(sub.columns, sub.kinds)), src, sub)

    def _table_name(self, name: str) -> str:
        tables = self.store.tables()
        hits = match_name(tables, name)
        if len(hits) != 1:
            raise UnknownTableError(f"unknown table: {name!r}")
        return tables[hits[0]]

    def _plan_select(self, sel: Select, query: Query | None):
        leaves = [self._leaf_for(sel.source)] + [self._leaf_for(j.source) for j in sel.joins]
        labels = [lf.label for lf in leaves]
        if len(set(labels)) != len(labels):
            raise QueryError(f"duplicate table alias among {labels}")
        for j_no, j in enumerate(sel.joins, start=1):
            if j.kind == "LEFT":
                leaves[j_no].nullable = True
            elif j.kind == "RIGHT":
                for lf in leaves[:j_no]:
                    lf.nullable = True

        def resolve(ref: ColumnRef):
            cands = []
            if ref.table is not None:
                hit = match_name(labels, ref.table)
                if not hit:
                    raise UnknownColumnError(f"unknown table or alias {ref.table!r} in "
                                             f"{render_expr(ref)}")
                scope = hit
            else:
                scope = range(len(leaves))
            for li in scope:
                for ci in match_name([c for c, _ in leaves[li].columns], ref.name):
                    cands.append((li, ci))
            if not cands:
                raise UnknownColumnError(f"unknown column {render_expr(ref)}")
            if len(cands) > 1:
                raise QueryError(f"column {render_expr(ref)} is ambiguous")
            li, ci = cands[0]
            leaves[li].needed.add(ci)
            return li, ci

        # pass 1: resolve every reference so unused columns can be pruned
        star = any(isinstance(i.expr, Star) for i in sel.items)
        for item in sel.items:
            for ref in _refs(item.expr):
                resolve(ref)
        for j in sel.joins:
            for a, b in j.on:
                resolve(a)
                resolve(b)
        for ref in _cond_refs(sel.where):
            resolve(ref)
        for g in sel.group_by:
            resolve(g)
        aliases = {i.alias for i in sel.items if i.alias}
        for ref in _cond_refs(sel.having):
            if ref.table is None and ref.name in aliases:
                continue
            resolve(ref)
        if query is not None:
            for o in query.order_by:
                if isinstance(o.expr, Aggregate) and o.expr.arg is not None:
                    resolve(o.expr.arg)
        if star:
            for lf in leaves:
                lf.needed = set(range(len(lf.columns)))

        # leaf layout after pruning
        offsets, layout, pos = [], {}, 0
        for li, lf in enumerate(leaves):
            offsets.append(pos)
            for ci in sorted(lf.needed):
                layout[(li, ci)] = pos
                pos += 1
        all_fields = []
        for li, lf in enumerate(leaves):
            for ci in sorted(lf.needed):
                name, kind = lf.columns[ci]
                all_fields.append(Field(lf.label, name, kind))

        def gindex(ref):
            return layout[resolve(ref)]

        def leaf_of(ref):
            return resolve(ref)[0]

        # WHERE: split conjuncts, push single-leaf ones to the leaf
        conjuncts = list(_conjuncts(sel.where))
        pushed: dict[int, list] = {i: [] for i in range(len(leaves))}
        residual = []
        for c in conjuncts:
            used = {leaf_of(r) for r in _cond_refs(c)}
            if self.pushdown and len(used) == 1:
                li = used.pop()
                if not leaves[li].nullable:
                    pushed[li].append(c)
                    continue
            residual.append(c)

        nodes = []
        for li, lf in enumerate(leaves):
            local = {layout[(li, ci)]: k for k, ci in enumerate(sorted(lf.needed))}
            fields = [all_fields[g] for g in sorted(local)]

            def local_bind(cond, _local=local, _off=None):
                return self._bind_cond(cond, lambda r: BCol(_local[gindex(r)], all_fields[gindex(r)].kind))

            bound = [local_bind(c) for c in pushed[li]]
            if lf.subplan is None:
                est = self.store.row_count(lf.source.name) * (0.3 ** len(bound))
                nodes.append(ScanNode(lf.source.name, lf.label, fields, bound, est))
            else:
                node = SubqueryNode(lf.subplan, lf.label, fields)
                proj = ProjectNode(node, [BCol(ci, lf.columns[ci][1]) for ci in sorted(lf.needed)], fields)
                node.fields = [Field(lf.label, n, k) for n, k in lf.columns]
                cur = proj
                for b in bound:
                    cur = FilterNode(cur, b)
                nodes.append(cur)

        def bind_global(ref):
            g = gindex(ref)
            return BCol(g, all_fields[g].kind)

        # joins, left-deep in written order
        tree = nodes[0]
        est = _estimate(nodes[0])
        for j_no, j in enumerate(sel.joins, start=1):
            lkeys, rkeys = [], []
            for a, b in j.on:
                la, lb = leaf_of(a), leaf_of(b)
                if la == j_no and lb < j_no:
                    a, b = b, a
                elif not (lb == j_no and la < j_no):
                    raise QueryError(f"join condition {render_expr(a)} = {render_expr(b)} must relate "
                                     f"{leaves[j_no].label} to an earlier table")
                ga, gb = gindex(a), gindex(b)
                check_comparable(all_fields[ga].kind, all_fields[gb].kind, "=", " in join condition")
                lkeys.append(ga)
                rkeys.append(gb - offsets[j_no])
            right_est = _estimate(nodes[j_no])
            build = "right" if right_est <= est else "left"
            tree = HashJoinNode(tree, nodes[j_no], j.kind, lkeys, rkeys, build)
            est = max(est, right_est)

        for c in residual:
            tree = FilterNode(tree, self._bind_cond(c, bind_global))

        if not sel.is_aggregate():
            exprs, fields = [], []
            for item in sel.items:
                if isinstance(item.expr, Star):
                    for g, f in enumerate(all_fields):
                        exprs.append(BCol(g, f.kind))
                        fields.append(Field(None, f.name, f.kind))
                    continue
                b = self._bind_expr(item.expr, bind_global)
                exprs.append(b)
                fields.append(Field(None, _output_name(item), b.kind))
            return ProjectNode(tree, exprs, fields)

        # aggregation
        keys = []
        for g in sel.group_by:
            gi = gindex(g)
            if gi not in keys:
                keys.append(gi)
        aggs: list = []

        def agg_slot(a: Aggregate) -> int:
            arg = None if a.arg is None else gindex(a.arg)
            spec = (a.func, arg)
            if spec not in aggs:
                aggregate_kind(a.func, None if arg is None else all_fields[arg].kind)
                aggs.append(spec)
            return len(keys) + aggs.index(spec)

        sources = [i.expr for i in sel.items]
        sources += [e for e in _cond_exprs(sel.having)]
        if query is not None:
            sources += [o.expr for o in query.order_by]
        for e in sources:
            if isinstance(e, Aggregate):
                agg_slot(e)
        agg_fields = [all_fields[k] for k in keys]
        for func, arg in aggs:
            kind = aggregate_kind(func, None if arg is None else all_fields[arg].kind)
            label = f"{func}({'*' if arg is None else all_fields[arg].name})"
            agg_fields.append(Field(None, label, kind))
        tree = AggregateNode(tree, keys, aggs, agg_fields)

        def bind_post(e):
            if isinstance(e, Aggregate):
                i = agg_slot(e)
                return BCol(i, agg_fields[i].kind)
            if isinstance(e, Literal):
                return BLit(e.value, literal_kind(e.value))
            if isinstance(e, ColumnRef):
                if e.table is None:
                    for item in sel.items:
                        if item.alias is not None and item.alias == e.name:
                            return bind_post(item.expr)
                g = gindex(e)
                if g not in keys:
                    raise QueryError(f"{render_expr(e)} is neither grouped nor aggregated")
                i = keys.index(g)
                return BCol(i, agg_fields[i].kind)
            raise QueryError(f"unsupported expression {e!r}")

        if sel.having is not None:
            tree = FilterNode(tree, self._bind_cond(sel.having, None, bind_post))
        exprs = [bind_post(i.expr) for i in sel.items]
        fields = [Field(None, _output_name(i), b.kind) for i, b in zip(sel.items, exprs)]
        return ProjectNode(tree, exprs, fields)

    # -- binding ---------------------------------------------------------------

    def _bind_expr(self, e, bind_col):
        if isinstance(e, ColumnRef):
            return bind_col(e)
        if isinstance(e, Literal):
            return BLit(e.value, literal_kind(e.value))
        raise QueryError(f"aggregate {render_expr(e)} outside an aggregating query")

    def _bind_cond(self, cond, bind_col, bind_any=None):
        bind = bind_any or (lambda e: self._bind_expr(e, bind_col))
        if isinstance(cond, BoolOp):
            return BBool(cond.op, tuple(self._bind_cond(p, bind_col, bind_any) for p in cond.parts))
        if isinstance(cond, InSubquery):
            col = bind(cond.expr)
            sub = Planner(self.store, self.pushdown).plan(cond.query)
            if len(sub.columns) != 1:
                raise QueryError("IN subquery must return exactly one column")
            check_comparable(col.kind, sub.kinds[0], "=", " in IN subquery")
            return BIn(col, sub)
        left, right = bind(cond.left), bind(cond.right)
        left, right = _coerce_literals(left, right)
        check_comparable(left.kind, right.kind, cond.op,
                         f" in {render_expr(cond.left)} {cond.op} {render_expr(cond.right)}")
        return BCmp(cond.op, left, right)


def _coerce_literals(left, right):
    if isinstance(right, BLit) and not isinstance(left, BLit) and left.kind == "date" and right.kind == "text":
        right = BLit(literal_value(right.value, "date"), "date")
    if isinstance(left, BLit) and not isinstance(right, BLit) and right.kind == "date" and left.kind == "text":
        left = BLit(literal_value(left.value, "date"), "date")
    return left, right


def _estimate(node) -> float:
    if isinstance(node, (ScanNode, SubqueryNode)):
        return node.estimate
    if isinstance(node, FilterNode):
        return _estimate(node.child) * 0.3
    if isinstance(node, ProjectNode):
        return _estimate(node.child)
    return 1000.0


def _output_name(item) -> str:
    if item.alias:
        return item.alias
    e = item.expr
    if isinstance(e, ColumnRef):
        return e.name
    if isinstance(e, Literal):
        return render_literal(e.value)
    return render_expr(e)


def _refs(e):
    if isinstance(e, ColumnRef):
        yield e
    elif isinstance(e, Aggregate) and e.arg is not None:
        yield e.arg


def _cond_exprs(cond):
    if cond is None:
        return
    if isinstance(cond, BoolOp):
        for p in cond.parts:
            yield from _cond_exprs(p)
    elif isinstance(cond, Comparison):
        yield cond.left
        yield cond.right
    else:
        yield cond.expr


def _cond_refs(cond):
    for e in _cond_exprs(cond):
        yield from _refs(e)


def _conjuncts(cond):
    if cond is None:
        return
    if isinstance(cond, BoolOp) and cond.op == "AND":
        for p in cond.parts:
            yield from _conjuncts(p)
    else:
        yield cond


def _same_expr(a, b) -> bool:
    if type(a) is not type(b):
        return False
    if isinstance(a, ColumnRef):
        return a.name == b.name and (a.table is None or b.table is None or a.table == b.table)
    if isinstance(a, Aggregate):
        if a.func != b.func:
            return False
        if a.arg is None or b.arg is None:
            return a.arg is None and b.arg is None
        return _same_expr(a.arg, b.arg)
    return a == b


def plan_query(ast: Query, store, pushdown: bool = True) -> PhysicalPlan:
    """Physical plan for ``ast`` against the tables of ``store`` (a ColumnStore)."""
    store = getattr(store, "store", store)
    return Planner(store, pushdown).plan(ast)
