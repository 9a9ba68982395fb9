"""Vectorized execution of physical plans over the columnar store.

Intermediate results are frames: a list of ``(values, nulls, kind)`` column
triples of equal length.  Dates stay int64 epoch days until the very end.
"""
from __future__ import annotations

import math

import numpy as np

from ..storage.values import INT64_MAX, INT64_MIN, empty_array, iso_date, like_regex
from .planner import (AggregateNode, BBool, BCmp, BCol, BIn, BLit, FilterNode, HashJoinNode,
                      PhysicalPlan, ProjectNode, ScanNode, SubqueryNode, UnionNode, plan_query)
from .result import ResultSet


class Frame:
    __slots__ = ("cols", "n")

    def __init__(self, cols, n):
        self.cols = cols
        self.n = n

    def take(self, idx):
        return Frame([_take(c, idx) for c in self.cols], len(idx))

    def where(self, mask):
        return Frame([(v[mask], nl[mask], k) for v, nl, k in self.cols], int(mask.sum()))


def _take(col, idx):
    """Gather rows; an index of -1 produces a null."""
    vals, nulls, kind = col
    missing = idx < 0
    if not missing.any():
        return vals[idx], nulls[idx], kind
    if len(vals) == 0:
        return empty_array(kind, len(idx)), np.ones(len(idx), dtype=bool), kind
    safe = np.where(missing, 0, idx)
    return vals[safe], nulls[safe] | missing, kind


# -- factorization --------------------------------------------------------------

def factorize(vals, nulls, kind=None) -> np.ndarray:
    """Dense order-preserving codes; null is 0, values are 1.. in ascending order."""
    codes = np.zeros(len(vals), dtype=np.int64)
    live = ~nulls
    if live.any():
        _, inv = np.unique(vals[live], return_inverse=True)
        codes[live] = inv.reshape(-1) + 1
    return codes


def combine_codes(code_lists, n) -> tuple[np.ndarray, int]:
    """Row-wise combination of several code arrays into one dense code array."""
    if not code_lists:
        return np.zeros(n, dtype=np.int64), (1 if n else 0)
    acc = code_lists[0]
    for c in code_lists[1:]:
        acc = acc * (int(c.max(initial=0)) + 1) + c
        _, acc = np.unique(acc, return_inverse=True)
        acc = acc.reshape(-1).astype(np.int64)
    uniq, acc = np.unique(acc, return_inverse=True)
    return acc.reshape(-1).astype(np.int64), len(uniq)


def _as_kind(vals, kind, target):
    if kind == target:
        return vals
    if target == "float64":
        return vals.astype(np.float64)
    return vals


# -- expression evaluation -----------------------------------------------------

_CMP = {"=": np.equal, ">=": np.greater_equal, "!=": np.not_equal, "<": np.less,
        "<=": np.less_equal, ">": np.greater}


class Executor:
    def __init__(self, store):
        self.store = store
        self.metadata: dict = {}
        self._in_cache: dict = {}

    # values of a bound operand: (values, nulls) broadcastable to n
    def _operand(self, e, frame):
        if isinstance(e, BCol):
            v, nl, _ = frame.cols[e.index]
            return v, nl
        if isinstance(e, BLit):
            return e.value, None
        raise TypeError(e)

    def mask(self, cond, frame) -> np.ndarray:
        n = frame.n
        if isinstance(cond, BBool):
            out = np.ones(n, dtype=bool) if cond.op == "AND" else np.zeros(n, dtype=bool)
            for p in cond.parts:
                m = self.mask(p, frame)
                out = out & m if cond.op == "AND" else out | m
            return out
        if isinstance(cond, BIn):
            vals, nulls, _ = frame.cols[cond.column.index]
            members = self._in_values(cond.plan)
            if vals.dtype == object:
                hit = np.fromiter((v in members for v in vals), dtype=bool, count=n)
            else:
                hit = np.isin(vals, np.array(sorted(members))) if members else np.zeros(n, dtype=bool)
            return hit & ~nulls
        lv, ln = self._operand(cond.left, frame)
        rv, rn = self._operand(cond.right, frame)
        if cond.op == "LIKE":
            if isinstance(cond.right, BLit):
                rx = like_regex(rv)
                if isinstance(lv, np.ndarray):
                    out = np.fromiter((rx.fullmatch(s) is not None for s in lv), dtype=bool, count=n)
                else:
                    out = np.full(n, rx.fullmatch(lv) is not None)
            else:
                left = lv if isinstance(lv, np.ndarray) else [lv] * n
                out = np.fromiter((like_regex(p).fullmatch(s) is not None for s, p in zip(left, rv)),
                                  dtype=bool, count=n)
        else:
            out = np.asarray(_CMP[cond.op](lv, rv), dtype=bool)
            if out.ndim == 0:
                out = np.full(n, bool(out))
        if ln is not None:
            out = out & ~ln
        if rn is not None:
            out = out & ~rn
        return out

    def _in_values(self, plan: PhysicalPlan) -> set:
        key = id(plan)
        if key not in self._in_cache:
            frame = self.run(plan)
            vals, nulls, _ = frame.cols[0]
            self._in_cache[key] = (plan, set(vals[~nulls].tolist()))
        return self._in_cache[key][1]

    # -- nodes -----------------------------------------------------------------

    def run(self, plan: PhysicalPlan) -> Frame:
        frame = self.node(plan.root)
        if plan.order_keys or plan.limit is not None:
            frame = frame.take(sort_order(frame, plan.order_keys))
            if plan.limit is not None:
                frame = frame.take(np.arange(min(plan.limit, frame.n)))
        return frame

    def node(self, node) -> Frame:
        if isinstance(node, ScanNode):
            names = [f.name for f in node.fields]
            arrays, n = self.store.scan_arrays(node.table, projection=names)
            frame = Frame([(*arrays[f.name], f.kind) for f in node.fields], n)
            for cond in node.pushed:
                frame = frame.where(self.mask(cond, frame))
            return frame
        if isinstance(node, SubqueryNode):
            return self.run(node.plan)
        if isinstance(node, FilterNode):
            frame = self.node(node.child)
            return frame.where(self.mask(node.condition, frame))
        if isinstance(node, ProjectNode):
            frame = self.node(node.child)
            cols = []
            for e in node.exprs:
                if isinstance(e, BCol):
                    cols.append(frame.cols[e.index])
                else:
                    vals = np.empty(frame.n, dtype=object) if e.kind == "text" else None
                    if vals is None:
                        vals = np.full(frame.n, e.value)
                    else:
                        vals[:] = e.value
                    cols.append((vals, np.zeros(frame.n, dtype=bool), e.kind))
            return Frame(cols, frame.n)
        if isinstance(node, HashJoinNode):
            return self.join(node)
        if isinstance(node, AggregateNode):
            return self.aggregate(node)
        if isinstance(node, UnionNode):
            return self.union(node)
        raise TypeError(f"unknown plan node {node!r}")

    def join(self, node: HashJoinNode) -> Frame:
        left, right = self.node(node.left), self.node(node.right)
        lcodes, rcodes = [], []
        lvalid = np.ones(left.n, dtype=bool)
        rvalid = np.ones(right.n, dtype=bool)
        for li, ri in zip(node.left_keys, node.right_keys):
            lv, ln, lk = left.cols[li]
            rv, rn, rk = right.cols[ri]
            target = "float64" if lk != rk else lk
            both = np.concatenate([_as_kind(lv, lk, target), _as_kind(rv, rk, target)])
            codes = factorize(both, np.concatenate([ln, rn]))
            lcodes.append(codes[:left.n])
            rcodes.append(codes[left.n:])
            lvalid &= ~ln
            rvalid &= ~rn
        combined, _ = combine_codes([np.concatenate([a, b]) for a, b in zip(lcodes, rcodes)],
                                    left.n + right.n)
        lkey = np.where(lvalid, combined[:left.n], -1)
        rkey = np.where(rvalid, combined[left.n:], -2)
        if node.build == "right":
            li, ri = _match(lkey, rkey)
        else:
            ri, li = _match(rkey, lkey)
        if node.kind == "LEFT":
            seen = np.zeros(left.n, dtype=bool)
            seen[li] = True
            extra = np.flatnonzero(~seen)
            li = np.concatenate([li, extra])
            ri = np.concatenate([ri, np.full(len(extra), -1, dtype=np.int64)])
        elif node.kind == "RIGHT":
            seen = np.zeros(right.n, dtype=bool)
            seen[ri] = True
            extra = np.flatnonzero(~seen)
            ri = np.concatenate([ri, extra])
            li = np.concatenate([li, np.full(len(extra), -1, dtype=np.int64)])
        lt, rt = left.take(li), right.take(ri)
        return Frame(lt.cols + rt.cols, len(li))

    def aggregate(self, node: AggregateNode) -> Frame:
        frame = self.node(node.child)
        n = frame.n
        codes = [factorize(*frame.cols[k][:2]) for k in node.keys]
        if node.keys:
            gid, ngroups = combine_codes(codes, n)
        else:
            gid, ngroups = np.zeros(n, dtype=np.int64), 1
        if ngroups and n:
            _, first = np.unique(gid, return_index=True)
        else:
            first = np.zeros(0, dtype=np.int64)
        out = [_take(frame.cols[k], first) for k in node.keys]
        order = np.argsort(gid, kind="stable")
        sorted_gid = gid[order]
        for func, arg in node.aggregates:
            if func == "COUNT" and arg is None:
                counts = np.bincount(gid, minlength=ngroups).astype(np.int64)
                out.append((counts, np.zeros(ngroups, dtype=bool), "int64"))
                continue
            vals, nulls, kind = frame.cols[arg]
            live = ~nulls[order]
            g = sorted_gid[live]
            v = vals[order][live]
            present = np.bincount(g, minlength=ngroups)
            if func == "COUNT":
                out.append((present.astype(np.int64), np.zeros(ngroups, dtype=bool), "int64"))
                continue
            empty = present == 0
            starts = np.searchsorted(g, np.arange(ngroups))
            if func == "SUM":
                out.append(self._sum(v, g, starts, ngroups, empty, kind))
            else:
                ranks = factorize(v, np.zeros(len(v), dtype=bool))
                best = np.zeros(ngroups, dtype=np.int64)
                if len(v):
                    nz = ~empty
                    best[nz] = np.maximum.reduceat(ranks, starts[nz])
                uniq = np.unique(v) if len(v) else empty_array(kind)
                res = empty_array(kind, ngroups)
                if len(v):
                    res[~empty] = uniq[best[~empty] - 1]
                out.append((res, empty, kind))
        return Frame(out, len(first) if node.keys else ngroups)

    def _sum(self, v, g, starts, ngroups, empty, kind):
        if kind == "float64":
            res = np.zeros(ngroups, dtype=np.float64)
            bounds = np.append(starts, len(v))
            for i in np.flatnonzero(~empty):
                res[i] = math.fsum(v[bounds[i]:bounds[i + 1]].tolist())
            return res, empty, kind
        nz = ~empty
        bound = np.zeros(ngroups, dtype=np.float64)
        if len(v):
            bound[nz] = np.add.reduceat(np.abs(v.astype(np.float64)), starts[nz])
        if not (bound > 2.0 ** 62).any():
            res = np.zeros(ngroups, dtype=np.int64)
            if len(v):
                res[nz] = np.add.reduceat(v, starts[nz])
            return res, empty, kind
        # exact Python-int sums; promote to float64 when any leaves the int64 range
        bounds = np.append(starts, len(v))
        exact = [sum(v[bounds[i]:bounds[i + 1]].tolist()) if nz[i] else 0 for i in range(ngroups)]
        if all(INT64_MIN <= s <= INT64_MAX for s in exact):
            return np.array(exact, dtype=np.int64), empty, kind
        self.metadata["int_sum_promoted"] = True
        return np.array([float(s) for s in exact], dtype=np.float64), empty, "float64"

    def union(self, node: UnionNode) -> Frame:
        frames = [self.node(i) for i in node.inputs]
        cols = []
        for j, f in enumerate(node.fields):
            target = f.kind
            for fr in frames:
                if fr.cols[j][2] == "float64" and target == "int64":
                    target = "float64"
            vals = np.concatenate([_as_kind(fr.cols[j][0], fr.cols[j][2], target) for fr in frames])
            nulls = np.concatenate([fr.cols[j][1] for fr in frames])
            cols.append((vals, nulls, target))
        n = sum(fr.n for fr in frames)
        frame = Frame(cols, n)
        gid, _ = combine_codes([factorize(v, nl) for v, nl, _ in cols], n)
        if n == 0:
            return frame
        _, first = np.unique(gid, return_index=True)
        return frame.take(np.sort(first))


def _match(probe, build):
    """All (probe index, build index) pairs with equal codes."""
    order = np.argsort(build, kind="stable")
    sb = build[order]
    lo = np.searchsorted(sb, probe, side="left")
    hi = np.searchsorted(sb, probe, side="right")
    counts = hi - lo
    total = int(counts.sum())
    pi = np.repeat(np.arange(len(probe), dtype=np.int64), counts)
    offs = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(counts) - counts, counts)
    bi = order[np.repeat(lo, counts) + offs]
    return pi, bi.astype(np.int64)


def sort_order(frame: Frame, order_keys) -> np.ndarray:
    """Row order for ORDER BY keys, ties broken by the full row (nulls first)."""
    ranks = [factorize(v, nl) for v, nl, _ in frame.cols]
    keys = [(-ranks[i] if desc else ranks[i]) for i, desc in order_keys] + ranks
    if not keys or frame.n == 0:
        return np.arange(frame.n)
    return np.lexsort(list(reversed(keys)))


def frame_to_result(frame: Frame, plan: PhysicalPlan, metadata: dict) -> ResultSet:
    if not plan.order_keys:
        frame = frame.take(sort_order(frame, []))
    lists = []
    for vals, nulls, kind in frame.cols:
        vs = vals.tolist()
        if kind == "date":
            vs = [iso_date(v) for v in vs]
        if nulls.any():
            vs = [None if isn else v for v, isn in zip(vs, nulls.tolist())]
        lists.append(vs)
    rows = list(zip(*lists)) if lists else []
    kinds = [c[2] for c in frame.cols]
    return ResultSet(list(plan.columns), kinds, rows, ordered=plan.ordered, metadata=metadata)


def execute_plan(plan: PhysicalPlan, store) -> ResultSet:
    store = getattr(store, "store", store)
    ex = Executor(store)
    frame = ex.run(plan)
    meta = {"engine": "analytic", **ex.metadata}
    return frame_to_result(frame, plan, meta)


def execute_analytic(ast, store, pushdown: bool = True) -> ResultSet:
    return execute_plan(plan_query(ast, store, pushdown), store)
