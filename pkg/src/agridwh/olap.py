"""HOLAP layer: materialized cubes over schema hierarchies plus relational fallback.

A cube axis is a (hierarchy, level) pair.  Members of a level are derived from
dimension rows reached from the fact by following foreign keys: the fact's own
key first, then dimension links (FieldFact -> Field -> Site -> Farmer).  Cells
are sparse: a coordinate exists only when at least one fact row maps to it.

Roll-up merges cells through child -> parent member maps captured at build
time, so it never touches the facts.  Drill-down cannot be derived from coarse
cells and rebuilds from the facts.
"""
from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .query import ResultSet, run_query
from .query.executor import combine_codes
from .query.parser import quote_ident, render_literal
from .query.result import null_first_key
from .schema import ConstellationSchema, LevelDef, build_default_schema

AGGREGATORS = ("SUM", "COUNT", "MAX")


class OlapError(Exception):
    pass


class UnsupportedAggregatorError(OlapError):
    pass


class UnknownMeasureError(OlapError):
    pass


class AlreadyAtTopError(OlapError):
    pass


class AlreadyAtBottomError(OlapError):
    pass


# -- members -------------------------------------------------------------------

def derive_member(level: LevelDef, value, start_date=None):
    """Member of ``level`` for a raw dimension value (dates as ISO text)."""
    if value is None:
        return None
    if level.derive == "month":
        return value[:7]
    if level.derive == "year":
        return value[:4]
    if level.derive == "season":
        return None if start_date is None else f"{start_date[:4]}-{value.lower()}"
    return value


def _season_date_column(schema, dimension: str) -> str:
    for c in schema.dimension(dimension).columns:
        if c.kind == "date":
            return c.name
    raise OlapError(f"season level needs a date column in {dimension}")


def dimension_path(schema: ConstellationSchema, fact: str, dimension: str):
    """Foreign-key hops from ``fact`` to ``dimension``: [(from table, column, to dimension)]."""
    start = [(fact, schema.dimension(d).surrogate_key, d) for d in schema.fact(fact).dimension_refs]
    queue = deque((hop[2], [hop]) for hop in start)
    seen = {hop[2] for hop in start}
    while queue:
        dim, path = queue.popleft()
        if dim == dimension:
            return path
        for col, parent in schema.dimension(dim).links:
            if parent not in seen:
                seen.add(parent)
                queue.append((parent, path + [(dim, col, parent)]))
    return None


def _parse_axis(axis):
    if isinstance(axis, str):
        hier, _, level = axis.partition("@")
        return hier, level
    return tuple(axis)


def _parse_measure(m):
    if isinstance(m, str):
        agg, _, rest = m.partition("(")
        return rest.rstrip(")").strip() or "*", agg.strip().upper()
    return m[0], m[1].upper()


def _measure_label(m) -> str:
    return f"{m[1]}({m[0]})"


def _axis_label(axis) -> str:
    return f"{axis[0]}_{axis[1]}"


class _Dims:
    """Dimension tables as Python lists, read once per build."""

    def __init__(self, store, schema):
        self.store = store
        self.schema = schema
        self._cache = {}

    def table(self, name):
        if name not in self._cache:
            recs = list(self.store.scan(name))
            key = self.schema.dimension(name).surrogate_key
            self._cache[name] = (recs, {r[key]: i for i, r in enumerate(recs)})
        return self._cache[name]

    def level_values(self, level: LevelDef) -> list:
        recs, _ = self.table(level.dimension)
        if level.derive == "season":
            dcol = _season_date_column(self.schema, level.dimension)
            return [derive_member(level, r[level.column], r[dcol]) for r in recs]
        return [derive_member(level, r[level.column]) for r in recs]

    def follow(self, from_dim: str, rows: np.ndarray, path) -> np.ndarray:
        """Row indices in the path's last dimension for row indices of ``from_dim``."""
        cur = rows
        for src, col, dst in path:
            recs, _ = self.table(src)
            _, dst_index = self.table(dst)
            step = np.array([dst_index.get(r[col], -1) for r in recs], dtype=np.int64)
            cur = step[cur] if len(step) else cur
        return cur


def _hops_between(schema, lower: str, upper: str):
    """Link hops from dimension ``lower`` to ``upper`` (empty when equal)."""
    if lower == upper:
        return []
    queue = deque([(lower, [])])
    seen = {lower}
    while queue:
        dim, path = queue.popleft()
        for col, parent in schema.dimension(dim).links:
            if parent == upper:
                return path + [(dim, col, parent)]
            if parent not in seen:
                seen.add(parent)
                queue.append((parent, path + [(dim, col, parent)]))
    raise OlapError(f"no link path from {lower} to {upper}")


def _level_index(schema, hier: str, level: str) -> int:
    names = [lv.name for lv in schema.hierarchy(hier).levels]
    if level not in names:
        raise OlapError(f"hierarchy {hier} has no level {level!r} (levels: {', '.join(names)})")
    return names.index(level)


def _lineage(schema, dims: _Dims, hier: str, base: int):
    """Member sets per level and child -> parent maps from ``base`` upwards."""
    levels = schema.hierarchy(hier).levels
    base_dim = levels[base].dimension
    recs, _ = dims.table(base_dim)
    rows = np.arange(len(recs), dtype=np.int64)
    per_level = []
    members = {}
    for lv in levels[base:]:
        idx = dims.follow(base_dim, rows, _hops_between(schema, base_dim, lv.dimension))
        vals = dims.level_values(lv)
        per_level.append([vals[i] if i >= 0 else None for i in idx.tolist()])
        members[lv.name] = set(vals)
    parents = {}
    for j in range(len(per_level) - 1):
        child, parent = levels[base + j].name, levels[base + j + 1].name
        mapping = {}
        for c, p in zip(per_level[j], per_level[j + 1]):
            if mapping.setdefault(c, p) != p:
                raise OlapError(f"{hier}: level {child} member {c!r} has parents {mapping[c]!r} and {p!r}")
        parents[child] = mapping
    return members, parents


# -- cube --------------------------------------------------------------------

@dataclass
class Cube:
    fact: str
    axes: tuple  # ((hierarchy, level), ...)
    measures: tuple  # ((measure or "*", aggregator), ...)
    cells: dict  # coordinate tuple -> tuple of measure values
    base_level_signature: tuple
    members: dict = field(default_factory=dict, repr=False)  # (hierarchy, level) -> member set
    parents: dict = field(default_factory=dict, repr=False)  # (hierarchy, level) -> {child: parent}
    metadata: dict = field(default_factory=dict)

    @property
    def signature(self):
        return self.fact, self.axes, self.measures

    def axis_index(self, axis) -> int:
        if isinstance(axis, int):
            if not 0 <= axis < len(self.axes):
                raise OlapError(f"axis {axis} out of range")
            return axis
        for i, (h, _) in enumerate(self.axes):
            if h == axis:
                return i
        raise OlapError(f"cube has no axis {axis!r}")

    def sorted_cells(self):
        return sorted(self.cells.items(), key=lambda kv: null_first_key(kv[0]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow([_axis_label(a) for a in self.axes] + [_measure_label(m) for m in self.measures])
        for coord, vals in self.sorted_cells():
            w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v)
                        for v in (*coord, *vals)])
        return buf.getvalue()

    def to_result(self) -> ResultSet:
        rows = [coord + vals for coord, vals in self.sorted_cells()]
        return ResultSet([_axis_label(a) for a in self.axes] + [_measure_label(m) for m in self.measures],
                         _kinds(rows, len(self.axes) + len(self.measures)), rows,
                         metadata={"provenance": "MOLAP"})


def _kinds(rows, width):
    kinds = []
    for j in range(width):
        sample = next((r[j] for r in rows if r[j] is not None), None)
        kinds.append("float64" if isinstance(sample, float) else
                     "int64" if isinstance(sample, int) else "text")
    return kinds


def _merge(agg: str, kind_float: bool, values):
    vals = [v for v in values if v is not None]
    if agg == "COUNT":
        return sum(vals)
    if not vals:
        return None
    if agg == "MAX":
        return max(vals)
    return math.fsum(vals) if kind_float else sum(vals)


def _check_measures(schema, fact, measures):
    out = []
    names = {m.name: m for m in schema.fact(fact).measures}
    for m in measures:
        name, agg = _parse_measure(m)
        if agg not in AGGREGATORS:
            raise UnsupportedAggregatorError(
                f"aggregator {agg} is not supported (cubes hold SUM, COUNT, MAX; derive AVG as SUM/COUNT)")
        if name == "*":
            if agg != "COUNT":
                raise UnknownMeasureError(f"{agg}(*) is not a measure")
        elif name not in names:
            raise UnknownMeasureError(f"{fact} has no measure {name!r}")
        out.append((name, agg))
    return tuple(out)


def _store_of(warehouse):
    return getattr(warehouse, "store", warehouse)


def _group_values(gid, ngroups, vals, nulls, kind, agg):
    """One aggregate per group id (list of Python values)."""
    order = np.argsort(gid, kind="stable")
    g = gid[order]
    live = ~nulls[order]
    v = vals[order][live]
    g = g[live]
    counts = np.bincount(g, minlength=ngroups)
    if agg == "COUNT":
        return counts.tolist()
    bounds = np.concatenate([[0], np.cumsum(counts)])
    vl = v.tolist()
    out = []
    for i in range(ngroups):
        seg = vl[bounds[i]:bounds[i + 1]]
        if not seg:
            out.append(None)
        elif agg == "MAX":
            out.append(max(seg))
        elif kind == "float64":
            out.append(math.fsum(seg))
        else:
            out.append(sum(seg))
    return out


def build_cube(fact: str, axes, measures, warehouse, schema: ConstellationSchema | None = None) -> Cube:
    """Materialize ``measures`` of ``fact`` grouped by the axis members."""
    schema = schema or build_default_schema()
    store = _store_of(warehouse)
    schema.fact(fact)
    axes = tuple(_parse_axis(a) for a in axes)
    if len({h for h, _ in axes}) != len(axes):
        raise OlapError("each hierarchy may appear on one axis only")
    measures = _check_measures(schema, fact, measures)
    dims = _Dims(store, schema)
    kinds = {c.name: c.kind for c in store.columns(fact)}
    fk_cols = sorted({schema.dimension(d).surrogate_key for d in schema.fact(fact).dimension_refs})
    m_cols = sorted({m for m, _ in measures if m != "*"})
    arrays, n = store.scan_arrays(fact, projection=fk_cols + m_cols)

    codes, decoders, members, parents = [], [], {}, {}
    for hier, level in axes:
        li = _level_index(schema, hier, level)
        lv = schema.hierarchy(hier).levels[li]
        path = dimension_path(schema, fact, lv.dimension)
        if path is None:
            raise OlapError(f"{fact} cannot reach {hier}@{level} ({lv.dimension})")
        first_dim = path[0][2]
        recs, index = dims.table(first_dim)
        keys = arrays[path[0][1]][0]
        lookup_keys = np.array(sorted(index), dtype=np.int64)
        lookup_rows = np.array([index[k] for k in sorted(index)], dtype=np.int64)
        pos = np.clip(np.searchsorted(lookup_keys, keys), 0, max(len(lookup_keys) - 1, 0))
        if n and (len(lookup_keys) == 0 or (lookup_keys[pos] != keys).any()):
            raise OlapError(f"{fact}.{path[0][1]} has keys missing from {first_dim}")
        dim_rows = dims.follow(first_dim, np.arange(len(recs), dtype=np.int64), path[1:])
        vals = dims.level_values(lv)
        entity_member = [vals[i] if i >= 0 else None for i in dim_rows.tolist()]
        code_of: dict = {}
        decoder = []
        entity_code = np.empty(len(entity_member), dtype=np.int64)
        for i, mbr in enumerate(entity_member):
            c = code_of.get(mbr)
            if c is None:
                c = code_of[mbr] = len(decoder)
                decoder.append(mbr)
            entity_code[i] = c
        codes.append(entity_code[lookup_rows[pos]] if n else np.zeros(0, dtype=np.int64))
        decoders.append(decoder)
        lvl_members, lvl_parents = _lineage(schema, dims, hier, li)
        for name, s in lvl_members.items():
            members[(hier, name)] = s
        for name, mp in lvl_parents.items():
            parents[(hier, name)] = mp

    if n == 0:
        cells = {}
    else:
        gid, ngroups = combine_codes(codes, n)
        _, first = np.unique(gid, return_index=True)
        coords = [tuple(decoders[a][codes[a][r]] for a in range(len(axes))) for r in first.tolist()]
        columns = []
        for m, agg in measures:
            if m == "*":
                columns.append(np.bincount(gid, minlength=ngroups).tolist())
            else:
                vals, nulls = arrays[m]
                columns.append(_group_values(gid, ngroups, vals, nulls, kinds[m], agg))
        cells = {coords[g]: tuple(col[g] for col in columns) for g in range(ngroups)}
    return Cube(fact, axes, measures, cells, tuple(lv for _, lv in axes), members, parents,
                {"measure_kinds": {m: kinds.get(m, "int64") for m, _ in measures}})


def _float_measure(cube: Cube, i: int) -> bool:
    m = cube.measures[i][0]
    return cube.metadata.get("measure_kinds", {}).get(m) == "float64"


def _regroup(cube: Cube, coord_fn, axes) -> dict:
    buckets: dict = {}
    for coord, vals in cube.cells.items():
        buckets.setdefault(coord_fn(coord), []).append(vals)
    out = {}
    for coord, rows in buckets.items():
        out[coord] = tuple(_merge(agg, _float_measure(cube, i), [r[i] for r in rows])
                           for i, (_, agg) in enumerate(cube.measures))
    return out


def _replace(cube: Cube, axes, cells, **meta) -> Cube:
    return Cube(cube.fact, tuple(axes), cube.measures, cells, cube.base_level_signature,
                cube.members, cube.parents, {**cube.metadata, **meta})


def rollup(cube: Cube, axis, schema: ConstellationSchema | None = None) -> Cube:
    """Merge cells to the next coarser level of ``axis`` without reading facts."""
    schema = schema or build_default_schema()
    a = cube.axis_index(axis)
    hier, level = cube.axes[a]
    levels = [lv.name for lv in schema.hierarchy(hier).levels]
    li = levels.index(level)
    if li == len(levels) - 1:
        raise AlreadyAtTopError(f"{hier} is already at its top level {level}")
    mapping = cube.parents[(hier, level)]
    axes = list(cube.axes)
    axes[a] = (hier, levels[li + 1])
    cells = _regroup(cube, lambda c: c[:a] + (mapping[c[a]],) + c[a + 1:], axes)
    return _replace(cube, axes, cells)


def drilldown(cube: Cube, axis, warehouse, schema: ConstellationSchema | None = None) -> Cube:
    """Rebuild from the facts one level finer on ``axis``."""
    schema = schema or build_default_schema()
    a = cube.axis_index(axis)
    hier, level = cube.axes[a]
    levels = schema.hierarchy(hier).levels
    li = [lv.name for lv in levels].index(level)
    if li == 0 or dimension_path(schema, cube.fact, levels[li - 1].dimension) is None:
        raise AlreadyAtBottomError(f"{hier} is already at its finest level {level} for {cube.fact}")
    axes = list(cube.axes)
    axes[a] = (hier, levels[li - 1].name)
    return build_cube(cube.fact, axes, cube.measures, warehouse, schema)


def slice_dice(cube: Cube, filters) -> Cube:
    """Keep cells whose member on each filtered axis is in the given set.

    Members unknown to their level select nothing and are listed in
    ``metadata["unknown_members"]``.
    """
    checks = []
    unknown = {}
    for axis, wanted in filters:
        a = cube.axis_index(axis)
        wanted = set(wanted)
        valid = cube.members.get(cube.axes[a])
        if valid is not None:
            bad = wanted - valid
            if bad:
                unknown[cube.axes[a][0]] = sorted(bad, key=lambda v: (v is not None, str(v)))
        checks.append((a, wanted))
    cells = {c: v for c, v in cube.cells.items() if all(c[a] in w for a, w in checks)}
    out = _replace(cube, cube.axes, cells)
    if unknown:
        out.metadata["unknown_members"] = unknown
    return out


@dataclass
class PivotGrid:
    row_axes: tuple
    column_axis: tuple
    row_keys: list
    column_keys: list
    values: list  # values[r][c], None where the cube has no cell
    measure: tuple

    def transpose(self) -> "PivotGrid":
        if len(self.row_axes) != 1:
            raise OlapError("only a two-axis grid can be transposed")
        return PivotGrid((self.column_axis,), self.row_axes[0], [(k,) for k in self.column_keys],
                         [k[0] for k in self.row_keys],
                         [list(col) for col in zip(*self.values)] if self.values else [],
                         self.measure)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        corner = "/".join(_axis_label(a) for a in self.row_axes) + "\\" + _axis_label(self.column_axis)
        w.writerow([corner] + ["" if k is None else k for k in self.column_keys])
        for key, row in zip(self.row_keys, self.values):
            label = "/".join("" if k is None else str(k) for k in key)
            w.writerow([label] + ["" if v is None else (repr(v) if isinstance(v, float) else v)
                                  for v in row])
        return buf.getvalue()


def pivot(cube: Cube, axis_order=None, measure: int = 0) -> PivotGrid:
    """Grid with the last axis of ``axis_order`` across and the others down."""
    if len(cube.axes) < 2:
        raise OlapError("pivot needs a cube with at least two axes")
    order = list(range(len(cube.axes))) if axis_order is None else [cube.axis_index(a) for a in axis_order]
    if sorted(order) != list(range(len(cube.axes))):
        raise OlapError("axis order must be a permutation of the cube axes")
    rows_at, col_at = order[:-1], order[-1]
    row_keys = sorted({tuple(c[i] for i in rows_at) for c in cube.cells}, key=null_first_key)
    col_keys = sorted({c[col_at] for c in cube.cells}, key=lambda v: (v is not None, v))
    rpos = {k: i for i, k in enumerate(row_keys)}
    cpos = {k: i for i, k in enumerate(col_keys)}
    grid = [[None] * len(col_keys) for _ in row_keys]
    for c, vals in cube.cells.items():
        grid[rpos[tuple(c[i] for i in rows_at)]][cpos[c[col_at]]] = vals[measure]
    return PivotGrid(tuple(cube.axes[i] for i in rows_at), cube.axes[col_at], row_keys, col_keys,
                     grid, cube.measures[measure])


# -- HOLAP ---------------------------------------------------------------------

@dataclass(frozen=True)
class CubeQuery:
    """Aggregate ``measures`` of ``fact`` by ``axes``.

    ``filters`` are (hierarchy, level, members) triples; ``attribute_filters``
    are (dimension, column, op, literal) predicates, which no cube can answer.
    """
    fact: str
    axes: tuple
    measures: tuple
    filters: tuple = ()
    attribute_filters: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(_parse_axis(a) for a in self.axes))
        object.__setattr__(self, "measures", tuple(_parse_measure(m) for m in self.measures))
        object.__setattr__(self, "filters",
                           tuple((h, lv, frozenset(ms)) for h, lv, ms in self.filters))
        object.__setattr__(self, "attribute_filters", tuple(tuple(f) for f in self.attribute_filters))


class CubeCache:
    """Cubes keyed by (fact, axes, measures); built on first request."""

    def __init__(self, schema: ConstellationSchema | None = None):
        self.schema = schema or build_default_schema()
        self._cubes: dict = {}

    def get(self, fact, axes, measures, warehouse) -> Cube:
        key = (fact, tuple(_parse_axis(a) for a in axes),
               _check_measures(self.schema, fact, measures))
        cube = self._cubes.get(key)
        if cube is None:
            cube = build_cube(fact, key[1], key[2], warehouse, self.schema)
            self._cubes.setdefault(key, cube)
        return self._cubes[key]

    def add(self, cube: Cube) -> None:
        self._cubes.setdefault(cube.signature, cube)

    def cubes(self) -> list[Cube]:
        return list(self._cubes.values())

    def __len__(self):
        return len(self._cubes)


def covering_cube(query: CubeQuery, cubes, schema: ConstellationSchema | None = None):
    """Smallest cube that can answer ``query`` structurally, or None."""
    schema = schema or build_default_schema()
    if query.attribute_filters:
        return None
    best = None
    for cube in cubes:
        if cube.fact != query.fact or not set(query.measures) <= set(cube.measures):
            continue
        levels = {h: _level_index(schema, h, lv) for h, lv in cube.axes}
        needed = [(h, lv) for h, lv in query.axes] + [(h, lv) for h, lv, _ in query.filters]
        if all(h in levels and levels[h] <= _level_index(schema, h, lv) for h, lv in needed):
            if best is None or len(cube.cells) < len(best.cells):
                best = cube
    return best


def _ancestor(cube: Cube, schema, hier: str, level: str, target: str, member):
    names = [lv.name for lv in schema.hierarchy(hier).levels]
    for name in names[names.index(level):names.index(target)]:
        member = cube.parents[(hier, name)][member]
    return member


def _finish(query: CubeQuery, groups: dict, float_measures, provenance: str, extra=None) -> ResultSet:
    rows = []
    for coord, parts in groups.items():
        vals = tuple(_merge(agg, float_measures[i], [p[i] for p in parts])
                     for i, (_, agg) in enumerate(query.measures))
        rows.append(coord + vals)
    rows.sort(key=null_first_key)
    cols = [_axis_label(a) for a in query.axes] + [_measure_label(m) for m in query.measures]
    return ResultSet(cols, _kinds(rows, len(cols)), rows,
                     metadata={"provenance": provenance, **(extra or {})})


def _molap(query: CubeQuery, cube: Cube, schema) -> ResultSet:
    pos = {h: i for i, (h, _) in enumerate(cube.axes)}
    m_index = [cube.measures.index(m) for m in query.measures]
    groups: dict = {}
    for coord, vals in cube.cells.items():
        ok = True
        for h, lv, members in query.filters:
            i = pos[h]
            if _ancestor(cube, schema, h, cube.axes[i][1], lv, coord[i]) not in members:
                ok = False
                break
        if not ok:
            continue
        key = tuple(_ancestor(cube, schema, h, cube.axes[pos[h]][1], lv, coord[pos[h]])
                    for h, lv in query.axes)
        groups.setdefault(key, []).append(tuple(vals[j] for j in m_index))
    floats = [_float_measure(cube, j) for j in m_index]
    return _finish(query, groups, floats, "MOLAP")


def compile_rolap_sql(query: CubeQuery, schema: ConstellationSchema | None = None):
    """SQL grouping by the raw columns behind each level, plus how to read members back.

    Returns ``(sql, extractors)``: one extractor per axis and per filter, each
    mapping a result row to a member.
    """
    schema = schema or build_default_schema()
    aliases: dict[str, str] = {}
    joins = []

    def alias_for(dim):
        if dim in aliases:
            return aliases[dim]
        path = dimension_path(schema, query.fact, dim)
        if path is None:
            raise OlapError(f"{query.fact} cannot reach dimension {dim}")
        prev = "f"
        for src, col, dst in path:
            if dst not in aliases:
                aliases[dst] = f"d{len(aliases) + 1}"
                key = schema.dimension(dst).surrogate_key
                joins.append(f"INNER JOIN {quote_ident(dst)} {aliases[dst]} "
                             f"ON {prev}.{quote_ident(col)} = {aliases[dst]}.{quote_ident(key)}")
            prev = aliases[dst]
        return aliases[dim]

    select: list[str] = []

    def column(alias, col):
        expr = f"{alias}.{quote_ident(col)}"
        if expr not in select:
            select.append(expr)
        return select.index(expr)

    def extractor(hier, level):
        lv = schema.hierarchy(hier).levels[_level_index(schema, hier, level)]
        a = alias_for(lv.dimension)
        i = column(a, lv.column)
        if lv.derive == "season":
            j = column(a, _season_date_column(schema, lv.dimension))
            return lambda r: derive_member(lv, r[i], r[j])
        return lambda r: derive_member(lv, r[i])

    axis_ex = [extractor(h, lv) for h, lv in query.axes]
    filter_ex = [(extractor(h, lv), members) for h, lv, members in query.filters]
    where = []
    for dim, col, op, lit in query.attribute_filters:
        if op not in ("=", ">=", "LIKE"):
            raise OlapError(f"attribute filter operator {op!r} is not supported")
        where.append(f"{alias_for(dim)}.{quote_ident(col)} {op} {render_literal(lit)}")
    group_cols = list(select)
    aggs = [f"{agg}(*)" if m == "*" else f"{agg}(f.{quote_ident(m)})" for m, agg in query.measures]
    aggs.append("COUNT(*)")  # row count, so empty whole-table aggregates can be dropped
    sql = f"SELECT {', '.join(group_cols + aggs)} FROM {quote_ident(query.fact)} f"
    if joins:
        sql += " " + " ".join(joins)
    if where:
        sql += " WHERE " + " AND ".join(where)
    if group_cols:
        sql += " GROUP BY " + ", ".join(group_cols)
    return sql, axis_ex, filter_ex, len(group_cols)


def _rolap(query: CubeQuery, warehouse, schema) -> ResultSet:
    sql, axis_ex, filter_ex, width = compile_rolap_sql(query, schema)
    res = run_query(sql, warehouse)
    groups: dict = {}
    for r in res.rows:
        if r[-1] == 0:
            continue
        if not all(ex(r) in members for ex, members in filter_ex):
            continue
        key = tuple(ex(r) for ex in axis_ex)
        groups.setdefault(key, []).append(r[width:-1])
    kinds = {c.name: c.kind for c in schema.fact_columns(query.fact)}
    floats = [kinds.get(m) == "float64" for m, _ in query.measures]
    return _finish(query, groups, floats, "ROLAP", {"sql": sql})


def holap_answer(query: CubeQuery, cubes, warehouse, schema: ConstellationSchema | None = None,
                 force: str | None = None) -> tuple[ResultSet, str]:
    """Answer from a covering cube (MOLAP) or through the SQL engine (ROLAP)."""
    schema = schema or build_default_schema()
    if isinstance(cubes, CubeCache):
        cubes = cubes.cubes()
    cube = None if force == "ROLAP" else covering_cube(query, cubes or (), schema)
    if force == "MOLAP" and cube is None:
        raise OlapError("no cube covers this query")
    if cube is not None:
        return _molap(query, cube, schema), "MOLAP"
    return _rolap(query, warehouse, schema), "ROLAP"
