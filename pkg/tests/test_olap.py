import csv
import io
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from agridwh.etl import SourceGenSpec, etl_run, generate_synthetic_sources
from agridwh.olap import (AlreadyAtBottomError, AlreadyAtTopError, CubeCache, CubeQuery, OlapError,
                          UnknownMeasureError, UnsupportedAggregatorError, build_cube, drilldown,
                          holap_answer, pivot, rollup, slice_dice)
from agridwh.query import run_query
from agridwh.schema import UnknownHierarchyError
from agridwh.storage import TieredWarehouse
from olap_oracle import CONFIGS, cells_match, groupby_oracle, rows_match

SEASON_FARMER = CONFIGS["fieldfact_season_farmer"]


def _fsum(values):
    return math.fsum(v for v in values if v is not None)


@pytest.fixture(scope="module")
def season_cube(small, schema):
    return build_cube(*SEASON_FARMER, small["wh"], schema)


@pytest.mark.parametrize("name", sorted(CONFIGS))
def test_cells_equal_group_by(small, schema, name):
    cube = build_cube(*CONFIGS[name], small["wh"], schema)
    assert cube.cells
    assert cells_match(cube.cells, groupby_oracle(small["wh"], *CONFIGS[name])) == []


def test_count_partitions_facts(season_cube, small):
    i = season_cube.measures.index(("*", "COUNT"))
    assert sum(v[i] for v in season_cube.cells.values()) == small["wh"].store.row_count("FieldFact")


def test_members_valid_and_sparse(season_cube):
    for coord, vals in season_cube.cells.items():
        for axis, m in zip(season_cube.axes, coord):
            assert m in season_cube.members[axis]
        assert vals[1] > 0


def test_empty_fact_gives_no_cells(tmp_path, schema):
    generate_synthetic_sources(SourceGenSpec(seed=5, n_datasets=1, rows_per_fact=0), tmp_path / "src")
    wh = TieredWarehouse(tmp_path / "wh")
    etl_run(tmp_path / "src", wh)
    assert build_cube(*SEASON_FARMER, wh, schema).cells == {}


def test_measure_errors(small, schema):
    with pytest.raises(UnsupportedAggregatorError):
        build_cube("FieldFact", ["time@year"], ["AVG(appliedQuantity)"], small["wh"], schema)
    with pytest.raises(UnknownMeasureError):
        build_cube("FieldFact", ["time@year"], ["SUM(revenue)"], small["wh"], schema)
    with pytest.raises(UnknownHierarchyError):
        build_cube("FieldFact", ["weather@day"], ["COUNT(*)"], small["wh"], schema)
    with pytest.raises(OlapError):
        build_cube("FieldFact", ["time@decade"], ["COUNT(*)"], small["wh"], schema)


# -- roll-up / drill-down ------------------------------------------------------------------------

def test_rollup_season_to_year_sums_seasons(season_cube, small, schema):
    up = rollup(season_cube, "time", schema)
    assert up.axes[0] == ("time", "year")
    for (year, farmer), vals in up.cells.items():
        parts = [v for (s, f), v in season_cube.cells.items() if s.startswith(year) and f == farmer]
        sums = [p[0] for p in parts if p[0] is not None]
        assert vals[0] == (None if not sums else pytest.approx(math.fsum(sums), rel=1e-12))
        assert vals[1] == sum(p[1] for p in parts)
        assert vals[2] == max((p[2] for p in parts if p[2] is not None), default=None)
    assert cells_match(up.cells, build_cube("FieldFact", ["time@year", "location@farmer"],
                                            season_cube.measures, small["wh"], schema).cells) == []


def test_rollup_twice_equals_rebuild(small, schema):
    cube = build_cube("FieldFact", ["time@day", "location@field"], ["SUM(appliedCost)", "COUNT(*)"],
                      small["wh"], schema)
    up = rollup(rollup(cube, "time", schema), "location", schema)
    up = rollup(rollup(up, "time", schema), "location", schema)
    assert up.axes == (("time", "season"), ("location", "farmer"))
    direct = build_cube("FieldFact", up.axes, cube.measures, small["wh"], schema)
    assert cells_match(up.cells, direct.cells) == []


def test_rollup_does_not_rescan(season_cube, schema):
    # no warehouse argument at all: roll-up works from cells and parent maps only
    assert rollup(season_cube, "time", schema).cells


def test_rollup_at_top(season_cube, schema):
    with pytest.raises(AlreadyAtTopError):
        rollup(season_cube, "location", schema)


def test_drilldown_then_rollup_is_identity(small, schema):
    cube = build_cube("FieldFact", ["time@year", "location@site"], ["SUM(appliedQuantity)", "COUNT(*)"],
                      small["wh"], schema)
    down = drilldown(cube, "time", small["wh"], schema)
    assert down.axes[0] == ("time", "season")
    assert cells_match(down.cells, build_cube("FieldFact", down.axes, cube.measures, small["wh"],
                                              schema).cells) == []
    assert cells_match(rollup(down, "time", schema).cells, cube.cells) == []


def test_drilldown_at_bottom(small, schema):
    cube = build_cube("FieldFact", ["time@day"], ["COUNT(*)"], small["wh"], schema)
    with pytest.raises(AlreadyAtBottomError):
        drilldown(cube, "time", small["wh"], schema)


def test_drilldown_below_fact_grain(small, schema):
    # Sale links Farmer directly, so farmer is its finest location level
    cube = build_cube("Sale", ["location@farmer"], ["COUNT(*)"], small["wh"], schema)
    with pytest.raises(AlreadyAtBottomError):
        drilldown(cube, "location", small["wh"], schema)


# -- slice / dice ----------------------------------------------------------------------------------

def test_slice_spring_matches_filtered_total(season_cube, small):
    springs = {m for m in season_cube.members[("time", "season")] if m.endswith("-spring")}
    sliced = slice_dice(season_cube, [("time", springs)])
    total = run_query("SELECT SUM(f.appliedQuantity) FROM FieldFact f INNER JOIN OperationTime o "
                      "ON f.OperationTimeID = o.OperationTimeID WHERE o.Season LIKE 'spring'",
                      small["wh"]).rows[0][0]
    assert math.isclose(_fsum(v[0] for v in sliced.cells.values()), total, rel_tol=1e-9)


def test_slice_identity_and_disjoint(season_cube):
    everything = [(a, season_cube.members[ax]) for a, ax in zip(("time", "location"), season_cube.axes)]
    assert slice_dice(season_cube, everything).cells == season_cube.cells
    none = slice_dice(season_cube, [("location", {-1})])
    assert none.cells == {}
    assert none.metadata["unknown_members"] == {"location": [-1]}


@settings(max_examples=50, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.data())
def test_dice_is_subset(season_cube, data):
    seasons = sorted(season_cube.members[("time", "season")], key=str)
    farmers = sorted(season_cube.members[("location", "farmer")], key=str)
    s = data.draw(st.sets(st.sampled_from(seasons)))
    f = data.draw(st.sets(st.sampled_from(farmers)))
    out = slice_dice(season_cube, [("time", s), (1, f)])
    want = {c: v for c, v in season_cube.cells.items() if c[0] in s and c[1] in f}
    assert out.cells == want


@settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.lists(st.sampled_from(["time", "location"]), max_size=3))
def test_totals_invariant_under_rollup(season_cube, schema, axes):
    cube = season_cube
    for a in axes:
        try:
            cube = rollup(cube, a, schema)
        except AlreadyAtTopError:
            pass
    assert math.isclose(_fsum(v[0] for v in cube.cells.values()),
                        _fsum(v[0] for v in season_cube.cells.values()), rel_tol=1e-12)
    assert sum(v[1] for v in cube.cells.values()) == sum(v[1] for v in season_cube.cells.values())


# -- pivot -------------------------------------------------------------------------------------

def test_pivot_values_are_cells(season_cube):
    grid = pivot(season_cube)
    flat = [v for row in grid.values for v in row if v is not None]
    assert Counter(flat) == Counter(v[0] for v in season_cube.cells.values() if v[0] is not None)
    assert len(grid.row_keys) * len(grid.column_keys) >= len(season_cube.cells)


def test_pivot_transpose_symmetry(season_cube):
    a = pivot(season_cube, ["location", "time"]).transpose()
    b = pivot(season_cube, ["time", "location"])
    assert (a.row_keys, a.column_keys, a.values) == (b.row_keys, b.column_keys, b.values)
    assert a.to_csv() == b.to_csv()


def test_pivot_row_sums_equal_rollup_along_columns(season_cube, schema):
    grid = pivot(season_cube, ["time", "location"])
    q = CubeQuery("FieldFact", ["time@season"], ["SUM(appliedQuantity)"])
    res, prov = holap_answer(q, [season_cube], None, schema)
    assert prov == "MOLAP"
    sums = {k[0]: _fsum(row) for k, row in zip(grid.row_keys, grid.values)}
    assert set(sums) == {r[0] for r in res.rows}
    for member, total in res.rows:
        assert math.isclose(sums[member], total or 0.0, rel_tol=1e-12)


def test_pivot_one_by_one(season_cube):
    one = slice_dice(season_cube, [(0, {next(iter(season_cube.cells))[0]}),
                                   (1, {next(iter(season_cube.cells))[1]})])
    grid = pivot(one)
    assert len(grid.row_keys) == len(grid.column_keys) == 1
    assert grid.values == [[next(iter(one.cells.values()))[0]]]


def test_pivot_errors(small, season_cube, schema):
    with pytest.raises(OlapError):
        pivot(season_cube, ["time", "time"])
    with pytest.raises(OlapError):
        pivot(build_cube("FieldFact", ["time@year"], ["COUNT(*)"], small["wh"], schema))


def test_csv_exports(season_cube):
    rows = list(csv.reader(io.StringIO(season_cube.to_csv())))
    assert rows[0] == ["time_season", "location_farmer", "SUM(appliedQuantity)", "COUNT(*)",
                       "MAX(appliedQuantity)"]
    assert len(rows) == len(season_cube.cells) + 1
    grid = list(csv.reader(io.StringIO(pivot(season_cube).to_csv())))
    assert grid[0][0] == "time_season\\location_farmer"


# -- HOLAP -------------------------------------------------------------------------------------

def _random_covered_queries(cube, schema, rng, n):
    out = []
    levels = {h: [lv.name for lv in schema.hierarchy(h).levels] for h, _ in cube.axes}
    for _ in range(n):
        axes, filters = [], []
        for h, lv in cube.axes:
            names = levels[h][levels[h].index(lv):]
            if rng.random() < 0.7:
                axes.append(f"{h}@{names[rng.integers(len(names))]}")
            if rng.random() < 0.4:
                flv = names[rng.integers(len(names))]
                probe = _level_members(cube, schema, h, flv)
                k = int(rng.integers(1, len(probe) + 1))
                filters.append((h, flv, set(rng.choice(sorted(probe, key=str), k, replace=False).tolist())))
        ms = [m for m in cube.measures if rng.random() < 0.6] or [cube.measures[0]]
        out.append(CubeQuery(cube.fact, axes, ms, filters))
    return out


def _level_members(cube, schema, hier, level):
    return {m for m in cube.members[(hier, level)] if m is not None}


def test_holap_covered_queries_agree(small, schema, season_cube):
    rng = np.random.default_rng(11)
    for q in _random_covered_queries(season_cube, schema, rng, 20):
        mol, p1 = holap_answer(q, [season_cube], small["wh"], schema)
        rol, p2 = holap_answer(q, [season_cube], small["wh"], schema, force="ROLAP")
        assert (p1, p2) == ("MOLAP", "ROLAP")
        assert mol.columns == rol.columns
        assert rows_match(mol.rows, rol.rows), q


def test_attribute_filter_goes_relational(small, schema, season_cube):
    q = CubeQuery("FieldFact", ["location@farmer"], ["SUM(appliedQuantity)"],
                  attribute_filters=[("Farmer", "FarmerName", "LIKE", "a%")])
    res, prov = holap_answer(q, [season_cube], small["wh"], schema)
    assert prov == "ROLAP" and res.metadata["provenance"] == "ROLAP"
    assert "LIKE" in res.metadata["sql"]


def test_no_cubes_all_relational(small, schema):
    q = CubeQuery("FieldFact", ["time@year"], ["COUNT(*)"])
    assert holap_answer(q, [], small["wh"], schema)[1] == "ROLAP"
    assert holap_answer(q, CubeCache(schema), small["wh"], schema)[1] == "ROLAP"
    with pytest.raises(OlapError):
        holap_answer(q, [], small["wh"], schema, force="MOLAP")


def test_coverage_requires_finer_level_and_measures(small, schema):
    cube = build_cube("FieldFact", ["time@year"], ["COUNT(*)"], small["wh"], schema)
    assert holap_answer(CubeQuery("FieldFact", ["time@season"], ["COUNT(*)"]), [cube],
                        small["wh"], schema)[1] == "ROLAP"
    assert holap_answer(CubeQuery("FieldFact", ["time@year"], ["SUM(appliedCost)"]), [cube],
                        small["wh"], schema)[1] == "ROLAP"
    assert holap_answer(CubeQuery("FieldFact", ["time@year"], ["COUNT(*)"]), [cube],
                        small["wh"], schema)[1] == "MOLAP"


def test_cube_cache_builds_once(small, schema):
    cache = CubeCache(schema)
    a = cache.get(*SEASON_FARMER, small["wh"])
    b = cache.get("FieldFact", [("time", "season"), ("location", "farmer")],
                  [("appliedQuantity", "SUM"), ("*", "COUNT"), ("appliedQuantity", "MAX")], small["wh"])
    assert a is b and len(cache) == 1
