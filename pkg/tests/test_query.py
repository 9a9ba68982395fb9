import math
from collections import Counter

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from agridwh.bench import urea_query
from agridwh.query import (QueryError, SqlSyntaxError, UnsupportedFeatureError, execute_naive_oracle,
                           execute_plan, parse_query, plan_query, render, run_query)
from agridwh.query.ast import Comparison, subquery_depth
from agridwh.query.planner import HashJoinNode, ScanNode, UnionNode, UnknownColumnError, UnknownTableError

from conftest import make_warehouse


def both(sql, wh):
    ast = parse_query(sql)
    a = execute_plan(plan_query(ast, wh), wh)
    b = execute_naive_oracle(ast, wh)
    assert a.columns == b.columns
    assert a.same_as(b), (sql, a.rows, b.rows)
    return a


@pytest.fixture(scope="module")
def tiny():
    return make_warehouse({
        "Fertiliser": (["FertiliserID:int64", "Name:text", "GroupName:text"],
                       [(1, "Urea", "N"), (2, "Urban", "N"), (3, "Ura", "P"), (4, None, "P")]),
        "Sales": (["id:int64", "grp:text", "amount:float64", "qty:int64"],
                  [(1, "a", 10.0, 1), (2, "a", 5.5, 2), (3, "b", 1.0, 3),
                   (4, "b", 2.0, None), (5, "c", 7.0, 5), (6, None, 8.0, 6)]),
        "Empty": (["k:int64", "t:text"], []),
        "L": (["k:int64", "lv:text"], [(1, "x"), (2, "y"), (None, "z")]),
        "R": (["k:int64", "rv:int64"], [(1, 10), (1, 11), (3, 30), (None, 99)]),
    })


# -- parser -----------------------------------------------------------------------------------

def test_parse_single_comparison():
    q = parse_query("SELECT CropName FROM Crop WHERE EstYield >= 5")
    assert isinstance(q.selects[0].where, Comparison)
    assert q.selects[0].where.op == ">="


def test_parse_urea_depth_two():
    q = parse_query(urea_query())
    assert subquery_depth(q) == 2
    tables = {j.source.name for j in q.selects[0].joins} | {q.selects[0].source.name}
    assert tables == {"FieldFact", "Crop", "Field", "Site", "Farmer", "Fertiliser", "OperationTime"}


def test_full_outer_unsupported():
    with pytest.raises(UnsupportedFeatureError) as e:
        parse_query("SELECT * FROM A FULL OUTER JOIN B")
    assert e.value.construct == "FULL OUTER JOIN"


@pytest.mark.parametrize("sql", ["SELECT a FROM t UNION ALL SELECT a FROM u",
                                 "SELECT a FROM t WHERE a < 3", "SELECT AVG(a) FROM t",
                                 "SELECT a FROM t LIMIT 1 OFFSET 2"])
def test_other_unsupported(sql):
    with pytest.raises(UnsupportedFeatureError):
        parse_query(sql)


def test_syntax_error_position():
    with pytest.raises(SqlSyntaxError) as e:
        parse_query("SELECT FROM")
    assert e.value.line == 1


@pytest.mark.parametrize("sql", [
    "SELECT a, b AS c FROM t WHERE a >= 1 AND (b = 'x' OR b LIKE 'y%')",
    "SELECT g, SUM(v) AS s FROM t GROUP BY g HAVING s >= 2 ORDER BY s DESC LIMIT 3",
    "SELECT t.a FROM t LEFT JOIN u ON t.a = u.b WHERE u.c IN (SELECT d FROM w)",
    "SELECT a FROM (SELECT a FROM t) x UNION SELECT b FROM u",
    'SELECT "Order".quantityOrdered FROM "Order"',
])
def test_render_round_trip(sql):
    q = parse_query(sql)
    assert parse_query(render(q)) == q


# -- planner -------------------------------------------------------------------------------

def test_where_only_single_scan(tiny):
    plan = plan_query(parse_query("SELECT id FROM Sales WHERE amount >= 5"), tiny)
    scans = [n for n in plan.nodes() if isinstance(n, ScanNode)]
    assert len(scans) == 1 and scans[0].pushed
    assert not any(isinstance(n, HashJoinNode) for n in plan.nodes())


def test_filter_pushed_below_join(tiny):
    plan = plan_query(parse_query("SELECT L.lv, R.rv FROM L JOIN R ON L.k = R.k WHERE R.rv >= 11"), tiny)
    scans = {n.table: n for n in plan.nodes() if isinstance(n, ScanNode)}
    assert scans["R"].pushed and not scans["L"].pushed


def test_union_node(tiny):
    plan = plan_query(parse_query("SELECT k FROM L UNION SELECT k FROM R"), tiny)
    assert isinstance(plan.root, UnionNode) or any(isinstance(n, UnionNode) for n in plan.nodes())


def test_unknown_names(tiny):
    with pytest.raises(UnknownTableError):
        plan_query(parse_query("SELECT a FROM Nope"), tiny)
    with pytest.raises(UnknownColumnError):
        plan_query(parse_query("SELECT nope FROM L"), tiny)
    with pytest.raises(QueryError):
        plan_query(parse_query("SELECT k FROM L JOIN R ON L.k = R.k"), tiny)  # ambiguous k


# -- execution semantics ---------------------------------------------------------------------

def test_count_star(tiny):
    assert both("SELECT COUNT(*) FROM Sales", tiny).rows == [(6,)]


def test_group_having_hand_computed(tiny):
    # groups: a -> 15.5, b -> 3.0, c -> 7.0, NULL -> 8.0 ; keep >= 7
    r = both("SELECT grp, SUM(amount) AS total FROM Sales GROUP BY grp HAVING total >= 7", tiny)
    assert sorted(r.rows, key=lambda x: (x[0] is not None, x[0])) == [(None, 8.0), ("a", 15.5), ("c", 7.0)]


def test_like_wildcards(tiny):
    r = both("SELECT Name FROM Fertiliser WHERE Name LIKE 'Ur%a'", tiny)
    assert sorted(r.column("Name")) == ["Ura", "Urea"]


def test_like_case_insensitive_equals_case_sensitive(tiny):
    assert len(both("SELECT Name FROM Fertiliser WHERE Name LIKE 'urea'", tiny)) == 1
    assert len(both("SELECT Name FROM Fertiliser WHERE Name = 'urea'", tiny)) == 0


def test_empty_table(tiny):
    r = both("SELECT k, t FROM Empty WHERE k >= 1", tiny)
    assert r.columns == ["k", "t"] and r.rows == []
    assert both("SELECT COUNT(*), MAX(k) FROM Empty", tiny).rows == [(0, None)]


def test_nulls_fail_comparisons(tiny):
    assert len(both("SELECT id FROM Sales WHERE qty >= 0", tiny)) == 5
    assert len(both("SELECT id FROM Sales WHERE qty >= 0 OR grp = 'b'", tiny)) == 6


def test_outer_joins(tiny):
    left = both("SELECT L.lv, R.rv FROM L LEFT JOIN R ON L.k = R.k", tiny)
    assert Counter(left.rows) == Counter([("x", 10), ("x", 11), ("y", None), ("z", None)])
    right = both("SELECT L.lv, R.rv FROM L RIGHT JOIN R ON L.k = R.k", tiny)
    assert Counter(right.rows) == Counter([("x", 10), ("x", 11), (None, 30), (None, 99)])


def test_union_distinct(tiny):
    r = both("SELECT k FROM L UNION SELECT k FROM R", tiny)
    assert sorted(r.rows, key=lambda x: (x[0] is not None, x[0])) == [(None,), (1,), (2,), (3,)]


def test_order_by_and_limit(tiny):
    r = both("SELECT id, amount FROM Sales ORDER BY amount DESC LIMIT 2", tiny)
    assert r.rows == [(1, 10.0), (6, 8.0)] and r.ordered


def test_in_subquery_and_from_subquery(tiny):
    r = both("SELECT lv FROM L WHERE k IN (SELECT k FROM R WHERE rv >= 10)", tiny)
    assert r.rows == [("x",)]
    r = both("SELECT s.g, s.n FROM (SELECT grp AS g, COUNT(*) AS n FROM Sales GROUP BY grp) s "
             "WHERE s.n >= 2", tiny)
    assert sorted(r.rows) == [("a", 2), ("b", 2)]


def test_int_sum_overflow_promoted():
    big = 2 ** 62
    wh = make_warehouse({"T": (["v:int64"], [(big,), (big,), (big,)])})
    a = run_query("SELECT SUM(v) FROM T", wh)
    b = run_query("SELECT SUM(v) FROM T", wh, engine="naive")
    assert a.rows == b.rows == [(float(3 * big),)]
    assert a.metadata.get("int_sum_promoted") and b.metadata.get("int_sum_promoted")


def test_date_literal_comparison():
    wh = make_warehouse({"T": (["d:date"], [("2016-04-12",), ("2017-04-20",), (None,)])})
    r = both("SELECT d FROM T WHERE d >= '2016-05-01' AND '2017-12-31' >= d", wh)
    assert r.rows == [("2017-04-20",)]


def test_float_sum_exact(tiny):
    wh = make_warehouse({"T": (["v:float64"], [(0.1,)] * 10 + [(1e16,), (-1e16,)])})
    r = both("SELECT SUM(v) FROM T", wh)
    assert r.rows == [(math.fsum([0.1] * 10 + [1e16, -1e16]),)]


def test_result_csv_rfc4180(tiny):
    r = run_query("SELECT Name, GroupName FROM Fertiliser WHERE GroupName = 'N'", tiny)
    assert r.to_csv().startswith("Name,GroupName\r\n")


def test_pushdown_disabled_same_result(tiny):
    sql = "SELECT L.lv, R.rv FROM L LEFT JOIN R ON L.k = R.k WHERE R.rv >= 11 OR L.lv = 'y'"
    ast = parse_query(sql)
    a = execute_plan(plan_query(ast, tiny, pushdown=False), tiny)
    b = execute_plan(plan_query(ast, tiny), tiny)
    assert a.same_as(b)


# -- random cross-check of the two engines ----------------------------------------------------

_A_ROWS = st.lists(st.tuples(st.integers(0, 6), st.one_of(st.none(), st.sampled_from(["p", "q", "Pq"])),
                             st.one_of(st.none(), st.sampled_from([0.5, 1.25, 2.0, -3.0, 1e-3])),
                             st.one_of(st.none(), st.integers(-3, 3)),
                             st.sampled_from(["2020-01-01", "2020-02-03", "2021-06-30"])), max_size=12)
_B_ROWS = st.lists(st.tuples(st.one_of(st.none(), st.integers(0, 6)), st.integers(0, 4),
                             st.sampled_from(["p", "r"])), max_size=10)


@st.composite
def _cond(draw, alias_a="A", alias_b=None):
    leaves = [
        f"{alias_a}.v >= {draw(st.sampled_from([-1, 0.5, 1.25]))}",
        f"{alias_a}.g = '{draw(st.sampled_from(['p', 'q', 'Pq']))}'",
        f"{alias_a}.g LIKE '{draw(st.sampled_from(['p%', '_q', 'PQ', '%']))}'",
        f"{alias_a}.n >= {draw(st.integers(-2, 2))}",
        f"{alias_a}.d >= '{draw(st.sampled_from(['2020-01-15', '2021-01-01']))}'",
        f"{alias_a}.id IN (SELECT aid FROM B WHERE w >= {draw(st.integers(0, 4))})",
    ]
    if alias_b:
        leaves += [f"{alias_b}.w >= {draw(st.integers(0, 4))}", f"{alias_b}.s = 'p'"]
    parts = draw(st.lists(st.sampled_from(leaves), min_size=1, max_size=3))
    op = draw(st.sampled_from([" AND ", " OR "]))
    return op.join(parts)


@st.composite
def _query(draw):
    shape = draw(st.sampled_from(["plain", "agg", "join", "joinagg", "union", "sub"]))
    where = f" WHERE {draw(_cond())}" if draw(st.booleans()) else ""
    if shape == "plain":
        sql = f"SELECT A.id, A.g, A.v FROM A{where}"
        cols = ["A.id", "A.g", "A.v"]
    elif shape == "agg":
        agg = draw(st.sampled_from(["SUM(A.v)", "COUNT(*)", "MAX(A.n)", "SUM(A.n)", "MAX(A.g)", "COUNT(A.v)"]))
        sql = f"SELECT A.g, {agg} AS m FROM A{where} GROUP BY A.g"
        if draw(st.booleans()):
            sql += f" HAVING m >= {draw(st.integers(0, 2))}" if "g)" not in agg else " HAVING m >= 'p'"
        cols = ["A.g", "m"]
    elif shape in ("join", "joinagg"):
        kind = draw(st.sampled_from(["JOIN", "LEFT JOIN", "RIGHT JOIN"]))
        jwhere = f" WHERE {draw(_cond('A', 'B'))}" if draw(st.booleans()) else ""
        if shape == "join":
            sql = f"SELECT A.id, A.g, B.w, B.s FROM A {kind} B ON A.id = B.aid{jwhere}"
            cols = ["A.id", "A.g", "B.w", "B.s"]
        else:
            sql = (f"SELECT B.s, COUNT(*) AS c, SUM(A.v) AS t FROM A {kind} B ON A.id = B.aid{jwhere} "
                   f"GROUP BY B.s")
            cols = ["B.s", "c", "t"]
    elif shape == "union":
        sql = f"SELECT A.g FROM A{where} UNION SELECT B.s FROM B WHERE B.w >= {draw(st.integers(0, 4))}"
        cols = ["g"]
    else:
        sql = f"SELECT x.g, x.c FROM (SELECT A.g AS g, COUNT(*) AS c FROM A{where} GROUP BY A.g) x " \
              f"WHERE x.c >= {draw(st.integers(0, 2))}"
        cols = ["x.g", "x.c"]
    if draw(st.booleans()):
        keys = draw(st.lists(st.sampled_from(cols), min_size=1, max_size=2, unique=True))
        sql += " ORDER BY " + ", ".join(f"{k}{draw(st.sampled_from(['', ' DESC']))}" for k in keys)
        if draw(st.booleans()):
            sql += f" LIMIT {draw(st.integers(0, 4))}"
    return sql


@settings(max_examples=300, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(_A_ROWS, _B_ROWS, _query())
def test_engines_agree_on_random_queries(a_rows, b_rows, sql):
    a_rows = [(i,) + r[1:] for i, r in enumerate(a_rows)]  # unique ids
    wh = make_warehouse({"A": (["id:int64", "g:text", "v:float64", "n:int64", "d:date"], a_rows),
                         "B": (["aid:int64", "w:int64", "s:text"], b_rows)})
    both(sql, wh)
    ast = parse_query(sql)
    assert execute_plan(plan_query(ast, wh, pushdown=False), wh).same_as(execute_plan(plan_query(ast, wh), wh))


@settings(max_examples=100, deadline=None)
@given(_A_ROWS, _B_ROWS)
def test_inner_join_symmetric(a_rows, b_rows):
    wh = make_warehouse({"A": (["id:int64", "g:text", "v:float64", "n:int64", "d:date"], a_rows),
                         "B": (["aid:int64", "w:int64", "s:text"], b_rows)})
    ab = both("SELECT A.id, A.g, B.w FROM A JOIN B ON A.id = B.aid", wh)
    ba = both("SELECT A.id, A.g, B.w FROM B JOIN A ON B.aid = A.id", wh)
    assert ab.bag() == ba.bag()


@settings(max_examples=100, deadline=None)
@given(_A_ROWS, _B_ROWS)
def test_union_has_no_duplicates(a_rows, b_rows):
    wh = make_warehouse({"A": (["id:int64", "g:text", "v:float64", "n:int64", "d:date"], a_rows),
                         "B": (["aid:int64", "w:int64", "s:text"], b_rows)})
    r = both("SELECT A.g FROM A UNION SELECT B.s FROM B", wh)
    assert len(set(r.rows)) == len(r.rows)


# -- seeded warehouse ---------------------------------------------------------------------------

def test_urea_query_matches_oracle(small):
    wh = small["wh"]
    r = both(urea_query(), wh)
    assert len(r) > 0
