"""SQL-subset parsing, planning and the two executors."""
from __future__ import annotations

from .ast import Query, QueryAst, subquery_depth
from .executor import execute_analytic, execute_plan
from .naive import execute_naive_oracle
from .parser import QueryError, SqlSyntaxError, UnsupportedFeatureError, parse_query, render
from .planner import PhysicalPlan, UnknownColumnError, UnknownTableError, plan_query
from .result import ResultSet

__all__ = [
    "PhysicalPlan", "Query", "QueryAst", "QueryError", "ResultSet", "SqlSyntaxError",
    "UnknownColumnError", "UnknownTableError", "UnsupportedFeatureError", "execute_analytic",
    "execute_naive_oracle", "execute_plan", "parse_query", "plan_query", "render", "run_query",
    "subquery_depth",
]


def run_query(sql, store, engine: str = "analytic") -> ResultSet:
    """Parse and execute ``sql`` (text or a parsed Query) with the named engine."""
    ast = parse_query(sql) if isinstance(sql, str) else sql
    if engine == "naive":
        return execute_naive_oracle(ast, store)
    if engine == "analytic":
        return execute_plan(plan_query(ast, store), store)
    raise ValueError(f"unknown engine {engine!r}")
