"""Tokenizer, recursive-descent parser and canonical renderer for the SQL subset.

Supported: SELECT lists with MAX/SUM/COUNT and aliases; FROM a table or a
parenthesised subquery; INNER/LEFT/RIGHT JOIN ... ON equalities; WHERE and
HAVING trees of AND/OR over ``=``, ``>=``, LIKE and ``col IN (subquery)``;
GROUP BY; UNION; ORDER BY; LIMIT.  Anything else raises
``UnsupportedFeatureError`` naming the construct.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .ast import (Aggregate, BoolOp, ColumnRef, Comparison, InSubquery, Join, Literal, OrderItem,
                  Query, Select, SelectItem, Star, SubqueryRef, TableRef, walk_conditions)


class QueryError(Exception):
    pass


class SqlSyntaxError(QueryError):
    def __init__(self, message, line=None, column=None):
        where = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.line = line
        self.column = column


class UnsupportedFeatureError(QueryError):
    def __init__(self, construct):
        super().__init__(f"unsupported feature: {construct}")
        self.construct = construct


KEYWORDS = {
    "SELECT", "FROM", "WHERE", "GROUP", "BY", "HAVING", "ORDER", "ASC", "DESC", "LIMIT", "UNION",
    "JOIN", "INNER", "LEFT", "RIGHT", "OUTER", "ON", "AND", "OR", "AS", "IN", "LIKE", "TRUE", "FALSE",
    # recognised only to be rejected
    "FULL", "CROSS", "NATURAL", "NOT", "IS", "NULL", "BETWEEN", "EXISTS", "CASE", "DISTINCT", "ALL",
    "OFFSET", "INTERSECT", "EXCEPT", "WITH", "INSERT", "UPDATE", "DELETE", "USING",
}
AGGREGATES = {"MAX", "SUM", "COUNT"}
_UNSUPPORTED_FUNCS = {"MIN", "AVG", "COALESCE", "CAST", "LOWER", "UPPER", "SUBSTR", "SUBSTRING",
                      "ROUND", "ABS", "LENGTH", "YEAR", "MONTH", "DATE", "EXTRACT", "CONCAT"}

_TOKEN = re.compile(r"""
    (?P<ws>\s+|--[^\n]*)
  | (?P<number>\d+\.\d*(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+|\.\d+(?:[eE][+-]?\d+)?|\d+)
  | (?P<string>'(?:[^']|'')*')
  | (?P<qident>"(?:[^"]|"")+"|`[^`]+`)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>>=|<=|<>|!=|\|\||[=<>(),.*;+\-/%])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str  # number, string, ident, qident, keyword, op, eof
    value: object
    line: int
    col: int
    text: str = ""


def tokenize(text: str) -> list[Token]:
    out = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise SqlSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        raw = m.group()
        col = pos - line_start + 1
        if kind == "ws":
            pass
        elif kind == "number":
            value = float(raw) if any(c in raw for c in ".eE") else int(raw)
            out.append(Token("number", value, line, col, raw))
        elif kind == "string":
            out.append(Token("string", raw[1:-1].replace("''", "'"), line, col, raw))
        elif kind == "qident":
            inner = raw[1:-1].replace('""', '"') if raw[0] == '"' else raw[1:-1]
            out.append(Token("qident", inner, line, col, raw))
        elif kind == "ident":
            up = raw.upper()
            if up in KEYWORDS:
                out.append(Token("keyword", up, line, col, raw))
            else:
                out.append(Token("ident", raw, line, col, raw))
        else:
            out.append(Token("op", raw, line, col, raw))
        nl = raw.count("\n")
        if nl:
            line += nl
            line_start = pos + raw.rindex("\n") + 1
        pos = m.end()
    out.append(Token("eof", None, line, pos - line_start + 1, ""))
    return out


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    # -- token helpers -----------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k=1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def advance(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def is_kw(self, *words) -> bool:
        return self.tok.kind == "keyword" and self.tok.value in words

    def is_op(self, *ops) -> bool:
        return self.tok.kind == "op" and self.tok.value in ops

    def expect_kw(self, word):
        if not self.is_kw(word):
            self.fail(f"expected {word}")
        return self.advance()

    def expect_op(self, op):
        if not self.is_op(op):
            self.fail(f"expected {op!r}")
        return self.advance()

    def fail(self, message):
        t = self.tok
        found = "end of input" if t.kind == "eof" else repr(t.text)
        raise SqlSyntaxError(f"{message}, found {found}", t.line, t.col)

    def reject_unsupported(self):
        t = self.tok
        if t.kind == "keyword" and t.value in ("NOT", "IS", "NULL", "BETWEEN", "EXISTS", "CASE",
                                               "DISTINCT", "ALL", "OFFSET", "INTERSECT", "EXCEPT",
                                               "WITH", "INSERT", "UPDATE", "DELETE", "USING",
                                               "NATURAL"):
            raise UnsupportedFeatureError(t.value)
        if t.kind == "keyword" and t.value in ("FULL", "CROSS"):
            raise UnsupportedFeatureError(f"{t.value} {'OUTER ' if t.value == 'FULL' else ''}JOIN")
        if t.kind == "op" and t.value in ("<", "<=", ">", "<>", "!=", "+", "-", "/", "%", "||"):
            raise UnsupportedFeatureError(f"operator {t.value}")

    # -- grammar -----------------------------------------------------------

    def parse(self) -> Query:
        self.reject_unsupported()
        q = self.query()
        if self.is_op(";"):
            self.advance()
        if self.tok.kind != "eof":
            self.reject_unsupported()
            self.fail("unexpected input after query")
        return q

    def query(self) -> Query:
        selects = [self.select_core()]
        while self.is_kw("UNION"):
            self.advance()
            if self.is_kw("ALL"):
                raise UnsupportedFeatureError("UNION ALL")
            selects.append(self.select_core())
        if self.is_kw("INTERSECT", "EXCEPT"):
            raise UnsupportedFeatureError(self.tok.value)
        order = []
        if self.is_kw("ORDER"):
            self.advance()
            self.expect_kw("BY")
            order.append(self.order_item())
            while self.is_op(","):
                self.advance()
                order.append(self.order_item())
        limit = None
        if self.is_kw("LIMIT"):
            self.advance()
            t = self.tok
            if t.kind != "number" or not isinstance(t.value, int):
                self.fail("expected integer after LIMIT")
            limit = self.advance().value
            if self.is_kw("OFFSET") or self.is_op(","):
                raise UnsupportedFeatureError("OFFSET")
        return Query(tuple(selects), tuple(order), limit)

    def select_core(self) -> Select:
        if self.is_op("("):
            self.advance()
            sel = self.select_core()
            self.expect_op(")")
            return sel
        self.expect_kw("SELECT")
        self.reject_unsupported()
        items = [self.select_item()]
        while self.is_op(","):
            self.advance()
            items.append(self.select_item())
        self.expect_kw("FROM")
        source = self.source()
        if self.is_op(","):
            raise UnsupportedFeatureError("implicit join (comma in FROM)")
        joins = []
        while self.is_kw("JOIN", "INNER", "LEFT", "RIGHT", "FULL", "CROSS", "NATURAL"):
            joins.append(self.join())
        where = None
        if self.is_kw("WHERE"):
            self.advance()
            where = self.condition()
        group_by = []
        if self.is_kw("GROUP"):
            self.advance()
            self.expect_kw("BY")
            group_by.append(self.column_ref())
            while self.is_op(","):
                self.advance()
                group_by.append(self.column_ref())
        having = None
        if self.is_kw("HAVING"):
            t = self.tok
            self.advance()
            if not group_by:
                raise SqlSyntaxError("HAVING requires GROUP BY", t.line, t.col)
            having = self.condition()
        self.reject_unsupported()
        return Select(tuple(items), source, tuple(joins), where, tuple(group_by), having)

    def select_item(self) -> SelectItem:
        if self.is_op("*"):
            self.advance()
            return SelectItem(Star())
        expr = self.expr()
        alias = None
        if self.is_kw("AS"):
            self.advance()
            alias = self.identifier()
        elif self.tok.kind in ("ident", "qident"):
            alias = self.identifier()
        return SelectItem(expr, alias)

    def order_item(self) -> OrderItem:
        expr = self.expr()
        desc = False
        if self.is_kw("ASC", "DESC"):
            desc = self.advance().value == "DESC"
        return OrderItem(expr, desc)

    def source(self):
        if self.is_op("("):
            self.advance()
            if not self.is_kw("SELECT") and not self.is_op("("):
                self.fail("expected subquery")
            q = self.query()
            self.expect_op(")")
            if self.is_kw("AS"):
                self.advance()
            if self.tok.kind not in ("ident", "qident"):
                self.fail("subquery in FROM needs an alias")
            return SubqueryRef(q, self.identifier())
        name = self.identifier(table_position=True)
        alias = None
        if self.is_kw("AS"):
            self.advance()
            alias = self.identifier()
        elif self.tok.kind in ("ident", "qident"):
            alias = self.identifier()
        return TableRef(name, alias)

    def join(self) -> Join:
        self.reject_unsupported()
        kind = "INNER"
        if self.is_kw("INNER"):
            self.advance()
        elif self.is_kw("LEFT", "RIGHT"):
            kind = self.advance().value
            if self.is_kw("OUTER"):
                self.advance()
        self.expect_kw("JOIN")
        src = self.source()
        if self.is_kw("USING"):
            raise UnsupportedFeatureError("JOIN ... USING")
        self.expect_kw("ON")
        pairs = [self.join_pair()]
        while self.is_kw("AND"):
            self.advance()
            pairs.append(self.join_pair())
        if self.is_kw("OR"):
            raise UnsupportedFeatureError("OR in join condition")
        return Join(kind, src, tuple(pairs))

    def join_pair(self):
        if self.is_op("("):
            self.fail("expected column in join condition")
        left = self.column_ref()
        self.reject_unsupported()
        self.expect_op("=")
        right = self.column_ref()
        return (left, right)

    def condition(self):
        parts = [self.conjunction()]
        while self.is_kw("OR"):
            self.advance()
            parts.append(self.conjunction())
        return parts[0] if len(parts) == 1 else BoolOp("OR", tuple(parts))

    def conjunction(self):
        parts = [self.primary()]
        while self.is_kw("AND"):
            self.advance()
            parts.append(self.primary())
        return parts[0] if len(parts) == 1 else BoolOp("AND", tuple(parts))

    def primary(self):
        self.reject_unsupported()
        if self.is_op("("):
            self.advance()
            cond = self.condition()
            self.expect_op(")")
            return cond
        left = self.expr()
        self.reject_unsupported()
        if self.is_kw("IN"):
            self.advance()
            if not isinstance(left, ColumnRef):
                self.fail("IN needs a column on its left")
            self.expect_op("(")
            if not self.is_kw("SELECT"):
                raise UnsupportedFeatureError("IN with a value list")
            q = self.query()
            self.expect_op(")")
            return InSubquery(left, q)
        if self.is_op("=", ">="):
            op = self.advance().value
        elif self.is_kw("LIKE"):
            self.advance()
            op = "LIKE"
        else:
            self.fail("expected comparison operator")
        right = self.expr()  # a leading "-" is a signed literal here
        return Comparison(left, op, right)

    def expr(self):
        t = self.tok
        self.reject_unsupported_prefix()
        if t.kind == "number":
            return Literal(self.advance().value)
        if t.kind == "op" and t.value == "-" and self.peek().kind == "number":
            self.advance()
            return Literal(-self.advance().value)
        if t.kind == "string":
            return Literal(self.advance().value)
        if t.kind == "keyword" and t.value in ("TRUE", "FALSE"):
            return Literal(self.advance().value == "TRUE")
        if t.kind == "ident" and self.peek().kind == "op" and self.peek().value == "(":
            fname = t.value.upper()
            if fname not in AGGREGATES:
                raise UnsupportedFeatureError(f"function {fname}")
            self.advance()
            self.advance()
            if self.is_kw("DISTINCT"):
                raise UnsupportedFeatureError(f"{fname}(DISTINCT ...)")
            if self.is_op("*"):
                if fname != "COUNT":
                    self.fail(f"{fname}(*) is not allowed")
                self.advance()
                arg = None
            else:
                arg = self.column_ref()
            self.expect_op(")")
            return Aggregate(fname, arg)
        if t.kind in ("ident", "qident") or (t.kind == "keyword" and t.value == "ORDER"
                                             and self.peek().kind == "op" and self.peek().value == "."):
            return self.column_ref()
        self.fail("expected expression")

    def reject_unsupported_prefix(self):
        t = self.tok
        if t.kind == "keyword" and t.value in ("NULL", "CASE", "EXISTS", "NOT", "DISTINCT"):
            raise UnsupportedFeatureError(t.value)
        if t.kind == "op" and t.value == "-" and self.peek().kind != "number":
            raise UnsupportedFeatureError("operator -")

    def column_ref(self) -> ColumnRef:
        first = self.identifier(table_position=True)
        if self.is_op("."):
            self.advance()
            if self.is_op("*"):
                raise UnsupportedFeatureError("qualified star (table.*)")
            return ColumnRef(first, self.identifier())
        return ColumnRef(None, first)

    def identifier(self, table_position: bool = False) -> str:
        t = self.tok
        if t.kind in ("ident", "qident"):
            self.advance()
            return t.value
        # the schema has a table (and a column) called Order
        if t.kind == "keyword" and t.value == "ORDER" and table_position and not (
                self.peek().kind == "keyword" and self.peek().value == "BY"):
            self.advance()
            return t.text
        self.fail("expected identifier")


def _check(query: Query) -> None:
    for sel in query.selects:
        for leaf in walk_conditions(sel.where):
            exprs = (leaf.left, leaf.right) if isinstance(leaf, Comparison) else (leaf.expr,)
            if any(isinstance(e, Aggregate) for e in exprs):
                raise SqlSyntaxError("aggregate in WHERE")
            if isinstance(leaf, InSubquery):
                _check(leaf.query)
        for leaf in walk_conditions(sel.having):
            if isinstance(leaf, InSubquery):
                raise UnsupportedFeatureError("IN subquery in HAVING")
        if any(isinstance(i.expr, Star) for i in sel.items) and sel.is_aggregate():
            raise SqlSyntaxError("SELECT * with aggregation")
        if sel.is_aggregate():
            for item in sel.items:
                e = item.expr
                if isinstance(e, Literal):
                    continue
                if isinstance(e, ColumnRef) and not any(_same_column(e, g) for g in sel.group_by):
                    raise SqlSyntaxError(f"column {_render_col(e)} must appear in GROUP BY "
                                         f"or inside an aggregate")
        for src in (sel.source, *(j.source for j in sel.joins)):
            if isinstance(src, SubqueryRef):
                _check(src.query)
    if query.limit is not None and query.limit < 0:
        raise SqlSyntaxError("LIMIT must be non-negative")


def _same_column(a: ColumnRef, b: ColumnRef) -> bool:
    return a.name == b.name and (a.table is None or b.table is None or a.table == b.table)


def parse_query(text: str) -> Query:
    q = _Parser(text).parse()
    _check(q)
    return q


# ---------------------------------------------------------------------------
# rendering

_SIMPLE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


def quote_ident(name: str) -> str:
    if _SIMPLE.match(name) and name.upper() not in KEYWORDS:
        return name
    return '"' + name.replace('"', '""') + '"'


def _render_col(c: ColumnRef) -> str:
    return f"{quote_ident(c.table)}.{quote_ident(c.name)}" if c.table else quote_ident(c.name)


def render_literal(v) -> str:
    if isinstance(v, bool):
        return "TRUE" if v else "FALSE"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        r = repr(v)
        if r in ("inf", "-inf", "nan"):
            raise ValueError(f"cannot render {r}")
        return r
    return "'" + str(v).replace("'", "''") + "'"


def render_expr(e) -> str:
    if isinstance(e, ColumnRef):
        return _render_col(e)
    if isinstance(e, Literal):
        return render_literal(e.value)
    if isinstance(e, Aggregate):
        return f"{e.func}({'*' if e.arg is None else _render_col(e.arg)})"
    if isinstance(e, Star):
        return "*"
    raise TypeError(e)


def render_condition(c, top=True) -> str:
    if isinstance(c, Comparison):
        return f"{render_expr(c.left)} {c.op} {render_expr(c.right)}"
    if isinstance(c, InSubquery):
        return f"{render_expr(c.expr)} IN ({render(c.query)})"
    inner = f" {c.op} ".join(render_condition(p, False) for p in c.parts)
    return inner if top else f"({inner})"


def _render_source(s) -> str:
    if isinstance(s, TableRef):
        return quote_ident(s.name) + (f" AS {quote_ident(s.alias)}" if s.alias else "")
    return f"({render(s.query)}) AS {quote_ident(s.alias)}"


def _render_select(sel: Select) -> str:
    items = ", ".join(render_expr(i.expr) + (f" AS {quote_ident(i.alias)}" if i.alias else "")
                      for i in sel.items)
    out = [f"SELECT {items}", f"FROM {_render_source(sel.source)}"]
    for j in sel.joins:
        on = " AND ".join(f"{_render_col(a)} = {_render_col(b)}" for a, b in j.on)
        out.append(f"{j.kind} JOIN {_render_source(j.source)} ON {on}")
    if sel.where is not None:
        out.append(f"WHERE {render_condition(sel.where)}")
    if sel.group_by:
        out.append("GROUP BY " + ", ".join(_render_col(g) for g in sel.group_by))
    if sel.having is not None:
        out.append(f"HAVING {render_condition(sel.having)}")
    return " ".join(out)


def render(q: Query) -> str:
    """Canonical text of a query; ``parse_query(render(q)) == q``."""
    text = " UNION ".join(_render_select(s) for s in q.selects)
    if q.order_by:
        text += " ORDER BY " + ", ".join(render_expr(o.expr) + (" DESC" if o.descending else "")
                                         for o in q.order_by)
    if q.limit is not None:
        text += f" LIMIT {q.limit}"
    return text
