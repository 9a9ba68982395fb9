"""Query results and their comparison / serialization."""
from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field


def null_first_key(row):
    return tuple((v is not None, v) for v in row)


@dataclass
class ResultSet:
    columns: list[str]
    kinds: list[str]
    rows: list[tuple]
    ordered: bool = False
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.rows)

    def bag(self) -> Counter:
        return Counter(self.rows)

    def same_as(self, other: "ResultSet") -> bool:
        """Bag equality, or sequence equality when either side is ordered."""
        if len(self.columns) != len(other.columns) or len(self.rows) != len(other.rows):
            return False
        if self.ordered or other.ordered:
            return self.rows == other.rows
        return self.bag() == other.bag()

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow(["" if v is None else _fmt(v) for v in r])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"columns": self.columns, "kinds": self.kinds,
                           "rows": [list(r) for r in self.rows], "ordered": self.ordered,
                           "metadata": self.metadata})

    def to_table(self) -> str:
        cells = [[str(c) for c in self.columns]]
        cells += [["NULL" if v is None else _fmt(v) for v in r] for r in self.rows]
        widths = [max(len(row[i]) for row in cells) for i in range(len(self.columns))]
        lines = [" | ".join(c.ljust(w) for c, w in zip(row, widths)) for row in cells]
        lines.insert(1, "-+-".join("-" * w for w in widths))
        return "\n".join(lines)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)
