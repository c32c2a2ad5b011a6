"""Deterministic CSV/JSON writers used by the command-line front-end."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class Table:
    """Column names, a units row, and data rows."""

    columns: list[str]
    units: list[str]
    rows: list[list] = field(default_factory=list)

    def __post_init__(self):
        if len(self.columns) != len(self.units):
            raise ValueError("columns and units differ in length")

    def add(self, *values) -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"expected {len(self.columns)} values, got {len(values)}")
        self.rows.append(list(values))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float) or hasattr(v, "dtype"):
        x = float(v)
        return "nan" if math.isnan(x) else repr(x)
    return str(v)


def write_table(path, table: Table) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.columns)
        w.writerow(table.units)
        for r in table.rows:
            w.writerow([_fmt(v) for v in r])


def read_table(path) -> Table:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return Table(rows[0], rows[1], rows[2:])


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "dtype"):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n", encoding="utf-8")
