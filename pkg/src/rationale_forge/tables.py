"""Checks of published-style result tables against the evalkit formulas.

Tables are JSON files. Percentages are given as 0..100 values.

F2 table::

    {"name": ..., "tolerance": 0.1,
     "rows": [{"label": ..., "precision": 84.8, "recall": 90.3, "f2": 89.2}]}

Relative-improvement table::

    {"name": ..., "tolerance": 1.0,
     "comparisons": [{"label": ..., "new": {...P/R/F2...}, "base": {...}, "reported": {...}}]}

Summary-quality table::

    {"name": ..., "tolerance": 0.05, "rows": [{"label": ..., "ic": 4.5, "ei": 3.6, "f2": 4.3}]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .evalkit import f2, relative_improvement, summary_f2

METRICS = ("precision", "recall", "f2")


@dataclass(frozen=True)
class CellCheck:
    table: str
    label: str
    metric: str
    reported: float
    computed: float
    tolerance: float

    @property
    def delta(self) -> float:
        return self.computed - self.reported

    @property
    def ok(self) -> bool:
        # small epsilon so a gap equal to the tolerance is not lost to float noise
        return abs(self.delta) <= self.tolerance + 1e-9

    def line(self) -> str:
        status = "ok " if self.ok else "BAD"
        return (f"{status} {self.table} | {self.label} | {self.metric}: reported {self.reported:g}, "
                f"computed {self.computed:.3f} (tol {self.tolerance:g})")


def load_table(path: str | Path) -> dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def check_f2_table(table: dict[str, Any]) -> list[CellCheck]:
    tol = float(table.get("tolerance", 0.1))
    out = []
    for row in table["rows"]:
        computed = f2(row["precision"] / 100, row["recall"] / 100)
        out.append(CellCheck(table["name"], row["label"], "f2", row["f2"], 100 * computed, tol))
    return out


def check_ri_table(table: dict[str, Any]) -> list[CellCheck]:
    tol = float(table.get("tolerance", 1.0))
    out = []
    for comp in table["comparisons"]:
        for metric in METRICS:
            if metric not in comp["reported"]:
                continue
            ri = 100 * relative_improvement(comp["new"][metric], comp["base"][metric])
            out.append(CellCheck(table["name"], comp["label"], f"RI {metric}", comp["reported"][metric], ri, tol))
    return out


def check_summary_table(table: dict[str, Any]) -> list[CellCheck]:
    tol = float(table.get("tolerance", 0.05))
    return [
        CellCheck(table["name"], row["label"], "f2", row["f2"], summary_f2(row["ic"], row["ei"]), tol)
        for row in table["rows"]
    ]


def check_table(table: dict[str, Any]) -> list[CellCheck]:
    """Dispatch on the table's shape."""
    if "comparisons" in table:
        return check_ri_table(table)
    if table["rows"] and "ic" in table["rows"][0]:
        return check_summary_table(table)
    return check_f2_table(table)
