"""Recompute every derived cell of the bundled result tables and report the cells outside tolerance.

Usage: python3 scripts/reproduce_tables.py [TABLE.json ...]
"""

import sys
from pathlib import Path

from rationale_forge.cli import main

TABLES = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "tables"


if __name__ == "__main__":
    paths = sys.argv[1:] or [str(p) for p in sorted(TABLES.glob("*.json"))]
    args = ["evaluate"]
    for p in paths:
        args += ["--reference-table", p]
    sys.exit(main(args))
