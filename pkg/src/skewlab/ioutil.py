"""Small text-serialization helpers shared by the CSV and snapshot writers."""

from __future__ import annotations

import os
from typing import Iterable, Sequence


def fmt(value: float) -> str:
    """Format a real with 17 significant digits so float64 round-trips exactly."""
    return f"{float(value):.17g}"


def write_csv(path: str | os.PathLike[str], header: Sequence[str], rows: Iterable[Sequence[str]]) -> None:
    """Write rows of already-formatted cells with a unix newline convention.

    The byte layout must not depend on locale or platform, so this avoids the
    csv module's dialect machinery; no cell produced in this package contains
    a comma or quote.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def read_csv(path: str | os.PathLike[str]) -> tuple[list[str], list[list[str]]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip() != ""]
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]
