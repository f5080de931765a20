"""Terminal display utilities: aligned text tables."""

from __future__ import annotations

import unicodedata
from typing import Any, Callable, Dict, List, Sequence


def display_width(s: str) -> int:
    """Calculate display width accounting for wide (CJK) characters."""
    return sum(2 if unicodedata.east_asian_width(ch) in ("W", "F") else 1 for ch in s)


def pad_cell(s: str, width: int, align: str = "left") -> str:
    """Pad string to *width* display columns, accounting for wide chars."""
    fill = ' ' * max(0, width - display_width(s))
    return fill + s if align == "right" else s + fill


def format_cell(value: Any, precision: int = 3) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        if value != value:
            return "NA"
        return f"{value:.{precision}f}"
    return str(value)


def format_table(
    headers: Sequence[str],
    rows: Sequence[Sequence[Any]],
    title: str = "",
    precision: int = 3,
    numeric_right: bool = True,
) -> str:
    """Render rows as an aligned text table and return it as a string.

    Args:
        headers: Column header strings.
        rows: Row data; floats are formatted with *precision* decimals.
        title: Optional title line placed above the table.
        numeric_right: Right-align cells whose raw value is numeric.
    """
    cells: List[List[str]] = [[format_cell(v, precision) for v in row] for row in rows]
    numeric: Dict[int, bool] = {}
    for i in range(len(headers)):
        numeric[i] = numeric_right and bool(rows) and all(
            isinstance(row[i], (int, float)) and not isinstance(row[i], bool)
            for row in rows if i < len(row) and row[i] is not None
        )

    col_widths: list[int] = []
    for i, header in enumerate(headers):
        max_width = display_width(header)
        for row in cells:
            if i < len(row):
                max_width = max(max_width, display_width(row[i]))
        col_widths.append(max_width)

    lines: list[str] = []
    if title:
        lines.append(title)

    sep_width = sum(col_widths) + len(headers) * 3 - 1
    header_row = " │ ".join(pad_cell(h, col_widths[i]) for i, h in enumerate(headers))
    lines.append(f" {header_row} ")
    lines.append("─" * sep_width)
    for row in cells:
        padded = [
            pad_cell(row[i] if i < len(row) else '', col_widths[i],
                     "right" if numeric[i] else "left")
            for i in range(len(headers))
        ]
        lines.append(f" {' │ '.join(padded)} ")
    return "\n".join(lines) + "\n"


def print_table(
    headers: Sequence[str],
    rows: Sequence[Sequence[Any]],
    title: str = "",
    precision: int = 3,
    echo: Callable[[str], Any] = print,
) -> None:
    """Print a formatted table (see :func:`format_table`)."""
    if not rows:
        return
    echo("\n" + format_table(headers, rows, title=title, precision=precision))
