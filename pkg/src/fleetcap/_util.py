"""Small shared helpers for CSV-based file formats."""
from __future__ import annotations

import csv
import io
from typing import IO, Iterable, Iterator

from .errors import ParseError


def text_lines(stream: IO | Iterable[str]) -> Iterator[str]:
    """Accept a text or binary file object, or any iterable of lines."""
    if isinstance(stream, io.TextIOBase):
        return iter(stream)
    if hasattr(stream, "read"):
        return iter(io.TextIOWrapper(stream, encoding="utf-8"))
    return iter(stream)


def csv_rows(
    stream: IO | Iterable[str], header: list[str]
) -> Iterator[tuple[int, list[str]]]:
    """Yield (line_number, row) for data rows; checks the header, skips blanks."""
    reader = csv.reader(text_lines(stream))
    for line, row in enumerate(reader, start=1):
        if line == 1:
            got = [cell.strip().lower() for cell in row]
            if got != header:
                raise ParseError(f"expected header {','.join(header)}", line=1)
            continue
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} columns, got {len(row)}", line)
        yield line, row


def fmt_float(value: float) -> str:
    """Shortest exact decimal representation; integral values drop the '.0'."""
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def parse_float(token: str, label: str, line: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"{label} is not numeric: {token!r}", line) from None


def parse_int(token: str, label: str, line: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"{label} is not an integer: {token!r}", line) from None
