"""Claim-file ingestion."""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np

__all__ = ["ClaimDataset", "DataError", "load_claims"]


class DataError(ValueError):
    """Unreadable or invalid claim data."""


@dataclass(frozen=True)
class ClaimDataset:
    values: np.ndarray
    source: str
    column: str = ""

    @property
    def n(self) -> int:
        return int(self.values.size)

    def describe(self) -> dict:
        v = self.values
        return {"n": self.n, "min": float(v.min()), "max": float(v.max()),
                "mean": float(v.mean()), "sd": float(v.std(ddof=1)) if v.size > 1 else math.nan}


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _rows(path, delimiter):
    with open(path, encoding="utf-8-sig") as fh:
        lines = [(i, line.strip()) for i, line in enumerate(fh, start=1)]
    lines = [(i, s) for i, s in lines if s and not s.startswith("#")]
    if not lines:
        raise DataError(f"{path}: empty file")
    if delimiter is None:
        delimiter = "," if "," in lines[0][1] else (";" if ";" in lines[0][1] else "whitespace")
    for i, s in lines:
        if delimiter == "whitespace":
            fields = s.split()
        else:
            fields = next(csv.reader([s], delimiter=delimiter))
        yield i, [f.strip().strip('"') for f in fields]


def load_claims(path: str | os.PathLike, column: str | int | None = None,
                delimiter: str | None = None) -> ClaimDataset:
    """Read one numeric column of a comma-, semicolon- or whitespace-separated file.

    ``column`` is a header name or a 0-based position; by default the last
    column is used.  A first row whose selected field is not numeric is taken
    as a header.  Values must be finite and positive.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise DataError(f"{path}: no such file")
    rows = list(_rows(path, None if delimiter in (None, "auto") else delimiter))
    if not rows:
        raise DataError(f"{path}: file contains no data")
    header = None
    first_line, first = rows[0]
    pos = _column_position(first, column)
    if pos is None or pos >= len(first) or not _is_number(first[pos]):
        header = first
        rows = rows[1:]
        if column is not None and not str(column).lstrip("-").isdigit():
            if str(column) not in header:
                raise DataError(f"{path}:{first_line}: no column named {column!r}")
            pos = header.index(str(column))
        elif pos is None:
            pos = len(header) - 1
    if not rows:
        raise DataError(f"{path}: no data rows")
    values = np.empty(len(rows))
    for j, (line, fields) in enumerate(rows):
        p = pos if pos >= 0 else len(fields) + pos
        if not 0 <= p < len(fields):
            raise DataError(f"{path}:{line}: missing column {pos}")
        text = fields[p]
        try:
            x = float(text)
        except ValueError:
            raise DataError(f"{path}:{line}: cannot parse {text!r} as a number") from None
        if not math.isfinite(x) or x <= 0:
            raise DataError(f"{path}:{line}: claim must be positive and finite, got {text!r}")
        values[j] = x
    label = header[pos] if header is not None and pos < len(header) else str(pos)
    return ClaimDataset(values, path, label)


def _column_position(first_row, column):
    if column is None:
        return len(first_row) - 1
    text = str(column)
    if text.lstrip("-").isdigit():
        return int(text)
    return None
