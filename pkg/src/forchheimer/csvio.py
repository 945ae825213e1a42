"""Fixed-header CSV output with full-precision floats."""

from __future__ import annotations

import csv
from pathlib import Path


def fmt(value):
    if isinstance(value, (int,)) and not isinstance(value, bool):
        return str(value)
    if isinstance(value, str):
        return value
    if value is None:
        return ""
    return "%.17g" % float(value)


def write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def read_rows(path):
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        return list(reader)
