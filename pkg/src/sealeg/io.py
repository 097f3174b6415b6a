"""Trace CSV files and atomic text output."""
from __future__ import annotations

import csv
import io as _io
import os
import tempfile
from pathlib import Path

import numpy as np

from .trace import COLUMNS, Trace


class TraceFormatError(ValueError):
    """A trace file does not follow the CSV schema."""


def write_text_atomic(path, text: str) -> None:
    """Write ``text`` to a temporary file beside ``path`` and rename it into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def format_trace(trace: Trace) -> str:
    buf = _io.StringIO()
    buf.write(",".join(COLUMNS) + "\n")
    for row in trace.data:
        buf.write(",".join(format(float(v), ".17g") for v in row) + "\n")
    return buf.getvalue()


def write_trace(trace: Trace, path) -> None:
    """CSV with a header row; 17 significant digits so reading back is exact."""
    write_text_atomic(path, format_trace(trace))


def parse_trace(text: str, source: str = "<string>") -> Trace:
    reader = csv.reader(_io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise TraceFormatError(f"{source}: empty file, expected a header row") from None
    if [h.strip() for h in header] != list(COLUMNS):
        raise TraceFormatError(f"{source}: header does not match the trace columns")
    rows = []
    for n, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(COLUMNS):
            raise TraceFormatError(
                f"{source}: row {n}: expected {len(COLUMNS)} fields, found {len(row)}")
        try:
            rows.append([float(x) for x in row])
        except ValueError:
            raise TraceFormatError(f"{source}: row {n}: non-numeric field") from None
    data = np.array(rows, dtype=float).reshape(-1, len(COLUMNS))
    trace = Trace(data)
    try:
        trace.check()
    except ValueError as exc:
        raise TraceFormatError(f"{source}: {exc}") from None
    return trace


def read_trace(path) -> Trace:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FileNotFoundError(f"cannot read trace {str(path)!r}: {exc.strerror}") from None
    return parse_trace(text, str(path))
