"""CSV formats and atomic file output."""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from pathlib import Path

from .registration import DescriptorMatch
from .timing import TimingSample

MATCHES_HEADER = ["x1", "y1", "x2", "y2"]
TIMINGS_HEADER = ["n_descriptors", "t_load_s", "t_match_s", "t_threshold_s"]
TRACE_HEADER = ["t_s", "event", "pos_err_x_m", "pos_err_y_m", "d_t_m", "t_exe_s", "db_images"]


class CsvFormatError(ValueError):
    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to a temporary sibling file, then rename it into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_rows(path, header: list[str]):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise CsvFormatError("empty file", 1) from None
        if [h.strip() for h in got] != header:
            raise CsvFormatError(f"expected header {','.join(header)}, got {','.join(got)}", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise CsvFormatError(f"expected {len(header)} fields, got {len(row)}", lineno)
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise CsvFormatError(str(exc), lineno) from None
            if not all(math.isfinite(v) for v in vals):
                raise CsvFormatError("non-finite value", lineno)
            yield lineno, vals


def read_matches_csv(path) -> list[DescriptorMatch]:
    return [DescriptorMatch(*vals) for _, vals in _read_rows(path, MATCHES_HEADER)]


def read_timings_csv(path) -> list[TimingSample]:
    out = []
    for lineno, (n, tl, tm, tt) in _read_rows(path, TIMINGS_HEADER):
        if n < 0 or n != int(n):
            raise CsvFormatError(f"n_descriptors must be a non-negative integer, got {n}", lineno)
        if min(tl, tm, tt) < 0:
            raise CsvFormatError("timings must be non-negative", lineno)
        out.append(TimingSample(int(n), tl, tm, tt))
    return out


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _f(x) -> str:
    # shortest round-tripping text for a float
    return repr(float(x))


def matches_csv_text(matches) -> str:
    return _csv_text(MATCHES_HEADER, ([_f(m.x1), _f(m.y1), _f(m.x2), _f(m.y2)] for m in matches))


def timings_csv_text(samples) -> str:
    return _csv_text(TIMINGS_HEADER, ([int(s.n_descriptors), _f(s.t_load), _f(s.t_match),
                                       _f(s.t_threshold)] for s in samples))


def trace_csv_text(trace) -> str:
    return _csv_text(TRACE_HEADER, ([_f(t), ev, _f(ex), _f(ey), _f(dt), _f(te), db]
                                    for t, ev, ex, ey, dt, te, db in trace.rows()))


def rows_csv_text(header, rows) -> str:
    return _csv_text(header, rows)
