"""Reading and writing demographic rate tables.

Two layouts are understood:

``hmd``
    Whitespace-delimited export with a ``Year Age <col> <col> ...`` header
    line, optionally preceded by free-text title lines.  ``.`` marks a
    missing rate and ages may carry an open-interval suffix (``110+``,
    ``12-``).

``canonical``
    CSV with the header ``year,age,rate``; an empty rate is missing.
"""

from __future__ import annotations

import csv
import io
import os
import re
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import DuplicateCell, MissingAgeRange, ParseError
from .surface import AGE_RANGES, DemographicSurface

__all__ = [
    "RateRecord",
    "parse_rates",
    "read_rates",
    "write_canonical_csv",
    "atomic_write_text",
    "log_transform",
    "truncate_ages",
    "prepare_surface",
]

_NUMBER = re.compile(r"^[+]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")
_AGE = re.compile(r"^(\d+)([+-]?)$")
_YEAR = re.compile(r"^(\d{4})$")
YEAR_RANGE = (1800, 2200)
AGE_LIMIT = 120


@dataclass(frozen=True)
class RateRecord:
    year: int
    age: int
    rate: float | None
    open_interval: bool = False


def _parse_rate(token: str, line_no: int, missing: tuple) -> float | None:
    token = token.strip()
    if token in missing:
        return None
    if not _NUMBER.match(token):
        raise ParseError(f"invalid rate {token!r}", line_no)
    return float(token)


def _parse_age(token: str, line_no: int):
    m = _AGE.match(token.strip())
    if not m:
        raise ParseError(f"invalid age {token!r}", line_no)
    age = int(m.group(1))
    if age > AGE_LIMIT:
        raise ParseError(f"age {age} outside [0, {AGE_LIMIT}]", line_no)
    return age, m.group(2) == "+", m.group(2) == "-"


def _parse_year(token: str, line_no: int) -> int:
    m = _YEAR.match(token.strip())
    if not m:
        raise ParseError(f"invalid year {token!r}", line_no)
    year = int(m.group(1))
    if not YEAR_RANGE[0] <= year <= YEAR_RANGE[1]:
        raise ParseError(f"year {year} outside {YEAR_RANGE}", line_no)
    return year


def _iter_hmd(lines, column):
    header = None
    for line_no, line in enumerate(lines, start=1):
        fields = line.split()
        if not fields:
            continue
        if header is None:
            if fields[0].lower() == "year" and len(fields) >= 3 and fields[1].lower() == "age":
                header = [f.lower() for f in fields]
                if column is None:
                    col = header.index("total") if "total" in header else len(header) - 1
                else:
                    if column.lower() not in header[2:]:
                        raise ParseError(f"column {column!r} not in header {fields}", line_no)
                    col = header.index(column.lower())
            continue
        if len(fields) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(fields)}", line_no)
        year = _parse_year(fields[0], line_no)
        age, open_up, _ = _parse_age(fields[1], line_no)
        rate = _parse_rate(fields[col], line_no, (".",))
        yield line_no, RateRecord(year, age, rate, open_up)
    if header is None:
        raise ParseError("no 'Year Age ...' header line found")


def _iter_canonical(lines):
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty input", 1) from None
    if [h.strip().lower() for h in header] != ["year", "age", "rate"]:
        raise ParseError(f"expected header year,age,rate, got {header}", 1)
    for fields in reader:
        line_no = reader.line_num
        if not fields or all(not f.strip() for f in fields):
            continue
        if len(fields) != 3:
            raise ParseError(f"expected 3 fields, got {len(fields)}", line_no)
        year = _parse_year(fields[0], line_no)
        age, open_up, _ = _parse_age(fields[1], line_no)
        rate = _parse_rate(fields[2], line_no, ("",))
        yield line_no, RateRecord(year, age, rate, open_up)


def parse_rates(stream, fmt: str = "canonical", column: str | None = None, kind: str = "mortality") -> DemographicSurface:
    """Parse a rate table into a dense raw-rate surface.

    Cells absent from the input are masked, as are explicit missing markers.
    """
    if isinstance(stream, (bytes, bytearray)):
        stream = io.StringIO(stream.decode("utf-8"))
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    lines = (line.rstrip("\r\n") for line in stream)
    if fmt == "hmd":
        records = _iter_hmd(lines, column)
    elif fmt == "canonical":
        records = _iter_canonical(lines)
    else:
        raise ValueError(f"unknown format {fmt!r}")

    cells = {}
    open_age = None
    for line_no, rec in records:
        key = (rec.year, rec.age)
        if key in cells:
            raise DuplicateCell(f"duplicate cell year={rec.year} age={rec.age}", line_no)
        if rec.rate is not None and rec.rate < 0:
            raise ParseError(f"negative rate {rec.rate}", line_no)
        cells[key] = rec.rate
        if rec.open_interval:
            open_age = rec.age
    if not cells:
        raise ParseError("no data rows")

    years = np.array(sorted({y for y, _ in cells}))
    ages = np.array(sorted({a for _, a in cells}))
    values = np.full((ages.size, years.size), np.nan)
    mask = np.ones_like(values, dtype=bool)
    yi = {y: j for j, y in enumerate(years)}
    ai = {a: i for i, a in enumerate(ages)}
    for (y, a), rate in cells.items():
        if rate is not None:
            values[ai[a], yi[y]] = rate
            mask[ai[a], yi[y]] = False
    return DemographicSurface(ages, years, values, mask, kind=kind, scale="raw", open_age=open_age)


def read_rates(path, fmt: str | None = None, column: str | None = None, kind: str = "mortality") -> DemographicSurface:
    """Parse a file; the format is guessed from the first line when not given."""
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    if fmt is None:
        first = text.lstrip().split("\n", 1)[0].strip().lower().replace(" ", "")
        fmt = "canonical" if first == "year,age,rate" else "hmd"
    return parse_rates(io.StringIO(text, newline=None), fmt=fmt, column=column, kind=kind)


def _format_rate(v: float) -> str:
    return repr(float(v))


def write_canonical_csv(surface: DemographicSurface, target) -> None:
    """Write ``surface`` as canonical CSV to a path or text stream.

    Paths are written atomically through a temporary file.
    """
    if surface.scale != "raw":
        raise ValueError("canonical CSV stores raw rates; write before log_transform")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["year", "age", "rate"])
    for j, year in enumerate(surface.years):
        for i, age in enumerate(surface.ages):
            label = f"{age}+" if surface.open_age == age else str(age)
            rate = "" if surface.mask[i, j] else _format_rate(surface.values[i, j])
            w.writerow([int(year), label, rate])
    text = buf.getvalue()
    if hasattr(target, "write"):
        target.write(text)
        return
    atomic_write_text(Path(target), text)


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def log_transform(surface: DemographicSurface) -> DemographicSurface:
    """Natural log of every rate; non-positive rates become masked."""
    if surface.scale == "log":
        return surface
    vals = surface.values
    mask = surface.mask | ~(np.nan_to_num(vals, nan=0.0) > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        logged = np.where(mask, np.nan, np.log(np.where(mask, 1.0, vals)))
    return replace(surface, values=logged, mask=mask, scale="log")


def truncate_ages(surface: DemographicSurface, kind: str | None = None) -> DemographicSurface:
    """Keep ages 0-100 (mortality) or 15-45 (fertility).

    An open age group that starts exactly at the upper bound is kept as that
    single age.
    """
    kind = kind or surface.kind
    lo, hi = AGE_RANGES[kind]
    wanted = list(range(lo, hi + 1))
    present = set(int(a) for a in surface.ages)
    missing = [a for a in wanted if a not in present]
    if missing:
        raise MissingAgeRange(f"{kind} needs ages {lo}-{hi}; missing {missing[:5]}{'...' if len(missing) > 5 else ''}")
    out = surface.select_ages(wanted)
    return replace(out, kind=kind)


def prepare_surface(surface: DemographicSurface, kind: str | None = None) -> DemographicSurface:
    """Truncate to the kind's age range and take logs."""
    return log_transform(truncate_ages(surface, kind))
