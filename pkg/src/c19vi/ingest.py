"""Loading and validation of the epidemic, theme, census and index CSV files.

Two layouts are accepted for the epidemic time series:

* JHU-wide: a ``FIPS`` column plus one ``M/D/YY`` column per day, one row
  per county (other metadata columns are ignored).
* long: ``fips,date,cases,deaths`` with ISO dates, one row per county-day.

All loaders raise :class:`~c19vi.errors.DataError` with file and line
context on malformed input.
"""
from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

THEME_COLUMNS = ("t1", "t2", "t3", "t4", "t5", "t6")
THEME_NAMES = (
    "Socioeconomic Status",
    "Household Composition & Disability",
    "Minority Status & Language",
    "Housing Type & Transportation",
    "Epidemiological Factors",
    "Healthcare System Factors",
)
CENSUS_COLUMNS = ("population", "minority_pct", "poverty_pct")
LONG_COLUMNS = ("fips", "date", "cases", "deaths")

MODES = ("cumulative", "diff")


def _readonly(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def compute_ifr(cases, deaths) -> np.ndarray:
    """deaths/cases where cases > 0, else 0."""
    cases = np.asarray(cases, dtype=float)
    deaths = np.asarray(deaths, dtype=float)
    out = np.zeros_like(cases)
    pos = cases > 0
    out[pos] = deaths[pos] / cases[pos]
    return out


@dataclass(frozen=True, eq=False)
class CountySeries:
    fips: str
    name: str
    cases: np.ndarray
    deaths: np.ndarray
    start_date: dt.date
    ifr: np.ndarray = field(default=None)  # type: ignore[assignment]
    cases_decreases: int = 0
    deaths_decreases: int = 0

    def __post_init__(self):
        cases = _readonly(self.cases, np.int64)
        deaths = _readonly(self.deaths, np.int64)
        if cases.ndim != 1 or cases.shape != deaths.shape:
            raise DataError(f"county {self.fips}: cases and deaths must be 1-D of equal length")
        if len(cases) < 1:
            raise DataError(f"county {self.fips}: empty series")
        object.__setattr__(self, "cases", cases)
        object.__setattr__(self, "deaths", deaths)
        ifr = compute_ifr(cases, deaths) if self.ifr is None else self.ifr
        object.__setattr__(self, "ifr", _readonly(ifr, float))

    @property
    def n_days(self) -> int:
        return len(self.cases)

    @property
    def dates(self) -> list[dt.date]:
        return [self.start_date + dt.timedelta(days=i) for i in range(self.n_days)]


@dataclass(frozen=True)
class ThemeVector:
    fips: str
    t1: float
    t2: float
    t3: float
    t4: float
    t5: float
    t6: float

    def as_array(self) -> np.ndarray:
        return np.array([self.t1, self.t2, self.t3, self.t4, self.t5, self.t6], dtype=float)


@dataclass(frozen=True)
class CensusRecord:
    fips: str
    population: int
    minority_pct: float
    poverty_pct: float


@dataclass(frozen=True)
class IndexColumn:
    fips: str
    value: float


@dataclass
class SeriesCollection:
    """Counties present in both the cases and deaths files, plus the mismatch report."""

    counties: tuple[CountySeries, ...]
    only_in_cases: tuple[str, ...] = ()
    only_in_deaths: tuple[str, ...] = ()
    dropped_rows: tuple[str, ...] = ()
    mode: str = "cumulative"

    def __iter__(self) -> Iterator[CountySeries]:
        return iter(self.counties)

    def __len__(self) -> int:
        return len(self.counties)

    def __getitem__(self, i):
        return self.counties[i]

    @property
    def mismatches(self) -> list[tuple[str, str]]:
        """(fips, file-it-appears-in) for counties missing from the other file."""
        return [(f, "cases") for f in self.only_in_cases] + [(f, "deaths") for f in self.only_in_deaths]


# -- FIPS -----------------------------------------------------------------


def normalize_fips(raw) -> str | None:
    """Zero-pad a county FIPS code to 5 characters.

    Accepts ints, digit strings and integral float strings ("1001.0", as in
    the JHU files). Returns None for anything that is not a valid state+county
    code (states and DC: state part 01-56, county part 001-999).
    """
    if raw is None:
        return None
    s = str(raw).strip()
    if not s:
        return None
    try:
        if s.isdigit():
            code = int(s)
        else:
            v = float(s)
            if not math.isfinite(v) or v != int(v):
                return None
            code = int(v)
    except ValueError:
        return None
    state, county = divmod(code, 1000)
    if not (1 <= state <= 56 and 1 <= county <= 999):
        return None
    return f"{code:05d}"


def _strict_fips(raw, path, line) -> str:
    fips = normalize_fips(raw)
    if fips is None:
        raise DataError(f"invalid FIPS code {raw!r}", path, line)
    return fips


# -- time series -----------------------------------------------------------


def _parse_jhu_date(s: str) -> dt.date | None:
    parts = s.strip().split("/")
    if len(parts) != 3 or not all(p.isdigit() for p in parts):
        return None
    m, d, y = (int(p) for p in parts)
    if y < 100:
        y += 2000
    try:
        return dt.date(y, m, d)
    except ValueError:
        return None


def _parse_count(cell: str, path, line, what: str) -> int:
    s = cell.strip()
    try:
        v = int(s)
    except ValueError:
        try:
            f = float(s)
        except ValueError:
            raise DataError(f"non-numeric {what} value {cell!r}", path, line) from None
        if not math.isfinite(f) or f != int(f):
            raise DataError(f"non-integer {what} value {cell!r}", path, line)
        v = int(f)
    if v < 0:
        raise DataError(f"negative {what} value {v}", path, line)
    return v


def _check_consecutive(dates: Sequence[dt.date], path) -> None:
    for a, b in zip(dates, dates[1:]):
        if (b - a).days != 1:
            raise DataError(f"date columns not consecutive: {a.isoformat()} followed by {b.isoformat()}", path)


class _Table:
    """Per-file intermediate: fips -> (name, counts), shared date axis."""

    def __init__(self, start: dt.date | None, n_days: int, rows: dict, dropped: list):
        self.start = start
        self.n_days = n_days
        self.rows = rows
        self.dropped = dropped


def _read_csv(path) -> tuple[list[str], Iterator[tuple[int, list[str]]], object]:
    path = Path(path)
    if not path.exists():
        raise DataError("file not found", path)
    fh = open(path, newline="", encoding="utf-8-sig")
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        fh.close()
        raise DataError("empty file (no header)", path, 1) from None
    header = [h.strip() for h in header]

    def rows():
        with fh:
            for row in reader:
                if not row or all(not c.strip() for c in row):
                    continue
                yield reader.line_num, row

    return header, rows(), fh


def _read_wide(path, header, rows, which: str) -> _Table:
    if "FIPS" not in header:
        raise DataError("malformed header: no FIPS column", path, 1)
    fips_col = header.index("FIPS")
    name_col = None
    for cand in ("Combined_Key", "Admin2", "name", "County"):
        if cand in header:
            name_col = header.index(cand)
            break
    date_cols = [(i, d) for i, h in enumerate(header) if (d := _parse_jhu_date(h)) is not None]
    if not date_cols:
        raise DataError("malformed header: no M/D/YY date columns", path, 1)
    dates = [d for _, d in date_cols]
    _check_consecutive(dates, path)
    idx = [i for i, _ in date_cols]
    out: dict = {}
    dropped: list = []
    for line, row in rows:
        if len(row) != len(header):
            raise DataError(f"expected {len(header)} cells, got {len(row)}", path, line)
        fips = normalize_fips(row[fips_col])
        if fips is None:
            log.warning("%s:%d: dropping row with invalid FIPS %r", path, line, row[fips_col])
            dropped.append(row[fips_col])
            continue
        if fips in out:
            raise DataError(f"duplicate FIPS {fips}", path, line)
        counts = [_parse_count(row[i], path, line, which) for i in idx]
        name = row[name_col].strip() if name_col is not None else ""
        out[fips] = (name, counts)
    return _Table(dates[0], len(dates), out, dropped)


def _read_long(path, header, rows, which: str) -> _Table:
    missing = [c for c in LONG_COLUMNS if c not in header]
    if missing:
        raise DataError(f"malformed header: missing column(s) {', '.join(missing)}", path, 1)
    col = {c: header.index(c) for c in header}
    per_fips: dict[str, list[tuple[dt.date, int, int]]] = {}
    names: dict[str, str] = {}
    for line, row in rows:
        if len(row) != len(header):
            raise DataError(f"expected {len(header)} cells, got {len(row)}", path, line)
        fips = _strict_fips(row[col["fips"]], path, line)
        try:
            day = dt.date.fromisoformat(row[col["date"]].strip())
        except ValueError:
            raise DataError(f"bad ISO date {row[col['date']]!r}", path, line) from None
        v = _parse_count(row[col[which]], path, line, which)
        per_fips.setdefault(fips, []).append((day, v, line))
        if "name" in col:
            names[fips] = row[col["name"]].strip()
    start = None
    n_days = 0
    out = {}
    for fips, recs in per_fips.items():
        days = [r[0] for r in recs]
        if len(set(days)) != len(days):
            dup = next(r for r in recs if days.count(r[0]) > 1)
            raise DataError(f"duplicate FIPS/date {fips} {dup[0].isoformat()}", path, dup[2])
        recs.sort()
        days = [r[0] for r in recs]
        _check_consecutive(days, path)
        if start is None:
            start, n_days = days[0], len(days)
        elif days[0] != start or len(days) != n_days:
            raise DataError(f"county {fips} covers {days[0]}..{days[-1]}, other counties differ", path)
        out[fips] = (names.get(fips, ""), [r[1] for r in recs])
    return _Table(start, n_days, out, [])


def _read_series_file(path, which: str) -> _Table:
    header, rows, _ = _read_csv(path)
    if all(c in header for c in LONG_COLUMNS):
        return _read_long(path, header, rows, which)
    return _read_wide(path, header, rows, which)


def load_series(
    cases_path,
    deaths_path,
    end_date: dt.date | None = None,
    mode: str = "cumulative",
) -> SeriesCollection:
    """Load cases and deaths files and join them on FIPS.

    Counties present in only one file are reported in the result
    (``only_in_cases`` / ``only_in_deaths``) and logged, not loaded.
    ``mode="diff"`` converts cumulative counts to daily increments.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    ct = _read_series_file(cases_path, "cases")
    dt_ = _read_series_file(deaths_path, "deaths")
    if ct.rows and dt_.rows and (ct.start != dt_.start or ct.n_days != dt_.n_days):
        raise DataError(
            f"cases ({ct.start}, {ct.n_days} days) and deaths ({dt_.start}, {dt_.n_days} days) date ranges differ",
            deaths_path,
        )
    start = ct.start or dt_.start
    n = ct.n_days
    if end_date is not None and start is not None:
        n = min(n, (end_date - start).days + 1)
        if n < 1:
            raise DataError(f"end date {end_date} precedes first date {start}", cases_path)

    common = [f for f in ct.rows if f in dt_.rows]
    only_c = tuple(sorted(f for f in ct.rows if f not in dt_.rows))
    only_d = tuple(sorted(f for f in dt_.rows if f not in ct.rows))
    for f in only_c:
        log.warning("county %s present in cases file only; skipped", f)
    for f in only_d:
        log.warning("county %s present in deaths file only; skipped", f)

    counties = []
    for fips in common:
        name, c = ct.rows[fips]
        dname, d = dt_.rows[fips]
        c = np.asarray(c[:n], dtype=np.int64)
        d = np.asarray(d[:n], dtype=np.int64)
        c_dec = int(np.sum(np.diff(c) < 0))
        d_dec = int(np.sum(np.diff(d) < 0))
        if mode == "diff":
            c = np.diff(c, prepend=0)
            d = np.diff(d, prepend=0)
        counties.append(
            CountySeries(
                fips=fips,
                name=name or dname,
                cases=c,
                deaths=d,
                start_date=start,
                cases_decreases=c_dec,
                deaths_decreases=d_dec,
            )
        )
    return SeriesCollection(
        counties=tuple(counties),
        only_in_cases=only_c,
        only_in_deaths=only_d,
        dropped_rows=tuple(ct.dropped + dt_.dropped),
        mode=mode,
    )


def write_long(counties: Iterable[CountySeries], path) -> None:
    """Write series to the long ``fips,date,cases,deaths`` layout."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LONG_COLUMNS)
        for c in counties:
            for day, nc, nd in zip(c.dates, c.cases, c.deaths):
                w.writerow([c.fips, day.isoformat(), int(nc), int(nd)])


# -- flat tables ------------------------------------------------------------


def _parse_unit(cell, path, line, fips, column) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise DataError(f"non-numeric value {cell!r} for {fips} column {column}", path, line) from None
    if not (0.0 <= v <= 1.0):
        raise DataError(f"value {v} for {fips} column {column} outside [0, 1]", path, line)
    return v


def _table_rows(path, required: Sequence[str]):
    header, rows, _ = _read_csv(path)
    missing = [c for c in required if c not in header]
    if missing:
        raise DataError(f"missing column(s) {', '.join(missing)}", path, 1)
    col = {c: header.index(c) for c in header}
    seen = set()
    for line, row in rows:
        if len(row) != len(header):
            raise DataError(f"expected {len(header)} cells, got {len(row)}", path, line)
        fips = _strict_fips(row[col["fips"]], path, line)
        if fips in seen:
            raise DataError(f"duplicate FIPS {fips}", path, line)
        seen.add(fips)
        yield line, fips, {c: row[col[c]].strip() for c in required if c != "fips"}


def load_themes(path) -> list[ThemeVector]:
    out = []
    for line, fips, cells in _table_rows(path, ("fips",) + THEME_COLUMNS):
        vals = [_parse_unit(cells[c], path, line, fips, c) for c in THEME_COLUMNS]
        out.append(ThemeVector(fips, *vals))
    return out


def load_census(path) -> list[CensusRecord]:
    out = []
    for line, fips, cells in _table_rows(path, ("fips",) + CENSUS_COLUMNS):
        try:
            pop = float(cells["population"])
        except ValueError:
            raise DataError(f"non-numeric population {cells['population']!r} for {fips}", path, line) from None
        if not math.isfinite(pop) or pop != int(pop):
            raise DataError(f"population for {fips} must be an integer, got {cells['population']!r}", path, line)
        if pop <= 0:
            raise DataError(f"population for {fips} must be > 0, got {int(pop)}", path, line)
        fracs = []
        for c in ("minority_pct", "poverty_pct"):
            try:
                v = float(cells[c])
            except ValueError:
                raise DataError(f"non-numeric value {cells[c]!r} for {fips} column {c}", path, line) from None
            if v > 1.0 and v <= 100.0:
                raise DataError(
                    f"{c} for {fips} is {v}, outside [0, 1]; looks like a percent, expected a fraction",
                    path,
                    line,
                )
            if not (0.0 <= v <= 1.0):
                raise DataError(f"{c} for {fips} is {v}, outside [0, 1]", path, line)
            fracs.append(v)
        out.append(CensusRecord(fips, int(pop), fracs[0], fracs[1]))
    return out


def load_index(path) -> list[IndexColumn]:
    return [
        IndexColumn(fips, _parse_unit(cells["value"], path, line, fips, "value"))
        for line, fips, cells in _table_rows(path, ("fips", "value"))
    ]


def write_themes(themes: Iterable[ThemeVector], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("fips",) + THEME_COLUMNS)
        for t in themes:
            w.writerow([t.fips] + [repr(float(v)) for v in t.as_array()])


def write_census(records: Iterable[CensusRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("fips",) + CENSUS_COLUMNS)
        for r in records:
            w.writerow([r.fips, r.population, repr(float(r.minority_pct)), repr(float(r.poverty_pct))])


def write_index(values: Iterable[IndexColumn], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("fips", "value"))
        for v in values:
            w.writerow([v.fips, repr(float(v.value))])
