"""Vintage ingestion, series transformations and the mixed-frequency panel.

Input files are long-format CSV with header ``series_id,date,value,vintage_date``.
Each row is one published value; the value used for an as-of date is the row
with the latest ``vintage_date`` not after it. The release calendar is thus
implied by the vintage dates themselves.

The monthly grid starts at a quarter's first month and ends at the *frontier*:
the latest month for which any monthly series has a released value. Quarterly
values sit on the third month of their quarter.
"""

import csv
import hashlib
import datetime as dt
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import CalendarError, DataError, SpecError, TransformationError

log = logging.getLogger(__name__)

TRANSFORMATIONS = ("level", "scale01", "logdiff100", "logdiff400")
FREQUENCIES = ("monthly", "quarterly")
QUARTER_ANCHORS = {"first": 0, "second": 1, "third": 2}
CSV_HEADER = ("series_id", "date", "value", "vintage_date")
CLASS_BY_DELAY = {0: "Forecast", 1: "NowcastT1", 2: "NowcastT2"}


@dataclass(frozen=True)
class SeriesSpec:
    id: str
    frequency: str = "monthly"
    transformation: str = "level"

    def __post_init__(self):
        if self.frequency not in FREQUENCIES:
            raise SpecError(f"series {self.id}: frequency must be one of {FREQUENCIES}")
        if self.transformation not in TRANSFORMATIONS:
            raise SpecError(f"series {self.id}: unknown transformation {self.transformation!r}")
        if self.frequency == "quarterly" and self.transformation not in ("logdiff400", "level"):
            raise SpecError(f"quarterly series {self.id} must use logdiff400 or level")


@dataclass
class RawSeries:
    """Dated values of one series for a single as-of date.

    ``months`` holds ``datetime64[M]`` periods (for quarterly series, the
    anchored month of each quarter) and ``dates`` the original ISO dates.
    """

    id: str
    dates: list
    values: np.ndarray
    vintages: list = field(default_factory=list)

    @property
    def months(self):
        return np.array([np.datetime64(d, "M") for d in self.dates], dtype="datetime64[M]")


def _parse_date(text, line, column):
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError as exc:
        raise DataError(f"line {line}: unparseable {column} {text!r}") from exc


def read_vintage_rows(path):
    """Parse and schema-check the vintage file; returns a list of row tuples."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file {path} does not exist")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path} is empty")
        header = tuple(h.strip() for h in header)
        missing = [c for c in CSV_HEADER if c not in header]
        if missing:
            raise DataError(f"{path}: header lacks column(s) {', '.join(missing)}")
        pos = [header.index(c) for c in CSV_HEADER]
        rows = []
        for line, rec in enumerate(reader, start=2):
            if not rec or all(not r.strip() for r in rec):
                continue
            if len(rec) < len(header):
                raise DataError(f"line {line}: expected {len(header)} fields, got {len(rec)}")
            sid, date_s, value_s, vint_s = (rec[i] for i in pos)
            try:
                value = float(value_s)
            except ValueError as exc:
                raise DataError(f"line {line}: unparseable value {value_s!r}") from exc
            rows.append((sid.strip(), _parse_date(date_s, line, "date"), value,
                         _parse_date(vint_s, line, "vintage_date"), line))
    if not rows:
        raise DataError(f"{path} has no data rows")
    return rows


def load_vintage(path, specs, as_of: Optional[dt.date] = None) -> dict:
    """Series values as published on ``as_of`` (latest vintage when ``None``)."""
    rows = read_vintage_rows(path)
    known = {s.id for s in specs}
    seen = {}
    for sid, date, value, vintage, line in rows:
        if sid not in known:
            raise DataError(f"line {line}: unknown series id {sid!r}")
        key = (sid, date, vintage)
        if key in seen:
            raise DataError(f"line {line}: duplicate row for {sid} {date} vintage {vintage} "
                            f"(first at line {seen[key]})")
        seen[key] = line
    best = {}
    for sid, date, value, vintage, _ in rows:
        if as_of is not None and vintage > as_of:
            continue
        cur = best.get((sid, date))
        if cur is None or vintage > cur[1]:
            best[(sid, date)] = (value, vintage)
    out = {}
    for spec in specs:
        items = sorted((d, v) for (s, d), v in best.items() if s == spec.id)
        out[spec.id] = RawSeries(
            id=spec.id,
            dates=[d for d, _ in items],
            values=np.array([v[0] for _, v in items], dtype=float),
            vintages=[v[1] for _, v in items],
        )
    return out


def _period_index(dates, frequency):
    months = np.array([d.year * 12 + d.month - 1 for d in dates], dtype=np.int64)
    return months // 3 if frequency == "quarterly" else months


def transform(series: RawSeries, spec: SeriesSpec) -> RawSeries:
    """Apply the series transformation; differences drop the first observation.

    A difference is only formed between adjacent periods, so a hole in the
    raw series yields a hole after the next observation as well.
    """
    x = np.asarray(series.values, dtype=float)
    kind = spec.transformation
    if kind == "level":
        return RawSeries(series.id, list(series.dates), x.copy(), list(series.vintages))
    if kind == "scale01":
        return RawSeries(series.id, list(series.dates), 0.1 * x, list(series.vintages))
    bad = np.flatnonzero(~(x > 0))
    if bad.size:
        raise TransformationError(
            f"series {series.id}: non-positive level {x[bad[0]]} on {series.dates[bad[0]]} "
            f"under {kind}"
        )
    factor = 100.0 if kind == "logdiff100" else 400.0
    period = _period_index(series.dates, spec.frequency)
    adjacent = np.diff(period) == 1
    diffs = factor * np.diff(np.log(x))
    keep = np.flatnonzero(adjacent) + 1
    return RawSeries(series.id, [series.dates[i] for i in keep], diffs[adjacent],
                     [series.vintages[i] for i in keep] if series.vintages else [])


@dataclass(frozen=True)
class NowcastClass:
    label: str
    gdp_delay_months: int

    def __post_init__(self):
        if CLASS_BY_DELAY.get(self.gdp_delay_months) != self.label:
            raise CalendarError(f"class {self.label} does not match delay {self.gdp_delay_months}")


@dataclass(frozen=True, eq=False)
class MixedFrequencyPanel:
    """Monthly grid (NaN = missing) plus quarterly observations and release calendar.

    Quarterly columns of ``grid`` are entirely NaN; their observations live in
    ``quarterly_obs`` as ``(column, month_index, value)``.
    """

    series: tuple
    start: np.datetime64
    grid: np.ndarray
    quarterly_obs: tuple
    calendar: dict
    origin: int
    target: str

    def __post_init__(self):
        self.grid.setflags(write=False)
        for col, t, value in self.quarterly_obs:
            if t % 3 != 2:
                raise CalendarError(f"quarterly observation at month {t} is not a third month")
        if any(v > self.origin for v in self.calendar.values()):
            raise CalendarError("calendar runs past the origin")
        observed = self.grid[~np.isnan(self.grid)]
        if not np.all(np.isfinite(observed)):
            raise DataError("panel contains non-finite observed values")

    @property
    def n(self) -> int:
        return len(self.series)

    @property
    def n_months(self) -> int:
        return self.grid.shape[0]

    @property
    def ids(self):
        return [s.id for s in self.series]

    def column(self, series_id) -> int:
        try:
            return self.ids.index(series_id)
        except ValueError:
            raise SpecError(f"unknown series id {series_id!r}") from None

    @property
    def target_column(self) -> int:
        return self.column(self.target)

    @property
    def quarterly_columns(self):
        return [i for i, s in enumerate(self.series) if s.frequency == "quarterly"]

    @property
    def monthly_columns(self):
        return [i for i, s in enumerate(self.series) if s.frequency == "monthly"]

    @property
    def missing_mask(self):
        return np.isnan(self.grid)

    @property
    def months(self):
        return self.start + np.arange(self.n_months)

    def month_label(self, t) -> str:
        return str(self.start + int(t))

    def replace_grid(self, grid) -> "MixedFrequencyPanel":
        grid = np.array(grid, dtype=float, copy=True)
        return MixedFrequencyPanel(self.series, self.start, grid, self.quarterly_obs,
                                   dict(self.calendar), self.origin, self.target)

    def replace_quarterly(self, quarterly_obs) -> "MixedFrequencyPanel":
        return MixedFrequencyPanel(self.series, self.start, np.array(self.grid), tuple(quarterly_obs),
                                   dict(self.calendar), self.origin, self.target)


def assemble_panel(series_set: dict, specs, target: str, quarter_anchor: str = "third",
                   start=None) -> MixedFrequencyPanel:
    """Align transformed series on a common monthly grid ending at the frontier."""
    specs = list(specs)
    if quarter_anchor not in QUARTER_ANCHORS:
        raise SpecError(f"quarter_anchor must be one of {sorted(QUARTER_ANCHORS)}")
    offset = QUARTER_ANCHORS[quarter_anchor]
    if not any(s.frequency == "monthly" for s in specs) or not any(s.frequency == "quarterly" for s in specs):
        raise DataError("a panel needs at least one monthly and one quarterly series")
    if target not in {s.id for s in specs}:
        raise SpecError(f"target series {target!r} is not declared")
    if next(s for s in specs if s.id == target).frequency != "quarterly":
        raise SpecError(f"target series {target!r} must be quarterly")

    transformed = {}
    for spec in specs:
        raw = series_set.get(spec.id)
        if raw is None or len(raw.dates) == 0:
            raise DataError(f"series {spec.id} has zero observations")
        if spec.frequency == "quarterly":
            for d in raw.dates:
                if (d.month - 1) % 3 != offset:
                    raise CalendarError(
                        f"series {spec.id}: date {d} is not on the {quarter_anchor} month of its quarter"
                    )
        ts = transform(raw, spec)
        if len(ts.dates) == 0:
            raise DataError(f"series {spec.id} has zero observations after transformation")
        transformed[spec.id] = ts

    def month_number(d):
        return d.year * 12 + d.month - 1

    monthly = [s for s in specs if s.frequency == "monthly"]
    frontier = max(month_number(transformed[s.id].dates[-1]) for s in monthly)
    if start is None:
        first = max(month_number(transformed[s.id].dates[0]) for s in monthly)
        first = -(-first // 3) * 3  # next quarter start
    else:
        first = month_number(start)
        if first % 3:
            raise CalendarError(f"grid start {start} is not a quarter's first month")
    big_t = frontier - first + 1
    if big_t < 6:
        raise DataError(f"only {big_t} months between grid start and frontier")

    grid = np.full((big_t, len(specs)), np.nan)
    quarterly, calendar = [], {}
    for col, spec in enumerate(specs):
        ts = transformed[spec.id]
        if spec.frequency == "monthly":
            idx = np.array([month_number(d) for d in ts.dates]) - first
            ok = (idx >= 0) & (idx < big_t)
            grid[idx[ok], col] = ts.values[ok]
            calendar[spec.id] = int(idx[ok].max()) if ok.any() else -1
        else:
            last = -1
            for d, v in zip(ts.dates, ts.values):
                t = month_number(d) - offset + 2 - first
                if 0 <= t < big_t:
                    quarterly.append((col, int(t), float(v)))
                    last = t
            calendar[spec.id] = int(last)
    start_month = np.datetime64(f"{first // 12:04d}-{first % 12 + 1:02d}", "M")
    return MixedFrequencyPanel(tuple(specs), start_month, grid, tuple(quarterly), calendar,
                               big_t - 1, target)


def classify_nowcast(panel: MixedFrequencyPanel) -> NowcastClass:
    """Classify by the months between the target's last release and the origin.

    For a quarterly target the last release is its last quarterly value; a
    monthly target uses its last observed month.
    """
    last = panel.calendar.get(panel.target, -1)
    if last < 0:
        raise CalendarError(f"no released value of {panel.target} in the panel")
    delay = panel.origin - last
    if delay not in CLASS_BY_DELAY:
        raise CalendarError(
            f"{panel.target} is {delay} months behind the origin; only 0, 1 or 2 are supported"
        )
    return NowcastClass(CLASS_BY_DELAY[delay], delay)


def target_months(panel: MixedFrequencyPanel, cls: NowcastClass):
    """Month indices reported for a class.

    Forecast rows are the three months after the origin. Nowcast rows are the
    unreleased target months inside the grid, i.e. ``origin - delay + 1 .. origin``.
    """
    if cls.gdp_delay_months == 0:
        return [panel.origin + h for h in (1, 2, 3)]
    return list(range(panel.origin - cls.gdp_delay_months + 1, panel.origin + 1))


def validate_vintage(path, specs, target, quarter_anchor="third", as_of=None):
    """Collect validation issues instead of stopping at the first one.

    Returns a list of ``{"kind", "series", "date", "message"}`` records; an
    empty list means the file passes.
    """
    issues = []

    def add(kind, message, series=None, date=None):
        issues.append({"kind": kind, "series": series, "date": None if date is None else str(date),
                       "message": message})

    try:
        rows = read_vintage_rows(path)
    except DataError as exc:
        add("schema", str(exc))
        return issues
    known = {s.id for s in specs}
    by_id = {s.id: s for s in specs}
    offset = QUARTER_ANCHORS.get(quarter_anchor)
    if offset is None:
        add("config", f"unknown quarter_anchor {quarter_anchor!r}")
        offset = 2
    seen = set()
    for sid, date, value, vintage, line in rows:
        if sid not in known:
            add("schema", f"line {line}: unknown series id {sid!r}", sid, date)
            continue
        if (sid, date, vintage) in seen:
            add("schema", f"line {line}: duplicate row", sid, date)
        seen.add((sid, date, vintage))
        if not np.isfinite(value):
            add("schema", f"line {line}: non-finite value", sid, date)
        if by_id[sid].frequency == "quarterly" and (date.month - 1) % 3 != offset:
            add("calendar", f"line {line}: date not on the {quarter_anchor} month of its quarter",
                sid, date)
        if vintage < date:
            add("calendar", f"line {line}: vintage_date precedes the observation date", sid, date)
    present = {r[0] for r in rows}
    for s in specs:
        if s.id not in present:
            add("schema", "declared series has no rows", s.id)
    if target not in known:
        add("config", f"target series {target!r} is not declared")
    if issues:
        return issues

    try:
        series_set = load_vintage(path, specs, as_of)
    except DataError as exc:
        add("schema", str(exc))
        return issues
    for spec in specs:
        raw = series_set[spec.id]
        if spec.transformation.startswith("logdiff"):
            for d, v in zip(raw.dates, raw.values):
                if not v > 0:
                    add("domain", f"non-positive level {v} under {spec.transformation}", spec.id, d)
    if issues:
        return issues
    try:
        panel = assemble_panel(series_set, specs, target, quarter_anchor)
        classify_nowcast(panel)
    except (DataError, SpecError) as exc:
        add("calendar", str(exc))
    return issues


def write_vintage_csv(path, rows):
    """Write ``(series_id, date, value, vintage_date)`` rows in the ingestion format."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for sid, date, value, vintage in rows:
            writer.writerow([sid, str(date), repr(float(value)), str(vintage)])


def panel_from_arrays(grid, quarterly_obs=(), series=None, target=None, start="2000-01"):
    """Panel from an in-memory grid, e.g. simulated data.

    Columns listed in ``quarterly_obs`` are treated as quarterly (their grid
    cells must be NaN); the calendar is read off the last available cells.
    """
    grid = np.array(grid, dtype=float, copy=True)
    if grid.ndim != 2:
        raise DataError("grid must be a T x n array")
    n = grid.shape[1]
    quarterly_obs = tuple((int(c), int(t), float(v)) for c, t, v in quarterly_obs)
    q_cols = sorted({c for c, _, _ in quarterly_obs})
    if series is None:
        series = tuple(
            SeriesSpec(f"y{i}", "quarterly" if i in q_cols else "monthly", "level") for i in range(n)
        )
    series = tuple(series)
    if len(series) != n:
        raise DataError(f"{len(series)} series specs for {n} grid columns")
    for c in q_cols:
        if not np.all(np.isnan(grid[:, c])):
            raise DataError(f"quarterly column {c} must be NaN on the monthly grid")
    calendar = {}
    for i, s in enumerate(series):
        if s.frequency == "quarterly":
            months = [t for c, t, _ in quarterly_obs if c == i]
        else:
            months = np.flatnonzero(~np.isnan(grid[:, i])).tolist()
        calendar[s.id] = int(max(months)) if months else -1
    if target is None:
        target = series[q_cols[0]].id if q_cols else series[0].id
    return MixedFrequencyPanel(series, np.datetime64(start, "M"), grid, quarterly_obs, calendar,
                               grid.shape[0] - 1, target)


def panel_digest(panel: MixedFrequencyPanel) -> str:
    """SHA-256 over the grid, the quarterly observations and the series layout."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(panel.grid, dtype="<f8").tobytes())
    h.update(repr(panel.quarterly_obs).encode())
    h.update(repr([(s.id, s.frequency, s.transformation) for s in panel.series]).encode())
    h.update(str(panel.start).encode())
    return h.hexdigest()
