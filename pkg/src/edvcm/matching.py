"""Self-matched design: exposure events plus same-day-of-year control years.

Each event contributes one stratum: its exposed days, optional lag days,
and the same calendar days in the nearest exposure-free years of the same
area.
"""

from __future__ import annotations

import calendar
import csv
import datetime as dt
from collections import defaultdict
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .data import AnalyticDataset, ExposureUnit, Role, Stratum
from .splines import build_covariate_design


class MatchInputError(ValueError):
    """Malformed input files or configuration."""


class StratumRejected(ValueError):
    def __init__(self, event_id: str, missing: list[dt.date]):
        self.event_id = event_id
        self.missing = missing
        dates = ", ".join(d.isoformat() for d in missing)
        super().__init__(f"event {event_id}: missing outcome rows for {dates}")


@dataclass(frozen=True)
class ExposureEvent:
    area_id: str
    start_date: dt.date
    duration: int

    def __post_init__(self):
        if self.duration < 1:
            raise ValueError(f"event {self.event_id}: duration must be >= 1")

    @property
    def event_id(self) -> str:
        return f"{self.area_id}_{self.start_date.isoformat()}"

    @property
    def end_date(self) -> dt.date:
        return self.start_date + dt.timedelta(days=self.duration - 1)


@dataclass(frozen=True)
class OutcomeRecord:
    count: int
    person_time: float
    covariates: tuple[float, ...] = ()


class OutcomePanel:
    """Daily outcome rows keyed by ``(area_id, date)``."""

    def __init__(self, rows: dict[tuple[str, dt.date], OutcomeRecord], covariate_names=()):
        self.rows = rows
        self.covariate_names = tuple(covariate_names)
        for (area, day), rec in rows.items():
            if not rec.person_time > 0:
                raise MatchInputError(f"{area} {day}: person_time must be positive")
            if rec.count < 0:
                raise MatchInputError(f"{area} {day}: count must be non-negative")
            if len(rec.covariates) != len(self.covariate_names):
                raise MatchInputError(f"{area} {day}: wrong number of covariates")
        years = [day.year for _, day in rows]
        self.first_year = min(years) if years else None
        self.last_year = max(years) if years else None

    @classmethod
    def from_records(cls, records, covariate_names=()) -> OutcomePanel:
        """From ``(area_id, date, count, person_time, covariates)`` tuples."""
        rows = {}
        for area, day, count, pt, *cov in records:
            key = (str(area), day)
            if key in rows:
                raise MatchInputError(f"duplicate outcome row for area {area} on {day}")
            rows[key] = OutcomeRecord(int(count), float(pt), tuple(float(v) for v in (cov[0] if cov else ())))
        return cls(rows, covariate_names)

    def get(self, area_id: str, day: dt.date) -> OutcomeRecord | None:
        return self.rows.get((area_id, day))


@dataclass(frozen=True)
class MatchConfig:
    n_control_years: int = 2
    post_event_exclusion_days: int = 28
    lag_days: int = 0
    max_duration: int | None = None
    covariate_df: int | None = None

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None and (not isinstance(v, int) or isinstance(v, bool) or v < 0):
                raise MatchInputError(f"{f.name} must be a non-negative integer, got {v!r}")
        if self.n_control_years < 1:
            raise MatchInputError("n_control_years must be at least 1")

    @classmethod
    def from_dict(cls, data: dict) -> MatchConfig:
        if not isinstance(data, dict):
            raise MatchInputError("match config must be a JSON object")
        unknown = sorted(set(data) - {f.name for f in fields(cls)})
        if unknown:
            raise MatchInputError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


# ----------------------------------------------------------------------
def same_day_in_year(day: dt.date, year: int) -> dt.date:
    """Same month and day in ``year``; Feb 29 becomes Feb 28 in non-leap years."""
    if day.month == 2 and day.day == 29 and not calendar.isleap(year):
        return dt.date(year, 2, 28)
    return day.replace(year=year)


def _days(start: dt.date, n: int) -> list[dt.date]:
    return [start + dt.timedelta(days=k) for k in range(n)]


class ExposureCalendar:
    """Exposure days and blocked (exposure plus exclusion) days per area."""

    def __init__(self, events, exclusion_days: int):
        self.exposed: dict[str, set[dt.date]] = defaultdict(set)
        self.blocked: dict[str, set[dt.date]] = defaultdict(set)
        by_area: dict[str, list[ExposureEvent]] = defaultdict(list)
        for ev in events:
            by_area[ev.area_id].append(ev)
        for area, evs in by_area.items():
            evs = sorted(evs, key=lambda e: e.start_date)
            for a, b in zip(evs, evs[1:]):
                if b.start_date <= a.end_date:
                    raise MatchInputError(
                        f"overlapping events in area {area}: {a.event_id} and {b.event_id}"
                    )
            for ev in evs:
                self.exposed[area].update(_days(ev.start_date, ev.duration))
                self.blocked[area].update(_days(ev.start_date, ev.duration + exclusion_days))


def find_control_years(
    event: ExposureEvent,
    exposures: ExposureCalendar,
    config: MatchConfig,
    *,
    first_year: int,
    last_year: int,
) -> list[int]:
    """Year offsets of the nearest clean control years.

    Candidates are tried in the order -1, +1, -2, +2, ... within
    ``first_year..last_year``. A year qualifies when its window of
    ``d + post_event_exclusion_days`` days from the matched start holds no
    exposure day, and none of its control dates (exposed plus lag days)
    falls in any event's exposure or exclusion window. Returns fewer than
    ``n_control_years`` offsets when not enough years qualify.
    """
    area = event.area_id
    exposed = exposures.exposed.get(area, set())
    blocked = exposures.blocked.get(area, set())
    year = event.start_date.year
    window_len = event.duration + config.post_event_exclusion_days
    n_ctrl_days = event.duration + config.lag_days
    found: list[int] = []
    max_k = max(year - first_year, last_year - year)
    for k in range(1, max_k + 1):
        for off in (-k, k):
            y = year + off
            if not first_year <= y <= last_year:
                continue
            cs = same_day_in_year(event.start_date, y)
            if any(day in exposed for day in _days(cs, window_len)):
                continue
            if any(day in blocked for day in _days(cs, n_ctrl_days)):
                continue
            found.append(off)
            if len(found) == config.n_control_years:
                return found
    return found


def assemble_stratum(
    event: ExposureEvent,
    offsets: list[int],
    panel: OutcomePanel,
    config: MatchConfig,
) -> Stratum:
    """Units for the event's exposed and lag days and each control year.

    Raises
    ------
    StratumRejected
        If any needed outcome row is missing; lists every missing date.
    """
    d, L = event.duration, config.lag_days
    sid = event.event_id
    plan: list[tuple[str, Role, int | None, int | None, dt.date]] = []
    for t, day in enumerate(_days(event.start_date, d), start=1):
        plan.append((f"{sid}:x{t}", Role.EXPOSURE, t, None, day))
    for l, day in enumerate(_days(event.end_date + dt.timedelta(days=1), L), start=1):
        plan.append((f"{sid}:lag{l}", Role.LAG, None, l, day))
    for off in offsets:
        cs = same_day_in_year(event.start_date, event.start_date.year + off)
        days = _days(cs, d + L)
        tag = f"{off:+d}"
        for t in range(1, d + 1):
            plan.append((f"{sid}:c{tag}x{t}", Role.CONTROL_EXPOSURE, t, None, days[t - 1]))
        for l in range(1, L + 1):
            plan.append((f"{sid}:c{tag}lag{l}", Role.CONTROL_LAG, None, l, days[d + l - 1]))
    missing = [day for *_, day in plan if panel.get(event.area_id, day) is None]
    if missing:
        raise StratumRejected(sid, missing)
    units = []
    for uid, role, t, l, day in plan:
        rec = panel.get(event.area_id, day)
        units.append(ExposureUnit(uid, sid, d, role, t, l, rec.count, rec.person_time, rec.covariates))
    return Stratum(sid, d, tuple(units))


@dataclass
class MatchResult:
    dataset: AnalyticDataset | None
    report: list[dict] = field(default_factory=list)
    matched: list[ExposureEvent] = field(default_factory=list)


REPORT_COLUMNS = ["event_id", "area_id", "start_date", "duration", "reason"]


def match_events(events, panel: OutcomePanel, config: MatchConfig = MatchConfig()) -> MatchResult:
    """Match every event and assemble the analytic dataset.

    Excluded events (too long, unmatched, missing outcome rows) are listed
    in ``report``. Overlapping events within an area raise
    :class:`MatchInputError`.
    """
    events = sorted(events, key=lambda e: (e.area_id, e.start_date))
    cal = ExposureCalendar(events, config.post_event_exclusion_days)
    report, strata, matched = [], [], []

    def exclude(ev, reason):
        report.append(
            dict(event_id=ev.event_id, area_id=ev.area_id, start_date=ev.start_date.isoformat(),
                 duration=ev.duration, reason=reason)
        )

    if panel.first_year is None:
        raise MatchInputError("outcome panel is empty")
    for ev in events:
        if config.max_duration is not None and ev.duration > config.max_duration:
            exclude(ev, f"duration {ev.duration} exceeds max_duration {config.max_duration}")
            continue
        offsets = find_control_years(ev, cal, config, first_year=panel.first_year, last_year=panel.last_year)
        if len(offsets) < config.n_control_years:
            exclude(ev, f"unmatched: {len(offsets)} of {config.n_control_years} control years available")
            continue
        try:
            strata.append(assemble_stratum(ev, offsets, panel, config))
        except StratumRejected as exc:
            exclude(ev, str(exc))
            continue
        matched.append(ev)
    if not strata:
        return MatchResult(None, report, matched)

    cov_names = panel.covariate_names
    if config.covariate_df and cov_names:
        units = [u for s in strata for u in s.units]
        Z, cov_names = build_covariate_design(
            np.array([u.z for u in units]), config.covariate_df, panel.covariate_names
        )
        it = iter(range(len(units)))
        strata = [
            Stratum(s.stratum_id, s.d, tuple(_with_z(u, Z[next(it)]) for u in s.units)) for s in strata
        ]
    D = config.max_duration or max(s.d for s in strata)
    ds = AnalyticDataset(tuple(strata), D, config.lag_days, len(cov_names), tuple(cov_names))
    return MatchResult(ds, report, matched)


def _with_z(u: ExposureUnit, z) -> ExposureUnit:
    return ExposureUnit(u.unit_id, u.stratum_id, u.d, u.role, u.t, u.l, u.y, u.p, tuple(float(v) for v in z))


# ----------------------------------------------------------------------
def _read_rows(path: Path, required: list[str]):
    if not path.exists():
        raise MatchInputError(f"file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [(i, ln) for i, ln in enumerate(fh, start=1) if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise MatchInputError(f"{path}: empty file")
    reader = csv.reader([ln for _, ln in lines])
    header = [h.strip() for h in next(reader)]
    missing = [c for c in required if c not in header]
    if missing:
        raise MatchInputError(f"{path}:{lines[0][0]}: missing columns {missing}")
    for (lineno, _), values in zip(lines[1:], reader):
        if len(values) != len(header):
            raise MatchInputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(values)}")
        yield lineno, header, dict(zip(header, (v.strip() for v in values)))


def _parse_date(text: str, where: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise MatchInputError(f"{where}: invalid ISO date {text!r}") from None


def read_exposures_csv(path: str | Path) -> list[ExposureEvent]:
    """Columns ``area_id, start_date, duration``."""
    path = Path(path)
    out = []
    for lineno, _, rec in _read_rows(path, ["area_id", "start_date", "duration"]):
        where = f"{path}:{lineno}"
        try:
            dur = int(rec["duration"])
        except ValueError:
            raise MatchInputError(f"{where}: duration {rec['duration']!r} is not an integer") from None
        if dur < 1:
            raise MatchInputError(f"{where}: duration must be >= 1")
        out.append(ExposureEvent(rec["area_id"], _parse_date(rec["start_date"], where), dur))
    return out


def read_outcomes_csv(path: str | Path) -> OutcomePanel:
    """Columns ``area_id, date, count, person_time`` plus any covariates."""
    path = Path(path)
    rows: dict[tuple[str, dt.date], OutcomeRecord] = {}
    cov_names: list[str] | None = None
    base = ["area_id", "date", "count", "person_time"]
    for lineno, header, rec in _read_rows(path, base):
        where = f"{path}:{lineno}"
        if cov_names is None:
            cov_names = [h for h in header if h not in base]
        day = _parse_date(rec["date"], where)
        key = (rec["area_id"], day)
        if key in rows:
            raise MatchInputError(f"{where}: duplicate row for area {key[0]} on {day}")
        try:
            count = int(rec["count"])
            pt = float(rec["person_time"])
            cov = tuple(float(rec[c]) for c in cov_names)
        except ValueError as exc:
            raise MatchInputError(f"{where}: {exc}") from None
        if count < 0:
            raise MatchInputError(f"{where}: count must be non-negative")
        if not pt > 0:
            raise MatchInputError(f"{where}: person_time must be positive")
        rows[key] = OutcomeRecord(count, pt, cov)
    return OutcomePanel(rows, cov_names or ())


def write_match_report(report: list[dict], path: str | Path, *, header: str | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header:
            fh.write(header.rstrip("\n") + "\n")
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        w.writeheader()
        w.writerows(report)
