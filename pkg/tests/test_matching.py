import datetime as dt

import pytest

from edvcm.data import Role
from edvcm.matching import (
    ExposureCalendar,
    ExposureEvent,
    MatchConfig,
    MatchInputError,
    OutcomePanel,
    StratumRejected,
    assemble_stratum,
    find_control_years,
    match_events,
    read_exposures_csv,
    read_outcomes_csv,
    same_day_in_year,
)

D = dt.date


def full_panel(area="A", years=range(2004, 2013), cov=False):
    rows = []
    for y in years:
        day = D(y, 1, 1)
        while day.year == y:
            c = (day.toordinal() % 7,)
            rows.append((area, day, day.toordinal() % 5, 1.0, (float(day.toordinal() % 13), float(day.month)) if cov else ()))
            day += dt.timedelta(days=1)
    names = ("temp", "month") if cov else ()
    return OutcomePanel.from_records(rows, names)


def controls(events, ev, cfg=MatchConfig(), first=2004, last=2012):
    cal = ExposureCalendar(events, cfg.post_event_exclusion_days)
    return find_control_years(ev, cal, cfg, first_year=first, last_year=last)


def test_nearest_clean_years():
    ev = ExposureEvent("A", D(2008, 6, 10), 3)
    assert controls([ev], ev) == [-1, 1]


def test_contaminated_year_skipped():
    ev = ExposureEvent("A", D(2008, 6, 10), 3)
    other = ExposureEvent("A", D(2007, 6, 20), 2)  # inside the 2007 window of 3 + 28 days
    assert controls([ev, other], ev) == [1, -2]


def test_other_area_does_not_contaminate():
    ev = ExposureEvent("A", D(2008, 6, 10), 3)
    other = ExposureEvent("B", D(2007, 6, 10), 3)
    assert controls([ev, other], ev) == [-1, 1]


def test_unmatched_when_every_year_exposed():
    ev = ExposureEvent("A", D(2008, 6, 10), 1)
    others = [ExposureEvent("A", D(y, 6, 10), 1) for y in range(2004, 2013) if y != 2008]
    assert controls([ev, *others], ev) == []
    res = match_events([ev, *others], full_panel())
    assert any("unmatched" in r["reason"] for r in res.report)


def test_control_dates_avoid_exclusion_windows():
    # the 2009 window is clean of exposure but its control dates fall in the
    # exclusion period of an event earlier in 2009
    ev = ExposureEvent("A", D(2008, 6, 10), 3)
    earlier = ExposureEvent("A", D(2009, 6, 1), 2)
    got = controls([ev, earlier], ev)
    assert 1 not in got and got == [-1, -2]


def test_stratum_sizes():
    panel = full_panel()
    ev = ExposureEvent("A", D(2008, 6, 10), 3)
    s = assemble_stratum(ev, [-1, 1], panel, MatchConfig())
    assert len(s.units) == 9
    ev2 = ExposureEvent("A", D(2008, 6, 10), 2)
    s2 = assemble_stratum(ev2, [-1, 1], panel, MatchConfig(lag_days=5))
    assert len(s2.units) == 21


def test_control_units_unexposed():
    s = assemble_stratum(ExposureEvent("A", D(2008, 6, 10), 2), [-1, 1], full_panel(), MatchConfig(lag_days=2))
    for u in s.units:
        if u.role in (Role.CONTROL_EXPOSURE, Role.CONTROL_LAG):
            assert u.A == 0 and u.lag_indicator == 0
    assert sum(u.role is Role.LAG for u in s.units) == 2


def test_control_day_indices_align():
    s = assemble_stratum(ExposureEvent("A", D(2008, 6, 10), 3), [-1, 1], full_panel(), MatchConfig())
    ctrl = [u.t for u in s.units if u.role is Role.CONTROL_EXPOSURE]
    assert ctrl == [1, 2, 3, 1, 2, 3]


def test_leap_day_maps_to_feb_28():
    assert same_day_in_year(D(2008, 2, 29), 2009) == D(2009, 2, 28)
    assert same_day_in_year(D(2008, 2, 29), 2012) == D(2012, 2, 29)
    s = assemble_stratum(ExposureEvent("A", D(2008, 2, 29), 1), [-1, 1], full_panel(), MatchConfig())
    assert {u.unit_id for u in s.units} >= {"A_2008-02-29:c-1x1", "A_2008-02-29:c+1x1"}


def test_overlapping_events_rejected():
    evs = [ExposureEvent("A", D(2008, 6, 10), 3), ExposureEvent("A", D(2008, 6, 12), 2)]
    with pytest.raises(MatchInputError, match="overlapping"):
        match_events(evs, full_panel())


def test_missing_outcome_row_rejects_stratum():
    ev = ExposureEvent("A", D(2008, 6, 10), 2)
    panel = full_panel(years=[2007, 2008])  # no 2009 rows
    with pytest.raises(StratumRejected) as exc:
        assemble_stratum(ev, [-1, 1], panel, MatchConfig())
    assert exc.value.missing == [D(2009, 6, 10), D(2009, 6, 11)]
    assert "2009-06-10" in str(exc.value)


def test_max_duration_filter_and_full_match_invariant():
    evs = [ExposureEvent("A", D(2008, 6, 10), 3), ExposureEvent("A", D(2006, 9, 1), 12)]
    cfg = MatchConfig(max_duration=10, lag_days=1)
    res = match_events(evs, full_panel(), cfg)
    assert [r["event_id"] for r in res.report] == ["A_2006-09-01"]
    assert res.dataset.D == 10 and res.dataset.L_max == 1
    for s in res.dataset.strata:
        assert len(s.units) == (1 + cfg.n_control_years) * (s.d + cfg.lag_days)


def test_spline_expansion_of_covariates():
    evs = [ExposureEvent("A", D(2008, m, 3), 2) for m in (3, 6, 9)]
    res = match_events(evs, full_panel(cov=True), MatchConfig(covariate_df=3))
    assert res.dataset.covariate_dim == 6
    assert res.dataset.covariate_names[:3] == ("temp(1)", "temp(2)", "temp(3)")


def test_matching_deterministic():
    evs = [ExposureEvent("A", D(2008, 6, 10), 3), ExposureEvent("A", D(2010, 3, 1), 2)]
    assert match_events(evs, full_panel()).dataset == match_events(list(reversed(evs)), full_panel()).dataset


def test_unknown_config_key():
    with pytest.raises(MatchInputError, match="unknown config keys: colour"):
        MatchConfig.from_dict({"colour": 1})
    with pytest.raises(MatchInputError):
        MatchConfig(lag_days=-1)


def test_csv_readers_report_line_numbers(tmp_path):
    p = tmp_path / "exp.csv"
    p.write_text("area_id,start_date,duration\nA,2008-06-10,3\nA,not-a-date,2\n")
    with pytest.raises(MatchInputError, match=":3"):
        read_exposures_csv(p)
    q = tmp_path / "out.csv"
    q.write_text("area_id,date,count,person_time,temp\nA,2008-06-10,3,1.0,20.5\nA,2008-06-11,x,1.0,20\n")
    with pytest.raises(MatchInputError, match=":3"):
        read_outcomes_csv(q)
    q.write_text("area_id,date,count,person_time,temp\nA,2008-06-10,3,1.0,20.5\n")
    panel = read_outcomes_csv(q)
    assert panel.covariate_names == ("temp",) and panel.get("A", D(2008, 6, 10)).count == 3
