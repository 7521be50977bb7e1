import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfqvar.config import load_config, parse_config
from mfqvar.data import (
    NowcastClass,
    RawSeries,
    SeriesSpec,
    assemble_panel,
    classify_nowcast,
    load_vintage,
    panel_from_arrays,
    target_months,
    transform,
    validate_vintage,
    write_vintage_csv,
)
from mfqvar.errors import CalendarError, DataError, SettingsError, SpecError, TransformationError
from mfqvar.miniature import bundled_paths, config_text, generate_rows

D = dt.date

SPECS = [
    SeriesSpec("ip", "monthly", "level"),
    SeriesSpec("fci", "monthly", "level"),
    SeriesSpec("gdp", "quarterly", "level"),
]


def write(tmp_path, rows, name="v.csv"):
    path = tmp_path / name
    write_vintage_csv(path, rows)
    return path


def fixture_rows():
    rows = []
    for m in range(1, 13):
        rows.append(("ip", D(2020, m, 1), float(m), D(2020, m, 20) if m < 12 else D(2021, 1, 20)))
        rows.append(("fci", D(2020, m, 1), 10.0 + m, D(2020, m, 28)))
    for m, v in ((3, 1.5), (6, 2.5), (9, 3.5), (12, 4.5)):
        rows.append(("gdp", D(2020, m, 1), v, D(2020, m, 28) if m < 12 else D(2021, 1, 2)))
    return rows


def test_fixture_values_parse_exactly(tmp_path):
    rows = fixture_rows()
    series = load_vintage(write(tmp_path, rows), SPECS)
    for sid in ("ip", "fci", "gdp"):
        expected = sorted((d, v) for s, d, v, _ in rows if s == sid)
        assert series[sid].dates == [d for d, _ in expected]
        assert series[sid].values.tolist() == [v for _, v in expected]


def test_latest_vintage_not_after_as_of_wins(tmp_path):
    rows = [("ip", D(2020, 1, 1), 1.0, D(2020, 2, 1)), ("ip", D(2020, 1, 1), 2.0, D(2020, 3, 1)),
            ("ip", D(2020, 1, 1), 3.0, D(2020, 5, 1))]
    path = write(tmp_path, rows)
    specs = [SeriesSpec("ip")]
    assert load_vintage(path, specs, D(2020, 4, 1))["ip"].values.tolist() == [2.0]
    assert load_vintage(path, specs, D(2020, 3, 1))["ip"].values.tolist() == [2.0]
    assert load_vintage(path, specs)["ip"].values.tolist() == [3.0]
    assert load_vintage(path, specs, D(2020, 1, 15))["ip"].values.tolist() == []


def test_load_errors(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("series_id,date,value,vintage_date\n")
    with pytest.raises(DataError):
        load_vintage(empty, SPECS)
    dup = write(tmp_path, [("ip", D(2020, 1, 1), 1.0, D(2020, 2, 1))] * 2, "dup.csv")
    with pytest.raises(DataError, match="duplicate"):
        load_vintage(dup, SPECS)
    unknown = write(tmp_path, [("xx", D(2020, 1, 1), 1.0, D(2020, 2, 1))], "unknown.csv")
    with pytest.raises(DataError, match="unknown series"):
        load_vintage(unknown, SPECS)
    bad = tmp_path / "bad.csv"
    bad.write_text("series_id,date,value,vintage_date\nip,2020-13-01,1.0,2020-02-01\n")
    with pytest.raises(DataError, match="unparseable"):
        load_vintage(bad, SPECS)
    header = tmp_path / "header.csv"
    header.write_text("series_id,date,value\nip,2020-01-01,1.0\n")
    with pytest.raises(DataError, match="vintage_date"):
        load_vintage(header, SPECS)


def raw(values, start=(2020, 1), freq="monthly"):
    step = 3 if freq == "quarterly" else 1
    m0 = start[0] * 12 + start[1] - 1
    dates = [D((m0 + step * k) // 12, (m0 + step * k) % 12 + 1, 1) for k in range(len(values))]
    return RawSeries("x", dates, np.asarray(values, dtype=float))


def test_transform_examples():
    out = transform(raw([100.0, 101.0], freq="quarterly"), SeriesSpec("x", "quarterly", "logdiff400"))
    assert out.values[0] == pytest.approx(3.9801, abs=1e-4)
    assert out.values[0] == pytest.approx(400 * np.log(1.01), rel=1e-14)
    assert len(out.dates) == 1 and out.dates[0] == D(2020, 4, 1)
    flat = transform(raw([5.0] * 6), SeriesSpec("x", "monthly", "logdiff100"))
    assert np.array_equal(flat.values, np.zeros(5))
    assert transform(raw([40.0]), SeriesSpec("x", "monthly", "scale01")).values[0] == pytest.approx(4.0)
    lvl = raw([1.0, -2.0])
    assert np.array_equal(transform(lvl, SeriesSpec("x")).values, lvl.values)


def test_transform_domain_error_names_date():
    with pytest.raises(TransformationError, match="2020-02-01"):
        transform(raw([1.0, 0.0, 2.0]), SeriesSpec("x", "monthly", "logdiff100"))


def test_transform_skips_holes():
    series = RawSeries("x", [D(2020, 1, 1), D(2020, 2, 1), D(2020, 4, 1), D(2020, 5, 1)],
                       np.array([1.0, 2.0, 4.0, 8.0]))
    out = transform(series, SeriesSpec("x", "monthly", "logdiff100"))
    assert out.dates == [D(2020, 2, 1), D(2020, 5, 1)]
    assert np.allclose(out.values, 100 * np.log(2.0))


def test_series_spec_closed_sets():
    with pytest.raises(SpecError):
        SeriesSpec("x", "weekly", "level")
    with pytest.raises(SpecError):
        SeriesSpec("x", "monthly", "log")
    with pytest.raises(SpecError):
        SeriesSpec("x", "quarterly", "logdiff100")


def test_panel_ragged_edge_matches_hand_mask(tmp_path):
    path = write(tmp_path, fixture_rows())
    panel = assemble_panel(load_vintage(path, SPECS, D(2020, 12, 29)), SPECS, "gdp")
    # fci (month-end releases) reaches December; ip (20th) stops in November
    assert panel.month_label(0) == "2020-01"
    assert panel.month_label(panel.origin) == "2020-12"
    expected = np.zeros((12, 3), dtype=bool)
    expected[:, 2] = True
    expected[11, 0] = True
    assert np.array_equal(panel.missing_mask, expected)
    assert panel.calendar == {"ip": 10, "fci": 11, "gdp": 8}
    assert [(c, t) for c, t, _ in panel.quarterly_obs] == [(2, 2), (2, 5), (2, 8)]
    with pytest.raises(CalendarError):
        classify_nowcast(panel)  # September is three months behind December
    oct_panel = assemble_panel(load_vintage(path, SPECS, D(2020, 10, 29)), SPECS, "gdp")
    assert oct_panel.month_label(oct_panel.origin) == "2020-10"
    assert classify_nowcast(oct_panel) == NowcastClass("NowcastT1", 1)
    # Q4 released after the year end lands on the December cell
    late = assemble_panel(load_vintage(path, SPECS, D(2021, 2, 1)), SPECS, "gdp")
    assert (2, 11, 4.5) in late.quarterly_obs
    assert classify_nowcast(late).label == "Forecast"


def test_panel_round_trip_reproduces_observations(tmp_path):
    rows = fixture_rows()
    path = write(tmp_path, rows)
    panel = assemble_panel(load_vintage(path, SPECS), SPECS, "gdp")
    for col, sid in enumerate(panel.ids[:2]):
        values = [v for s, _, v, _ in sorted(r for r in rows if r[0] == sid)]
        assert panel.grid[:, col].tolist() == values
    assert [v for _, _, v in panel.quarterly_obs] == [1.5, 2.5, 3.5, 4.5]


def test_panel_errors(tmp_path):
    rows = fixture_rows()
    path = write(tmp_path, rows)
    series = load_vintage(path, SPECS)
    with pytest.raises(DataError):
        assemble_panel(series, SPECS[:2], "ip")
    misaligned = [r if r[0] != "gdp" else (r[0], D(r[1].year, r[1].month - 1, 1), r[2], r[3]) for r in rows]
    with pytest.raises(CalendarError):
        assemble_panel(load_vintage(write(tmp_path, misaligned, "m.csv"), SPECS), SPECS, "gdp")
    empty = {**series, "fci": RawSeries("fci", [], np.array([]))}
    with pytest.raises(DataError, match="zero observations"):
        assemble_panel(empty, SPECS, "gdp")


def test_quarter_anchor_first(tmp_path):
    rows = [r if r[0] != "gdp" else (r[0], D(r[1].year, r[1].month - 2, 1), r[2], r[3]) for r in fixture_rows()]
    path = write(tmp_path, rows)
    panel = assemble_panel(load_vintage(path, SPECS), SPECS, "gdp", quarter_anchor="first")
    assert all(t % 3 == 2 for _, t, _ in panel.quarterly_obs)


@settings(max_examples=30, deadline=None)
@given(lags=st.lists(st.integers(0, 4), min_size=3, max_size=3), seed=st.integers(0, 10_000))
def test_edge_missingness_is_monotone(lags, seed):
    g = np.random.default_rng(seed)
    grid = g.normal(size=(24, 4))
    grid[:, 3] = np.nan
    for col, k in enumerate(lags):
        if k:
            grid[-k:, col] = np.nan
    grid[-1, 0] = 0.0  # keep the frontier at the last month
    panel = panel_from_arrays(grid, [(3, t, 1.0) for t in range(5, 24, 3)])
    for col in range(3):
        last = panel.calendar[panel.ids[col]]
        assert np.all(panel.missing_mask[last + 1: panel.origin + 1, col])
    assert all(t % 3 == 2 for _, t, _ in panel.quarterly_obs)


@pytest.mark.parametrize("delay,label", [(0, "Forecast"), (1, "NowcastT1"), (2, "NowcastT2")])
def test_classify_by_delay(delay, label):
    big_t = 21 + delay
    grid = np.zeros((big_t, 2))
    grid[:, 1] = np.nan
    panel = panel_from_arrays(grid, [(1, t, 1.0) for t in range(5, 21, 3)])
    cls = classify_nowcast(panel)
    assert cls == NowcastClass(label, delay)
    origin = big_t - 1
    expected = [origin + 1, origin + 2, origin + 3] if delay == 0 else list(range(21, origin + 1))
    assert target_months(panel, cls) == expected


def test_classify_too_late():
    grid = np.zeros((27, 2))
    grid[:, 1] = np.nan
    panel = panel_from_arrays(grid, [(1, 5, 1.0), (1, 8, 1.0)])
    with pytest.raises(CalendarError):
        classify_nowcast(panel)
    with pytest.raises(CalendarError):
        NowcastClass("Forecast", 1)


def test_miniature_is_reproducible_and_valid():
    data, config = bundled_paths()
    settings_ = load_config(config)
    assert config.read_text() == config_text()
    rows = generate_rows()
    parsed = load_vintage(data, settings_.series)
    latest = {}
    for sid, date, value, vintage in rows:
        if (sid, date) not in latest or vintage > latest[(sid, date)][1]:
            latest[(sid, date)] = (value, vintage)
    for sid, series in parsed.items():
        assert series.values.tolist() == [latest[(sid, d)][0] for d in series.dates]
    assert validate_vintage(data, settings_.series, settings_.target) == []
    assert len([s for s in settings_.series if s.frequency == "monthly"]) == 8
    for as_of, label in ((D(2019, 10, 5), "Forecast"), (D(2019, 11, 5), "NowcastT1"),
                         (D(2019, 12, 5), "NowcastT2")):
        panel = assemble_panel(load_vintage(data, settings_.series, as_of), settings_.series, "gdp")
        assert classify_nowcast(panel).label == label


def test_validate_reports_domain_issue(tmp_path):
    specs = [SeriesSpec("ip", "monthly", "logdiff100"), SeriesSpec("gdp", "quarterly", "level")]
    rows = [("ip", D(2020, m, 1), 1.0 + m, D(2020, m, 28)) for m in range(1, 13)]
    rows[4] = ("ip", D(2020, 5, 1), -3.0, D(2020, 5, 28))
    rows += [("gdp", D(2020, m, 1), 1.0, D(2020, m, 28)) for m in (3, 6, 9, 12)]
    issues = validate_vintage(write(tmp_path, rows), specs, "gdp")
    assert len(issues) == 1
    assert issues[0]["kind"] == "domain" and issues[0]["series"] == "ip"
    assert issues[0]["date"] == "2020-05-01"


def test_validate_reports_schema_issue(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("series_id,date,value\nip,2020-01-01,1.0\n")
    issues = validate_vintage(bad, SPECS, "gdp")
    assert issues and issues[0]["kind"] == "schema"


BASE_CONFIG = {
    "version": 1,
    "target": "gdp",
    "series": [{"id": "ip"}, {"id": "gdp", "frequency": "quarterly", "transformation": "logdiff400"}],
}


def test_config_defaults_and_digest():
    s = parse_config(dict(BASE_CONFIG))
    assert s.p == 2 and s.taus == (0.1, 0.5, 0.9)
    assert s.tau_vector(0.1) == [0.1, 0.1]
    assert s.prior.beta_var == 100.0
    assert s.digest() == parse_config(dict(BASE_CONFIG)).digest()
    o = s.with_overrides(seed=7, taus=[0.25], draws=10)
    assert o.sampler.seed == 7 and o.taus == (0.25,) and o.sampler.draws == 10
    assert o.digest() != s.digest()


@pytest.mark.parametrize("patch", [
    {"sampler": {"draws": 0}},
    {"sampler": {"bogus": 1}},
    {"model": {"p": 0}},
    {"model": {"tau": [1.5]}},
    {"version": 2},
    {"extra": 1},
    {"quarter_anchor": "last"},
    {"report": {"forecast_paths": 0}},
    {"counterfactual": {"size": 1.0}},
])
def test_config_rejects(patch):
    with pytest.raises(SettingsError):
        parse_config({**BASE_CONFIG, **patch})


def test_config_spec_errors():
    with pytest.raises(SpecError):
        parse_config({**BASE_CONFIG, "target": "nope"})
    with pytest.raises(SpecError):
        parse_config({**BASE_CONFIG, "series": BASE_CONFIG["series"] + [{"id": "ip"}]})
    with pytest.raises(SpecError):
        parse_config({**BASE_CONFIG, "counterfactual": {"series": "nfci"}})
    cf = parse_config({**BASE_CONFIG, "counterfactual": {"series": "ip", "window": 2}}).counterfactual
    assert (cf.series, cf.window, cf.shock_size) == ("ip", 2, 1.0)
