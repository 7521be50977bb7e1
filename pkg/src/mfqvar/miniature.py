"""Bundled miniature dataset: 8 monthly series and quarterly GDP, 2010-2019.

The values are synthetic, driven by one AR(1) business-cycle factor. The
release calendar is stylized so that early-month as-of dates cycle through
all three nowcast classes:

* ``nfci``, ``tspread`` and ``umcsent`` publish on the last day of the month,
* ``pmi`` on the first day of the next month,
* ``indpro``, ``payems``, ``retail`` and ``houst`` on the 15th of the next month,
* ``gdp`` on the first day of the month after the quarter, revised three
  months later.

With these rules the as-of dates 2019-10-05, 2019-11-05 and 2019-12-05 give
the Forecast, Nowcast T+1 and Nowcast T+2 classes.
"""

import calendar
import datetime as dt
from importlib import resources
from pathlib import Path

import numpy as np

from .data import write_vintage_csv

SEED = 20191231
START_YEAR, N_YEARS = 2010, 10

# id, frequency, transformation, release rule, base level, factor loading, noise sd
SERIES = [
    ("indpro", "monthly", "logdiff100", "mid_next", 100.0, 0.35, 0.30),
    ("payems", "monthly", "logdiff100", "mid_next", 130000.0, 0.10, 0.05),
    ("retail", "monthly", "logdiff100", "mid_next", 400000.0, 0.40, 0.50),
    ("houst", "monthly", "logdiff100", "mid_next", 1200.0, 1.50, 3.00),
    ("pmi", "monthly", "scale01", "first_next", 52.0, 3.00, 1.00),
    ("umcsent", "monthly", "scale01", "month_end", 90.0, 4.00, 2.00),
    ("nfci", "monthly", "level", "month_end", -0.4, -0.25, 0.08),
    ("tspread", "monthly", "level", "month_end", 1.5, 0.30, 0.15),
    ("gdp", "quarterly", "logdiff400", "quarter_first", 17000.0, 0.0, 0.0),
]


def _month_end(year, month):
    return dt.date(year, month, calendar.monthrange(year, month)[1])


def _next_month(year, month, day):
    year, month = (year + 1, 1) if month == 12 else (year, month + 1)
    return dt.date(year, month, day)


def _add_months(date, k):
    m = date.year * 12 + date.month - 1 + k
    return dt.date(m // 12, m % 12 + 1, date.day)


def generate_rows(seed=SEED):
    """Rows ``(series_id, date, value, vintage_date)`` of the miniature vintage file."""
    rng = np.random.default_rng(seed)
    n_months = 12 * N_YEARS
    factor = np.zeros(n_months)
    for t in range(1, n_months):
        factor[t] = 0.8 * factor[t - 1] + 0.6 * rng.standard_normal()
    months = [(START_YEAR + t // 12, t % 12 + 1) for t in range(n_months)]
    monthly_gdp = 0.7 + 0.35 * factor + 0.25 * rng.standard_normal(n_months)

    rows = []
    for sid, freq, kind, rule, base, load, sd in SERIES:
        if freq == "monthly":
            shock = load * factor + sd * rng.standard_normal(n_months)
            if kind == "logdiff100":
                values = base * np.exp(np.cumsum(0.1 + shock) / 100.0)
            else:
                values = base + shock
            for (y, m), v in zip(months, values):
                date = dt.date(y, m, 1)
                if rule == "month_end":
                    vintage = _month_end(y, m)
                elif rule == "first_next":
                    vintage = _next_month(y, m, 1)
                else:
                    vintage = _next_month(y, m, 15)
                rows.append((sid, date, round(float(v), 4), vintage))
        else:
            weights = np.array([1, 2, 3, 2, 1]) / 3.0
            level = base
            for qi in range(n_months // 3):
                t = 3 * qi + 2
                if t >= 4:
                    growth = weights @ monthly_gdp[t - 4: t + 1]
                else:
                    growth = 3 * monthly_gdp[t]
                level = level * np.exp(growth / 400.0)
                y, m = months[t]
                date = dt.date(y, m, 1)
                first = _next_month(y, m, 1)
                rows.append((sid, date, round(float(level * (1 - 2e-4)), 2), first))
                rows.append((sid, date, round(float(level), 2), _add_months(first, 3)))
    rows.sort(key=lambda r: (r[0], r[1], r[3]))
    return rows


CONFIG_TEXT = """\
version: 1
target: gdp
quarter_anchor: third
series:
{series}
model:
  p: 2
  tau: [0.1, 0.5, 0.9]
prior:
  beta_var: 100.0
  sigma_scale: 1.0
sampler:
  draws: 300
  burn_in: 200
  thin: 1
  chains: 2
  seed: 20240101
  slice_width: 0.5
  sigma_sweeps: 1
  store_w: false
report:
  credible_mass: 0.68
  forecast_paths: 200
counterfactual:
  series: nfci
  window: 3
  shock_size: 1.0
"""


def config_text():
    lines = [f"  - {{id: {sid}, frequency: {freq}, transformation: {kind}}}"
             for sid, freq, kind, *_ in SERIES]
    return CONFIG_TEXT.format(series="\n".join(lines))


def write_miniature(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_vintage_csv(out / "miniature.csv", generate_rows())
    (out / "miniature.yaml").write_text(config_text(), encoding="utf-8")
    return out / "miniature.csv", out / "miniature.yaml"


def bundled_paths():
    """Paths of the packaged miniature data and configuration files."""
    root = resources.files("mfqvar") / "data"
    return Path(str(root / "miniature.csv")), Path(str(root / "miniature.yaml"))


if __name__ == "__main__":
    write_miniature(Path(__file__).parent / "data")
