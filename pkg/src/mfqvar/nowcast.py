"""Quantile nowcasts, report tables, counterfactuals and synthetic data.

The reported quantity for a target month is the model's conditional
quantile location ``b0 + sum_j B_j y_{t-j}`` of the target series, evaluated
per posterior draw with the lags taken from that draw's completed data. For
months past the grid (the Forecast class) two variants are produced: a Monte
Carlo quantile of simulated MAL paths (``value``) and the iterated one-step
location (``iterated``).
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import linalg

from .chain import PosteriorChain
from .data import (
    MixedFrequencyPanel,
    NowcastClass,
    classify_nowcast,
    panel_digest,
    panel_from_arrays,
    target_months,
)
from .errors import DataError, SpecError, StabilityError
from .gibbs import initial_fill
from .model import QvarParams, make_quantile_config, regressors, scale_matrix, skew_shift
from .state_space import MM_WEIGHTS

TABLE_CLASSES = ("Forecast", "NowcastT1", "NowcastT2")
TABLE_HEADERS = {"Forecast": "Forecast", "NowcastT1": "Nowcast T+1", "NowcastT2": "Nowcast T+2"}


def summarize(values, mass=0.68):
    """Mean, sd and central credible bounds of per-draw values (last axis = draws)."""
    values = np.asarray(values, dtype=float)
    mean = values.mean(axis=-1)
    first = values[..., 0]
    # keep degenerate samples exact; a float mean can drift in the last bit
    mean = np.where(np.all(values == first[..., None], axis=-1), first, mean)
    sd = values.std(axis=-1, ddof=1) if values.shape[-1] > 1 else np.zeros_like(mean)
    lo, hi = np.quantile(values, [(1 - mass) / 2, (1 + mass) / 2], axis=-1)
    # a strongly skewed sample can put its mean outside the central band
    return mean, sd, np.minimum(lo, mean), np.maximum(hi, mean)


@dataclass
class NowcastResult:
    origin: int
    origin_label: str
    target_months: list
    target_labels: list
    cls: NowcastClass
    tau: list
    mass: float
    draws: np.ndarray
    kinds: list
    iterated: Optional[np.ndarray] = None
    latent: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.draws = np.atleast_2d(np.asarray(self.draws, dtype=float))
        if self.draws.shape[1] != len(self.target_months):
            raise DataError("one column of draws per target month is required")

    def summaries(self, which="value"):
        values = {"value": self.draws, "iterated": self.iterated, "latent": self.latent}[which]
        if values is None:
            return []
        mean, sd, lo, hi = summarize(values.T, self.mass)
        return [
            {"month": int(m), "label": lab, "kind": k, "mean": float(a), "sd": float(b),
             "lower": float(c), "upper": float(d)}
            for m, lab, k, a, b, c, d in zip(self.target_months, self.target_labels, self.kinds,
                                             mean, sd, lo, hi)
        ]

    @property
    def headline(self) -> float:
        """Posterior mean at the last target month."""
        return float(self.draws[:, -1].mean())

    def to_rows(self):
        rows = []
        extra = {w: self.summaries(w) for w in ("iterated", "latent")}
        for k, s in enumerate(self.summaries()):
            row = {"origin": self.origin_label, "class": self.cls.label,
                   "tau": float(self.tau[0]) if len(set(self.tau)) == 1 else ";".join(map(str, self.tau)),
                   **{key: s[key] for key in ("label", "kind", "mean", "sd", "lower", "upper")}}
            for w, lst in extra.items():
                if lst:
                    row.update({f"{w}_{key}": lst[k][key] for key in ("mean", "sd", "lower", "upper")})
            rows.append(row)
        return rows

    def to_dict(self):
        return {
            "origin": self.origin_label,
            "origin_index": self.origin,
            "class": self.cls.label,
            "gdp_delay_months": self.cls.gdp_delay_months,
            "tau": [float(t) for t in self.tau],
            "credible_mass": self.mass,
            "targets": self.summaries(),
            "iterated_location": self.summaries("iterated"),
            "latent_value": self.summaries("latent"),
            "metadata": self.metadata,
        }


def completed_data(chains, panel: MixedFrequencyPanel):
    """Per-draw completed panels, shape ``(draws, T, n)``, pooling chains in order."""
    chains = [chains] if isinstance(chains, PosteriorChain) else list(chains)
    p = int(chains[0].metadata["p"])
    digest = chains[0].metadata.get("data_digest")
    if digest is not None and digest != panel_digest(panel):
        raise DataError("chain was fitted on a different panel")
    base = initial_fill(panel, p)
    out = []
    for ch in chains:
        cells = np.asarray(ch.metadata.get("yu_cells", []), dtype=int).reshape(-1, 2)
        y = np.broadcast_to(base, (ch.n_draws,) + base.shape).copy()
        if cells.size:
            if ch.yu_draws is None:
                raise DataError("chain does not store the missing-data draws")
            y[:, cells[:, 0], cells[:, 1]] = ch.yu_draws
        out.append(y)
    return np.concatenate(out), np.concatenate([c.beta_draws for c in chains]), \
        np.concatenate([c.sigma_draws for c in chains]), p


def quantile_locations(chains, panel: MixedFrequencyPanel, column=None):
    """Per-draw locations of ``column`` at ``t = p..T-1``; shape ``(draws, T - p)``."""
    y, beta, _, p = completed_data(chains, panel)
    column = panel.target_column if column is None else column
    n = panel.n
    k = 1 + n * p
    coef_rows = beta.reshape(beta.shape[0], k, n)[:, :, column]
    z = np.stack([regressors(yd, p) for yd in y])
    return np.einsum("dtk,dk->dt", z, coef_rows)


def _simulate_forecast(y_hist, beta, sigma, q, column, horizon, n_paths, rng):
    """MC tau-quantile per step and the iterated location for one posterior draw."""
    n = sigma.shape[0]
    p = y_hist.shape[0]
    coef = beta.reshape(1 + n * p, n).T
    b0, lags = coef[:, 0], [coef[:, 1 + j * n: 1 + (j + 1) * n] for j in range(p)]
    shift = skew_shift(sigma, q)
    chol = linalg.cholesky(scale_matrix(sigma, q), lower=True)
    paths = np.broadcast_to(y_hist, (n_paths, p, n)).copy()
    iterated = list(y_hist)
    mc, it = [], []
    for h in range(horizon):
        mean = b0 + sum(paths[:, p - 1 - j] @ lags[j].T for j in range(p))
        w = rng.standard_exponential(n_paths)
        z = rng.standard_normal((n_paths, n))
        draw = mean + w[:, None] * shift + np.sqrt(w)[:, None] * (z @ chol.T)
        loc = b0 + sum(lags[j] @ iterated[-1 - j] for j in range(p))
        it.append(loc[column])
        iterated.append(loc)
        mc.append(loc[column] if h == 0 else np.quantile(draw[:, column], q.tau[column]))
        paths = np.concatenate([paths[:, 1:], draw[:, None, :]], axis=1)
    return mc, it


def nowcast(chains, panel: MixedFrequencyPanel, cls: Optional[NowcastClass] = None,
            mass: float = 0.68, n_paths: int = 200, seed: int = 0,
            months=None) -> NowcastResult:
    """Posterior summaries of the target's quantile location at the class's target months.

    ``months`` replaces the class's target months by explicit in-sample
    months ``p <= t <= origin`` (used for the plot-data history).
    """
    chains = [chains] if isinstance(chains, PosteriorChain) else list(chains)
    detected = classify_nowcast(panel)
    if cls is None:
        cls = detected
    elif cls != detected:
        raise SpecError(f"requested class {cls.label} but the panel is {detected.label}")
    if not 0 < mass < 1:
        raise SpecError("credible mass must be in (0, 1)")
    tau = chains[0].metadata["tau"]
    q = make_quantile_config(tau)
    y, beta, sigma, p = completed_data(chains, panel)
    col = panel.target_column
    if months is None:
        months = target_months(panel, cls)
    else:
        months = [int(m) for m in months]
        if not months or min(months) < p or max(months) > panel.origin:
            raise SpecError(f"explicit months must lie in [{p}, {panel.origin}]")
    labels = [panel.month_label(m) for m in months]
    n_draws = beta.shape[0]
    meta = {"data_digest": panel_digest(panel), "seeds": [c.metadata.get("seed") for c in chains],
            "draws": n_draws, "forecast_seed": int(seed)}

    if months[0] > panel.origin:
        rng = np.random.default_rng(seed)
        value = np.empty((n_draws, 3))
        iterated = np.empty((n_draws, 3))
        for d in range(n_draws):
            mc, it = _simulate_forecast(y[d, -p:], beta[d], sigma[d], q, col, 3, n_paths, rng)
            value[d], iterated[d] = mc, it
        meta["forecast_paths_per_draw"] = n_paths
        return NowcastResult(panel.origin, panel.month_label(panel.origin), months, labels, cls,
                             list(tau), mass, value, ["forecast"] * 3, iterated=iterated, metadata=meta)

    locs = quantile_locations(chains, panel, col)
    value = np.empty((n_draws, len(months)))
    latent = np.empty_like(value)
    kinds = []
    observed = ~np.isnan(panel.grid[:, col])
    for k, m in enumerate(months):
        latent[:, k] = y[:, m, col]
        if observed[m]:
            value[:, k] = panel.grid[m, col]
            kinds.append("observed")
        else:
            value[:, k] = locs[:, m - p]
            kinds.append("latent")
    return NowcastResult(panel.origin, panel.month_label(panel.origin), months, labels, cls,
                         list(tau), mass, value, kinds, latent=latent, metadata=meta)


# ---------------------------------------------------------------------------
# report tables


def _record(item):
    if isinstance(item, NowcastResult):
        tau = item.tau[0] if len(set(item.tau)) == 1 else tuple(item.tau)
        return item.origin, tau, item.cls.label, item.headline
    origin, tau, label, value = item
    return int(origin), tau, label, float(value)


def rolling_report(results, window: int = 3):
    """First differences of per-origin posterior-mean nowcasts and their trailing average.

    Origins are grouped by tau; within a group they must be consecutive
    months. Each row carries the class in force at that origin.
    """
    groups = {}
    for item in results:
        origin, tau, label, value = _record(item)
        groups.setdefault(tau, []).append((origin, label, value))
    rows = []
    for tau in sorted(groups, key=lambda t: (np.atleast_1d(t)[0], str(t))):
        seq = sorted(groups[tau])
        origins = [o for o, _, _ in seq]
        if len(seq) < window + 1:
            raise DataError(f"tau {tau}: rolling report needs at least {window + 1} origins")
        gaps = [b for a, b in zip(origins, origins[1:]) if b - a != 1]
        if gaps:
            raise DataError(f"tau {tau}: origin sequence has a gap before month {gaps[0]}")
        values = np.array([v for _, _, v in seq])
        change = np.concatenate([[np.nan], np.diff(values)])
        rolling = np.full(values.size, np.nan)
        for i in range(window, values.size):
            rolling[i] = change[i - window + 1: i + 1].mean()
        for (origin, label, value), c, r in zip(seq, change, rolling):
            rows.append({"origin": origin, "tau": tau, "class": label, "nowcast": float(value),
                         "change": float(c), "rolling_change": float(r)})
    return rows


def percentile_spread(low, mid, high):
    """Rows ``(origin, q10, q50, q90, q90 - q10)`` from three matched result sequences.

    The difference is taken before any rounding for display.
    """
    seqs = [sorted((rec[0], rec[3]) for rec in map(_record, s)) for s in (low, mid, high)]
    origins = [[o for o, _ in s] for s in seqs]
    if not origins[0] == origins[1] == origins[2]:
        raise DataError("percentile spread needs the same origins at every tau")
    return [
        {"origin": o, "q10": a, "q50": b, "q90": c, "spread": c - a}
        for o, (_, a), (_, b), (_, c) in zip(origins[0], *seqs)
    ]


def format_spread_table(rows, labels=None, digits=2):
    """Delimited text in the layout Date | 10th | 50th | 90th | 90th-10th."""
    head = "date,10th,50th,90th,90th-10th"
    out = [head]
    for r in rows:
        label = labels.get(r["origin"], r["origin"]) if labels else r["origin"]
        vals = [r["q10"], r["q50"], r["q90"], r["spread"]]
        out.append(",".join([str(label)] + [f"{v:.{digits}f}" for v in vals]))
    return "\n".join(out) + "\n"


def counterfactual_table(values: dict, percentiles=(10, 50, 90)):
    """Average posterior mean differences; rows are percentiles, columns the three classes.

    ``values`` maps ``(percentile, class_label)`` to a number; absent cells
    are left blank.
    """
    rows = []
    for pct in percentiles:
        row = {"percentile": pct}
        for label in TABLE_CLASSES:
            row[TABLE_HEADERS[label]] = values.get((pct, label))
        rows.append(row)
    return rows


def format_counterfactual_table(rows, digits=2):
    cols = [TABLE_HEADERS[c] for c in TABLE_CLASSES]
    out = ["percentile," + ",".join(cols)]
    for r in rows:
        cells = ["" if r[c] is None else f"{r[c]:.{digits}f}" for c in cols]
        out.append(f"{r['percentile']}th," + ",".join(cells))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# counterfactual


@dataclass(frozen=True)
class CounterfactualSpec:
    shocked_series: str
    window: int = 3
    shock_size: float = 1.0

    def __post_init__(self):
        if int(self.window) != self.window or self.window < 1:
            raise SpecError(f"shock window must be a positive integer, got {self.window}")
        if not np.isfinite(self.shock_size):
            raise SpecError("shock size must be finite")


def shocked_panel(panel: MixedFrequencyPanel, spec: CounterfactualSpec):
    """Panel with ``shock_size`` in-sample sd added over the series' last ``window`` releases."""
    col = panel.column(spec.shocked_series)
    if panel.series[col].frequency != "monthly":
        raise SpecError(f"shocked series {spec.shocked_series} must be monthly")
    last = panel.calendar[spec.shocked_series]
    months = np.arange(last - spec.window + 1, last + 1)
    grid = np.array(panel.grid)
    if months[0] < 0 or np.any(np.isnan(grid[months, col])):
        raise SpecError(f"{spec.shocked_series} is not observed over the last {spec.window} months")
    sd = float(np.nanstd(grid[:, col], ddof=1))
    grid[months, col] += spec.shock_size * sd
    return panel.replace_grid(grid), months, sd


@dataclass
class CounterfactualResult:
    spec: CounterfactualSpec
    actual: NowcastResult
    counter: NowcastResult
    differences: np.ndarray
    shock_months: list
    shock_sd: float

    def summary(self):
        mean, sd, lo, hi = summarize(self.differences.T, self.actual.mass)
        avg = self.differences.mean(axis=1)
        return {
            "class": self.actual.cls.label,
            "tau": self.actual.tau,
            "months": self.actual.target_labels,
            "mean": mean.tolist(),
            "sd": sd.tolist(),
            "lower": lo.tolist(),
            "upper": hi.tolist(),
            "average": float(avg.mean()),
            "prob_negative": float(np.mean(avg < 0)),
        }


def counterfactual(fit: Callable, panel: MixedFrequencyPanel, spec: CounterfactualSpec,
                   mass: float = 0.68, n_paths: int = 200, seed: int = 0) -> CounterfactualResult:
    """Refit on the shocked panel with the same seeds and difference the draws.

    ``fit(panel)`` must return the chains for a panel and be deterministic in
    its seeds, so that draw ``d`` of both runs uses the same random numbers.
    """
    shocked, months, sd = shocked_panel(panel, spec)
    actual = nowcast(fit(panel), panel, mass=mass, n_paths=n_paths, seed=seed)
    counter = nowcast(fit(shocked), shocked, mass=mass, n_paths=n_paths, seed=seed)
    return CounterfactualResult(spec, actual, counter, counter.draws - actual.draws,
                                [panel.month_label(m) for m in months], sd)


# ---------------------------------------------------------------------------
# synthetic data


@dataclass
class SyntheticDgp:
    params: QvarParams
    tau: list
    big_t: int
    quarterly_columns: tuple = ()
    ragged_edge: dict = field(default_factory=dict)
    gdp_delay: int = 0
    seed: int = 0
    burn: int = 200

    def __post_init__(self):
        if self.params.sigma is None:
            raise SpecError("the DGP needs sigma")
        radius = self.params.spectral_radius()
        if not radius < 1.0:
            raise StabilityError(f"companion spectral radius {radius:.4f} is not below 1")
        last = self.big_t - 1 - self.gdp_delay
        if self.quarterly_columns and last % 3 != 2:
            raise SpecError(
                f"with T={self.big_t} a GDP delay of {self.gdp_delay} does not end on a quarter month"
            )
        if len(self.tau) != self.params.n:
            raise SpecError("tau needs one entry per series")
        if self.big_t <= self.params.p + 5:
            raise SpecError("sample too short")

    @property
    def n(self):
        return self.params.n


def simulate_dgp(dgp: SyntheticDgp):
    """Simulate the QVAR with MAL innovations, then mask it.

    Quarterly columns keep only the aggregated value
    ``(1/3, 2/3, 1, 2/3, 1/3) . y[t-4:t+1]`` at third months ``t >= 4`` up to
    ``T - 1 - gdp_delay``; ``ragged_edge[col] = k`` hides a monthly series'
    last ``k`` months. Returns ``(truth, panel)``.
    """
    rng = np.random.default_rng(dgp.seed)
    params = dgp.params
    n, p = params.n, params.p
    q = make_quantile_config(dgp.tau)
    shift = skew_shift(params.sigma, q)
    chol = linalg.cholesky(scale_matrix(params.sigma, q), lower=True)
    total = dgp.big_t + dgp.burn
    y = np.zeros((total, n))
    w = rng.standard_exponential(total)
    z = rng.standard_normal((total, n))
    for t in range(p, total):
        loc = params.b0 + sum(params.lags[j] @ y[t - 1 - j] for j in range(p))
        y[t] = loc + w[t] * shift + np.sqrt(w[t]) * (chol @ z[t])
    truth = y[dgp.burn:]
    grid = truth.copy()
    quarterly = []
    last_release = dgp.big_t - 1 - dgp.gdp_delay
    for col in dgp.quarterly_columns:
        grid[:, col] = np.nan
        for t in range(4, last_release + 1):
            if t % 3 == 2:
                quarterly.append((col, t, float(MM_WEIGHTS @ truth[t - 4: t + 1, col])))
    for col, k in dgp.ragged_edge.items():
        if k:
            grid[-k:, col] = np.nan
    return truth, panel_from_arrays(grid, quarterly)
