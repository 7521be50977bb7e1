"""Command-line interface.

Commands: ``validate``, ``fit``, ``nowcast``, ``counterfactual`` and
``simulate``. Each writes into an output directory (``--out``, by default
``$MFQVAR_OUT/<command>``, falling back to ``./mfqvar-out/<command>``) that
holds a ``manifest.json`` with the configuration digest, root seed, package
version and a SHA-256 of every file written.

Randomness: step ``k`` of iteration ``i`` in chain ``c`` draws from
``SeedSequence(seed, spawn_key=(c, i, k))``; the Forecast path simulation uses
the stream ``spawn_key=(FORECAST_STREAM,)``. Fits at different tau values
and the two legs of a counterfactual share the same streams.

Exit codes: 0 success, 2 input or specification error, 3 numerical or
sampler error.
"""

import argparse
import csv
import datetime as dt
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .chain import export_csv, load_chains, save_chains
from .config import load_config
from .data import (
    SeriesSpec,
    assemble_panel,
    classify_nowcast,
    load_vintage,
    panel_digest,
    validate_vintage,
    write_vintage_csv,
)
from .diagnostics import diagnostics
from .errors import CalendarError, InputError, NumericalError, SettingsError, SpecError
from .gibbs import SamplerSettings, default_prior, run_chains
from .model import QvarParams, make_quantile_config
from .nowcast import (
    CounterfactualSpec,
    SyntheticDgp,
    counterfactual,
    counterfactual_table,
    format_counterfactual_table,
    format_spread_table,
    nowcast,
    percentile_spread,
    rolling_report,
    simulate_dgp,
    summarize,
)
from .state_space import build_aggregation_constraints

log = logging.getLogger("mfqvar")

OUT_ENV = "MFQVAR_OUT"
FORECAST_STREAM = 65536
EXIT_INPUT, EXIT_NUMERICAL = 2, 3


# ---------------------------------------------------------------------------
# small I/O helpers


def _clean(obj):
    """JSON-safe copy: numpy scalars and arrays to Python, NaN to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _write_json(path, obj):
    text = json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return "" if not math.isfinite(v) else repr(float(v))
    if isinstance(v, (list, tuple)):
        return ";".join(map(str, v))
    return v


def _write_csv(path, rows, fields=None):
    fields = fields or (list(rows[0]) if rows else [])
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_cell(row.get(f)) for f in fields])


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _tau_tag(tau):
    if isinstance(tau, (list, tuple)):
        return "-".join(f"{t:g}" for t in tau)
    return f"{tau:g}"


def _parse_taus(text):
    if text is None:
        return None
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise SettingsError(f"cannot parse --tau {text!r}") from exc


def _parse_date(text):
    try:
        return dt.date.fromisoformat(text)
    except ValueError as exc:
        raise SettingsError(f"--origin must be an ISO date, got {text!r}") from exc


class Run:
    """Output directory plus the manifest being assembled for it."""

    def __init__(self, command, out):
        root = Path(os.environ.get(OUT_ENV, "mfqvar-out"))
        self.out = Path(out) if out else root / command
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = {"command": command, "version": __version__}
        self.files = []

    def path(self, name):
        self.files.append(name)
        return self.out / name

    def finish(self):
        self.manifest["files"] = {name: _sha256(self.out / name) for name in sorted(set(self.files))}
        _write_json(self.out / "manifest.json", self.manifest)
        return self.out / "manifest.json"


# ---------------------------------------------------------------------------
# shared pipeline pieces


def _require(path, what):
    if path is None:
        raise SettingsError(f"--{what} is required")
    path = Path(path)
    if not path.exists():
        raise SettingsError(f"{what} file {path} does not exist")
    return path


def _settings(args):
    config = _require(args.config, "config")
    settings = load_config(config).with_overrides(
        seed=args.seed, taus=_parse_taus(args.tau), draws=args.draws, burn_in=args.burnin,
        chains=args.chains,
    )
    return config, settings


def _origins(args):
    return [_parse_date(o) for o in args.origin] if args.origin else [None]


def _key(as_of):
    return "latest" if as_of is None else as_of.isoformat()


def _panel(settings, data, as_of):
    series = load_vintage(data, settings.series, as_of)
    return assemble_panel(series, settings.series, settings.target, settings.quarter_anchor)


def _panel_record(panel, settings, as_of):
    record = {"as_of": None if as_of is None else as_of.isoformat(),
              "origin": panel.month_label(panel.origin), "start": panel.month_label(0),
              "n_months": panel.n_months, "data_digest": panel_digest(panel)}
    try:
        cls = classify_nowcast(panel)
        record.update({"class": cls.label, "gdp_delay_months": cls.gdp_delay_months})
    except CalendarError as exc:
        record.update({"class": None, "class_error": str(exc)})
    dropped = []
    if panel.quarterly_obs:
        agg = build_aggregation_constraints(panel)
        dropped = [{**d, "label": panel.month_label(d["month"])} for d in agg.dropped]
        for col, t in agg.anchors:
            if t - 4 < settings.p:
                dropped.append({"column": col, "month": t, "label": panel.month_label(t),
                                "reason": "window overlaps the initial lags"})
    record["dropped_observations"] = dropped
    return record


def _sampler_settings(settings):
    s = settings.sampler
    return SamplerSettings(draws=s.draws, burn_in=s.burn_in, thin=s.thin, seed=s.seed,
                           slice_widths=s.slice_width, sigma_sweeps=s.sigma_sweeps,
                           store_w=s.store_w)


def _prior(panel, settings):
    pr = settings.prior
    return default_prior(panel, panel.n, settings.p, beta_var=pr.beta_var, sigma_df=pr.sigma_df,
                         sigma_scale=pr.sigma_scale)


def _fit(panel, settings, tau, prior=None):
    prior = _prior(panel, settings) if prior is None else prior
    q = make_quantile_config(settings.tau_vector(tau))
    return run_chains(panel, q, prior, _sampler_settings(settings), chains=settings.sampler.chains)


def _forecast_seed(settings):
    seq = np.random.SeedSequence(settings.sampler.seed, spawn_key=(FORECAST_STREAM,))
    return int(seq.generate_state(1, np.uint64)[0])


def _write_fit(run, chains, stem, csv_draws=True):
    save_chains(chains, run.path(f"chains_{stem}.bin"))
    if csv_draws:
        export_csv(chains, run.path(f"draws_{stem}.csv"))
    rows = diagnostics(chains)
    _write_csv(run.path(f"diagnostics_{stem}.csv"), rows,
               ["parameter", "mean", "sd", "ess", "rhat", "constant", "flag"])
    flagged = sum(1 for r in rows if r["flag"])
    return {"chains": f"chains_{stem}.bin", "flagged_parameters": flagged,
            "slice_widths": [c.metadata["slice_widths"] for c in chains]}


def _base_manifest(run, settings, config, data):
    run.manifest.update({
        "config_path": str(config),
        "config_digest": settings.digest(),
        "config": settings.to_dict(),
        "seed": settings.sampler.seed,
        "data_path": str(data),
        "data_sha256": _sha256(data),
        "taus": list(settings.taus),
        "seed_scheme": "chain c, iteration i, step k: SeedSequence(seed, spawn_key=(c, i, k)); "
                       f"forecast paths: spawn_key=({FORECAST_STREAM},)",
    })


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args):
    config, settings = _settings(args)
    data = _require(args.data, "data")
    as_of = _parse_date(args.origin[-1]) if args.origin else None
    issues = validate_vintage(data, settings.series, settings.target, settings.quarter_anchor, as_of)
    if args.out:
        run = Run("validate", args.out)
        _base_manifest(run, settings, config, data)
        _write_json(run.path("validation.json"), {"issues": issues, "passed": not issues})
        run.manifest["issues"] = len(issues)
        run.finish()
    for issue in issues:
        print(json.dumps(issue, sort_keys=True))
    print(f"{len(issues)} issue(s)")
    return EXIT_INPUT if issues else 0


def cmd_fit(args):
    config, settings = _settings(args)
    data = _require(args.data, "data")
    run = Run("fit", args.out)
    _base_manifest(run, settings, config, data)
    fits = []
    for as_of in _origins(args):
        panel = _panel(settings, data, as_of)
        record = _panel_record(panel, settings, as_of)
        prior = _prior(panel, settings)
        for tau in settings.taus:
            stem = f"{_key(as_of)}_tau{_tau_tag(tau)}"
            log.info("fitting %s", stem)
            chains = _fit(panel, settings, tau, prior)
            info = _write_fit(run, chains, stem, csv_draws=not args.no_csv)
            fits.append({**record, "tau": tau, **info})
            print(f"fit {stem}: {settings.sampler.chains} chain(s) x {settings.sampler.draws} draws, "
                  f"{info['flagged_parameters']} flagged parameter(s)")
    run.manifest["fits"] = fits
    run.finish()
    return 0


def _history(chains, panel, settings):
    p = int(chains[0].metadata["p"])
    res = nowcast(chains, panel, mass=settings.credible_mass, months=range(p, panel.origin + 1))
    return res.summaries()


def cmd_nowcast(args):
    config, settings = _settings(args)
    data = _require(args.data, "data")
    run = Run("nowcast", args.out)
    _base_manifest(run, settings, config, data)
    seed = _forecast_seed(settings)
    run.manifest.update({"forecast_seed": seed, "forecast_paths": settings.forecast_paths,
                         "chains_dir": args.chains_dir})
    results, reports = [], []
    for as_of in _origins(args):
        panel = _panel(settings, data, as_of)
        record = _panel_record(panel, settings, as_of)
        cls = classify_nowcast(panel)
        prior = None
        for tau in settings.taus:
            stem = f"{_key(as_of)}_tau{_tau_tag(tau)}"
            if args.chains_dir:
                path = Path(args.chains_dir) / f"chains_{stem}.bin"
                if not path.exists():
                    raise SettingsError(f"no fitted chains at {path}; run `mfqvar fit` first")
                chains = load_chains(path)
                if chains[0].metadata["tau"] != settings.tau_vector(tau):
                    raise SpecError(f"{path} was fitted at tau {chains[0].metadata['tau']}")
            else:
                prior = _prior(panel, settings) if prior is None else prior
                chains = _fit(panel, settings, tau, prior)
                _write_fit(run, chains, stem, csv_draws=False)
            res = nowcast(chains, panel, cls, mass=settings.credible_mass,
                          n_paths=settings.forecast_paths, seed=seed)
            res.metadata.update({"config_digest": settings.digest(), "seed": settings.sampler.seed})
            rows = res.to_rows()
            _write_csv(run.path(f"nowcast_{stem}.csv"), rows)
            _write_json(run.path(f"nowcast_{stem}.json"), res.to_dict())
            plot = [{"part": "history", **s} for s in _history(chains, panel, settings)]
            plot += [{"part": "target", **s} for s in res.summaries()]
            plot += [{"part": "iterated", **s} for s in res.summaries("iterated")]
            _write_csv(run.path(f"plotdata_{stem}.csv"), plot,
                       ["part", "month", "label", "kind", "mean", "sd", "lower", "upper"])
            results.append(res)
            reports.append({**record, "tau": tau, "class": cls.label, "headline": res.headline,
                            "report": f"nowcast_{stem}.csv"})
            print(f"nowcast {stem}: {cls.label}, {res.target_labels[-1]} "
                  f"quantile {res.headline:.3f}")
    run.manifest["reports"] = reports
    _spread(run, results, settings)
    _rolling(run, results)
    run.finish()
    return 0


def _spread(run, results, settings):
    by_tau = {}
    for res in results:
        if len(set(res.tau)) == 1:
            by_tau.setdefault(round(res.tau[0], 10), []).append(res)
    if not all(t in by_tau for t in (0.1, 0.5, 0.9)):
        run.manifest["spread_table"] = "skipped: needs scalar tau 0.1, 0.5 and 0.9"
        return
    rows = percentile_spread(by_tau[0.1], by_tau[0.5], by_tau[0.9])
    labels = {r.origin: r.origin_label for r in results}
    run.path("spread.csv").write_text(format_spread_table(rows, labels), encoding="utf-8")
    run.manifest["spread_table"] = "spread.csv"


def _rolling(run, results):
    try:
        rows = rolling_report(results)
    except InputError as exc:
        run.manifest["rolling_report"] = f"skipped: {exc}"
        return
    _write_csv(run.path("rolling.csv"), rows)
    run.manifest["rolling_report"] = "rolling.csv"


def cmd_counterfactual(args):
    config, settings = _settings(args)
    data = _require(args.data, "data")
    cf = settings.counterfactual
    series = args.shock_series or cf.series
    if series is None:
        raise SpecError("no shocked series: pass --shock-series or set counterfactual.series")
    if series not in [s.id for s in settings.series]:
        raise SpecError(f"shocked series {series!r} is not a declared series")
    spec = CounterfactualSpec(
        series,
        window=cf.window if args.shock_window is None else args.shock_window,
        shock_size=cf.shock_size if args.shock_size is None else args.shock_size,
    )
    run = Run("counterfactual", args.out)
    _base_manifest(run, settings, config, data)
    seed = _forecast_seed(settings)
    run.manifest.update({"forecast_seed": seed, "shock": {"series": spec.shocked_series,
                                                          "window": spec.window,
                                                          "shock_size": spec.shock_size}})
    cells, summaries = {}, []
    fields = ["label", "kind", "mean", "sd", "lower", "upper"]
    for as_of in _origins(args):
        panel = _panel(settings, data, as_of)
        record = _panel_record(panel, settings, as_of)
        prior = _prior(panel, settings)
        for tau in settings.taus:
            stem = f"{_key(as_of)}_tau{_tau_tag(tau)}"

            def fit(pnl, tau=tau):
                return _fit(pnl, settings, tau, prior)

            result = counterfactual(fit, panel, spec, mass=settings.credible_mass,
                                    n_paths=settings.forecast_paths, seed=seed)
            _write_csv(run.path(f"cf_{stem}_actual.csv"), result.actual.to_rows())
            _write_csv(run.path(f"cf_{stem}_counterfactual.csv"), result.counter.to_rows())
            mean, sd, lo, hi = summarize(result.differences.T, settings.credible_mass)
            diff_rows = [{"label": lab, "kind": k, "mean": a, "sd": b, "lower": c, "upper": d}
                         for lab, k, a, b, c, d in zip(result.actual.target_labels,
                                                        result.actual.kinds, mean, sd, lo, hi)]
            _write_csv(run.path(f"cf_{stem}_difference.csv"), diff_rows, fields)
            summary = {**record, "tau": tau, "shock_months": result.shock_months,
                       "shock_sd": result.shock_sd, **result.summary()}
            _write_json(run.path(f"cf_{stem}_summary.json"), summary)
            summaries.append(summary)
            if not isinstance(tau, (list, tuple)):
                cells.setdefault((int(round(100 * tau)), summary["class"]), []).append(
                    summary["average"])
            print(f"counterfactual {stem}: {summary['class']}, average difference "
                  f"{summary['average']:.4f}, P(<0) = {summary['prob_negative']:.2f}")
    if cells:
        table = counterfactual_table({k: float(np.mean(v)) for k, v in cells.items()},
                                     percentiles=sorted({k[0] for k in cells}))
        run.path("counterfactual_table.csv").write_text(format_counterfactual_table(table),
                                                        encoding="utf-8")
    run.manifest["counterfactuals"] = summaries
    run.finish()
    return 0


DEFAULT_DGP = {
    "b0": [0.2, 0.1, 0.3],
    "lags": [[[0.5, 0.1, 0.0], [0.2, 0.4, 0.0], [0.1, 0.2, 0.3]]],
    "sigma": [[0.5, 0.15, 0.1], [0.15, 0.5, 0.12], [0.1, 0.12, 0.5]],
    "quarterly_columns": [2],
    "ragged_edge": {0: 1},
    "ids": ["m1", "m2", "gdp"],
}


def _load_dgp(path):
    spec = dict(DEFAULT_DGP)
    if path:
        raw = yaml.safe_load(_require(path, "dgp").read_text(encoding="utf-8")) or {}
        unknown = set(raw) - set(DEFAULT_DGP)
        if unknown:
            raise SettingsError(f"unknown key(s) in DGP file: {', '.join(sorted(unknown))}")
        spec.update(raw)
    return spec


def cmd_simulate(args):
    spec = _load_dgp(args.dgp)
    params = QvarParams(spec["b0"], spec["lags"], spec["sigma"])
    n = params.n
    ids = list(spec["ids"])
    if len(ids) != n:
        raise SpecError(f"{len(ids)} series ids for {n} series")
    taus = _parse_taus(args.tau) or [0.5]
    tau = taus * n if len(taus) == 1 else taus
    seed = 0 if args.seed is None else args.seed
    dgp = SyntheticDgp(params, tau, args.months, tuple(spec["quarterly_columns"]),
                       {int(k): int(v) for k, v in spec["ragged_edge"].items()}, args.gdp_delay, seed)
    truth, panel = simulate_dgp(dgp)

    start = np.datetime64(args.start, "M")
    if (start.astype(int) % 3) != 0:
        raise SettingsError("--start must be the first month of a quarter")

    def date(t):
        return (start + t).astype("datetime64[D]").astype(dt.date)

    release = date(panel.n_months)
    rows = []
    for col, sid in enumerate(ids):
        if col in dgp.quarterly_columns:
            rows += [(sid, date(t), v, release) for c, t, v in panel.quarterly_obs if c == col]
        else:
            rows += [(sid, date(t), float(panel.grid[t, col]), release)
                     for t in range(panel.n_months) if not np.isnan(panel.grid[t, col])]
    series = [SeriesSpec(sid, "quarterly" if c in dgp.quarterly_columns else "monthly", "level")
              for c, sid in enumerate(ids)]
    target = ids[dgp.quarterly_columns[0]] if dgp.quarterly_columns else ids[0]
    config = {
        "version": 1, "target": target, "quarter_anchor": "third",
        "series": [{"id": s.id, "frequency": s.frequency, "transformation": s.transformation}
                   for s in series],
        "model": {"p": params.p, "tau": tau if len(set(tau)) > 1 else [tau[0]]},
        "sampler": {"seed": seed},
    }
    run = Run("simulate", args.out)
    write_vintage_csv(run.path("simulated.csv"), rows)
    run.path("simulated.yaml").write_text(yaml.safe_dump(config, sort_keys=True), encoding="utf-8")
    truth_rows = [{"month": str(start + t), **{sid: truth[t, c] for c, sid in enumerate(ids)}}
                  for t in range(truth.shape[0])]
    _write_csv(run.path("truth.csv"), truth_rows, ["month"] + ids)
    run.manifest.update({"seed": seed, "dgp": spec, "tau": tau, "months": args.months,
                         "gdp_delay": args.gdp_delay, "start": args.start,
                         "spectral_radius": params.spectral_radius()})
    run.finish()
    print(f"simulated {args.months} months of {n} series into {run.out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser():
    parser = argparse.ArgumentParser(prog="mfqvar", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mfqvar {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, fitting=True):
        p.add_argument("--data", help="vintage CSV (series_id,date,value,vintage_date)")
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<command>)")
        p.add_argument("--origin", action="append",
                       help="as-of date YYYY-MM-DD; repeat for several origins (default: latest vintage)")
        p.add_argument("--seed", type=int, help="root seed override")
        p.add_argument("--tau", help="comma-separated tau list override")
        if fitting:
            p.add_argument("--draws", type=int, help="retained draws per chain")
            p.add_argument("--burnin", type=int, help="burn-in iterations")
            p.add_argument("--chains", type=int, help="number of chains")

    p = sub.add_parser("validate", help="check a vintage file against a configuration")
    common(p, fitting=False)
    p.set_defaults(func=cmd_validate, draws=None, burnin=None, chains=None)

    p = sub.add_parser("fit", help="run the Gibbs sampler and persist the chains")
    common(p)
    p.add_argument("--no-csv", action="store_true", help="skip the long-format draws CSV")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("nowcast", help="quantile nowcasts from fitted or fresh chains")
    common(p)
    p.add_argument("--chains-dir", help="output directory of a previous `fit` with the same origins")
    p.set_defaults(func=cmd_nowcast)

    p = sub.add_parser("counterfactual", help="seed-matched shocked versus actual nowcasts")
    common(p)
    p.add_argument("--shock-series", help="monthly series to shock")
    p.add_argument("--shock-size", type=float, help="shock in in-sample standard deviations")
    p.add_argument("--shock-window", type=int, help="number of final released months shocked")
    p.set_defaults(func=cmd_counterfactual)

    p = sub.add_parser("simulate", help="simulate a synthetic mixed-frequency dataset")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV}/simulate)")
    p.add_argument("--seed", type=int, help="simulation seed (default 0)")
    p.add_argument("--tau", help="comma-separated tau, one value or one per series (default 0.5)")
    p.add_argument("--dgp", help="YAML file with b0, lags, sigma, quarterly_columns, ragged_edge, ids")
    p.add_argument("--months", type=int, default=300, help="number of months T")
    p.add_argument("--gdp-delay", type=int, default=0, help="months of quarterly release delay")
    p.add_argument("--start", default="2000-01", help="first month YYYY-MM")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
