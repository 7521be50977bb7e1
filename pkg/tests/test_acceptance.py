"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in
the terminal summary under "acceptance criteria".
"""

import json
import time

import numpy as np
import pytest
from scipy import linalg, special

from mfqvar import cli
from mfqvar.distributions import GigParams, MalParams, gig_sample, mal_sample, slice_sample_step
from mfqvar.gibbs import PriorSpec, SamplerSettings, beta_conditional, default_prior, run_chain
from mfqvar.model import QvarParams, beta_pack, make_quantile_config, regressors, skew_shift
from mfqvar.miniature import bundled_paths
from mfqvar.nowcast import (
    CounterfactualSpec,
    SyntheticDgp,
    counterfactual,
    counterfactual_table,
    format_counterfactual_table,
    format_spread_table,
    percentile_spread,
    quantile_locations,
    simulate_dgp,
)
from mfqvar.state_space import (
    MM_WEIGHTS,
    aggregation_constraints,
    build_stacked_system,
    conditional_missing_distribution,
    constraints_on_selection,
    draw_missing,
    selection_from_mask,
)

DATA, CONFIG = (str(p) for p in bundled_paths())


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


def rel_err(a, b):
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(b))


# 1 ---------------------------------------------------------------------------


def test_criterion_1_mal_calibration(acceptance_line):
    tau = np.array([0.1, 0.5, 0.9])
    mu = np.array([0.5, -1.0, 2.0])
    sigma = np.array([[1.0, 0.4, -0.3], [0.4, 2.0, 0.5], [-0.3, 0.5, 0.8]])
    with Timer() as t:
        params = MalParams.from_quantiles(mu, sigma, make_quantile_config(tau))
        y = mal_sample(params, np.random.default_rng(101), size=1_000_000)
        freq = np.mean(y <= mu, axis=0)
    err = np.abs(freq - tau)
    ok = bool(np.all(err <= 0.005) and t.seconds < 30)
    acceptance_line(1, ok, f"frequencies {np.round(freq, 4).tolist()}, max error {err.max():.4f} "
                           f"(tol 0.005), {t.seconds:.1f}s")
    assert ok


# 2 ---------------------------------------------------------------------------


def random_mf_config(seed):
    """Random mixed-frequency setup: last column quarterly, ragged edge and holes elsewhere."""
    g = np.random.default_rng(seed)
    n = int(g.integers(1, 4))
    p = int(g.integers(1, 3))
    big_t = int(g.integers(max(p + 10, 14), 25))
    lags = [0.4 * g.normal(size=(n, n)) / (j + 1) for j in range(p)]
    a = g.normal(size=(n, n))
    sigma = a @ a.T / n + 0.5 * np.eye(n)
    params = QvarParams(g.normal(size=n), lags, sigma)
    q = make_quantile_config(g.uniform(0.1, 0.9, size=n))
    w = g.exponential(size=big_t - p) + 0.05
    sys = build_stacked_system(params, q, w, big_t)

    y = g.normal(size=(big_t, n))
    mask = np.zeros((big_t, n), dtype=bool)
    q_col = n - 1
    mask[:, q_col] = True
    for col in range(n - 1):
        edge = int(g.integers(0, 3))
        if edge:
            mask[-edge:, col] = True
        mask[:, col] |= g.uniform(size=big_t) < 0.1
    quarterly = [(q_col, t, float(g.normal())) for t in range(4, big_t) if t % 3 == 2]
    return sys, y, mask, quarterly, q_col


def dense_conditioning(sys, y, sel, agg_rows, ytilde):
    """Joint Gaussian of y_p..y_{T-1} by forward solve, then condition on linear functionals."""
    n, p = sys.n, sys.p
    bmat = sys.bigB.toarray()
    b_init, b_rest = bmat[:, : p * n], bmat[:, p * n:]
    rest_inv = linalg.inv(b_rest)
    mean = rest_inv @ (sys.bigb - b_init @ y[:p].ravel())
    cov = rest_inv @ sys.bigSigma.toarray() @ rest_inv.T
    shift = p * n
    u_idx = sel.u_index - shift
    o_idx = np.setdiff1d(np.arange(mean.size), u_idx)
    h = np.eye(mean.size)[o_idx]
    obs = y.ravel()[shift:][o_idx]

    def condition(hmat, values):
        gain = cov @ hmat.T @ linalg.inv(hmat @ cov @ hmat.T)
        m = mean + gain @ (values - hmat @ mean)
        v = cov - gain @ hmat @ cov
        return m[u_idx], v[np.ix_(u_idx, u_idx)]

    plain = condition(h, obs)
    if agg_rows is None or not len(ytilde):
        return plain, plain
    return plain, condition(np.vstack([h, agg_rows[:, shift:]]), np.concatenate([obs, ytilde]))


def test_criterion_2_precision_sampler_oracle(acceptance_line):
    worst = 0.0
    with Timer() as t:
        for seed in range(20):
            sys, y, mask, quarterly, q_col = random_mf_config(seed)
            p, n, big_t = sys.p, sys.n, sys.big_t
            sel = selection_from_mask(mask, p)
            dist = conditional_missing_distribution(sys, sel, y)
            cov_band = dist.solve(np.eye(dist.dim))

            agg = aggregation_constraints(quarterly, big_t, [q_col])
            cmat, cvec, kept = constraints_on_selection(agg, sel, y, p)
            kc = dist.solve(np.asfortranarray(cmat.T))
            gram = cmat @ kc
            mean_c = dist.mean + kc @ linalg.solve(gram, cvec - cmat @ dist.mean)
            cov_c = cov_band - kc @ linalg.solve(gram, kc.T)

            # oracle rows built straight from the weights on the full cell layout
            rows = np.zeros((len(kept), big_t * n))
            for k, r in enumerate(kept):
                col, anchor = agg.anchors[r]
                for lag, wgt in enumerate(MM_WEIGHTS):
                    rows[k, (anchor - 4 + lag) * n + col] = wgt
            (m_ref, v_ref), (mc_ref, vc_ref) = dense_conditioning(sys, y, sel, rows, agg.ytilde[kept])
            errs = [rel_err(dist.mean, m_ref), rel_err(cov_band, v_ref)]
            if len(kept):
                errs += [rel_err(mean_c, mc_ref), rel_err(cov_c, vc_ref)]
            worst = max(worst, *errs)
    ok = worst < 1e-9 and t.seconds < 60
    acceptance_line(2, ok, f"20 configurations, worst relative error {worst:.2e} (tol 1e-9), "
                           f"{t.seconds:.1f}s")
    assert ok


# 3 ---------------------------------------------------------------------------


def test_criterion_3_hard_constraints(acceptance_line):
    g = np.random.default_rng(303)
    n, p, big_t = 2, 1, 28
    params = QvarParams([0.1, 0.2], [[[0.5, 0.1], [0.2, 0.4]]], [[1.0, 0.3], [0.3, 0.7]])
    q = make_quantile_config([0.3, 0.6])
    sys = build_stacked_system(params, q, g.exponential(size=big_t - p) + 0.1, big_t)
    y = g.normal(size=(big_t, n))
    mask = np.zeros((big_t, n), dtype=bool)
    mask[:, 1] = True
    mask[-2:, 0] = True
    quarterly = [(1, t, float(g.normal(scale=2.0))) for t in range(5, big_t, 3)]
    agg = aggregation_constraints(quarterly, big_t, [1])
    sel = selection_from_mask(mask, p)

    coo = agg.ma.tocoo()
    weights_ok = agg.k == 8
    for r, (_, anchor) in enumerate(agg.anchors):
        cols = coo.col[coo.row == r]
        vals = coo.data[coo.row == r]
        order = np.argsort(cols)
        weights_ok &= np.array_equal(cols[order], np.arange(anchor - 4, anchor + 1))
        weights_ok &= np.array_equal(vals[order], MM_WEIGHTS)
        weights_ok &= np.array_equal(MM_WEIGHTS, np.array([1, 2, 3, 2, 1]) / 3)

    worst = 0.0
    with Timer() as t:
        for _ in range(10_000):
            yu = draw_missing(sys, sel, agg, y, g)
            full = sel.combine(yu, y)
            worst = max(worst, float(np.max(np.abs(agg.ma @ full[:, 1] - agg.ytilde))))
    ok = bool(weights_ok) and worst < 1e-8 and t.seconds < 30
    acceptance_line(3, ok, f"8 quarterly rows, weights exact: {bool(weights_ok)}, "
                           f"max |M y - y~| {worst:.2e} (tol 1e-8), {t.seconds:.1f}s")
    assert ok


# 4 ---------------------------------------------------------------------------

RECOVERY_PARAMS = QvarParams(
    b0=[0.3, 0.1, 0.2],
    lags=[[[0.5, 0.1, 0.0], [0.1, 0.4, 0.0], [0.2, 0.2, 0.3]]],
    sigma=[[0.6, 0.15, 0.1], [0.15, 0.5, 0.1], [0.1, 0.1, 0.4]],
)


def fit_chains(panel, tau, draws, burn_in, seed, prior=None):
    prior = default_prior(panel, panel.n, 1) if prior is None else prior
    q = make_quantile_config(tau)
    settings = SamplerSettings(draws=draws, burn_in=burn_in, seed=seed)
    return [run_chain(panel, q, prior, settings, chain=c) for c in range(2)]


def test_criterion_4_synthetic_recovery(acceptance_line):
    dgp = SyntheticDgp(RECOVERY_PARAMS, [0.5] * 3, 300, quarterly_columns=(2,), seed=404)
    truth, panel = simulate_dgp(dgp)
    with Timer() as t:
        chains = fit_chains(panel, [0.5] * 3, 2000, 500, seed=41)
        draws = np.concatenate([c.beta_draws for c in chains])
        mean, sd = draws.mean(axis=0), draws.std(axis=0, ddof=1)
        covered = np.abs(mean - beta_pack(RECOVERY_PARAMS)) <= 3 * sd
        refit = fit_chains(panel, [0.1] * 3, 2000, 500, seed=42)
        below = []
        for col in range(3):
            fitted = quantile_locations(refit, panel, col).mean(axis=0)
            below.append(truth[1:, col] < fitted)
        exceed = float(np.mean(below))
    share = float(covered.mean())
    ok = share >= 0.9 and abs(exceed - 0.1) <= 0.03 and t.seconds < 600
    acceptance_line(4, ok, f"{covered.sum()}/{covered.size} coefficients within 3 sd (need >= 90%), "
                           f"tau=0.1 exceedance {exceed:.3f} (0.10 +/- 0.03), {t.seconds:.0f}s")
    assert ok


# 5 ---------------------------------------------------------------------------


def test_criterion_5_gls_limit(acceptance_line):
    g = np.random.default_rng(505)
    dgp = SyntheticDgp(RECOVERY_PARAMS, [0.3, 0.5, 0.8], 200, seed=5)
    y, _ = simulate_dgp(dgp)
    n, p = 3, 1
    sigma = np.asarray(RECOVERY_PARAMS.sigma)
    q = make_quantile_config([0.3, 0.5, 0.8])
    k = n * (1 + n * p)
    prior = PriorSpec(g.normal(size=k), 1e8 * np.eye(k), n + 2.0, np.eye(n))
    with Timer() as t:
        prec, rhs = beta_conditional(y, np.ones(y.shape[0] - p), sigma, q, prior)
        post_mean = linalg.solve(prec, rhs, assume_a="pos")
        # identical regressors in every equation: GLS reduces to OLS per equation
        z = regressors(y, p)
        target = y[p:] - skew_shift(sigma, q)
        coef = np.column_stack([linalg.lstsq(z, target[:, i])[0] for i in range(n)]).T
        gls = coef.ravel(order="F")
    err = rel_err(post_mean, gls)
    ok = err < 1e-4 and t.seconds < 5
    acceptance_line(5, ok, f"relative error to GLS {err:.2e} (tol 1e-4), {t.seconds:.2f}s")
    assert ok


# 6 ---------------------------------------------------------------------------

GIG_POINTS = [(lam, a, b) for lam in (-1.5, 0.25, 2.0) for a, b in ((0.5, 2.0), (2.0, 2.0), (4.0, 0.3))]


def bessel_moment(lam, a, b, k):
    root = np.sqrt(a * b)
    return (b / a) ** (k / 2) * special.kv(lam + k, root) / special.kv(lam, root)


def test_criterion_6_gig_and_slice(acceptance_line):
    g = np.random.default_rng(606)
    size = 400_000
    worst = 0.0
    with Timer() as t:
        for lam, a, b in GIG_POINTS:
            x = gig_sample(GigParams(lam, a, b), g, size=size)
            m1, m2, m4 = (bessel_moment(lam, a, b, k) for k in (1, 2, 4))
            z1 = abs(x.mean() - m1) / np.sqrt((m2 - m1**2) / size)
            z2 = abs(np.mean(x**2) - m2) / np.sqrt((m4 - m2**2) / size)
            worst = max(worst, z1, z2)

        x, logp = np.zeros(1), None
        out = np.empty(100_000)
        for i in range(out.size):
            x, logp = slice_sample_step(lambda v: -0.5 * float(v @ v), x, [1.0], g,
                                        logp_current=logp, return_logp=True)
            out[i] = x[0]
    ok = worst < 3 and abs(out.mean()) < 0.02 and abs(out.var() - 1) < 0.05 and t.seconds < 60
    acceptance_line(6, ok, f"GIG worst |z| {worst:.2f} over 9 points x 2 moments (tol 3); slice mean "
                           f"{out.mean():+.4f}, var {out.var():.4f}, {t.seconds:.1f}s")
    assert ok


# 7 ---------------------------------------------------------------------------


def test_criterion_7_counterfactual_sign(acceptance_line):
    params = QvarParams(
        b0=[0.0, 0.2, 0.5],
        lags=[[[0.5, 0.0, 0.0], [0.1, 0.4, 0.0], [-0.5, 0.2, 0.3]]],
        sigma=[[0.5, 0.1, 0.05], [0.1, 0.5, 0.1], [0.05, 0.1, 0.5]],
    )
    dgp = SyntheticDgp(params, [0.5] * 3, 150, quarterly_columns=(2,), seed=707)
    _, panel = simulate_dgp(dgp)
    prior = default_prior(panel, 3, 1)

    def fit(draws, burn_in):
        return lambda pnl: fit_chains(pnl, [0.1] * 3, draws, burn_in, seed=77, prior=prior)

    with Timer() as t:
        shocked = counterfactual(fit(1000, 500), panel, CounterfactualSpec("y0"), seed=7)
        summary = shocked.summary()
        null = counterfactual(fit(200, 100), panel, CounterfactualSpec("y0", shock_size=0.0), seed=7)
    zero = bool(np.all(null.differences == 0.0))
    ok = summary["prob_negative"] > 0.9 and zero and t.seconds < 600
    acceptance_line(7, ok, f"class {summary['class']}, mean difference {summary['average']:.3f}, "
                           f"P(difference < 0) {summary['prob_negative']:.3f} (need > 0.9); "
                           f"zero shock exact zeros: {zero}, {t.seconds:.0f}s")
    assert ok


# 8 ---------------------------------------------------------------------------

SPREAD_FIXTURE = [
    ("December 2019", -1.4372, 1.1701, 5.1958, "-1.44,1.17,5.20,6.63"),
    ("April 2020", -5.67, -0.46, 3.44, "-5.67,-0.46,3.44,9.11"),
    ("September 2020", -2.74, 6.99, 18.84, "-2.74,6.99,18.84,21.58"),
    ("January 2021", -8.48, -2.63, 4.75, "-8.48,-2.63,4.75,13.23"),
    ("December 2021", -2.95, 1.01, 5.90, "-2.95,1.01,5.90,8.85"),
]
COUNTERFACTUAL_FIXTURE = {
    (10, "Forecast"): -2.63, (10, "NowcastT1"): -0.13, (10, "NowcastT2"): -2.23,
    (50, "Forecast"): -1.82, (50, "NowcastT1"): 0.31, (50, "NowcastT2"): -0.68,
    (90, "Forecast"): 1.35, (90, "NowcastT1"): 1.32, (90, "NowcastT2"): 2.04,
}


def test_criterion_8_determinism_and_formats(acceptance_line, tmp_path):
    quick = ["--draws", "30", "--burnin", "10", "--origin", "2019-12-05", "--tau", "0.1,0.5,0.9"]
    with Timer() as t:
        for run in ("a", "b"):
            assert cli.main(["fit", "--data", DATA, "--config", CONFIG, "--out",
                             str(tmp_path / run / "fit"), *quick]) == 0
            assert cli.main(["nowcast", "--data", DATA, "--config", CONFIG, "--out",
                             str(tmp_path / run / "nowcast"), "--chains-dir", str(tmp_path / run / "fit"),
                             *quick]) == 0
        compared, differing = 0, []
        for stage in ("fit", "nowcast"):
            for f in sorted((tmp_path / "a" / stage).iterdir()):
                if f.name == "manifest.json":
                    continue
                compared += 1
                if f.read_bytes() != (tmp_path / "b" / stage / f.name).read_bytes():
                    differing.append(f.name)

        labels = {k: row[0] for k, row in enumerate(SPREAD_FIXTURE)}
        rows = percentile_spread(*[[(k, tau, "NowcastT1", row[1 + j]) for k, row in enumerate(SPREAD_FIXTURE)]
                                   for j, tau in enumerate((0.1, 0.5, 0.9))])
        spread_lines = format_spread_table(rows, labels).splitlines()
        spread_ok = spread_lines[0] == "date,10th,50th,90th,90th-10th" and all(
            line == f"{row[0]},{row[4]}" for line, row in zip(spread_lines[1:], SPREAD_FIXTURE))
        spread_ok &= all(r["spread"] == r["q90"] - r["q10"] for r in rows)
        cf_table = format_counterfactual_table(counterfactual_table(COUNTERFACTUAL_FIXTURE)).splitlines()
        cf_table_ok = cf_table == ["percentile,Forecast,Nowcast T+1,Nowcast T+2", "10th,-2.63,-0.13,-2.23",
                               "50th,-1.82,0.31,-0.68", "90th,1.35,1.32,2.04"]
    ok = not differing and compared >= 15 and spread_ok and cf_table_ok and t.seconds < 120
    acceptance_line(8, ok, f"{compared} chain/report files byte-identical across reruns "
                           f"(differing: {differing or 'none'}); spread table {spread_ok}; "
                           f"counterfactual table {cf_table_ok}; {t.seconds:.0f}s")
    assert ok


# 9 ---------------------------------------------------------------------------

ORIGINS = {"2019-10-05": "Forecast", "2019-11-05": "NowcastT1", "2019-12-05": "NowcastT2"}
MANIFEST_KEYS = {"command", "version", "config_digest", "seed", "data_sha256", "files", "config"}


def manifest_complete(out):
    m = json.loads((out / "manifest.json").read_text())
    missing = MANIFEST_KEYS - set(m)
    files_ok = all(cli._sha256(out / name) == digest for name, digest in m["files"].items())
    return not missing and files_ok, m


@pytest.mark.slow
def test_criterion_9_end_to_end_smoke(acceptance_line, tmp_path):
    origins = [a for o in ORIGINS for a in ("--origin", o)]
    problems = []
    with Timer() as t:
        if cli.main(["validate", "--data", DATA, "--config", CONFIG, "--out", str(tmp_path / "v")]) != 0:
            problems.append("validate failed")
        if cli.main(["fit", "--data", DATA, "--config", CONFIG, "--out", str(tmp_path / "fit"),
                     *origins]) != 0:
            problems.append("fit failed")
        if cli.main(["nowcast", "--data", DATA, "--config", CONFIG, "--out", str(tmp_path / "nc"),
                     "--chains-dir", str(tmp_path / "fit"), *origins]) != 0:
            problems.append("nowcast failed")
        manifests = {}
        for stage in ("v", "fit", "nc"):
            complete, manifests[stage] = manifest_complete(tmp_path / stage)
            if not complete:
                problems.append(f"{stage} manifest incomplete")
        seen = {}
        for report in manifests.get("nc", {}).get("reports", []):
            seen.setdefault(report["as_of"], set()).add(report["class"])
            if not (tmp_path / "nc" / report["report"]).exists():
                problems.append(f"missing {report['report']}")
        for as_of, label in ORIGINS.items():
            if seen.get(as_of) != {label}:
                problems.append(f"{as_of}: classes {seen.get(as_of)} != {label}")
        n_reports = len(list((tmp_path / "nc").glob("nowcast_*.csv")))
        if n_reports != 9:
            problems.append(f"{n_reports} report files instead of 9")
        spread = (tmp_path / "nc" / "spread.csv").read_text().splitlines()
        if len(spread) != 4:
            problems.append("spread table does not have three origin rows")
    ok = not problems and t.seconds < 900
    acceptance_line(9, ok, f"validate -> fit -> nowcast over {len(ORIGINS)} origins x 3 taus, classes "
                           f"{sorted(set(ORIGINS.values()))}, problems: {problems or 'none'}, "
                           f"{t.seconds:.0f}s")
    assert ok
