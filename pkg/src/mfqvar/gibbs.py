"""Priors and the Gibbs sampler: missing data, coefficients, mixing weights, scale.

One iteration runs, in order,

1. ``y^u``: constrained precision draw of the missing cells,
2. ``beta``: conjugate Gaussian draw,
3. ``w``: independent GIG draws,
4. ``Sigma``: a slice-sampling sweep in log-Cholesky coordinates.

Step ``k`` (0 to 3 above) of iteration ``i`` in chain ``c`` with root seed ``s``
draws from its own stream,
``np.random.default_rng(np.random.SeedSequence(s, spawn_key=(c, i, k)))``, the
stream ``SeedSequence(s).spawn(c + 1)[c].spawn(i + 1)[i].spawn(k + 1)[k]`` would
yield. Rejection and slice steps consume a data-dependent number of variates;
fresh streams per step keep two seed-matched chains on different data using
the same random numbers at every step, which counterfactual differences need.
"""

from dataclasses import asdict, dataclass, field
import hashlib
import logging
from typing import Optional

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from .chain import PosteriorChain
from .data import MixedFrequencyPanel, panel_digest
from .distributions.gig import gig_rvs
from .distributions.slice import DEFAULT_WIDTH, WidthAdapter, slice_sample_step
from .errors import (
    DataError,
    MfqvarError,
    NotPositiveDefiniteError,
    ParameterDomainError,
    SamplerError,
    SettingsError,
)
from .model import QvarParams, beta_unpack, coef_matrix, n_beta, regressors, scale_matrix, skew_shift
from .quantiles import QuantileConfig
from .state_space import (
    MissingDataSampler,
    build_aggregation_constraints,
    build_stacked_system,
    constraints_on_selection,
    selection_from_mask,
)

log = logging.getLogger(__name__)

W_FLOOR = 1e-12


@dataclass
class PriorSpec:
    beta_mean: np.ndarray
    beta_cov: np.ndarray
    sigma_df: float
    sigma_scale: np.ndarray

    def __post_init__(self):
        self.beta_mean = np.asarray(self.beta_mean, dtype=float)
        self.beta_cov = np.atleast_2d(np.asarray(self.beta_cov, dtype=float))
        self.sigma_scale = np.atleast_2d(np.asarray(self.sigma_scale, dtype=float))
        k = self.beta_mean.shape[0]
        n = self.sigma_scale.shape[0]
        if self.beta_cov.shape != (k, k):
            raise ParameterDomainError(f"beta_cov has shape {self.beta_cov.shape}, expected {(k, k)}")
        if self.sigma_df <= n - 1:
            raise ParameterDomainError(f"sigma_df must exceed n - 1 = {n - 1}, got {self.sigma_df}")
        for name, m in (("beta_cov", self.beta_cov), ("sigma_scale", self.sigma_scale)):
            try:
                linalg.cholesky(m, lower=True)
            except linalg.LinAlgError as exc:
                raise NotPositiveDefiniteError(f"{name} is not positive definite") from exc
        p = (k // n - 1) // n
        if n_beta(n, p) != k:
            raise ParameterDomainError(f"beta_mean of length {k} does not fit n={n}")
        self._beta_prec = None

    @property
    def n(self):
        return self.sigma_scale.shape[0]

    @property
    def p(self):
        return (self.beta_mean.shape[0] // self.n - 1) // self.n

    @property
    def beta_prec(self):
        if self._beta_prec is None:
            prec = linalg.inv(self.beta_cov)
            self._beta_prec = 0.5 * (prec + prec.T)
        return self._beta_prec

    def initial_sigma(self):
        """Prior mean ``Phi_0 / (nu_0 - n - 1)`` when it exists, else ``Phi_0``."""
        excess = self.sigma_df - self.n - 1
        return self.sigma_scale / excess if excess > 0 else self.sigma_scale.copy()


@dataclass
class SamplerSettings:
    draws: int
    burn_in: int = 0
    thin: int = 1
    seed: int = 0
    slice_widths: Optional[np.ndarray] = None
    sigma_sweeps: int = 1
    store_w: bool = False
    store_yu: bool = True

    def __post_init__(self):
        if not isinstance(self.draws, (int, np.integer)) or self.draws <= 0:
            raise SettingsError(f"draws must be a positive integer, got {self.draws!r}")
        if self.burn_in < 0:
            raise SettingsError("burn_in must be non-negative")
        if self.thin < 1:
            raise SettingsError("thin must be >= 1")
        if self.sigma_sweeps < 1:
            raise SettingsError("sigma_sweeps must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise SettingsError("seed must fit in 64 unsigned bits")

    def to_dict(self):
        d = asdict(self)
        if self.slice_widths is not None:
            d["slice_widths"] = np.asarray(self.slice_widths, dtype=float).tolist()
        return d


STEP_YU, STEP_BETA, STEP_W, STEP_SIGMA = range(4)


def step_rng(seed: int, chain: int, iteration: int, step: int) -> np.random.Generator:
    key = (int(chain), int(iteration), int(step))
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


# ---------------------------------------------------------------------------
# initial fill of missing cells


def initial_fill(panel: MixedFrequencyPanel, p: int) -> np.ndarray:
    """Deterministic, constraint-consistent completion of the panel.

    Monthly holes are linearly interpolated (flat beyond the ends). Latent
    monthly values of a quarterly series start from ``value / 3`` at each
    third month, interpolated, and are then moved by the minimum-norm
    correction onto the aggregation constraints.
    """
    y = np.array(panel.grid, dtype=float, copy=True)
    t_all = np.arange(panel.n_months)
    for col in panel.monthly_columns:
        ok = ~np.isnan(y[:, col])
        if not ok.any():
            raise DataError(f"series {panel.ids[col]} has no observations on the grid")
        y[~ok, col] = np.interp(t_all[~ok], t_all[ok], y[ok, col])
    for col in panel.quarterly_columns:
        obs = sorted((t, v) for c, t, v in panel.quarterly_obs if c == col)
        if not obs:
            raise DataError(f"quarterly series {panel.ids[col]} has no observations")
        ts, vs = zip(*obs)
        y[:, col] = np.interp(t_all, ts, np.asarray(vs) / 3.0)
    if panel.quarterly_obs:
        sel = selection_from_mask(panel.missing_mask, p)
        agg = build_aggregation_constraints(panel)
        cmat, cvec, _ = constraints_on_selection(agg, sel, y, p)
        if cvec.size:
            yu = y.reshape(-1)[sel.u_index]
            gram = cmat @ cmat.T
            yu = yu + cmat.T @ linalg.solve(gram, cvec - cmat @ yu, assume_a="pos")
            y.reshape(-1)[sel.u_index] = yu
    return y


def default_prior(panel, n: int, p: int, beta_var: float = 100.0, sigma_df=None,
                  sigma_scale: float = 1.0) -> PriorSpec:
    """Least-squares prior mean, ``beta_var * I`` prior covariance, ``IW(n + 2, I)`` for Sigma.

    ``panel`` may also be a complete ``T x n`` array.
    """
    y = initial_fill(panel, p) if isinstance(panel, MixedFrequencyPanel) else np.asarray(panel, float)
    if y.shape[1] != n:
        raise DataError(f"data has {y.shape[1]} series, expected {n}")
    k = 1 + n * p
    if y.shape[0] - p <= k:
        raise DataError(f"{y.shape[0] - p} usable months cannot identify {k} regressors per equation")
    z = regressors(y, p)
    coef, *_ = linalg.lstsq(z, y[p:])
    beta_mean = coef.T.ravel(order="F")
    df = float(n + 2) if sigma_df is None else float(sigma_df)
    return PriorSpec(beta_mean, beta_var * np.eye(beta_mean.size), df, sigma_scale * np.eye(n))


# ---------------------------------------------------------------------------
# step 2: beta


def beta_conditional(y, w, sigma, q: QuantileConfig, prior: PriorSpec):
    """Precision and right-hand side of the Gaussian full conditional of beta.

    With ``S = theta2 Sigma theta2`` the data part of the precision is
    ``(Z' W^-1 Z) kron S^-1`` and of the right-hand side
    ``vec(S^-1 E' W^-1 Z)``, ``E`` holding ``y_t - D theta1 w_t``.
    """
    y = np.asarray(y, dtype=float)
    p = prior.p
    w = np.asarray(w, dtype=float)
    s_inv = linalg.inv(scale_matrix(sigma, q))
    s_inv = 0.5 * (s_inv + s_inv.T)
    z = regressors(y, p)
    e = y[p:] - np.outer(w, skew_shift(sigma, q))
    zw = z / w[:, None]
    prec = prior.beta_prec + np.kron(z.T @ zw, s_inv)
    rhs = prior.beta_prec @ prior.beta_mean + (s_inv @ e.T @ zw).ravel(order="F")
    return prec, rhs


def draw_beta(y, w, sigma, q: QuantileConfig, prior: PriorSpec, rng):
    prec, rhs = beta_conditional(y, w, sigma, q, prior)
    try:
        chol = linalg.cholesky(prec, lower=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("posterior precision of beta is not positive definite") from exc
    mean = linalg.cho_solve((chol, True), rhs)
    return mean + linalg.solve_triangular(chol, rng.standard_normal(rhs.size), lower=True, trans="T")


# ---------------------------------------------------------------------------
# step 3: w


def w_conditional(y, beta, sigma, q: QuantileConfig):
    """GIG parameters ``(p, a, b_t)`` of the mixing-weight full conditionals."""
    y = np.asarray(y, dtype=float)
    n = y.shape[1]
    p = (np.asarray(beta).shape[0] // n - 1) // n
    s_inv = linalg.inv(scale_matrix(sigma, q))
    shift = skew_shift(sigma, q)
    u = y[p:] - regressors(y, p) @ coef_matrix(beta, n, p).T
    b = np.einsum("ti,ij,tj->t", u, s_inv, u)
    a = 2.0 + shift @ s_inv @ shift
    return 1.0 - n / 2.0, float(a), np.maximum(b, 0.0)


def draw_w(y, beta, sigma, q: QuantileConfig, rng):
    p_bar, a_bar, b_bar = w_conditional(y, beta, sigma, q)
    if p_bar <= 0:
        zero = b_bar <= 0
        if np.any(zero):
            log.info("%d exact-fit residuals; flooring their GIG b parameter", int(zero.sum()))
            b_bar = np.where(zero, W_FLOOR ** 2, b_bar)
    return np.maximum(gig_rvs(p_bar, a_bar, b_bar, rng), W_FLOOR)


# ---------------------------------------------------------------------------
# step 4: Sigma


def logchol_from_sigma(sigma) -> np.ndarray:
    """Lower-Cholesky entries in ``tril_indices`` order, diagonal on the log scale."""
    chol = linalg.cholesky(np.asarray(sigma, dtype=float), lower=True)
    n = chol.shape[0]
    rows, cols = np.tril_indices(n)
    phi = chol[rows, cols].copy()
    diag = rows == cols
    phi[diag] = np.log(phi[diag])
    return phi


def sigma_from_logchol(phi, n: int) -> np.ndarray:
    chol = _chol_from_logchol(phi, n)
    return chol @ chol.T


def _chol_from_logchol(phi, n):
    rows, cols = np.tril_indices(n)
    vals = np.array(phi, dtype=float, copy=True)
    diag = rows == cols
    vals[diag] = np.exp(vals[diag])
    chol = np.zeros((n, n))
    chol[rows, cols] = vals
    return chol


class SigmaTarget:
    """Log full conditional of Sigma in log-Cholesky coordinates.

    The data enter through ``A = sum u_t u_t' / w_t``, ``s = sum u_t`` and
    ``sum w_t`` (``u_t = y_t - X_t beta``), so one evaluation costs
    ``O(n^3)`` regardless of the sample length. The log-Jacobian of
    ``phi -> Sigma`` is ``sum_i (n - i + 2) phi_ii`` for 1-based ``i``.
    """

    def __init__(self, y, beta, w, q: QuantileConfig, prior: PriorSpec):
        y = np.asarray(y, dtype=float)
        w = np.asarray(w, dtype=float)
        n = y.shape[1]
        p = prior.p
        u = (y[p:] - regressors(y, p) @ coef_matrix(beta, n, p).T) / q.theta2
        self.n = n
        self.n_obs = u.shape[0]
        self.a = (u / w[:, None]).T @ u
        self.s = u.sum(axis=0)
        self.w_sum = float(w.sum())
        self.skew = q.theta1 / q.theta2
        self.prior = prior
        rows, cols = np.tril_indices(n)
        self.tril = (rows, cols)
        self.diag = rows == cols
        self.jac = (n - rows + 1)[self.diag].astype(float)  # n - i + 2 with 1-based i

    def __call__(self, phi):
        n = self.n
        phi = np.asarray(phi)
        log_diag = phi[self.diag]
        if not np.all(np.isfinite(log_diag)) or np.any(np.abs(log_diag) > 300):
            return -np.inf
        vals = phi.copy()
        vals[self.diag] = np.exp(log_diag)
        chol = np.zeros((n, n))
        chol[self.tril] = vals
        linv, info = lapack.dtrtri(chol, lower=1)
        if info != 0:
            return -np.inf
        sigma_inv = linv.T @ linv
        logdet = 2.0 * log_diag.sum()
        delta = np.sqrt(np.einsum("ij,ij->i", chol, chol)) * self.skew
        quad = (np.sum(sigma_inv * self.a) - 2.0 * delta @ sigma_inv @ self.s
                + self.w_sum * delta @ sigma_inv @ delta)
        prior = self.prior
        value = (-0.5 * (prior.sigma_df + n + 1 + self.n_obs) * logdet
                 - 0.5 * np.sum(prior.sigma_scale * sigma_inv)
                 - 0.5 * quad
                 + self.jac @ log_diag)
        return float(value)


def draw_sigma(y, beta, w, q: QuantileConfig, prior: PriorSpec, current_sigma, rng,
               widths=None, sweeps=1):
    target = SigmaTarget(y, beta, w, q, prior)
    phi = logchol_from_sigma(current_sigma)
    widths = DEFAULT_WIDTH if widths is None else widths
    for _ in range(sweeps):
        phi = slice_sample_step(target, phi, widths, rng)
    return sigma_from_logchol(phi, target.n)


# ---------------------------------------------------------------------------
# chain driver


def _state_digest(*arrays):
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=float).tobytes())
    return h.hexdigest()[:16]


def run_chain(panel: MixedFrequencyPanel, q: QuantileConfig, prior: PriorSpec,
              settings: SamplerSettings, chain: int = 0, init_fill=None) -> PosteriorChain:
    """Run one chain; see the module docstring for the step order and seeding."""
    n, p = prior.n, prior.p
    if panel.n != n:
        raise DataError(f"panel has {panel.n} series, prior expects {n}")
    if q.n != n:
        raise ParameterDomainError(f"quantile vector has {q.n} entries for {n} series")
    big_t = panel.n_months
    y = initial_fill(panel, p) if init_fill is None else np.array(init_fill, dtype=float, copy=True)
    sel = selection_from_mask(panel.missing_mask, p)
    m = sel.u_index.size
    sampler = None
    if m:
        agg = build_aggregation_constraints(panel) if panel.quarterly_obs else None
        sampler = MissingDataSampler(sel, agg, y, p)

    beta = prior.beta_mean.copy()
    sigma = prior.initial_sigma()
    w = np.ones(big_t - p)
    n_phi = n * (n + 1) // 2
    widths = DEFAULT_WIDTH if settings.slice_widths is None else settings.slice_widths
    adapter = WidthAdapter(np.broadcast_to(np.asarray(widths, dtype=float), (n_phi,)))

    draws = settings.draws
    beta_out = np.empty((draws, beta.size))
    sigma_out = np.empty((draws, n, n))
    yu_out = np.empty((draws, m)) if settings.store_yu else None
    w_out = np.empty((draws, big_t - p)) if settings.store_w else None
    total = settings.burn_in + draws * settings.thin
    stored = 0
    for it in range(total):
        rngs = [step_rng(settings.seed, chain, it, k) for k in range(4)]
        try:
            if sampler is not None:
                lags = beta_unpack(beta, n, p)
                params = QvarParams(lags.b0, lags.lags, sigma)
                system = build_stacked_system(params, q, w, big_t)
                y.reshape(-1)[sel.u_index] = sampler.draw(system, y, rngs[STEP_YU])
            beta = draw_beta(y, w, sigma, q, prior, rngs[STEP_BETA])
            w = draw_w(y, beta, sigma, q, rngs[STEP_W])
            target = SigmaTarget(y, beta, w, q, prior)
            phi = logchol_from_sigma(sigma)
            for _ in range(settings.sigma_sweeps):
                phi_new = slice_sample_step(target, phi, adapter.widths, rngs[STEP_SIGMA])
                if it < settings.burn_in:
                    adapter.update(phi, phi_new)
                phi = phi_new
            sigma = sigma_from_logchol(phi, n)
        except (MfqvarError, linalg.LinAlgError, FloatingPointError) as exc:
            digest = _state_digest(y, beta, w, sigma)
            raise SamplerError(
                f"chain {chain} failed at iteration {it}: {exc}", iteration=it, digest=digest
            ) from exc
        if it == settings.burn_in - 1:
            adapter.freeze()
        if it >= settings.burn_in and (it - settings.burn_in) % settings.thin == 0:
            beta_out[stored] = beta
            sigma_out[stored] = sigma
            if yu_out is not None:
                yu_out[stored] = y.reshape(-1)[sel.u_index]
            if w_out is not None:
                w_out[stored] = w
            stored += 1

    metadata = {
        "chain": int(chain),
        "seed": int(settings.seed),
        "settings": settings.to_dict(),
        "tau": q.tau.tolist(),
        "n": n,
        "p": p,
        "n_months": big_t,
        "series": panel.ids,
        "data_digest": panel_digest(panel),
        "yu_cells": [[int(t), int(i)] for t, i in sel.cells],
        "slice_widths": adapter.widths.tolist(),
    }
    return PosteriorChain(beta_out, sigma_out, yu_out, w_out, metadata)


def run_chains(panel, q, prior, settings: SamplerSettings, chains: int = 2):
    return [run_chain(panel, q, prior, settings, chain=c) for c in range(chains)]
