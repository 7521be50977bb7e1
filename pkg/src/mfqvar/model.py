"""Quantile-VAR parameterization, regression design and complete-data likelihood.

Coefficients are stacked as ``beta = (b0', vec(B_1)', ..., vec(B_p)')'`` with
column-major ``vec``, so that ``X_t beta = b0 + sum_j B_j y_{t-j}`` for
``X_t = z_t' kron I_n`` and ``z_t = (1, y_{t-1}', ..., y_{t-p}')'``.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import NotPositiveDefiniteError, ParameterDomainError
from .quantiles import QuantileConfig, expand_tau, make_quantile_config

__all__ = [
    "QuantileConfig",
    "QvarParams",
    "beta_pack",
    "beta_unpack",
    "coef_matrix",
    "complete_data_loglik",
    "design_matrix",
    "expand_tau",
    "make_quantile_config",
    "n_beta",
    "regressors",
    "scale_matrix",
    "skew_shift",
]


def n_beta(n: int, p: int) -> int:
    return n * (1 + n * p)


@dataclass
class QvarParams:
    b0: np.ndarray
    lags: list = field(default_factory=list)
    sigma: Optional[np.ndarray] = None

    def __post_init__(self):
        self.b0 = np.atleast_1d(np.asarray(self.b0, dtype=float))
        n = self.b0.shape[0]
        self.lags = [np.atleast_2d(np.asarray(b, dtype=float)) for b in self.lags]
        for j, b in enumerate(self.lags, start=1):
            if b.shape != (n, n):
                raise ParameterDomainError(f"lag matrix B_{j} has shape {b.shape}, expected {(n, n)}")
        if self.sigma is not None:
            self.sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
            if self.sigma.shape != (n, n):
                raise ParameterDomainError(f"sigma has shape {self.sigma.shape}, expected {(n, n)}")
            if not np.allclose(self.sigma, self.sigma.T, rtol=1e-12, atol=1e-14):
                raise ParameterDomainError("sigma must be symmetric")
            try:
                linalg.cholesky(self.sigma, lower=True)
            except linalg.LinAlgError as exc:
                raise NotPositiveDefiniteError("sigma is not positive definite") from exc

    @property
    def n(self) -> int:
        return self.b0.shape[0]

    @property
    def p(self) -> int:
        return len(self.lags)

    @property
    def d(self) -> np.ndarray:
        """Diagonal of ``D(Sigma)``: the marginal scales ``sqrt(Sigma_ii)``."""
        return np.sqrt(np.diag(self.sigma))

    @property
    def psi(self) -> np.ndarray:
        d = self.d
        return self.sigma / np.outer(d, d)

    def coef(self) -> np.ndarray:
        return np.column_stack([self.b0] + self.lags) if self.lags else self.b0[:, None]

    def companion(self) -> np.ndarray:
        n, p = self.n, self.p
        comp = np.zeros((n * p, n * p))
        comp[:n, :] = np.hstack(self.lags)
        comp[n:, :-n] = np.eye(n * (p - 1))
        return comp

    def spectral_radius(self) -> float:
        if self.p == 0:
            return 0.0
        return float(np.max(np.abs(np.linalg.eigvals(self.companion()))))


def beta_pack(params: QvarParams) -> np.ndarray:
    return params.coef().ravel(order="F").copy()


def coef_matrix(beta, n: int, p: int) -> np.ndarray:
    """``[b0, B_1, ..., B_p]`` as an ``n x (1 + n p)`` matrix."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (n_beta(n, p),):
        raise ParameterDomainError(
            f"beta has shape {beta.shape}, expected ({n_beta(n, p)},) for n={n}, p={p}"
        )
    return beta.reshape((n, 1 + n * p), order="F")


def beta_unpack(beta, n: int, p: int) -> QvarParams:
    coef = coef_matrix(beta, n, p)
    lags = [coef[:, 1 + j * n: 1 + (j + 1) * n].copy() for j in range(p)]
    return QvarParams(b0=coef[:, 0].copy(), lags=lags)


def regressors(y, p: int) -> np.ndarray:
    """Rows ``z_t = (1, y_{t-1}', ..., y_{t-p}')`` for ``t = p, ..., T-1`` (0-based)."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    big_t = y.shape[0]
    cols = [np.ones((big_t - p, 1))]
    cols += [y[p - j: big_t - j] for j in range(1, p + 1)]
    return np.hstack(cols)


def design_matrix(y, t: int, p: int) -> np.ndarray:
    """``X_t = z_t' kron I_n`` for the 0-based time index ``t >= p``."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if t < p:
        raise ParameterDomainError(f"X_t needs {p} lags; t={t} is inside the initial block")
    n = y.shape[1]
    z = np.concatenate([[1.0]] + [y[t - j] for j in range(1, p + 1)])
    return np.kron(z[None, :], np.eye(n))


def scale_matrix(sigma, q: QuantileConfig) -> np.ndarray:
    """``theta2 Sigma theta2``, the innovation covariance for ``w_t = 1``."""
    return q.theta2[:, None] * sigma * q.theta2[None, :]


def skew_shift(sigma, q: QuantileConfig) -> np.ndarray:
    """``D(Sigma) theta1``; innovations are shifted by this vector times ``w_t``."""
    return np.sqrt(np.diag(sigma)) * q.theta1


def complete_data_loglik(y, w, beta, sigma, q: QuantileConfig) -> float:
    """Log of the complete-data likelihood over ``t = p+1, ..., T``.

    Each term is ``log N(y_t | X_t beta + D theta1 w_t, w_t theta2 Sigma theta2) - w_t``,
    i.e. the Gaussian kernel with the usual ``-1/2`` power on the determinant
    plus the ``Exp(1)`` log density of ``w_t``.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    w = np.asarray(w, dtype=float)
    big_t, n = y.shape
    nb = np.asarray(beta).shape[0]
    p = (nb // n - 1) // n
    if n_beta(n, p) != nb:
        raise ParameterDomainError(f"beta of length {nb} does not fit n={n}")
    if w.shape != (big_t - p,):
        raise ParameterDomainError(f"w has shape {w.shape}, expected ({big_t - p},)")
    if np.any(w <= 0):
        raise ParameterDomainError("mixing weights must be positive")
    s = scale_matrix(sigma, q)
    try:
        chol = linalg.cholesky(s, lower=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("sigma is not positive definite") from exc
    coef = coef_matrix(beta, n, p)
    resid = y[p:] - regressors(y, p) @ coef.T - np.outer(w, skew_shift(sigma, q))
    a = linalg.solve_triangular(chol, resid.T, lower=True)
    quad = np.einsum("ij,ij->j", a, a) / w
    logdet = 2.0 * np.sum(np.log(np.diag(chol))) + n * np.log(w)
    terms = -0.5 * (n * np.log(2.0 * np.pi) + logdet + quad) - w
    return float(np.sum(terms))
