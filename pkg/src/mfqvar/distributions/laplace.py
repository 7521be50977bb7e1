"""Univariate and multivariate asymmetric Laplace distributions.

Both are parameterized so that their location is the vector of marginal
tau-quantiles, and both are sampled through the exponential location-scale
mixture of Gaussians.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg, special

from ..errors import NotPositiveDefiniteError, ParameterDomainError
from ..quantiles import QuantileConfig

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class AlParams:
    mu: float
    sigma: float
    tau: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ParameterDomainError(f"sigma must be positive, got {self.sigma}")
        if not (0.0 < self.tau < 1.0):
            raise ParameterDomainError(f"tau must lie in (0, 1), got {self.tau}")
        if not np.isfinite(self.mu):
            raise ParameterDomainError("mu must be finite")

    @property
    def theta1(self) -> float:
        return (1.0 - 2.0 * self.tau) / (self.tau * (1.0 - self.tau))

    @property
    def theta2(self) -> float:
        return np.sqrt(2.0 / (self.tau * (1.0 - self.tau)))


def check_loss(u, tau):
    """Quantile check loss ``u (tau - 1{u < 0})``."""
    u = np.asarray(u, dtype=float)
    return u * (tau - (u < 0))


def al_logpdf(y, params: AlParams):
    u = (np.asarray(y, dtype=float) - params.mu) / params.sigma
    tau = params.tau
    return np.log(tau * (1.0 - tau) / params.sigma) - check_loss(u, tau)


def al_sample(params: AlParams, rng: np.random.Generator, size=None):
    w = rng.standard_exponential(size)
    z = rng.standard_normal(size)
    s = params.sigma
    return params.mu + w * s * params.theta1 + s * params.theta2 * np.sqrt(w) * z


@dataclass(frozen=True)
class MalParams:
    """Location ``mu``, skewness ``delta`` and scale matrix of a MAL law.

    In the quantile parameterization ``delta = D theta1`` and
    ``scale = D theta2 Psi theta2 D = theta2 Sigma theta2``.
    """

    mu: np.ndarray
    delta: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        delta = np.atleast_1d(np.asarray(self.delta, dtype=float))
        scale = np.atleast_2d(np.asarray(self.scale, dtype=float))
        n = mu.shape[0]
        if delta.shape != (n,) or scale.shape != (n, n):
            raise ParameterDomainError(
                f"dimension mismatch: mu {mu.shape}, delta {delta.shape}, scale {scale.shape}"
            )
        if not np.allclose(scale, scale.T, rtol=1e-12, atol=1e-14):
            raise ParameterDomainError("scale matrix must be symmetric")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "scale", scale)

    @property
    def n(self) -> int:
        return self.mu.shape[0]

    @classmethod
    def from_quantiles(cls, mu, sigma, q: QuantileConfig) -> "MalParams":
        """Build the quantile-parameterized law from ``Sigma = D Psi D``."""
        sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
        d = np.sqrt(np.diag(sigma))
        scale = q.theta2[:, None] * sigma * q.theta2[None, :]
        return cls(mu=mu, delta=d * q.theta1, scale=scale)

    def cholesky(self) -> np.ndarray:
        return _cholesky(self.scale)


def _cholesky(a):
    try:
        return linalg.cholesky(a, lower=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"matrix is not positive definite: {exc}") from exc


def log_bessel_k(nu, x):
    """``log K_nu(x)`` for ``x > 0`` without overflow or underflow.

    Uses the exponentially scaled Bessel function so large arguments do not
    underflow; small arguments are finite as long as ``x > 0``.
    """
    x = np.asarray(x, dtype=float)
    return np.log(special.kve(nu, x)) - x


def mal_logpdf(y, params: MalParams):
    """Log density of ``MAL_n(mu, delta, scale)``.

    ``y`` may be a single vector of length ``n`` or an array of shape
    ``(m, n)``. With ``m~ = r' S^-1 r``, ``d~ = delta' S^-1 delta`` and
    ``nu = (2 - n) / 2`` the density is::

        2 exp(r' S^-1 delta) / ((2 pi)^(n/2) |S|^(1/2))
          * (m~ / (2 + d~))^(nu/2) K_nu(sqrt((2 + d~) m~))

    At ``y = mu`` the density is finite only for ``n = 1``; ``inf`` is
    returned otherwise.
    """
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    y = np.atleast_2d(y)
    n = params.n
    if y.shape[1] != n:
        raise ParameterDomainError(f"expected vectors of length {n}, got {y.shape[1]}")
    chol = params.cholesky()
    r = y - params.mu
    a = linalg.solve_triangular(chol, r.T, lower=True)
    c = linalg.solve_triangular(chol, params.delta, lower=True)
    m_tilde = np.einsum("ij,ij->j", a, a)
    d_tilde = float(c @ c)
    cross = c @ a
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    nu = (2.0 - n) / 2.0
    base = np.log(2.0) + cross - 0.5 * n * _LOG_2PI - 0.5 * logdet
    arg = np.sqrt((2.0 + d_tilde) * m_tilde)

    out = np.empty_like(m_tilde)
    pos = m_tilde > 0
    out[pos] = (
        0.5 * nu * (np.log(m_tilde[pos]) - np.log(2.0 + d_tilde))
        + log_bessel_k(nu, arg[pos])
    )
    if np.any(~pos):
        if nu > 0:
            # K_nu(x) ~ Gamma(nu)/2 (2/x)^nu as x -> 0
            out[~pos] = special.gammaln(nu) - np.log(2.0) + nu * (np.log(2.0) - np.log(2.0 + d_tilde))
        else:
            out[~pos] = np.inf
    out = base + out
    return float(out[0]) if single else out


def mal_sample(params: MalParams, rng: np.random.Generator, size=None):
    """Draw ``mu + w delta + sqrt(w) L z`` with ``w ~ Exp(1)``, ``L L' = scale``."""
    chol = params.cholesky()
    m = 1 if size is None else int(size)
    w = rng.standard_exponential(m)
    z = rng.standard_normal((m, params.n))
    out = params.mu + w[:, None] * params.delta + np.sqrt(w)[:, None] * (z @ chol.T)
    return out[0] if size is None else out
