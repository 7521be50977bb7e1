from dataclasses import dataclass

import numpy as np

from .errors import ParameterDomainError


@dataclass(frozen=True)
class QuantileConfig:
    """Quantile levels and the skewness/scale maps they induce.

    ``theta1[i] = (1 - 2 tau_i) / (tau_i (1 - tau_i))`` and
    ``theta2[i] = sqrt(2 / (tau_i (1 - tau_i)))``; with these choices the
    location of a multivariate asymmetric Laplace vector is its vector of
    marginal tau-quantiles.
    """

    tau: np.ndarray
    theta1: np.ndarray
    theta2: np.ndarray

    @property
    def n(self) -> int:
        return self.tau.shape[0]


def make_quantile_config(tau) -> QuantileConfig:
    tau = np.atleast_1d(np.asarray(tau, dtype=float)).copy()
    if tau.ndim != 1 or tau.size == 0:
        raise ParameterDomainError("tau must be a non-empty vector")
    if not np.all((tau > 0.0) & (tau < 1.0)):
        raise ParameterDomainError(f"quantile levels must lie in (0, 1), got {tau.tolist()}")
    v = tau * (1.0 - tau)
    theta1 = (1.0 - 2.0 * tau) / v
    theta2 = np.sqrt(2.0 / v)
    for a in (tau, theta1, theta2):
        a.setflags(write=False)
    return QuantileConfig(tau=tau, theta1=theta1, theta2=theta2)


def expand_tau(tau, n: int) -> np.ndarray:
    """Broadcast a scalar quantile level to ``n`` equations."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if tau.size == 1:
        return np.full(n, float(tau[0]))
    if tau.size != n:
        raise ParameterDomainError(f"expected 1 or {n} quantile levels, got {tau.size}")
    return tau
