"""Convergence summaries: effective sample size and split-chain R-hat."""

import numpy as np

from .chain import PosteriorChain
from .errors import DegenerateChainError


def _autocov(x):
    """Biased autocovariances of each row of ``x`` (chains x draws), via FFT."""
    m, n = x.shape
    xc = x - x.mean(axis=1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size, axis=1)
    return np.fft.irfft(f * np.conj(f), size, axis=1)[:, :n] / n


def effective_sample_size(x) -> float:
    """ESS of a scalar quantity from ``draws`` or ``chains x draws`` samples.

    Autocorrelations are pooled across chains and truncated with Geyer's
    initial monotone positive-pair sequence. A chain with zero variance has
    ESS 1.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    m, n = x.shape
    if n < 2:
        raise DegenerateChainError("ESS needs at least two draws per chain")
    acov = _autocov(x)
    chain_var = acov[:, 0] * n / (n - 1)
    w = chain_var.mean()
    var_plus = w * (n - 1) / n
    if m > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    if var_plus <= 0:
        return 1.0
    rho = 1.0 - (w - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    tau = -1.0
    prev = np.inf
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        pair = min(pair, prev)
        tau += 2.0 * pair
        prev = pair
    # antithetic chains can push tau toward 0; cap ESS at draws * log10(draws)
    tau = max(tau, 1.0 / np.log10(max(m * n, 10)))
    return float(m * n / tau)


def split_rhat(x) -> float:
    """Potential scale reduction after splitting each chain in half."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    m, n = x.shape
    if n < 4:
        raise DegenerateChainError("split R-hat needs at least four draws per chain")
    half = n // 2
    parts = np.vstack([x[:, :half], x[:, n - half:]])
    within = parts.var(axis=1, ddof=1).mean()
    between = half * parts.mean(axis=1).var(ddof=1)
    if within == 0:
        return 1.0 if between == 0 else np.inf
    var_plus = (half - 1) / half * within + between / half
    return float(np.sqrt(var_plus / within))


def diagnostics(chains, names=None, ess_floor=None):
    """Per-parameter mean, sd, ESS and split R-hat.

    ``chains`` is a list of :class:`PosteriorChain` (or of ``draws x params``
    arrays) sharing a layout. Parameters with ESS below ``ess_floor``
    (default 10% of the total draws) and constant parameters are flagged.
    """
    if isinstance(chains, PosteriorChain):
        chains = [chains]
    mats = [c.flat() if isinstance(c, PosteriorChain) else np.atleast_2d(np.asarray(c, float))
            for c in chains]
    if not mats or mats[0].shape[0] < 2:
        raise DegenerateChainError("diagnostics need at least two draws")
    if names is None:
        names = (chains[0].parameter_names() if isinstance(chains[0], PosteriorChain)
                 else [f"x[{j}]" for j in range(mats[0].shape[1])])
    n_draws = min(a.shape[0] for a in mats)
    stack = np.stack([a[:n_draws] for a in mats])  # chains x draws x params
    total = stack.shape[0] * stack.shape[1]
    floor = 0.1 * total if ess_floor is None else ess_floor
    rows = []
    for j, name in enumerate(names):
        x = stack[:, :, j]
        ess = effective_sample_size(x)
        row = {
            "parameter": name,
            "mean": float(x.mean()),
            "sd": float(x.std(ddof=1)),
            "ess": ess,
            "rhat": split_rhat(x) if stack.shape[0] > 1 and n_draws >= 4 else None,
            "constant": bool(np.ptp(x) == 0),
        }
        row["flag"] = row["constant"] or ess < floor
        rows.append(row)
    return rows
