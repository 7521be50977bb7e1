"""Generalized inverse Gaussian variates.

The density is proportional to ``x^(p-1) exp(-(a x + b / x) / 2)`` on
``x > 0``. Sampling follows Hoermann & Leydold (2014): the problem is reduced
to the two-parameter form ``y^(lam-1) exp(-omega (y + 1/y) / 2)`` with
``lam = |p|`` and ``omega = sqrt(a b)``, and one of three rejection schemes is
picked per variate:

* ratio-of-uniforms with mode shift when ``lam > 1`` or ``omega > 1``;
* ratio-of-uniforms without mode shift for moderate ``omega``;
* a piecewise dominating density for small ``omega`` and ``lam < 1``.

All three have rejection constants bounded uniformly over the parameter
domain. Everything is vectorized. Rejection round ``r`` reads one uniform pair
per variate from a block drawn for the whole call, so variate ``i`` always sees
the same proposals whatever happens to the others; two calls with the same
stream and nearby parameters then return nearby draws.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterDomainError


@dataclass(frozen=True)
class GigParams:
    p: float
    a: float
    b: float

    def __post_init__(self):
        _check_domain(np.asarray(self.p), np.asarray(self.a), np.asarray(self.b))


def _check_domain(p, a, b):
    bad = (
        ~np.isfinite(p) | ~np.isfinite(a) | ~np.isfinite(b) | (a < 0) | (b < 0)
        | ((p > 0) & ~(a > 0))
        | ((p == 0) & ~((a > 0) & (b > 0)))
        | ((p < 0) & ~(b > 0))
    )
    if np.any(bad):
        i = int(np.flatnonzero(np.atleast_1d(bad))[0])
        pp, aa, bb = (float(np.atleast_1d(v)[i]) for v in (p, a, b))
        raise ParameterDomainError(f"GIG parameters outside the domain: p={pp}, a={aa}, b={bb}")


def _log_g(x, lam, omega):
    return (lam - 1.0) * np.log(x) - 0.5 * omega * (x + 1.0 / x)


def _mode(lam, omega):
    with np.errstate(divide="ignore", invalid="ignore"):
        hi = ((lam - 1.0) + np.sqrt((lam - 1.0) ** 2 + omega**2)) / omega
        lo = omega / (np.sqrt((1.0 - lam) ** 2 + omega**2) + (1.0 - lam))
    return np.where(lam >= 1.0, hi, lo)


def _rou_shift(lam, omega, draw):
    """Ratio-of-uniforms with mode shift (any lam >= 0, omega > 0)."""
    m = _mode(lam, omega)
    lgm = _log_g(m, lam, omega)
    a = -2.0 * (lam + 1.0) / omega - m
    b = 2.0 * (lam - 1.0) * m / omega - 1.0
    c = m
    pp = b - a * a / 3.0
    qq = 2.0 * a**3 / 27.0 - a * b / 3.0 + c
    phi = np.arccos(np.clip(-0.5 * qq * np.sqrt(-27.0 / pp**3), -1.0, 1.0))
    r = np.sqrt(-4.0 * pp / 3.0)
    x_minus = r * np.cos(phi / 3.0 + 4.0 * np.pi / 3.0) - a / 3.0
    x_plus = r * np.cos(phi / 3.0) - a / 3.0
    u_minus = (x_minus - m) * np.exp(0.5 * (_log_g(x_minus, lam, omega) - lgm))
    u_plus = (x_plus - m) * np.exp(0.5 * (_log_g(x_plus, lam, omega) - lgm))

    out = np.empty_like(lam)
    todo = np.arange(lam.size)
    r = 0
    while todo.size:
        e1, e2 = draw(r, todo)
        r += 1
        u = u_minus[todo] + (u_plus[todo] - u_minus[todo]) * e1
        v = e2
        x = u / v + m[todo]
        ok = x > 0
        xs = np.where(ok, x, 1.0)
        ok &= 2.0 * np.log(v) <= _log_g(xs, lam[todo], omega[todo]) - lgm[todo]
        out[todo[ok]] = x[ok]
        todo = todo[~ok]
    return out


def _rou_noshift(lam, omega, draw):
    """Ratio-of-uniforms without mode shift (0 <= lam <= 1, moderate omega)."""
    m = _mode(lam, omega)
    lgm = _log_g(m, lam, omega)
    x_plus = ((1.0 + lam) + np.sqrt((1.0 + lam) ** 2 + omega**2)) / omega
    u_plus = x_plus * np.exp(0.5 * (_log_g(x_plus, lam, omega) - lgm))

    out = np.empty_like(lam)
    todo = np.arange(lam.size)
    r = 0
    while todo.size:
        e1, e2 = draw(r, todo)
        r += 1
        u = u_plus[todo] * e1
        v = e2
        x = u / v
        ok = x > 0
        xs = np.where(ok, x, 1.0)
        ok &= 2.0 * np.log(v) <= _log_g(xs, lam[todo], omega[todo]) - lgm[todo]
        out[todo[ok]] = x[ok]
        todo = todo[~ok]
    return out


def _concave(lam, omega, draw):
    """Piecewise dominating density (0 <= lam < 1, omega small)."""
    m = _mode(lam, omega)
    x0 = omega / (1.0 - lam)
    two_om = 2.0 / omega
    x_star = np.maximum(x0, two_om)
    log_k1 = _log_g(m, lam, omega)
    a1 = np.exp(log_k1) * x0
    mid = x0 < two_om
    k2 = np.where(mid, np.exp(-omega), 0.0)
    lam_pos = lam > 0
    safe_lam = np.where(lam_pos, lam, 1.0)
    a2 = np.where(
        lam_pos,
        k2 * (two_om**lam - x0**lam) / safe_lam,
        k2 * np.log(two_om / np.where(mid, x0, two_om)),
    )
    a2 = np.where(mid, a2, 0.0)
    k3 = x_star ** (lam - 1.0)
    a3 = 2.0 * k3 * np.exp(-0.5 * x_star * omega) / omega
    total = a1 + a2 + a3

    out = np.empty_like(lam)
    todo = np.arange(lam.size)
    r = 0
    while todo.size:
        lt, om = lam[todo], omega[todo]
        u, e2 = draw(r, todo)
        r += 1
        v = total[todo] * e2
        r1 = v <= a1[todo]
        r2 = ~r1 & (v <= a1[todo] + a2[todo])
        r3 = ~(r1 | r2)
        x = np.empty(todo.size)
        log_h = np.empty(todo.size)

        x[r1] = x0[todo][r1] * v[r1] / a1[todo][r1]
        log_h[r1] = log_k1[todo][r1]

        if np.any(r2):
            vv = v[r2] - a1[todo][r2]
            l2, k2t, x0t = lt[r2], k2[todo][r2], x0[todo][r2]
            pos = l2 > 0
            x2 = np.empty(vv.size)
            x2[pos] = (x0t[pos] ** l2[pos] + vv[pos] * l2[pos] / k2t[pos]) ** (1.0 / l2[pos])
            x2[~pos] = om[r2][~pos] * np.exp(vv[~pos] * np.exp(om[r2][~pos]))
            x[r2] = x2
            log_h[r2] = np.log(k2t) + (l2 - 1.0) * np.log(x2)

        if np.any(r3):
            vv = v[r3] - a1[todo][r3] - a2[todo][r3]
            o3, xs3, k3t = om[r3], x_star[todo][r3], k3[todo][r3]
            x3 = -2.0 / o3 * np.log(np.exp(-0.5 * xs3 * o3) - vv * o3 / (2.0 * k3t))
            x[r3] = x3
            log_h[r3] = np.log(k3t) - 0.5 * x3 * o3

        ok = np.isfinite(x) & (x > 0)
        xs = np.where(ok, x, 1.0)
        with np.errstate(divide="ignore"):
            ok &= np.log(u) + log_h <= _log_g(xs, lt, om)
        out[todo[ok]] = x[ok]
        todo = todo[~ok]
    return out


class _RoundBlock:
    """Uniform pairs for rejection rounds, one column per variate, drawn lazily."""

    def __init__(self, size, rng):
        self.size = size
        self.rng = rng
        self.rounds = []

    def pairs(self, r, index):
        while len(self.rounds) <= r:
            self.rounds.append(self.rng.random((2, self.size)))
        block = self.rounds[r]
        return block[0, index], block[1, index]


def _gig2(lam, omega, rng):
    """Two-parameter GIG(lam, omega) draws for ``lam >= 0``, ``omega > 0``."""
    out = np.empty_like(lam)
    block = _RoundBlock(lam.size, rng)
    shift = (lam > 1.0) | (omega > 1.0)
    noshift = ~shift & (omega >= np.minimum(0.5, 2.0 / 3.0 * np.sqrt(1.0 - np.minimum(lam, 1.0))))
    concave = ~(shift | noshift)
    for mask, method in ((shift, _rou_shift), (noshift, _rou_noshift), (concave, _concave)):
        if np.any(mask):
            where = np.flatnonzero(mask)
            out[mask] = method(lam[mask], omega[mask], lambda r, todo: block.pairs(r, where[todo]))
    return out


def gig_rvs(p, a, b, rng: np.random.Generator, size=None):
    """Vectorized GIG draws; ``p``, ``a``, ``b`` broadcast against ``size``."""
    p, a, b = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (p, a, b))
    )
    if size is not None:
        shape = (size,) if np.isscalar(size) else tuple(size)
        p, a, b = (np.broadcast_to(v, shape) for v in (p, a, b))
    shape = p.shape
    p, a, b = (np.ascontiguousarray(v).ravel() for v in (p, a, b))
    _check_domain(p, a, b)

    out = np.empty(p.size)
    gamma_lim = b == 0
    invgamma_lim = (a == 0) & ~gamma_lim
    general = ~(gamma_lim | invgamma_lim)
    if np.any(gamma_lim):
        out[gamma_lim] = rng.gamma(p[gamma_lim], 2.0 / a[gamma_lim])
    if np.any(invgamma_lim):
        out[invgamma_lim] = 1.0 / rng.gamma(-p[invgamma_lim], 2.0 / b[invgamma_lim])
    if np.any(general):
        pg, ag, bg = p[general], a[general], b[general]
        y = _gig2(np.abs(pg), np.sqrt(ag * bg), rng)
        y = np.where(pg < 0, 1.0 / y, y)
        out[general] = np.sqrt(bg / ag) * y
    out = out.reshape(shape)
    return out if out.ndim else float(out)


def gig_sample(params: GigParams, rng: np.random.Generator, size=None):
    return gig_rvs(params.p, params.a, params.b, rng, size=size)


def gig_moment(p, a, b, k=1):
    """``E[X^k]`` from the Bessel-ratio formula (``a, b > 0``)."""
    from scipy.special import kve

    om = np.sqrt(a * b)
    return (b / a) ** (k / 2.0) * kve(p + k, om) / kve(p, om)
