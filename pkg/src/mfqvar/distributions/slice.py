"""Coordinate-wise slice sampling with stepping out and shrinkage."""

import numpy as np

from ..errors import TargetEvaluationError

DEFAULT_WIDTH = 0.5


def _evaluate(log_target, x):
    value = float(log_target(x))
    if np.isnan(value):
        raise TargetEvaluationError(
            "log target returned NaN", snapshot=np.array(x, copy=True)
        )
    return value


def slice_sample_step(log_target, current, widths, rng: np.random.Generator,
                      logp_current=None, max_steps_out=50, return_logp=False):
    """One slice-sampling update of every coordinate, in index order.

    Parameters
    ----------
    log_target : callable
        Unnormalized log density of a 1-D array; ``-inf`` marks points
        outside the support.
    current : array_like
        Current state; the target must be finite there.
    widths : array_like
        Initial bracket width per coordinate.
    logp_current : float, optional
        Cached ``log_target(current)``.
    max_steps_out : int
        Cap on the number of stepping-out expansions per coordinate.
    return_logp : bool
        Also return the log target at the new state.
    """
    x = np.array(current, dtype=float, copy=True).ravel()
    widths = np.broadcast_to(np.asarray(widths, dtype=float), x.shape)
    logp = _evaluate(log_target, x) if logp_current is None else float(logp_current)
    if not np.isfinite(logp):
        raise TargetEvaluationError(
            f"log target is not finite at the current state ({logp})", snapshot=x.copy()
        )

    trial = x.copy()
    # one child stream per coordinate: the variable number of shrinkage draws in
    # one coordinate must not shift the variates the next coordinate sees
    streams = rng.spawn(x.size)
    for i in range(x.size):
        rng = streams[i]
        x0 = x[i]
        level = logp + np.log(rng.random())
        w = widths[i]
        left = x0 - w * rng.random()
        right = left + w
        j = int(np.floor(max_steps_out * rng.random()))
        k = max_steps_out - 1 - j

        trial[i] = left
        while j > 0 and _evaluate(log_target, trial) > level:
            left -= w
            trial[i] = left
            j -= 1
        trial[i] = right
        while k > 0 and _evaluate(log_target, trial) > level:
            right += w
            trial[i] = right
            k -= 1

        while True:
            cand = left + (right - left) * rng.random()
            trial[i] = cand
            lp = _evaluate(log_target, trial)
            if lp > level:
                x[i] = cand
                logp = lp
                break
            if cand < x0:
                left = cand
            else:
                right = cand
        trial[i] = x[i]

    if return_logp:
        return x, logp
    return x


class WidthAdapter:
    """Tunes slice widths from observed jump sizes; frozen once burn-in ends.

    Each coordinate's width tracks twice the running mean absolute jump, which
    is on the order of the slice length for unimodal targets.
    """

    def __init__(self, widths, lower=1e-4, upper=1e3):
        self.widths = np.array(widths, dtype=float, copy=True)
        self.lower = lower
        self.upper = upper
        self._sum = np.zeros_like(self.widths)
        self._count = 0
        self.frozen = False

    def update(self, before, after):
        if self.frozen:
            return
        self._sum += np.abs(np.asarray(after) - np.asarray(before))
        self._count += 1
        mean_jump = self._sum / self._count
        self.widths = np.clip(2.0 * mean_jump, self.lower, self.upper)

    def freeze(self):
        self.frozen = True
