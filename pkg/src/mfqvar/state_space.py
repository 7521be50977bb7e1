"""Stacked VAR system, selection and aggregation matrices, missing-data draws.

Cells of the ``T x n`` panel are stacked time-major: cell ``(t, i)`` sits at
position ``t * n + i`` of the full data vector. The first ``p`` months form the
conditioning block of the likelihood.

The conditional precision of the missing cells,
``K_y = M_u' B' Sigma^-1 B M_u``, is assembled straight into LAPACK upper
banded storage: ``B' Sigma^-1 B`` is block-banded with ``p`` off-diagonal
blocks whose entries are ``A_a' S^-1 A_b / w_t`` (``A_0 = I``,
``A_j = -B_j``), so a precomputed gather map places each entry without
forming any sparse product.
"""

from dataclasses import dataclass, field
from functools import cached_property
import logging

import numpy as np
from scipy import sparse

from .distributions.gaussian import ConstraintProjector, PrecisionGaussian, precision_gaussian_sample
from .errors import NotPositiveDefiniteError, ParameterDomainError, SingularityError
from .model import QvarParams, scale_matrix, skew_shift
from .quantiles import QuantileConfig

log = logging.getLogger(__name__)

MM_WEIGHTS = np.array([1 / 3, 2 / 3, 1.0, 2 / 3, 1 / 3])
"""Weights on months ``t-4, ..., t`` (symmetric, so the order is immaterial)."""


@dataclass
class StackedSystem:
    """``B Y = b + zeta`` over ``t = p+1, ..., T`` with ``Y`` the full data vector."""

    params: QvarParams
    q: QuantileConfig
    w: np.ndarray
    big_t: int

    @property
    def n(self):
        return self.params.n

    @property
    def p(self):
        return self.params.p

    @cached_property
    def scale(self):
        return scale_matrix(self.params.sigma, self.q)

    @cached_property
    def scale_inv(self):
        s_inv = np.linalg.inv(self.scale)
        return 0.5 * (s_inv + s_inv.T)

    @cached_property
    def lag_blocks(self):
        """``A_0 = I, A_j = -B_j``: the row-block coefficients on ``y_t, ..., y_{t-p}``."""
        return [np.eye(self.n)] + [-b for b in self.params.lags]

    @cached_property
    def bigB(self):
        n, p, big_t = self.n, self.p, self.big_t
        rows, cols, vals = [], [], []
        r_idx = np.arange(big_t - p)
        ii, kk = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        for a, blk in enumerate(self.lag_blocks):
            t = r_idx + p - a
            rr = (r_idx[:, None, None] * n + ii[None]).ravel()
            cc = (t[:, None, None] * n + kk[None]).ravel()
            vv = np.broadcast_to(blk, (big_t - p, n, n)).ravel()
            keep = vv != 0
            rows.append(rr[keep])
            cols.append(cc[keep])
            vals.append(vv[keep])
        shape = ((big_t - p) * n, big_t * n)
        return sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape
        )

    @cached_property
    def bigb(self):
        shift = skew_shift(self.params.sigma, self.q)
        return (np.tile(self.params.b0, self.big_t - self.p) + np.kron(self.w, shift))

    @cached_property
    def bigSigma(self):
        return sparse.kron(sparse.diags(self.w), sparse.csr_matrix(self.scale), format="csr")

    def residuals(self, y):
        """``B Y - b`` reshaped to ``(T - p, n)``."""
        y = np.asarray(y, dtype=float).reshape(self.big_t * self.n)
        return (self.bigB @ y - self.bigb).reshape(self.big_t - self.p, self.n)

    def precision_blocks(self):
        """Blocks ``K[t, d] = (B' Sigma^-1 B)_{t, t+d}`` for ``d = 0..p``, shape ``(T, p+1, n, n)``."""
        n, p, big_t = self.n, self.p, self.big_t
        blocks = self.lag_blocks
        inv_w = 1.0 / self.w
        out = np.zeros((big_t, p + 1, n, n))
        for a in range(p + 1):
            for b in range(a + 1):
                g = blocks[a].T @ self.scale_inv @ blocks[b]
                # row block r couples columns t_r - a and t_r - b, t_r = r + p
                out[p - a: big_t - a, a - b] += inv_w[:, None, None] * g
        return out

    def transformed_rhs(self, y0):
        """``B' Sigma^-1 (b - B y0)`` as a ``(T, n)`` array."""
        n, p, big_t = self.n, self.p, self.big_t
        resid = -self.residuals(y0)  # b - B y0
        v = (resid @ self.scale_inv) / self.w[:, None]
        out = np.zeros((big_t, n))
        for a, blk in enumerate(self.lag_blocks):
            out[p - a: big_t - a] += v @ blk
        return out


def build_stacked_system(params: QvarParams, q: QuantileConfig, w, big_t: int) -> StackedSystem:
    w = np.asarray(w, dtype=float)
    if params.sigma is None:
        raise ParameterDomainError("the stacked system needs sigma")
    if q.n != params.n:
        raise ParameterDomainError(f"quantile config has {q.n} levels for {params.n} series")
    if w.shape != (big_t - params.p,):
        raise ParameterDomainError(f"w has shape {w.shape}, expected ({big_t - params.p},)")
    if np.any(w <= 0):
        raise ParameterDomainError("mixing weights must be positive")
    return StackedSystem(params=params, q=q, w=w, big_t=big_t)


@dataclass
class SelectionMatrices:
    """Partition of the ``T n`` cells into drawn (``u``) and conditioning (``o``) cells."""

    free_mask: np.ndarray
    u_index: np.ndarray = field(init=False)
    o_index: np.ndarray = field(init=False)

    def __post_init__(self):
        self.free_mask = np.asarray(self.free_mask, dtype=bool)
        flat = self.free_mask.ravel()
        self.u_index = np.flatnonzero(flat)
        self.o_index = np.flatnonzero(~flat)

    @property
    def shape(self):
        return self.free_mask.shape

    @property
    def cells(self):
        n = self.free_mask.shape[1]
        return [(int(k // n), int(k % n)) for k in self.u_index]

    def _select(self, index):
        total = self.free_mask.size
        return sparse.csr_matrix(
            (np.ones(index.size), (index, np.arange(index.size))), shape=(total, index.size)
        )

    @property
    def Mu(self):
        return self._select(self.u_index)

    @property
    def Mo(self):
        return self._select(self.o_index)

    def combine(self, yu, y_full):
        """``M_u y^u + M_o y^o`` with ``y^o`` read from ``y_full``."""
        y = np.array(y_full, dtype=float, copy=True)
        y.reshape(-1)[self.u_index] = yu
        return y


def selection_from_mask(missing_mask, p: int = 0) -> SelectionMatrices:
    """Selection over missing cells, excluding the ``p`` initial conditioning months."""
    free = np.array(missing_mask, dtype=bool, copy=True)
    free[:p] = False
    return SelectionMatrices(free)


def _cell_labels(sel: SelectionMatrices):
    return [f"(t={t}, series={i})" for t, i in sel.cells]


class _BandMap:
    """Gather map from block-banded ``B' Sigma^-1 B`` to banded ``K_y``."""

    def __init__(self, sel: SelectionMatrices, p: int):
        big_t, n = sel.shape
        u = sel.u_index
        t_u, i_u = u // n, u % n
        m = u.size
        # bandwidth in y^u coordinates: free cells within p months of each other
        upper = np.searchsorted(u, (t_u + p + 1) * n) - 1
        bw = int(np.max(upper - np.arange(m), initial=0))
        self.bandwidth = bw
        a_idx, b_idx = [], []
        for off in range(bw + 1):
            a = np.arange(m - off)
            b = a + off
            ok = t_u[b] - t_u[a] <= p
            a_idx.append(a[ok])
            b_idx.append(b[ok])
        a = np.concatenate(a_idx)
        b = np.concatenate(b_idx)
        self.t = t_u[a]
        self.d = t_u[b] - t_u[a]
        self.i = i_u[a]
        self.j = i_u[b]
        self.target = (bw + a - b, b)
        self.m = m

    def assemble(self, blocks):
        ab = np.zeros((self.bandwidth + 1, self.m))
        ab[self.target] = blocks[self.t, self.d, self.i, self.j]
        return ab


def conditional_missing_distribution(sys: StackedSystem, sel: SelectionMatrices, y_obs,
                                     band_map=None) -> PrecisionGaussian:
    """Gaussian law of the selected cells given the rest, in precision form.

    ``y_obs`` is the full ``T x n`` panel; entries at selected cells are ignored.
    """
    if sel.u_index.size == 0:
        raise ParameterDomainError("no missing cells to draw")
    y0 = np.array(y_obs, dtype=float, copy=True).reshape(sys.big_t, sys.n)
    y0.reshape(-1)[sel.u_index] = 0.0
    if not np.all(np.isfinite(y0)):
        raise ParameterDomainError("conditioning cells must be finite")
    if band_map is None:
        band_map = _BandMap(sel, sys.p)
    ab = band_map.assemble(sys.precision_blocks())
    rhs = sys.transformed_rhs(y0).reshape(-1)[sel.u_index]
    dist = PrecisionGaussian(rhs, ab, labels=_cell_labels(sel))
    try:
        dist.cholesky
    except NotPositiveDefiniteError as exc:
        cell = sel.cells[exc.index - 1] if exc.index else None
        raise SingularityError(
            f"conditional precision of the missing data is singular at cell {cell}",
            index=exc.index, cell=cell,
        ) from exc
    return dist


@dataclass
class AggregationConstraints:
    """Intertemporal restrictions ``M_a y~ = ytilde`` on the latent-series grid.

    Columns of ``ma`` index the cells of the quarterly series stacked
    time-major: column ``t * len(latent_columns) + s``.
    """

    ma: sparse.csr_matrix
    ytilde: np.ndarray
    anchors: list
    latent_columns: list
    big_t: int
    dropped: list = field(default_factory=list)

    @property
    def k(self):
        return self.ytilde.shape[0]


def aggregation_constraints(quarterly_obs, big_t: int, latent_columns) -> AggregationConstraints:
    """Constraint rows from ``(panel_column, month_index, value)`` triples."""
    latent_columns = list(latent_columns)
    nq = len(latent_columns)
    pos = {c: s for s, c in enumerate(latent_columns)}
    rows, cols, vals, ytilde, anchors, dropped = [], [], [], [], [], []
    for col, t, value in quarterly_obs:
        if col not in pos:
            raise ParameterDomainError(f"column {col} is not a quarterly series")
        if not 0 <= t < big_t:
            raise ParameterDomainError(f"quarterly observation at month {t} is outside the grid")
        if t < 4:
            record = {"column": int(col), "month": int(t), "reason": "fewer than 4 earlier months"}
            log.info("dropping quarterly observation %s", record)
            dropped.append(record)
            continue
        r = len(ytilde)
        months = np.arange(t - 4, t + 1)
        rows.extend([r] * 5)
        cols.extend((months * nq + pos[col]).tolist())
        vals.extend(MM_WEIGHTS.tolist())
        ytilde.append(float(value))
        anchors.append((int(col), int(t)))
    ma = sparse.csr_matrix((vals, (rows, cols)), shape=(len(ytilde), big_t * nq))
    return AggregationConstraints(ma, np.asarray(ytilde, dtype=float), anchors,
                                  latent_columns, big_t, dropped)


def build_aggregation_constraints(panel) -> AggregationConstraints:
    return aggregation_constraints(panel.quarterly_obs, panel.n_months, panel.quarterly_columns)


def constraints_on_selection(agg: AggregationConstraints, sel: SelectionMatrices, y_full, p: int):
    """Restrict ``M_a`` to the drawn coordinates.

    Rows touching the fixed initial block (``t < p``) are dropped. Cells of a
    window that are conditioning values elsewhere move to the right-hand side.
    Returns ``(C, c, kept_rows)`` with ``C`` dense ``k' x dim(y^u)``.
    """
    big_t, n = sel.shape
    nq = len(agg.latent_columns)
    y_flat = np.asarray(y_full, dtype=float).reshape(-1)
    u_pos = np.full(big_t * n, -1)
    u_pos[sel.u_index] = np.arange(sel.u_index.size)
    coo = agg.ma.tocoo()
    month = coo.col // nq
    panel_col = np.asarray(agg.latent_columns)[coo.col % nq]
    cell = month * n + panel_col
    bad_rows = set(coo.row[month < p].tolist())
    kept = [r for r in range(agg.k) if r not in bad_rows]
    remap = {r: k for k, r in enumerate(kept)}
    cmat = np.zeros((len(kept), sel.u_index.size))
    cvec = agg.ytilde[kept].copy()
    for r, c_cell, v in zip(coo.row, cell, coo.data):
        if r in bad_rows:
            continue
        k = remap[r]
        if u_pos[c_cell] >= 0:
            cmat[k, u_pos[c_cell]] += v
        else:
            cvec[k] -= v * y_flat[c_cell]
    empty = ~np.any(cmat != 0, axis=1)
    if np.any(empty):
        # rows fully pinned by conditioning values carry no information about y^u
        keep = ~empty
        cmat, cvec = cmat[keep], cvec[keep]
        kept = [r for r, k in zip(kept, keep) if k]
    return cmat, cvec, kept


def draw_missing(sys: StackedSystem, sel: SelectionMatrices, agg, y_obs, rng, band_map=None):
    """Constrained draw of ``y^u``: unconstrained precision draw, then projection."""
    dist = conditional_missing_distribution(sys, sel, y_obs, band_map=band_map)
    u = precision_gaussian_sample(dist, rng)
    if agg is None:
        return u
    cmat, cvec, _ = constraints_on_selection(agg, sel, y_obs, sys.p)
    if cvec.size == 0:
        return u
    return ConstraintProjector(dist, cmat).project(u, cvec)


class MissingDataSampler:
    """Reusable step-1 sampler: gather map and constraint restriction cached."""

    def __init__(self, sel: SelectionMatrices, agg, y_obs, p: int):
        self.sel = sel
        self.p = p
        self.band_map = _BandMap(sel, p)
        if agg is not None:
            self.cmat, self.cvec, self.kept_rows = constraints_on_selection(agg, sel, y_obs, p)
        else:
            self.cmat = np.zeros((0, sel.u_index.size))
            self.cvec = np.zeros(0)
            self.kept_rows = []

    def distribution(self, sys: StackedSystem, y_obs) -> PrecisionGaussian:
        return conditional_missing_distribution(sys, self.sel, y_obs, band_map=self.band_map)

    def draw(self, sys: StackedSystem, y_obs, rng):
        dist = self.distribution(sys, y_obs)
        u = precision_gaussian_sample(dist, rng)
        if self.cvec.size == 0:
            return u
        return ConstraintProjector(dist, self.cmat).project(u, self.cvec)

    def constraint_residual(self, yu):
        if self.cvec.size == 0:
            return 0.0
        return float(np.max(np.abs(self.cmat @ yu - self.cvec)))
