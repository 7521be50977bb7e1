"""Gaussian draws in precision form, linearly constrained draws, inverse Wishart."""

import numpy as np
from scipy import linalg, sparse
from scipy.linalg import lapack

from ..errors import (
    ConstraintRankError,
    NotPositiveDefiniteError,
    ParameterDomainError,
)


def dense_to_upper_banded(a, bandwidth):
    """Upper banded storage: ``ab[u + i - j, j] = a[i, j]`` for ``i <= j``."""
    m = a.shape[0]
    ab = np.zeros((bandwidth + 1, m))
    for d in range(bandwidth + 1):
        ab[bandwidth - d, d:] = np.diagonal(a, d)
    return ab


def upper_banded_to_dense(ab):
    u, m = ab.shape[0] - 1, ab.shape[1]
    a = np.zeros((m, m))
    for d in range(u + 1):
        idx = np.arange(m - d)
        a[idx, idx + d] = ab[u - d, d:]
        a[idx + d, idx] = ab[u - d, d:]
    return a


def matrix_bandwidth(a) -> int:
    """Largest ``|i - j|`` over nonzero entries (dense or sparse)."""
    if sparse.issparse(a):
        coo = a.tocoo()
        nz = coo.data != 0
        return int(np.max(np.abs(coo.row[nz] - coo.col[nz]), initial=0))
    i, j = np.nonzero(a)
    return int(np.max(np.abs(i - j), initial=0))


class PrecisionGaussian:
    """``N(K^-1 mean_rhs, K^-1)`` with ``K`` kept in upper banded storage.

    The Cholesky factor ``K = U'U`` is computed once on first use. ``labels``
    optionally names each coordinate so factorization failures can point at
    the offending one.
    """

    def __init__(self, mean_rhs, precision_ab, labels=None):
        self.mean_rhs = np.asarray(mean_rhs, dtype=float)
        self.precision_ab = np.asarray(precision_ab, dtype=float)
        if self.precision_ab.ndim != 2 or self.precision_ab.shape[1] != self.mean_rhs.shape[0]:
            raise ParameterDomainError(
                f"banded precision {self.precision_ab.shape} does not match "
                f"mean_rhs of length {self.mean_rhs.shape[0]}"
            )
        self.labels = labels
        self._chol = None
        self._mean = None

    @classmethod
    def from_matrix(cls, precision, mean_rhs, labels=None, bandwidth=None):
        if bandwidth is None:
            bandwidth = matrix_bandwidth(precision)
        if sparse.issparse(precision):
            precision = sparse.dia_matrix(precision)
            m = precision.shape[0]
            ab = np.zeros((bandwidth + 1, m))
            for off, row in zip(precision.offsets, precision.data):
                if 0 <= off <= bandwidth:
                    ab[bandwidth - off, off:] += row[off:]
            return cls(mean_rhs, ab, labels)
        precision = np.asarray(precision, dtype=float)
        return cls(mean_rhs, dense_to_upper_banded(precision, bandwidth), labels)

    @property
    def dim(self) -> int:
        return self.mean_rhs.shape[0]

    @property
    def bandwidth(self) -> int:
        return self.precision_ab.shape[0] - 1

    def dense_precision(self):
        return upper_banded_to_dense(self.precision_ab)

    @property
    def cholesky(self):
        if self._chol is None:
            chol, info = lapack.dpbtrf(self.precision_ab, lower=0)
            if info > 0:
                label = self.labels[info - 1] if self.labels is not None else None
                raise NotPositiveDefiniteError(
                    f"precision is not positive definite: leading minor {info} fails"
                    + (f" (coordinate {label})" if label is not None else ""),
                    index=int(info),
                )
            if info < 0:
                raise ParameterDomainError(f"invalid banded precision (LAPACK info={info})")
            self._chol = chol
        return self._chol

    def solve(self, rhs):
        """``K^-1 rhs`` for a vector or a matrix of column right-hand sides."""
        x, info = lapack.dpbtrs(self.cholesky, rhs, lower=0)
        if info != 0:
            raise NotPositiveDefiniteError(f"banded solve failed (LAPACK info={info})")
        return x

    @property
    def mean(self):
        if self._mean is None:
            self._mean = self.solve(self.mean_rhs)
        return self._mean

    def whitened_to_sample(self, z):
        """Map ``z ~ N(0, I)`` to ``mean + U^-1 z``; columns of a 2-D ``z`` map independently."""
        x, info = lapack.dtbtrs(self.cholesky, z, uplo="U", trans="N", diag="N")
        if info != 0:
            raise NotPositiveDefiniteError(f"triangular solve failed (LAPACK info={info})")
        return (self.mean[:, None] + x) if x.ndim == 2 else self.mean + x


def precision_gaussian_sample(dist: PrecisionGaussian, rng: np.random.Generator):
    """One draw from ``N(K^-1 mean_rhs, K^-1)``; cost linear in the dimension."""
    z = rng.standard_normal(dist.dim)
    return dist.whitened_to_sample(z)


def constrained_gaussian_sample(dist: PrecisionGaussian, constraints, rng: np.random.Generator):
    """Draw from the Gaussian ``dist`` conditioned on ``C x = c``.

    An unconstrained draw ``u`` is moved onto the constraint set with
    ``u + K^-1 C' (C K^-1 C')^-1 (c - C u)``, followed by one refinement step
    of the same correction to remove rounding drift.
    """
    cmat, cvec = constraints
    cvec = np.atleast_1d(np.asarray(cvec, dtype=float))
    u = precision_gaussian_sample(dist, rng)
    k = cvec.shape[0]
    if k == 0:
        return u
    projector = ConstraintProjector(dist, cmat)
    return projector.project(u, cvec)


class ConstraintProjector:
    """Precomputed ``K^-1 C'`` and the Cholesky factor of ``C K^-1 C'``."""

    def __init__(self, dist: PrecisionGaussian, cmat):
        if sparse.issparse(cmat):
            cmat = cmat.toarray()
        cmat = np.atleast_2d(np.asarray(cmat, dtype=float))
        k, m = cmat.shape
        if m != dist.dim:
            raise ParameterDomainError(f"constraint matrix has {m} columns, expected {dist.dim}")
        if k > m:
            raise ConstraintRankError(f"{k} constraints on {m} coordinates cannot have full row rank")
        self.cmat = cmat
        self.kinv_ct = dist.solve(np.asfortranarray(cmat.T))
        gram = cmat @ self.kinv_ct
        gram = 0.5 * (gram + gram.T)
        try:
            self.gram_chol = linalg.cho_factor(gram, lower=True)
        except linalg.LinAlgError as exc:
            raise ConstraintRankError("constraint matrix is not of full row rank") from exc
        d = np.diag(self.gram_chol[0])
        if d.min() ** 2 <= 1e-12 * d.max() ** 2:
            raise ConstraintRankError("constraint matrix is numerically rank deficient")

    def project(self, u, cvec):
        y = u + self.kinv_ct @ linalg.cho_solve(self.gram_chol, cvec - self.cmat @ u)
        return y + self.kinv_ct @ linalg.cho_solve(self.gram_chol, cvec - self.cmat @ y)


def inverse_wishart_sample(df, scale, rng: np.random.Generator, size=None):
    """Draw ``Sigma ~ IW(df, scale)``, i.e. ``Sigma^-1 ~ W(df, scale^-1)``.

    Bartlett decomposition of the Wishart draw; real-valued ``df > n - 1``.
    With ``size`` a stack of ``size`` independent draws is returned.
    """
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    n = scale.shape[0]
    if not df > n - 1:
        raise ParameterDomainError(f"inverse Wishart needs df > n - 1 = {n - 1}, got {df}")
    try:
        prec_chol = linalg.cholesky(linalg.inv(scale), lower=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("inverse Wishart scale is not positive definite") from exc
    m = 1 if size is None else int(size)
    a = np.zeros((m, n, n))
    a[:, np.arange(n), np.arange(n)] = np.sqrt(rng.chisquare(df - np.arange(n), size=(m, n)))
    il = np.tril_indices(n, -1)
    a[:, il[0], il[1]] = rng.standard_normal((m, len(il[0])))
    minv = np.linalg.inv(prec_chol @ a)
    sigma = np.swapaxes(minv, 1, 2) @ minv
    sigma = 0.5 * (sigma + np.swapaxes(sigma, 1, 2))
    return sigma[0] if size is None else sigma
