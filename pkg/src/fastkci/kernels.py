"""Dense RBF kernel algebra shared by KCI and FastKCI.

All matrices here are plain ``float64`` numpy arrays wrapped in small frozen
dataclasses that carry the metadata the tests care about (bandwidth, whether
the matrix has been double-centered, and so on).
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.spatial.distance import pdist

from .errors import (
    AllSamplesIdentical,
    AlreadyCentered,
    DimensionMismatch,
    EigFailed,
    SolveFailed,
    TooFewSamples,
    ValidationError,
)

MEDIAN_MAX_ROWS = 5000
DEFAULT_RIDGE = 1e-3
DEFAULT_EIG_THRESHOLD = 1e-5
NEG_EIG_TOL = 1e-10


def as_data_matrix(a, name="data", allow_empty_columns=False):
    """Coerce ``a`` to an ``(n, d)`` float array and validate it.

    One-dimensional input is treated as a single column.
    """
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 1-d or 2-d, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise ValidationError(f"{name} has no rows")
    if arr.shape[1] < 1 and not allow_empty_columns:
        raise ValidationError(f"{name} has no columns")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains NaN or Inf")
    return arr


def standardize(a):
    """Zero-mean, unit-variance columns; constant columns become 0."""
    a = np.asarray(a, dtype=float)
    out = a - a.mean(axis=0)
    sd = out.std(axis=0)
    nz = sd > 0
    out[:, nz] /= sd[nz]
    out[:, ~nz] = 0.0
    return out


@dataclass(frozen=True)
class GramMatrix:
    entries: np.ndarray
    bandwidth: Optional[float] = None
    centered: bool = False

    @property
    def n(self):
        return self.entries.shape[0]


@dataclass(frozen=True)
class RidgeProjection:
    matrix: np.ndarray
    lam: float


@dataclass(frozen=True)
class EigSystem:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    threshold_used: float


def _entries(k):
    return k.entries if isinstance(k, GramMatrix) else np.asarray(k, dtype=float)


def _symmetrize(a):
    return 0.5 * (a + a.T)


def median_bandwidth(data, max_rows=MEDIAN_MAX_ROWS, rng=None):
    """Median pairwise Euclidean distance between rows.

    Parameters
    ----------
    data : array_like, shape (n, d)
    max_rows : int
        Rows are subsampled without replacement above this count.
    rng : numpy.random.Generator, optional
        Used only for subsampling; a fixed-seed generator by default so the
        heuristic stays deterministic.

    Returns
    -------
    float
        The median distance, or the smallest positive distance when more
        than half of the pairs coincide.
    """
    x = as_data_matrix(data)
    n = x.shape[0]
    if n < 2:
        raise TooFewSamples("median bandwidth needs at least 2 rows")
    if n > max_rows:
        rng = np.random.default_rng(0) if rng is None else rng
        x = x[np.sort(rng.choice(n, size=max_rows, replace=False))]
    d = pdist(x)
    sigma = float(np.median(d))
    if sigma > 0:
        return sigma
    pos = d[d > 0]
    if pos.size == 0:
        raise AllSamplesIdentical("all rows are identical; bandwidth undefined")
    return float(pos.min())


def squared_distances(x):
    """Pairwise squared distances via the Gram expansion, clamped at 0."""
    sq = np.einsum("ij,ij->i", x, x)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    d2 = _symmetrize(d2)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return d2


def rbf_gram(data, sigma):
    """Gaussian RBF Gram matrix ``exp(-||a - b||^2 / (2 sigma^2))``."""
    if not sigma > 0:
        raise ValidationError(f"bandwidth must be positive, got {sigma}")
    x = as_data_matrix(data)
    k = np.exp(squared_distances(x) / (-2.0 * sigma * sigma))
    return GramMatrix(k, float(sigma), centered=False)


def _double_center(k):
    r = k.mean(axis=1)
    c = k - r[:, None] - r[None, :] + r.mean()
    return _symmetrize(c)


def center_gram(k):
    """Return ``H K H`` with ``H = I - 11^T / n``."""
    if k.centered:
        raise AlreadyCentered("Gram matrix is already centered")
    return GramMatrix(_double_center(k.entries), k.bandwidth, centered=True)


def ridge_projection(kz_centered, lam=DEFAULT_RIDGE):
    """``lam * (Kz + lam I)^{-1}`` via a Cholesky solve."""
    if not lam > 0:
        raise ValidationError(f"ridge parameter must be positive, got {lam}")
    k = _entries(kz_centered)
    n = k.shape[0]
    a = k + lam * np.eye(n)
    try:
        factor = scipy.linalg.cho_factor(a, lower=True, check_finite=True)
        r = lam * scipy.linalg.cho_solve(factor, np.eye(n), check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolveFailed(f"regularized kernel system could not be solved: {exc}") from exc
    return RidgeProjection(_symmetrize(r), float(lam))


def identity_projection(n):
    """Projection used when there is nothing to condition on."""
    return RidgeProjection(np.eye(n), np.inf)


def residualize(k_centered, r):
    """``R K R`` for a centered Gram matrix."""
    k = _entries(k_centered)
    rm = r.matrix if isinstance(r, RidgeProjection) else np.asarray(r, dtype=float)
    if k.shape != rm.shape:
        raise DimensionMismatch(f"kernel {k.shape} vs projection {rm.shape}")
    out = _symmetrize(rm @ k @ rm)
    bw = k_centered.bandwidth if isinstance(k_centered, GramMatrix) else None
    return GramMatrix(out, bw, centered=True)


def _check_psd(w):
    top = w[0]
    tol = NEG_EIG_TOL * max(1.0, abs(top))
    if w[-1] < -tol:
        raise EigFailed(f"matrix is not PSD: eigenvalue {w[-1]:.3e}")
    return top


def truncated_eigvals(k, rel_threshold=DEFAULT_EIG_THRESHOLD):
    """Descending eigenvalues at or above ``rel_threshold * max``."""
    if not 0 < rel_threshold < 1:
        raise ValidationError("rel_threshold must lie in (0, 1)")
    try:
        w = scipy.linalg.eigvalsh(_entries(k), check_finite=True)[::-1]
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigFailed(str(exc)) from exc
    top = _check_psd(w)
    if top <= 0:
        return np.zeros(1)
    return np.maximum(w[w >= rel_threshold * top], 0.0)


def truncated_eig(k, rel_threshold=DEFAULT_EIG_THRESHOLD):
    """Leading eigenpairs of a symmetric PSD matrix.

    Keeps every eigenpair whose eigenvalue is at least
    ``rel_threshold * max_eigenvalue``. Negative eigenvalues larger in
    magnitude than roundoff raise :class:`EigFailed`.
    """
    if not 0 < rel_threshold < 1:
        raise ValidationError("rel_threshold must lie in (0, 1)")
    a = _entries(k)
    try:
        w, v = scipy.linalg.eigh(a, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigFailed(str(exc)) from exc
    w = w[::-1]
    v = v[:, ::-1]
    top = _check_psd(w)
    if top <= 0:
        return EigSystem(np.zeros(1), v[:, :1].copy(), 0.0)
    cut = rel_threshold * top
    keep = w >= cut
    return EigSystem(np.maximum(w[keep], 0.0), v[:, keep].copy(), float(cut))
