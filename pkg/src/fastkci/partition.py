"""Gaussian mixture-of-experts partitioning of the conditioning set.

A partition replicate draws mixture weights from a Dirichlet prior and
component means/covariances from a Normal-Inverse-Wishart prior centred on
the empirical moments of ``Z``, then assigns every sample to a component by
sampling from its responsibilities. Tiny clusters are folded into the
surviving ones so every block is large enough for a local kernel test.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from .errors import CholeskyFailed, DimensionMismatch, TooFewSamples, ValidationError
from .kernels import as_data_matrix, median_bandwidth, rbf_gram

MIN_CLUSTER_SIZE = 10
PSI_JITTER = 1e-6
LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class MixtureHyper:
    alpha: float
    mu0: np.ndarray
    lambda0: float
    psi: np.ndarray
    nu: float

    @property
    def dim(self):
        return self.mu0.shape[0]


@dataclass(frozen=True)
class MixtureParams:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    @property
    def n_components(self):
        return self.weights.shape[0]


@dataclass(frozen=True)
class PartitionAssignment:
    """Cluster labels for one replicate.

    Labels are 0-based and numbered by first appearance, so two
    assignments inducing the same partition compare equal.
    """

    labels: np.ndarray
    cluster_sizes: np.ndarray
    V_requested: int
    V_effective: int

    def blocks(self):
        return [np.flatnonzero(self.labels == v) for v in range(self.V_effective)]


def cholesky_with_jitter(a, retries=3):
    """Lower Cholesky factor, retrying with escalating diagonal jitter."""
    a = np.asarray(a, dtype=float)
    scale = max(float(np.mean(np.diag(a))), 1e-300) if a.size else 1.0
    jitter = 0.0
    for attempt in range(retries + 1):
        try:
            return np.linalg.cholesky(a + jitter * np.eye(a.shape[0]))
        except np.linalg.LinAlgError:
            jitter = scale * 1e-10 * 10**attempt
    raise CholeskyFailed(f"matrix of shape {a.shape} is not positive definite")


def fit_hyper(z, alpha=1.0, lambda0=1.0, nu=None):
    """Empirical NIW hyperparameters from the conditioning data."""
    z = as_data_matrix(z, "z", allow_empty_columns=True)
    n, d = z.shape
    if n < max(2 * d, 2):
        raise TooFewSamples(f"need at least {2 * d} rows to fit a {d}-d mixture prior")
    if d == 0:
        return MixtureHyper(alpha, np.zeros(0), lambda0, np.zeros((0, 0)), 2.0)
    mu0 = z.mean(axis=0)
    cov = np.atleast_2d(np.cov(z, rowvar=False, ddof=1))
    jitter = PSI_JITTER * max(np.trace(cov) / d, 1.0)
    psi = cov + jitter * np.eye(d)
    nu = d + 2.0 if nu is None else float(nu)
    if not nu > d - 1:
        raise ValidationError(f"nu must exceed d - 1 = {d - 1}")
    return MixtureHyper(float(alpha), mu0, float(lambda0), psi, nu)


def sample_inverse_wishart(psi, nu, rng, psi_chol=None):
    """One ``InverseWishart(psi, nu)`` draw and a square root of it.

    Uses the Bartlett factor ``A`` of a standard Wishart: if
    ``W = S A A^T S^T`` with ``S S^T = psi^{-1}`` then ``W^{-1}`` is the
    required draw. Taking ``S = L^{-T}`` for ``L = chol(psi)`` gives the
    square root ``L A^{-T}`` without inverting ``psi``.
    """
    d = psi.shape[0]
    lp = cholesky_with_jitter(psi) if psi_chol is None else psi_chol
    a = np.zeros((d, d))
    a[np.diag_indices(d)] = np.sqrt(rng.chisquare(nu - np.arange(d)))
    low = np.tril_indices(d, k=-1)
    a[low] = rng.standard_normal(len(low[0]))
    a_inv = scipy.linalg.solve_triangular(a, np.eye(d), lower=True)
    root = lp @ a_inv.T
    return root @ root.T, root


def sample_mixture(hyper, V, rng):
    """Draw mixture weights and ``V`` Gaussian components from the prior."""
    if V < 1:
        raise ValidationError("V must be at least 1")
    w = rng.dirichlet(np.full(V, hyper.alpha))
    w = np.maximum(w, np.finfo(float).tiny)
    w = w / w.sum()
    d = hyper.dim
    means = np.empty((V, d))
    covs = np.empty((V, d, d))
    if d:
        lp = cholesky_with_jitter(hyper.psi)
        for v in range(V):
            covs[v], root = sample_inverse_wishart(hyper.psi, hyper.nu, rng, lp)
            means[v] = hyper.mu0 + root @ rng.standard_normal(d) / np.sqrt(hyper.lambda0)
    return MixtureParams(w, means, covs)


def component_log_density(z, params):
    """``log pi_v + log N(z_i | mu_v, Sigma_v)`` as an ``(n, V)`` array."""
    n, d = z.shape
    if d != params.means.shape[1]:
        raise DimensionMismatch(f"z has {d} columns, mixture has {params.means.shape[1]}")
    out = np.tile(np.log(params.weights), (n, 1))
    if d == 0:
        return out
    for v in range(params.n_components):
        chol = cholesky_with_jitter(params.covariances[v])
        sol = scipy.linalg.solve_triangular(chol, (z - params.means[v]).T, lower=True)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        out[:, v] += -0.5 * (np.einsum("ij,ij->j", sol, sol) + logdet + d * LOG_2PI)
    return out


def draw_labels(log_dens, u):
    """Categorical draws from row-wise softmax responsibilities.

    ``u`` holds one uniform variate per row; the label is the first
    component whose cumulative responsibility exceeds it.
    """
    resp = np.exp(log_dens - logsumexp(log_dens, axis=1, keepdims=True))
    cum = np.cumsum(resp, axis=1)
    labels = np.sum(u[:, None] >= cum, axis=1)
    return np.minimum(labels, log_dens.shape[1] - 1)


def _canonical_component_order(params):
    # Sorting components makes the draw independent of how the prior
    # happened to order them.
    # lexsort treats its last key as primary: first mean coordinate first,
    # weights only break exact ties.
    d = params.means.shape[1]
    keys = [-params.weights] + [params.means[:, k] for k in reversed(range(d))]
    return np.lexsort(keys)


def relabel_by_first_appearance(labels):
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    mapping = np.empty(labels.max() + 1, dtype=int)
    mapping[np.unique(labels)[order]] = np.arange(order.size)
    return mapping[labels]


def assign_labels(z, params, rng, min_cluster_size=MIN_CLUSTER_SIZE):
    """Sample cluster labels and dissolve clusters below the size floor.

    Members of dissolved clusters move to the surviving cluster with the
    highest responsibility. The largest cluster always survives.
    """
    z = as_data_matrix(z, "z", allow_empty_columns=True)
    n = z.shape[0]
    order = _canonical_component_order(params)
    log_dens = component_log_density(z, params)[:, order]
    labels = draw_labels(log_dens, rng.random(n))
    V = params.n_components
    sizes = np.bincount(labels, minlength=V)
    alive = sizes >= min_cluster_size
    alive[np.argmax(sizes)] = True
    if not alive.all():
        moved = ~alive[labels]
        masked = np.where(alive[None, :], log_dens[moved], -np.inf)
        labels[moved] = np.argmax(masked, axis=1)
    labels = relabel_by_first_appearance(labels)
    sizes = np.bincount(labels)
    return PartitionAssignment(labels, sizes, V, int(sizes.size))


def gp_log_marginal(columns, cov):
    """Sum over columns of ``log N(col; 0, cov)``."""
    columns = np.asarray(columns, dtype=float).reshape(cov.shape[0], -1)
    chol = cholesky_with_jitter(cov)
    sol = scipy.linalg.solve_triangular(chol, columns, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    n, m = columns.shape
    return float(-0.5 * np.sum(sol * sol) - 0.5 * m * (logdet + n * LOG_2PI))


def cluster_log_likelihood(x_v, y_v, z_v, lam):
    """GP log marginal likelihood of the X and Y columns given Z in one block.

    Each column is modelled independently as ``N(0, K_Z + lam I)`` with
    ``K_Z`` the RBF Gram of the block's Z at its own median bandwidth.
    """
    x_v = as_data_matrix(x_v, "x")
    y_v = as_data_matrix(y_v, "y")
    z_v = as_data_matrix(z_v, "z", allow_empty_columns=True)
    n = x_v.shape[0]
    if z_v.shape[1] == 0 or np.all(z_v == z_v[0]):
        kz = np.zeros((n, n))
    else:
        kz = rbf_gram(z_v, median_bandwidth(z_v)).entries
    cov = kz + lam * np.eye(n)
    return gp_log_marginal(np.hstack([x_v, y_v]), cov)
