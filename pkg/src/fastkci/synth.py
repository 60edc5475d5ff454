"""Seeded data generators for the calibration, power and discovery experiments.

Every generator takes an explicit ``numpy.random.Generator`` and is a pure
function of its arguments and that stream.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import CholeskyFailed, ValidationError
from .kernels import median_bandwidth, rbf_gram, standardize

SHARED_NOISE = "shared_noise"
DIRECT_EDGE = "direct_edge"

BASIS = ("linear", "cubic", "tanh")
COVERAGE_NOISE_STD = 0.5
MEAN_BOX = 5.0

NUM_NODES = 6
SETTING_A_EDGE_PROB = 0.3
SETTING_A_NOISE_STD = 0.3
SETTING_B_EDGE_PROB = 0.5
SETTING_B_FUNCS = ("sin", "cos", "tanh", "sigmoid", "square")
MIN_DAG_SAMPLES = 50

_BASIS_FNS = {
    "linear": lambda t: t,
    "cubic": lambda t: t**3,
    "tanh": np.tanh,
}

_LINKS = {
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "sigmoid": lambda t: 1.0 / (1.0 + np.exp(-t)),
    "square": np.square,
}


@dataclass(frozen=True)
class CoverageSpec:
    n: int = 1200
    D: int = 1
    V_true: int = 1
    seed: int = 42

    def __post_init__(self):
        if self.D < 1 or self.V_true < 1 or self.n < 2:
            raise ValidationError(f"invalid coverage spec {self}")


@dataclass(frozen=True)
class PowerSpec:
    """Violation of conditional independence on top of a coverage design.

    With ``mode=DIRECT_EDGE`` and ``calibrated=True`` the edge coefficient
    is chosen per dataset so that ``std(c X) = std(Y) / 3``; otherwise
    ``sigma_vio`` is used as the coefficient directly.
    """

    base: CoverageSpec
    sigma_vio: float = 0.0
    mode: str = SHARED_NOISE
    calibrated: bool = False

    def __post_init__(self):
        if self.sigma_vio < 0:
            raise ValidationError("sigma_vio must be non-negative")
        if self.mode not in (SHARED_NOISE, DIRECT_EDGE):
            raise ValidationError(f"unknown violation mode {self.mode!r}")


@dataclass
class GroundTruthDag:
    num_nodes: int
    adjacency: np.ndarray
    edge_metadata: dict = field(default_factory=dict)

    def undirected_edges(self):
        i, j = np.nonzero(self.adjacency | self.adjacency.T)
        return {frozenset((a, b)) for a, b in zip(i.tolist(), j.tolist()) if a < b}

    def parents(self, j):
        return [int(i) for i in np.flatnonzero(self.adjacency[:, j])]


@dataclass
class Dataset:
    x: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    node_data: Optional[np.ndarray] = None
    truth: Optional[GroundTruthDag] = None

    @property
    def n(self):
        return (self.node_data if self.node_data is not None else self.x).shape[0]

    def columns(self):
        """Column names and the stacked matrix, as written to CSV."""
        if self.node_data is not None:
            names = [f"X{i + 1}" for i in range(self.node_data.shape[1])]
            return names, self.node_data
        parts, names = [], []
        for prefix, arr in (("x", self.x), ("y", self.y), ("z", self.z)):
            arr = np.asarray(arr).reshape(self.n, -1)
            parts.append(arr)
            names += [f"{prefix}{k}" for k in range(arr.shape[1])]
        return names, np.hstack(parts)

    def to_csv(self, path):
        names, data = self.columns()
        np.savetxt(path, data, delimiter=",", header=",".join(names), comments="", fmt="%.17g")


def _random_basis_mixture(rng, basis):
    coef = rng.dirichlet(np.ones(len(basis)))
    fns = [_BASIS_FNS[b] for b in basis]
    return lambda t: sum(c * f(t) for c, f in zip(coef, fns))


def _mixture_z(spec, rng):
    means = rng.uniform(-MEAN_BOX, MEAN_BOX, size=(spec.V_true, spec.D))
    labels = rng.integers(spec.V_true, size=spec.n)
    return means[labels] + rng.standard_normal((spec.n, spec.D))


def _confounded(zs, rng, basis, noise_std):
    # Inputs to every random function are standardized so that cubic terms
    # stay on a comparable scale across dimensions and mixture layouts.
    inner = sum(_random_basis_mixture(rng, basis)(zs[:, i]) for i in range(zs.shape[1]))
    inner = standardize(inner[:, None])[:, 0]
    eps = noise_std * rng.standard_normal(zs.shape[0])
    g = _random_basis_mixture(rng, basis)
    return g(inner + eps)


def gen_coverage(spec, rng, basis=BASIS, noise_std=COVERAGE_NOISE_STD):
    """Data with ``X _||_ Y | Z``: ``X, Y = g(sum_i f_i(Z_i) + eps)``.

    ``Z`` comes from an equal-weight mixture of ``spec.V_true`` unit-covariance
    Gaussians with means uniform in ``[-5, 5]^D``. Each ``f_i`` and ``g`` is a
    Dirichlet-weighted combination of the functions in ``basis``.
    """
    z = _mixture_z(spec, rng)
    zs = standardize(z)
    x = _confounded(zs, rng, basis, noise_std)
    y = _confounded(zs, rng, basis, noise_std)
    return Dataset(x=x[:, None], y=y[:, None], z=z)


def gen_power(spec, rng):
    """Coverage data plus a violation of conditional independence."""
    ds = gen_coverage(spec.base, rng)
    nu = rng.standard_normal(spec.base.n)[:, None]
    if spec.mode == SHARED_NOISE:
        ds.x = ds.x + spec.sigma_vio * nu
        ds.y = ds.y + spec.sigma_vio * nu
    else:
        if spec.calibrated:
            c = ds.y.std() / (3.0 * ds.x.std())
        else:
            c = spec.sigma_vio
        ds.y = ds.y + c * ds.x
    return ds


def _sample_edges(rng, p):
    upper = np.triu(rng.random((NUM_NODES, NUM_NODES)) < p, k=1)
    return upper


def _cholesky_jitter(k, tries=4):
    jitter = 0.0
    scale = np.mean(np.diag(k))
    for attempt in range(tries):
        try:
            return np.linalg.cholesky(k + jitter * np.eye(k.shape[0]))
        except np.linalg.LinAlgError:
            jitter = scale * 1e-8 * 10**attempt
    raise CholeskyFailed("covariance is not positive definite after jitter")


def gen_dag_setting_a(n, rng, noise_std=SETTING_A_NOISE_STD):
    """Six-node DAG with Gaussian-process conditionals.

    Each child is drawn from a GP whose mean is a random linear combination
    of its parents and whose covariance is an RBF kernel on the parents plus
    white noise. Sampling uses a dense ``n x n`` Cholesky factor per node,
    which costs ``O(n^3)``.
    """
    if n < MIN_DAG_SAMPLES:
        raise ValidationError(f"DAG generators need n >= {MIN_DAG_SAMPLES}")
    adj = _sample_edges(rng, SETTING_A_EDGE_PROB)
    data = np.empty((n, NUM_NODES))
    meta = {}
    for j in range(NUM_NODES):
        pa = np.flatnonzero(adj[:, j])
        if pa.size == 0:
            data[:, j] = rng.standard_normal(n)
            continue
        w = rng.uniform(-2.0, 2.0, size=pa.size)
        for i, wi in zip(pa, w):
            meta[(int(i), j)] = {"kind": "gp_linear_mean", "weight": float(wi)}
        parents = data[:, pa]
        k = rbf_gram(parents, median_bandwidth(parents)).entries
        k[np.diag_indices(n)] += noise_std**2
        chol = _cholesky_jitter(k)
        data[:, j] = parents @ w + chol @ rng.standard_normal(n)
    return Dataset(node_data=data, truth=GroundTruthDag(NUM_NODES, adj, meta))


def gen_dag_setting_b(n, sigma, rng, force_linear=False):
    """Six-node DAG with mixed linear / nonlinear additive links.

    Each edge is linear (weight uniform on ``[-1.5, -0.5] U [0.5, 1.5]``) with
    probability 1/2, otherwise one of sin, cos, tanh, sigmoid or square.
    Every node receives additive ``N(0, sigma^2)`` noise.
    """
    if n < MIN_DAG_SAMPLES:
        raise ValidationError(f"DAG generators need n >= {MIN_DAG_SAMPLES}")
    if not sigma > 0:
        raise ValidationError("sigma must be positive")
    adj = _sample_edges(rng, SETTING_B_EDGE_PROB)
    data = np.empty((n, NUM_NODES))
    meta = {}
    for j in range(NUM_NODES):
        value = np.zeros(n)
        for i in np.flatnonzero(adj[:, j]):
            if force_linear or rng.random() < 0.5:
                w = rng.uniform(0.5, 1.5) * rng.choice((-1.0, 1.0))
                meta[(int(i), j)] = {"kind": "linear", "weight": float(w)}
                value += w * data[:, i]
            else:
                name = SETTING_B_FUNCS[rng.integers(len(SETTING_B_FUNCS))]
                meta[(int(i), j)] = {"kind": name, "weight": 1.0}
                value += _LINKS[name](data[:, i])
        data[:, j] = value + sigma * rng.standard_normal(n)
    return Dataset(node_data=data, truth=GroundTruthDag(NUM_NODES, adj, meta))
