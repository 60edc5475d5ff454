"""PC-stable skeleton search with a pluggable conditional independence test."""

from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Dict, FrozenSet, Set, Tuple


from .errors import CITestFailed, NodeCountMismatch, ValidationError
from .kernels import as_data_matrix

DEFAULT_MAX_COND = 3


@dataclass
class Skeleton:
    num_nodes: int
    edges: Set[FrozenSet[int]]
    sepsets: Dict[FrozenSet[int], Tuple[int, ...]] = field(default_factory=dict)
    n_tests: int = 0

    def has_edge(self, i, j):
        return frozenset((i, j)) in self.edges

    def neighbors(self, i):
        return sorted(next(iter(e - {i})) for e in self.edges if i in e)


@dataclass(frozen=True)
class EdgeMetrics:
    precision: float
    recall: float
    f1: float
    true_positive: int
    false_positive: int
    false_negative: int


def _p_value(result):
    return float(getattr(result, "p_value", result))


def pc_skeleton(data, ci_test: Callable, alpha=0.05, max_cond_size=DEFAULT_MAX_COND):
    """Estimate the undirected skeleton with the order-independent PC search.

    Parameters
    ----------
    data : array_like, shape (n, m)
    ci_test : callable
        ``ci_test(x, y, z)`` with column blocks ``(n, 1)``, ``(n, 1)`` and
        ``(n, k)``; ``k`` is 0 at the first level. Returns a p-value or an
        object with a ``p_value`` attribute.
    alpha : float
        An edge is removed as soon as some test has ``p > alpha``.
    max_cond_size : int
        Largest conditioning set tried.

    Returns
    -------
    Skeleton
    """
    data = as_data_matrix(data)
    n, m = data.shape
    if m < 2:
        raise ValidationError("need at least two variables")
    if not 0 < alpha < 1:
        raise ValidationError("alpha must lie in (0, 1)")
    adj = {i: set(range(m)) - {i} for i in range(m)}
    sepsets = {}
    n_tests = 0
    for level in range(max_cond_size + 1):
        snapshot = {i: sorted(a) for i, a in adj.items()}
        if all(len(a) - 1 < level for a in snapshot.values()):
            break
        for i, j in combinations(range(m), 2):
            if j not in adj[i]:
                continue
            candidates = []
            for a, b in ((i, j), (j, i)):
                pool = [k for k in snapshot[a] if k != b]
                for s in combinations(pool, level):
                    if s not in candidates:
                        candidates.append(s)
            for s in candidates:
                z = data[:, list(s)]
                try:
                    result = ci_test(data[:, [i]], data[:, [j]], z)
                except Exception as exc:
                    raise CITestFailed(f"CI test failed for ({i}, {j}) | {s}: {exc}") from exc
                n_tests += 1
                if _p_value(result) > alpha:
                    adj[i].discard(j)
                    adj[j].discard(i)
                    sepsets[frozenset((i, j))] = s
                    break
    edges = {frozenset((i, j)) for i in range(m) for j in adj[i] if i < j}
    return Skeleton(m, edges, sepsets, n_tests)


def score_edges(estimated, truth):
    """Precision, recall and F1 of the estimated undirected edge set."""
    if estimated.num_nodes != truth.num_nodes:
        raise NodeCountMismatch(f"{estimated.num_nodes} vs {truth.num_nodes} nodes")
    est = set(estimated.edges)
    true = truth.undirected_edges()
    tp = len(est & true)
    fp = len(est - true)
    fn = len(true - est)
    if est:
        precision = tp / (tp + fp)
    else:
        precision = 1.0 if not true else 0.0
    recall = tp / (tp + fn) if true else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return EdgeMetrics(precision, recall, f1, tp, fp, fn)
