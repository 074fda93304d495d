"""Dominant-set machinery over a symmetric similarity matrix.

Two routes live here. The combinatorial one (``average_weighted_degree``,
``relative_similarity``, ``subset_weight``, ``total_weight``,
``is_dominant``) follows the recursive vertex-weight definition and is
exponential in the subset size, so it is capped and meant as an oracle.
The production route is replicator dynamics (``replicator_step``,
``run_replicator``) plus peel-off extraction (``peel_clustering``).
"""

from __future__ import annotations

import itertools
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import (
    DegenerateGraphError,
    DomainError,
    OracleSizeError,
    PreconditionError,
)

ORACLE_CAP = 12
DEFAULT_TH = 1e-6
DEFAULT_DELTA = 1e-5
DEFAULT_MAX_ITER = 10_000
DEFAULT_PAYOFF_TOL = 1e-4
# enough for a 1e-4 relative drift to cross delta from the far end of the simplex
DEFAULT_SETTLE_ITER = 200_000


def check_similarity(w, atol: float = 1e-12) -> np.ndarray:
    """Validate a similarity matrix and return it as a float64 array.

    Raises DomainError unless ``w`` is square, symmetric, has a zero
    diagonal and entries in [0, 1].
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise DomainError(f"similarity matrix must be square, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise DomainError("similarity matrix has non-finite entries")
    if not np.allclose(w, w.T, rtol=0.0, atol=atol):
        raise DomainError("similarity matrix is not symmetric")
    if np.any(np.abs(np.diag(w)) > atol):
        raise DomainError("similarity matrix must have a zero diagonal")
    if w.size and (w.min() < -atol or w.max() > 1.0 + atol):
        raise DomainError("similarity entries must lie in [0, 1]")
    return w


def _as_subset(s: Iterable[int], n: int) -> frozenset:
    s = frozenset(int(v) for v in s)
    if not s:
        raise DomainError("vertex subset must be non-empty")
    bad = [v for v in s if v < 0 or v >= n]
    if bad:
        raise DomainError(f"vertices {sorted(bad)} out of range for n={n}")
    return s


def average_weighted_degree(w, s: Iterable[int], i: int) -> float:
    """Mean similarity of ``i`` to the members of ``s`` (self term included, it is zero)."""
    w = np.asarray(w, dtype=np.float64)
    s = _as_subset(s, w.shape[0])
    if i not in s:
        raise DomainError(f"vertex {i} is not in the subset")
    idx = sorted(s)
    return float(w[i, idx].sum() / len(idx))


def relative_similarity(w, s: Iterable[int], i: int, j: int) -> float:
    """Similarity of outside vertex ``j`` to ``i`` relative to i's mean degree within ``s``."""
    w = np.asarray(w, dtype=np.float64)
    s = _as_subset(s, w.shape[0])
    if i not in s:
        raise DomainError(f"vertex {i} is not in the subset")
    if j in s:
        raise DomainError(f"vertex {j} must lie outside the subset")
    return float(w[i, j]) - average_weighted_degree(w, s, i)


class DominanceOracle:
    """Memoized evaluation of the recursive subset weights a_S(i).

    The recursion touches every subset of ``S``, hence the size cap.
    One instance may be reused for many queries on the same matrix.
    """

    def __init__(self, w, cap: int = ORACLE_CAP):
        self.w = np.asarray(w, dtype=np.float64)
        self.n = self.w.shape[0]
        self.cap = cap
        self._cache: dict[tuple[frozenset, int], float] = {}

    def _check_size(self, size: int) -> None:
        if size > self.cap:
            raise OracleSizeError(f"subset of size {size} exceeds oracle cap {self.cap}")

    def _phi(self, s: frozenset, i: int, j: int) -> float:
        # phi_S(i, j) with i in S and j outside S
        w = self.w
        return w[i, j] - sum(w[i, k] for k in s) / len(s)

    def weight(self, s: Iterable[int], i: int) -> float:
        s = _as_subset(s, self.n)
        if i not in s:
            raise DomainError(f"vertex {i} is not in the subset")
        self._check_size(len(s))
        return self._weight(s, i)

    def _weight(self, s: frozenset, i: int) -> float:
        if len(s) == 1:
            return 1.0
        key = (s, i)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        rest = s - {i}
        val = 0.0
        for j in rest:
            val += self._phi(rest, j, i) * self._weight(rest, j)
        self._cache[key] = val
        return val

    def total(self, s: Iterable[int]) -> float:
        s = _as_subset(s, self.n)
        self._check_size(len(s))
        return sum(self._weight(s, i) for i in s)

    def check_positive_subsets(self, s: Iterable[int], tol: float = 0.0, proper: bool = False) -> None:
        """Raise PreconditionError if some non-empty U within ``s`` has A(U) <= tol.

        With ``proper`` the set ``s`` itself is not checked.
        """
        s = sorted(_as_subset(s, self.n))
        self._check_size(len(s))
        for r in range(1, len(s) + (0 if proper else 1)):
            for u in itertools.combinations(s, r):
                total = sum(self._weight(frozenset(u), i) for i in u)
                if total <= tol:
                    raise PreconditionError(
                        f"A(U) = {total:.3g} is not positive for U = {list(u)}", subset=list(u)
                    )

    def is_dominant(self, s: Iterable[int], tol: float = 0.0) -> bool:
        s = _as_subset(s, self.n)
        self._check_size(len(s) + (1 if len(s) < self.n else 0))
        # A(S) <= 0 already fails the membership condition, so only proper subsets are checked
        self.check_positive_subsets(s, tol, proper=True)
        if any(self._weight(s, i) <= tol for i in s):
            return False
        for i in range(self.n):
            if i not in s and self._weight(s | {i}, i) >= -tol:
                return False
        return True


def subset_weight(w, s: Iterable[int], i: int, cap: int = ORACLE_CAP) -> float:
    """Recursive weight a_S(i) of vertex ``i`` within ``s`` (oracle use only)."""
    return DominanceOracle(w, cap).weight(s, i)


def total_weight(w, s: Iterable[int], cap: int = ORACLE_CAP) -> float:
    """Total weight A(S), the sum of a_S(i) over ``s``."""
    return DominanceOracle(w, cap).total(s)


def is_dominant(w, s: Iterable[int], tol: float = 0.0, cap: int = ORACLE_CAP) -> bool:
    """Exhaustive dominance test for ``s``.

    True iff every member has weight above ``tol`` and every outsider
    would enter with weight below ``-tol``. Raises PreconditionError
    when some non-empty proper subset of ``s`` has non-positive total
    weight, since the dominance definition does not cover that case.
    """
    return DominanceOracle(w, cap).is_dominant(s, tol)


def replicator_step(w, x) -> np.ndarray:
    """One discrete replicator update x_i <- x_i (Wx)_i / x'Wx."""
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    wx = w @ x
    q = float(x @ wx)
    if not q > 0.0:
        raise DegenerateGraphError("x'Wx is not positive; no similarity left to exploit")
    x_new = x * wx / q
    # the update preserves the simplex analytically; renormalize away rounding drift
    return x_new / x_new.sum()


def iterate_replicator(w, x0, th: float = DEFAULT_TH, max_iter: int = DEFAULT_MAX_ITER) -> Iterator[np.ndarray]:
    """Yield x(0), x(1), ... until the L-infinity step falls to ``th`` or ``max_iter`` steps."""
    if not th > 0:
        raise DomainError("convergence threshold must be positive")
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x0, dtype=np.float64)
    yield x
    for _ in range(max_iter):
        x_new = replicator_step(w, x)
        yield x_new
        if np.max(np.abs(x_new - x)) <= th:
            return
        x = x_new


def run_replicator(w, x0, th: float = DEFAULT_TH, max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """Run replicator dynamics from ``x0`` and return the final iterate."""
    if not th > 0:
        raise DomainError("convergence threshold must be positive")
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x0, dtype=np.float64)
    for _ in range(max_iter):
        wx = w @ x
        q = float(x @ wx)
        if not q > 0.0:
            raise DegenerateGraphError("x'Wx is not positive; no similarity left to exploit")
        x_new = x * wx / q
        x_new /= x_new.sum()
        if np.max(np.abs(x_new - x)) <= th:
            return x_new
        x = x_new
    return x


def extract_support(x, delta: float = DEFAULT_DELTA) -> np.ndarray:
    """Indices with weight above ``delta``; falls back to the (lowest) argmax."""
    x = np.asarray(x, dtype=np.float64)
    idx = np.flatnonzero(x > delta)
    if idx.size == 0:
        idx = np.array([int(np.argmax(x))])
    return idx


def settle_support(
    w,
    x,
    delta: float = DEFAULT_DELTA,
    payoff_tol: float = DEFAULT_PAYOFF_TOL,
    max_iter: int = DEFAULT_SETTLE_ITER,
) -> np.ndarray:
    """Keep iterating while a vertex is still crossing the ``delta`` line.

    A vertex whose payoff (Wx)_i trails x'Wx by more than ``payoff_tol``
    (relative) shrinks geometrically and is not in the support of the
    limit; one ahead by that margin grows into it. Either kind of slow
    drift can sit on the wrong side of ``delta`` when the step criterion
    fires. Iteration stops once every vertex above ``delta`` holds its
    payoff and every positive vertex below it is not gaining.
    """
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    for _ in range(max_iter):
        wx = w @ x
        q = float(x @ wx)
        if not q > 0.0:
            raise DegenerateGraphError("x'Wx is not positive; no similarity left to exploit")
        ratio = wx / q
        above = x > delta
        leaving = above & (ratio < 1.0 - payoff_tol)
        joining = ~above & (x > 0) & (ratio > 1.0 + payoff_tol)
        if not (leaving.any() or joining.any()):
            break
        x = x * ratio
        x /= x.sum()
    return x


def polish_support(w, support, max_cond: float = 1e10) -> np.ndarray:
    """Drop support vertices whose exact equilibrium weight is not positive.

    On a candidate support S the replicator equilibrium solves
    ``W_S x = lam * 1`` with ``sum(x) = 1``, and x_i has the sign of the
    vertex's dominance weight. A vertex with a tiny negative weight decays
    too slowly to leave the support numerically; solving the system
    exposes it. The most negative vertex is dropped (lowest index on
    ties) and the system re-solved. Ill-conditioned systems, e.g. from
    duplicate rows, are left untouched.
    """
    support = np.asarray(support)
    while support.size > 1:
        k = support.size
        a = np.zeros((k + 1, k + 1))
        a[:k, :k] = w[np.ix_(support, support)]
        a[:k, k] = -1.0
        a[k, :k] = 1.0
        if not np.linalg.cond(a) < max_cond:
            break
        sol = np.linalg.solve(a, np.r_[np.zeros(k), 1.0])[:k]
        worst = int(np.argmin(sol))
        if sol[worst] > 0:
            break
        support = np.delete(support, worst)
    return support


def connected_support(w, x, support) -> np.ndarray:
    """Indices of the most cohesive connected piece of ``support``.

    A dominant set induces a connected subgraph. A disconnected support
    arises only from an exactly symmetric start (e.g. identical
    components), where the dynamics sit on a saddle. Each component is
    scored by its own game value x_c'Wx_c / (sum x_c)^2; ties go to the
    component holding the lowest vertex.
    """
    support = np.asarray(support)
    local = w[np.ix_(support, support)]
    n_comp, comp = connected_components(local > 0, directed=False)
    if n_comp == 1:
        return support
    best, best_val = None, -np.inf
    for c in range(n_comp):
        idx = support[comp == c]
        xc = x[idx]
        val = float(xc @ w[np.ix_(idx, idx)] @ xc) / float(xc.sum()) ** 2
        if val > best_val:
            best, best_val = idx, val
    return best


def uniform_vector(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def peel_clustering(
    w,
    th: float = DEFAULT_TH,
    delta: float = DEFAULT_DELTA,
    max_iter: int = DEFAULT_MAX_ITER,
    payoff_tol: Optional[float] = DEFAULT_PAYOFF_TOL,
) -> list[list[int]]:
    """Partition the vertices by repeatedly extracting a dominant set.

    Each round starts replicator dynamics from the barycenter of the
    unclustered vertices, keeps the support of the limit as one cluster
    and drops those vertices. With ``payoff_tol`` set, vertices still
    decaying at the stopping point are iterated out first (see
    ``settle_support``); ``None`` uses the bare step criterion. The
    support is then checked against its exact equilibrium (see
    ``polish_support``). When the
    residual graph has no edges left every remaining vertex becomes its
    own cluster. A support that splits into disconnected pieces is cut
    down to its most cohesive piece. Clusters are returned in extraction
    order, members sorted ascending.
    """
    w = np.asarray(w, dtype=np.float64)
    remaining = np.arange(w.shape[0])
    clusters: list[list[int]] = []
    while remaining.size:
        if remaining.size == 1:
            clusters.append([int(remaining[0])])
            break
        sub = w[np.ix_(remaining, remaining)]
        x = uniform_vector(remaining.size)
        try:
            while True:
                x = run_replicator(sub, x, th, max_iter)
                if payoff_tol is not None:
                    x = settle_support(sub, x, delta, payoff_tol)
                support = polish_support(sub, extract_support(x, delta))
                piece = connected_support(sub, x, support)
                if piece.size == support.size:
                    break
                # restart inside the chosen component; zero entries stay zero
                restart = np.zeros_like(x)
                restart[piece] = x[piece]
                x = restart / restart.sum()
        except DegenerateGraphError:
            clusters.extend([int(v)] for v in remaining)
            break
        clusters.append([int(v) for v in remaining[support]])
        keep = np.ones(remaining.size, dtype=bool)
        keep[support] = False
        remaining = remaining[keep]
    return clusters


def clustering_labels(clusters: Sequence[Sequence[int]], n: int) -> np.ndarray:
    """Flatten a clustering into a per-vertex cluster-index array."""
    labels = np.full(n, -1, dtype=np.int64)
    for k, members in enumerate(clusters):
        labels[list(members)] = k
    if np.any(labels < 0):
        raise DomainError("clustering does not cover every vertex")
    return labels
