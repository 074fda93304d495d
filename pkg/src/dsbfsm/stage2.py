"""Band clustering on per-class score profiles and representative selection."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dominant_sets import (
    DEFAULT_DELTA,
    DEFAULT_MAX_ITER,
    DEFAULT_PAYOFF_TOL,
    DEFAULT_TH,
    peel_clustering,
)
from .errors import DomainError
from .stage1 import BandPerformance

DEFAULT_C_B = 200.0
DEFAULT_C_V = 30.0


@dataclass(frozen=True)
class BandSimilarityParams:
    c_b: float = DEFAULT_C_B
    c_v: float = DEFAULT_C_V
    t_b: float = DEFAULT_TH
    delta: float = DEFAULT_DELTA
    max_iter: int = DEFAULT_MAX_ITER
    payoff_tol: Optional[float] = DEFAULT_PAYOFF_TOL

    def __post_init__(self):
        if not (self.c_b >= 0 and self.c_v >= 0):
            raise DomainError("c_b and c_v must be non-negative")
        if not (self.t_b > 0 and self.delta > 0):
            raise DomainError("t_b and delta must be positive")


@dataclass(frozen=True)
class SelectionResult:
    clusters: list[list[int]]
    eta: np.ndarray
    selected: list[int]
    similarity: Optional[np.ndarray] = None

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    def to_json(self, params: Optional[dict] = None, method: str = "dsbfsm") -> str:
        payload = {
            "method": method,
            "clusters": [list(map(int, c)) for c in self.clusters],
            "eta": [float(v) for v in self.eta],
            "selected": [int(b) for b in self.selected],
            "params": params or {},
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def pearson_correlation(f, g) -> float:
    """Sample correlation; 0 when either vector is constant."""
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if f.shape != g.shape or f.ndim != 1 or f.size < 1:
        raise DomainError("correlation needs two 1-D vectors of equal, non-zero length")
    if np.ptp(f) == 0.0 or np.ptp(g) == 0.0:
        return 0.0
    fc = f - f.mean()
    gc = g - g.mean()
    sf = np.sqrt(fc @ fc)
    sg = np.sqrt(gc @ gc)
    return float(np.clip(fc @ gc / (sf * sg), -1.0, 1.0))


def _profiles(perf: Sequence[BandPerformance]) -> np.ndarray:
    if not perf:
        raise DomainError("no band performances given")
    sizes = {p.per_class_f.size for p in perf}
    if len(sizes) != 1:
        raise DomainError("band performances disagree on the number of classes")
    return np.vstack([p.per_class_f for p in perf])


def correlation_matrix(profiles: np.ndarray) -> np.ndarray:
    """Row-wise Pearson correlations with the constant-row convention."""
    centered = profiles - profiles.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.einsum("ij,ij->i", centered, centered))
    # exact test: centring a constant row can leave rounding noise
    ok = np.ptp(profiles, axis=1) > 0
    unit = np.zeros_like(centered)
    unit[ok] = centered[ok] / norms[ok, None]
    corr = np.clip(unit @ unit.T, -1.0, 1.0)
    flat = ~ok
    corr[flat, :] = 0.0
    corr[:, flat] = 0.0
    return corr


def band_similarity_matrix(perf: Sequence[BandPerformance], params: BandSimilarityParams = BandSimilarityParams()) -> np.ndarray:
    """L x L band similarity from profile correlation and mean absolute difference."""
    profiles = _profiles(perf)
    corr = correlation_matrix(profiles)
    mad = np.abs(profiles[:, None, :] - profiles[None, :, :]).mean(axis=2)
    w = np.exp(-params.c_b * (1.0 - corr)) * np.exp(-params.c_v * mad)
    w = np.minimum(w, 1.0)
    np.fill_diagonal(w, 0.0)
    return w


def cluster_bands(
    perf: Sequence[BandPerformance],
    params: BandSimilarityParams = BandSimilarityParams(),
    w_b: Optional[np.ndarray] = None,
) -> list[list[int]]:
    if w_b is None:
        w_b = band_similarity_matrix(perf, params)
    return peel_clustering(w_b, params.t_b, params.delta, params.max_iter, params.payoff_tol)


def band_score(band: int, cluster: Sequence[int], perf: Sequence[BandPerformance], w_b) -> float:
    """F_tot of ``band`` times its summed similarity to its cluster."""
    members = [int(b) for b in cluster]
    if band not in members:
        raise DomainError(f"band {band} is not a member of the cluster")
    w_b = np.asarray(w_b)
    return float(perf[band].f_tot * w_b[band, members].sum())


def select_bands(perf: Sequence[BandPerformance], params: BandSimilarityParams = BandSimilarityParams()) -> SelectionResult:
    """Cluster the bands and keep the top-eta band of each cluster."""
    w_b = band_similarity_matrix(perf, params)
    clusters = cluster_bands(perf, params, w_b)
    eta = np.zeros(len(perf))
    selected = []
    for members in clusters:
        for b in members:
            eta[b] = band_score(b, members, perf, w_b)
        # members are ascending, so argmax's first hit is the lowest index
        selected.append(int(members[int(np.argmax(eta[members]))]))
    return SelectionResult(clusters, eta, selected, w_b)
