"""Comparison band selectors: correlation-based (CBS) and sequential forward (SFS)."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError
from .evaluation import as_fit_predict
from .hsi_io import HyperCube, Partition
from .stage2 import correlation_matrix


@dataclass
class BaselineResult:
    method: str
    selected: list[int]
    trace: list[tuple[int, float]] = field(default_factory=list)

    def __post_init__(self):
        if not self.selected:
            raise DomainError("a baseline must select at least one band")
        if len(set(self.selected)) != len(self.selected):
            raise DomainError("duplicate bands in selection")

    def to_json(self, params: Optional[dict] = None) -> str:
        payload = {
            "method": self.method,
            "clusters": [[int(b)] for b in self.selected],
            "eta": [float(v) for _, v in self.trace],
            "selected": [int(b) for b in self.selected],
            "trace": [{"band": int(b), "criterion": float(v)} for b, v in self.trace],
            "params": params or {},
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _spectra(data) -> np.ndarray:
    if isinstance(data, Partition):
        return data.spectra
    if isinstance(data, HyperCube):
        return data.data.reshape(data.bands, -1).T
    return np.asarray(data, dtype=np.float64)


def cbs_select(data, k: int) -> BaselineResult:
    """Greedy selection of ``k`` mutually least-correlated bands.

    ``data`` is a Partition, a HyperCube or a samples x bands array.
    The first two bands are the pair with the smallest |r|; each further
    band minimizes its largest |r| to the bands already chosen. Ties go
    to the lowest index. Constant bands count as uncorrelated.
    """
    x = _spectra(data)
    n_bands = x.shape[1]
    if not 2 <= k <= n_bands:
        raise DomainError(f"k must lie in [2, {n_bands}], got {k}")
    corr = np.abs(correlation_matrix(x.T))
    pair = corr + np.tril(np.full((n_bands, n_bands), np.inf))
    i, j = np.unravel_index(int(np.argmin(pair)), pair.shape)
    selected = [int(i), int(j)]
    trace = [(int(i), float(corr[i, j])), (int(j), float(corr[i, j]))]
    worst = np.maximum(corr[i], corr[j])
    while len(selected) < k:
        cand = worst.copy()
        cand[selected] = np.inf
        b = int(np.argmin(cand))
        trace.append((b, float(cand[b])))
        selected.append(b)
        worst = np.maximum(worst, corr[b])
    return BaselineResult("cbs", selected, trace)


def stratified_halves(labels, seed: int, train_fraction: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Per-class random split into training and validation indices."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train, valid = [], []
    for c in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == c))
        if members.size < 2:
            raise DomainError(f"class {int(c)} needs at least 2 samples for a validation split")
        cut = min(max(1, int(round(members.size * train_fraction))), members.size - 1)
        train.append(members[:cut])
        valid.append(members[cut:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(valid))


def sfs_select(
    partition: Partition,
    classifier=None,
    max_k: Optional[int] = None,
    min_gain: float = 0.0,
    seed: int = 0,
    train_fraction: float = 0.5,
    threads: int = 1,
) -> BaselineResult:
    """Sequential forward selection driven by held-out accuracy.

    The first band is always taken. A further band is accepted only if it
    raises validation accuracy by more than ``min_gain``; the search also
    stops at ``max_k`` bands. Candidates within one step may be scored
    on ``threads`` workers; ties go to the lowest band index.
    """
    n_bands = partition.n_bands
    max_k = n_bands if max_k is None else int(max_k)
    if not 1 <= max_k <= n_bands:
        raise DomainError(f"max_k must lie in [1, {n_bands}]")
    fit_predict = as_fit_predict(classifier)
    tr, va = stratified_halves(partition.labels, seed, train_fraction)
    x, y = partition.spectra, partition.labels

    def accuracy(bands):
        pred = fit_predict(x[tr][:, bands], y[tr], x[va][:, bands])
        return float(np.mean(np.asarray(pred) == y[va]))

    selected: list[int] = []
    trace: list[tuple[int, float]] = []
    best_acc = -np.inf
    while len(selected) < max_k:
        cands = [b for b in range(n_bands) if b not in selected]
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                scores = list(pool.map(lambda b: accuracy(selected + [b]), cands))
        else:
            scores = [accuracy(selected + [b]) for b in cands]
        k = int(np.argmax(scores))
        if selected and not scores[k] - best_acc > min_gain:
            break
        selected.append(cands[k])
        best_acc = scores[k]
        trace.append((cands[k], best_acc))
    return BaselineResult("sfs", selected, trace)
