"""Per-band performance scores from dominant-set pixel clustering.

Each band's pixels are clustered on a spatial/spectral similarity graph,
clusters are matched to ground-truth classes, and the band is scored per
class with the clustering F-measure.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .dominant_sets import (
    DEFAULT_DELTA,
    DEFAULT_MAX_ITER,
    DEFAULT_PAYOFF_TOL,
    DEFAULT_TH,
    peel_clustering,
)
from .errors import DomainError
from .hsi_io import Partition

DEFAULT_C_D = 0.3
DEFAULT_C_S = 0.01


@dataclass(frozen=True)
class PixelSimilarityParams:
    c_d: float = DEFAULT_C_D
    c_s: float = DEFAULT_C_S
    th: float = DEFAULT_TH
    delta: float = DEFAULT_DELTA
    max_iter: int = DEFAULT_MAX_ITER
    payoff_tol: Optional[float] = DEFAULT_PAYOFF_TOL

    def __post_init__(self):
        if not (self.c_d >= 0 and self.c_s >= 0):
            raise DomainError("c_d and c_s must be non-negative")
        if not (self.th > 0 and self.delta > 0):
            raise DomainError("th and delta must be positive")


@dataclass(frozen=True)
class BandPerformance:
    """Per-class F scores of one band and their mean."""

    per_class_f: np.ndarray
    f_tot: float
    classes: tuple[int, ...] = ()
    n_clusters: int = 0

    def __post_init__(self):
        f = np.array(self.per_class_f, dtype=np.float64).ravel()
        if f.size == 0 or not np.all((f >= 0.0) & (f <= 1.0)):
            raise DomainError("per-class scores must be a non-empty vector in [0, 1]")
        if abs(self.f_tot - f.mean()) > 1e-12:
            raise DomainError(f"f_tot {self.f_tot} is not the mean of the per-class scores")
        f.setflags(write=False)
        object.__setattr__(self, "per_class_f", f)


def rescale_spectral_coefficient(c_s: float, reference_mean: float, target_mean: float) -> float:
    """Carry ``c_s`` tuned on one scene over to another radiometric scale.

    Scaling by reference/target mean keeps ``c_s * |dr|`` unchanged when
    the target's reflectances are a multiple of the reference's.
    """
    if not (reference_mean > 0 and target_mean > 0):
        raise DomainError("mean reflectances must be positive")
    return c_s * reference_mean / target_mean


def spatial_kernel(partition: Partition, c_d: float) -> np.ndarray:
    """exp(-c_d * d_ij^2) over source-image coordinates."""
    dr = partition.rows[:, None] - partition.rows[None, :]
    dc = partition.cols[:, None] - partition.cols[None, :]
    return np.exp(-c_d * (dr * dr + dc * dc).astype(np.float64))


def _band_matrix(spatial: np.ndarray, r: np.ndarray, c_s: float) -> np.ndarray:
    w = spatial * np.exp(-c_s * np.abs(r[:, None] - r[None, :]))
    np.fill_diagonal(w, 0.0)
    return w


def pixel_similarity_matrix(partition: Partition, band: int, params: PixelSimilarityParams) -> np.ndarray:
    """K x K similarity of the partition pixels in ``band``, zero diagonal."""
    if not 0 <= band < partition.n_bands:
        raise DomainError(f"band {band} out of range for {partition.n_bands} bands")
    return _band_matrix(spatial_kernel(partition, params.c_d), partition.spectra[:, band], params.c_s)


def _peel(w, params: PixelSimilarityParams):
    return peel_clustering(w, params.th, params.delta, params.max_iter, params.payoff_tol)


def cluster_band_pixels(partition: Partition, band: int, params: PixelSimilarityParams) -> list[list[int]]:
    """Dominant-set clusters of partition pixel indices for one band."""
    return _peel(pixel_similarity_matrix(partition, band, params), params)


def assign_clusters_to_classes(clusters: Sequence[Sequence[int]], partition: Partition) -> list[int]:
    """Majority ground-truth class of each cluster; ties go to the lowest class."""
    out = []
    for members in clusters:
        labels = partition.labels[list(members)]
        vals, counts = np.unique(labels, return_counts=True)
        out.append(int(vals[np.argmax(counts)]))
    return out


# ---------------------------------------------------------------- F-measure


def f_pair(c_i, c_j) -> float:
    """Harmonic mean of recall |Ci & Cj|/|Ci| and precision |Ci & Cj|/|Cj|."""
    c_i, c_j = set(c_i), set(c_j)
    if not c_i or not c_j:
        raise DomainError("f_pair needs two non-empty sets")
    common = len(c_i & c_j)
    if common == 0:
        return 0.0
    # 2 Re Pr / (Re + Pr) simplifies to 2|Ci & Cj| / (|Ci| + |Cj|)
    return 2.0 * common / (len(c_i) + len(c_j))


def _contingency(true_labels: np.ndarray, cluster_ids: np.ndarray):
    classes, ti = np.unique(true_labels, return_inverse=True)
    n_clusters = int(cluster_ids.max()) + 1
    table = np.zeros((classes.size, n_clusters), dtype=np.int64)
    np.add.at(table, (ti, cluster_ids), 1)
    return classes, table


def f_table(true_labels, cluster_ids) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Classes, class sizes, and the class x cluster matrix of pairwise f values."""
    true_labels = np.asarray(true_labels)
    cluster_ids = np.asarray(cluster_ids, dtype=np.int64)
    classes, table = _contingency(true_labels, cluster_ids)
    class_size = table.sum(axis=1)
    cluster_size = table.sum(axis=0)
    denom = class_size[:, None] + cluster_size[None, :]
    f = np.divide(2.0 * table, denom, out=np.zeros(table.shape), where=denom > 0)
    return classes, class_size, f


def per_class_scores(true_labels, cluster_ids) -> tuple[np.ndarray, np.ndarray]:
    """(classes, best f per class) for labelled items and their cluster ids."""
    classes, _, f = f_table(true_labels, cluster_ids)
    return classes, f.max(axis=1)


def _to_label_arrays(gt, dt):
    gt = _as_groups(gt)
    dt = _as_groups(dt)
    if not gt:
        raise DomainError("ground truth has no classes")
    items = sorted(set().union(*gt.values(), *dt.values()), key=repr)
    pos = {v: k for k, v in enumerate(items)}
    class_of = np.full(len(items), -1, dtype=np.int64)
    gt_keys = list(gt)
    for k, key in enumerate(gt_keys):
        if not gt[key]:
            raise DomainError(f"ground-truth class {key!r} is empty")
        class_of[[pos[v] for v in gt[key]]] = k
    cluster_of = np.full(len(items), -1, dtype=np.int64)
    for k, key in enumerate(dt):
        if not dt[key]:
            raise DomainError(f"cluster {key!r} is empty")
        cluster_of[[pos[v] for v in dt[key]]] = k
    return gt_keys, class_of, cluster_of


def _as_groups(groups) -> dict:
    if isinstance(groups, Mapping):
        return {k: set(v) for k, v in groups.items()}
    return {k: set(v) for k, v in enumerate(groups)}


def _class_cluster_f(gt, dt):
    keys, class_of, cluster_of = _to_label_arrays(gt, dt)
    n_gt = len(keys)
    n_dt = int(cluster_of.max()) + 1 if (cluster_of >= 0).any() else 0
    # items outside DT still count toward |Ci| but never toward an intersection
    sizes_gt = np.bincount(class_of[class_of >= 0], minlength=n_gt)
    sizes_dt = np.bincount(cluster_of[cluster_of >= 0], minlength=n_dt)
    table = np.zeros((n_gt, n_dt), dtype=np.int64)
    both = (class_of >= 0) & (cluster_of >= 0)
    np.add.at(table, (class_of[both], cluster_of[both]), 1)
    denom = sizes_gt[:, None] + sizes_dt[None, :]
    f = np.divide(2.0 * table, denom, out=np.zeros(table.shape), where=denom > 0)
    return keys, sizes_gt, f


def f_measure(gt, dt) -> float:
    """Size-weighted mean over classes of the best-matching cluster's f.

    ``gt`` and ``dt`` are collections of item sets, given either as a
    sequence or as a mapping from class/cluster id to members.
    """
    _, sizes, f = _class_cluster_f(gt, dt)
    best = f.max(axis=1) if f.shape[1] else np.zeros(f.shape[0])
    return float(sizes @ best / sizes.sum())


def per_class_f(gt, dt, label) -> float:
    """Best f of class ``label`` against any cluster in ``dt``."""
    keys, _, f = _class_cluster_f(gt, dt)
    if label not in keys:
        raise DomainError(f"class {label!r} is not in the ground truth")
    row = f[keys.index(label)]
    return float(row.max()) if row.size else 0.0


# ---------------------------------------------------------------- band scores


def score_clustering(partition: Partition, clusters: Sequence[Sequence[int]]) -> BandPerformance:
    cluster_ids = np.empty(len(partition), dtype=np.int64)
    for k, members in enumerate(clusters):
        cluster_ids[list(members)] = k
    classes, best = per_class_scores(partition.labels, cluster_ids)
    return BandPerformance(best, float(best.mean()), tuple(int(c) for c in classes), len(clusters))


def evaluate_band(
    partition: Partition,
    band: int,
    params: PixelSimilarityParams,
    spatial: Optional[np.ndarray] = None,
) -> BandPerformance:
    if spatial is None:
        spatial = spatial_kernel(partition, params.c_d)
    w = _band_matrix(spatial, partition.spectra[:, band], params.c_s)
    return score_clustering(partition, _peel(w, params))


def evaluate_all_bands(
    partition: Partition,
    params: PixelSimilarityParams = PixelSimilarityParams(),
    threads: int = 1,
) -> list[BandPerformance]:
    """Score every band of ``partition``; results are in band order."""
    spatial = spatial_kernel(partition, params.c_d)
    bands = range(partition.n_bands)
    if threads <= 1:
        return [evaluate_band(partition, b, params, spatial) for b in bands]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda b: evaluate_band(partition, b, params, spatial), bands))


def band_scores_csv(perfs: Sequence[BandPerformance], comment: Optional[str] = None) -> str:
    """CSV text with columns band_index, f_class_<label>..., f_tot."""
    if not perfs:
        raise DomainError("no band scores to write")
    classes = perfs[0].classes or tuple(range(1, perfs[0].per_class_f.size + 1))
    buf = io.StringIO()
    if comment:
        for line in comment.splitlines():
            buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["band_index", *(f"f_class_{c}" for c in classes), "f_tot"])
    for b, perf in enumerate(perfs):
        writer.writerow([b, *(repr(float(v)) for v in perf.per_class_f), repr(float(perf.f_tot))])
    return buf.getvalue()


def read_band_scores(text: str) -> list[BandPerformance]:
    rows = [r for r in csv.reader(line for line in text.splitlines() if line and not line.startswith("#"))]
    header, body = rows[0], rows[1:]
    classes = tuple(int(h.removeprefix("f_class_")) for h in header[1:-1])
    out = []
    for row in body:
        f = np.array([float(v) for v in row[1:-1]])
        out.append(BandPerformance(f, float(row[-1]), classes))
    return out
