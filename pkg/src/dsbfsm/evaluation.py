"""Classifier-based evaluation of band subsets.

The default classifier is 1-nearest-neighbour on the selected bands.
Other classifiers plug in either as a Python callable
``fit_predict(train_x, train_y, test_x) -> labels`` or as an external
command speaking the CSV protocol described in ``ExternalClassifier``.
"""

from __future__ import annotations

import csv
import html
import math
import shlex
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DomainError, SplitError
from .hsi_io import Partition

DEFAULT_REPETITIONS = 20
REPORT_COLUMNS = ["method", "n_train", "mean_acc", "std", "reps"]

FitPredict = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


# ---------------------------------------------------------------- classifiers


def nearest_neighbor(train_x, train_y, test_x) -> np.ndarray:
    """1-NN with Euclidean distance; equidistant neighbours resolve to the first training row."""
    d = cdist(np.asarray(test_x, dtype=np.float64), np.asarray(train_x, dtype=np.float64), "sqeuclidean")
    return np.asarray(train_y)[np.argmin(d, axis=1)]


def nearest_class_mean(train_x, train_y, test_x) -> np.ndarray:
    train_y = np.asarray(train_y)
    classes = np.unique(train_y)
    means = np.vstack([np.asarray(train_x)[train_y == c].mean(axis=0) for c in classes])
    d = cdist(np.asarray(test_x, dtype=np.float64), means, "sqeuclidean")
    return classes[np.argmin(d, axis=1)]


def write_feature_csv(path, x, y, bands: Sequence[int]) -> None:
    """CSV with header ``label,b<i0>,b<i1>,...`` and one row per sample."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label", *(f"b{b}" for b in bands)])
        for label, row in zip(y, x):
            writer.writerow([int(label), *(repr(float(v)) for v in row)])


def read_labels_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["label"]:
        raise DomainError(f"{path}: expected a 'label' header")
    return np.array([int(r[0]) for r in rows[1:] if r], dtype=np.int64)


class ExternalClassifier:
    """Run a classifier as a subprocess.

    The command is invoked as ``<command> TRAIN.csv TEST.csv OUT.csv``.
    Both inputs use the header ``label,b<i0>,b<i1>,...``; test rows carry
    label 0. The program must write OUT.csv with a ``label`` header and
    one predicted label per test row, in order.
    """

    def __init__(self, command, bands: Optional[Sequence[int]] = None):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.bands = bands

    def __call__(self, train_x, train_y, test_x) -> np.ndarray:
        train_x = np.asarray(train_x)
        test_x = np.asarray(test_x)
        bands = list(self.bands) if self.bands is not None else list(range(train_x.shape[1]))
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            write_feature_csv(tmp / "train.csv", train_x, train_y, bands)
            write_feature_csv(tmp / "test.csv", test_x, np.zeros(len(test_x), dtype=int), bands)
            out = tmp / "pred.csv"
            proc = subprocess.run(
                [*self.command, str(tmp / "train.csv"), str(tmp / "test.csv"), str(out)],
                capture_output=True,
                text=True,
            )
            if proc.returncode != 0:
                raise RuntimeError(f"external classifier failed ({proc.returncode}): {proc.stderr.strip()}")
            pred = read_labels_csv(out)
        if pred.size != len(test_x):
            raise RuntimeError(f"external classifier returned {pred.size} labels for {len(test_x)} rows")
        return pred


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str = "1nn"
    command: Optional[str] = None

    KINDS = ("1nn", "ncm", "external")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise DomainError(f"unknown classifier kind '{self.kind}'")
        if self.kind == "external" and not self.command:
            raise DomainError("external classifier needs a command")

    def build(self) -> FitPredict:
        if self.kind == "1nn":
            return nearest_neighbor
        if self.kind == "ncm":
            return nearest_class_mean
        return ExternalClassifier(self.command)


def as_fit_predict(classifier) -> FitPredict:
    if classifier is None:
        return nearest_neighbor
    if isinstance(classifier, ClassifierSpec):
        return classifier.build()
    if isinstance(classifier, str):
        return ClassifierSpec(classifier).build()
    return classifier


# ---------------------------------------------------------------- splits and accuracy


def split_indices(labels, n_train: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    labels = np.asarray(labels)
    if n_train < 1:
        raise DomainError("n_train must be at least 1")
    train = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        if members.size <= n_train:
            raise SplitError(f"class {int(c)} has {members.size} samples, needs more than {n_train}", label=int(c))
        train.append(rng.permutation(members)[:n_train])
    train = np.sort(np.concatenate(train))
    test = np.setdiff1d(np.arange(labels.size), train)
    return train, test


def split(partition: Partition, n_train: int, seed: int) -> tuple[Partition, Partition]:
    """``n_train`` random samples per class for training, the rest for testing."""
    train, test = split_indices(partition.labels, n_train, np.random.default_rng(seed))
    return partition.subset(train), partition.subset(test)


def _check_bands(bands, n_bands: int) -> list[int]:
    bands = [int(b) for b in bands]
    if not bands:
        raise DomainError("band subset is empty")
    if min(bands) < 0 or max(bands) >= n_bands:
        raise DomainError("band index out of range")
    return bands


def classify_accuracy(train: Partition, test: Partition, bands: Sequence[int], classifier=None) -> float:
    """Overall accuracy on ``test`` of a classifier trained on ``train`` using ``bands`` only."""
    bands = _check_bands(bands, train.n_bands)
    fit_predict = as_fit_predict(classifier)
    pred = fit_predict(train.spectra[:, bands], train.labels, test.spectra[:, bands])
    return float(np.mean(np.asarray(pred) == test.labels))


@dataclass(frozen=True)
class CurvePoint:
    n_train: int
    mean_acc: float
    std: float
    reps: int


@dataclass
class AccuracyCurve:
    points: list[CurvePoint] = field(default_factory=list)

    def __post_init__(self):
        sizes = [p.n_train for p in self.points]
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise DomainError("n_train values must be strictly increasing")

    def means(self) -> list[float]:
        return [p.mean_acc for p in self.points]

    def at(self, n_train: int) -> CurvePoint:
        for p in self.points:
            if p.n_train == n_train:
                return p
        raise KeyError(n_train)


def split_rng(seed: int, n_train: int, rep: int) -> np.random.Generator:
    """Generator for one (size, repetition) draw; identical for every method under comparison."""
    return np.random.default_rng([seed, n_train, rep])


def repetition_accuracies(
    partition: Partition,
    bands: Sequence[int],
    classifier,
    n_train: int,
    repetitions: int = DEFAULT_REPETITIONS,
    seed: int = 0,
    threads: int = 1,
) -> np.ndarray:
    bands = _check_bands(bands, partition.n_bands)
    fit_predict = as_fit_predict(classifier)
    x = partition.spectra[:, bands]
    y = partition.labels

    def one(rep):
        tr, te = split_indices(y, n_train, split_rng(seed, n_train, rep))
        pred = fit_predict(x[tr], y[tr], x[te])
        return float(np.mean(np.asarray(pred) == y[te]))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return np.array(list(pool.map(one, range(repetitions))))
    return np.array([one(rep) for rep in range(repetitions)])


def accuracy_curve(
    partition: Partition,
    bands: Sequence[int],
    classifier=None,
    n_train_list: Sequence[int] = (5, 10, 20),
    repetitions: int = DEFAULT_REPETITIONS,
    seed: int = 0,
    threads: int = 1,
) -> AccuracyCurve:
    """Mean and population std of accuracy over seeded random splits per training size."""
    if repetitions < 1:
        raise DomainError("repetitions must be at least 1")
    points = []
    for n_train in sorted(set(int(n) for n in n_train_list)):
        acc = repetition_accuracies(partition, bands, classifier, n_train, repetitions, seed, threads)
        points.append(CurvePoint(n_train, float(acc.mean()), float(acc.std()), repetitions))
    return AccuracyCurve(points)


# ---------------------------------------------------------------- reports


def report_csv(curves: Mapping[str, AccuracyCurve]) -> str:
    lines = [",".join(REPORT_COLUMNS)]
    for name, curve in curves.items():
        for p in curve.points:
            lines.append(f"{name},{p.n_train},{p.mean_acc!r},{p.std!r},{p.reps}")
    return "\n".join(lines) + "\n"


def parse_report_csv(text: str) -> dict[str, AccuracyCurve]:
    rows = list(csv.DictReader(text.splitlines()))
    out: dict[str, list[CurvePoint]] = {}
    for row in rows:
        out.setdefault(row["method"], []).append(
            CurvePoint(int(row["n_train"]), float(row["mean_acc"]), float(row["std"]), int(row["reps"]))
        )
    return {k: AccuracyCurve(v) for k, v in out.items()}


_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"]


def report_svg(curves: Mapping[str, AccuracyCurve], title: str = "Classification accuracy") -> str:
    width, height = 640, 420
    left, right, top, bottom = 70, 160, 40, 60
    pw, ph = width - left - right, height - top - bottom
    xs = sorted({p.n_train for c in curves.values() for p in c.points})
    x_lo, x_hi = min(xs), max(xs)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1, x_hi + 1
    y_lo = min(p.mean_acc for c in curves.values() for p in c.points)
    y_lo = max(0.0, math.floor(y_lo * 10) / 10 - 0.1) if y_lo < 1 else 0.9
    y_hi = 1.0

    def sx(v):
        return left + (v - x_lo) / (x_hi - x_lo) * pw

    def sy(v):
        return top + (y_hi - v) / (y_hi - y_lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left + pw / 2:.1f}" y="22" text-anchor="middle" font-size="15">{html.escape(title)}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for v in xs:
        out.append(f'<text x="{sx(v):.1f}" y="{top + ph + 18}" text-anchor="middle" font-size="11">{v}</text>')
    for k in range(6):
        v = y_lo + (y_hi - y_lo) * k / 5
        out.append(f'<text x="{left - 8}" y="{sy(v) + 4:.1f}" text-anchor="end" font-size="11">{v:.2f}</text>')
    out.append(
        f'<text x="{left + pw / 2:.1f}" y="{height - 15}" text-anchor="middle" font-size="12">'
        "Training samples per class</text>"
    )
    out.append(
        f'<text x="18" y="{top + ph / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 18 {top + ph / 2:.1f})">Overall accuracy</text>'
    )
    for k, (name, curve) in enumerate(curves.items()):
        color = _PALETTE[k % len(_PALETTE)]
        pts = " ".join(f"{sx(p.n_train):.1f},{sy(p.mean_acc):.1f}" for p in curve.points)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        ly = top + 10 + 20 * k
        out.append(f'<line x1="{left + pw + 15}" y1="{ly}" x2="{left + pw + 40}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 46}" y="{ly + 4}" font-size="12">{html.escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(curves: Mapping[str, AccuracyCurve], out_dir) -> tuple[Path, Path]:
    """Write ``report.csv`` and ``report.svg`` into ``out_dir``."""
    if not curves:
        raise DomainError("no curves to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "report.csv"
    svg_path = out_dir / "report.svg"
    csv_path.write_text(report_csv(curves))
    svg_path.write_text(report_svg(curves))
    return csv_path, svg_path
