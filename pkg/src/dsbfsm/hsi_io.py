"""Hyperspectral cube and ground-truth I/O, partition extraction, synthetic scenes.

On-disk layout:

* ``<name>.bsq`` holds raw band-sequential float32 little-endian samples.
* ``<name>.hdr.json`` holds ``{"bands", "rows", "cols", "dtype": "f32le", "interleave": "bsq"}``.
* ``<name>.gt.txt`` holds a whitespace separated integer grid, 0 = unclassified.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DomainError, EmptyPartitionError, LoadError, SpecError

SUPPORTED_DTYPES = {"f32le": np.dtype("<f4")}
DEFAULT_MAX_PIXELS = 2000


@dataclass(frozen=True)
class HyperCube:
    """An L x M x N reflectance volume, stored band-first."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or min(data.shape) < 1:
            raise DomainError(f"cube must be a non-empty L x M x N array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise DomainError("cube contains non-finite values")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def rows(self) -> int:
        return self.data.shape[1]

    @property
    def cols(self) -> int:
        return self.data.shape[2]

    def select_bands(self, bands: Sequence[int]) -> "HyperCube":
        return HyperCube(self.data[list(bands)])


@dataclass(frozen=True)
class GroundTruth:
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise DomainError("ground truth must be a 2-D grid")
        if labels.size and labels.min() < 0:
            raise DomainError("ground-truth labels must be non-negative")
        labels = labels.astype(np.int64)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) if self.labels.size else 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


@dataclass(frozen=True)
class Partition:
    """Labeled pixels drawn from a cube, with their source coordinates.

    ``spectra`` is K x L; row ``k`` belongs to pixel (rows[k], cols[k]).
    """

    rows: np.ndarray
    cols: np.ndarray
    labels: np.ndarray
    spectra: np.ndarray
    shape: tuple[int, int]

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        cols = np.asarray(self.cols, dtype=np.int64)
        labels = np.asarray(self.labels, dtype=np.int64)
        spectra = np.atleast_2d(np.asarray(self.spectra, dtype=np.float64))
        k = labels.size
        if k == 0:
            raise EmptyPartitionError("partition has no pixels")
        if rows.size != k or cols.size != k or spectra.shape[0] != k:
            raise DomainError("partition arrays disagree on pixel count")
        if labels.min() < 1:
            raise DomainError("partition may only hold labeled pixels (label >= 1)")
        m, n = self.shape
        if rows.min() < 0 or cols.min() < 0 or rows.max() >= m or cols.max() >= n:
            raise DomainError("partition coordinates fall outside the source image")
        if np.unique(rows * n + cols).size != k:
            raise DomainError("partition has duplicate coordinates")
        for arr in (rows, cols, labels, spectra):
            arr.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "spectra", spectra)
        object.__setattr__(self, "shape", (int(m), int(n)))

    def __len__(self) -> int:
        return self.labels.size

    @property
    def n_bands(self) -> int:
        return self.spectra.shape[1]

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.labels)

    def class_counts(self) -> dict[int, int]:
        vals, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(vals, counts)}

    def subset(self, idx) -> "Partition":
        idx = np.asarray(idx, dtype=np.int64)
        return Partition(self.rows[idx], self.cols[idx], self.labels[idx], self.spectra[idx], self.shape)

    def with_spectra(self, spectra) -> "Partition":
        return Partition(self.rows, self.cols, self.labels, spectra, self.shape)


# ---------------------------------------------------------------- cube files


def header_path_for(path) -> Path:
    path = Path(path)
    stem = path.name[:-4] if path.name.endswith(".bsq") else path.name
    return path.with_name(stem + ".hdr.json")


def read_header(header_path) -> dict:
    header_path = Path(header_path)
    try:
        header = json.loads(header_path.read_text())
    except FileNotFoundError:
        raise LoadError(f"header not found: {header_path}") from None
    except json.JSONDecodeError as exc:
        raise LoadError(f"malformed header {header_path}: {exc}") from None
    for key in ("bands", "rows", "cols", "dtype", "interleave"):
        if key not in header:
            raise LoadError(f"header {header_path} lacks key '{key}'")
    if header["dtype"] not in SUPPORTED_DTYPES:
        raise LoadError(f"unsupported dtype '{header['dtype']}' in {header_path}")
    if header["interleave"] != "bsq":
        raise LoadError(f"unsupported interleave '{header['interleave']}' in {header_path}")
    for key in ("bands", "rows", "cols"):
        if not isinstance(header[key], int) or header[key] < 1:
            raise LoadError(f"header key '{key}' must be a positive integer")
    return header


def load_cube(path, header_path=None) -> HyperCube:
    """Read a BSQ cube. The header defaults to the ``.hdr.json`` sidecar."""
    path = Path(path)
    if not path.is_file():
        raise LoadError(f"cube file not found: {path}")
    header = read_header(header_path or header_path_for(path))
    dtype = SUPPORTED_DTYPES[header["dtype"]]
    shape = (header["bands"], header["rows"], header["cols"])
    expected = math.prod(shape) * dtype.itemsize
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise LoadError(f"cube file not found: {path}") from None
    if len(raw) != expected:
        raise LoadError(
            f"{path}: expected {expected} bytes for {shape}, found {len(raw)}",
            offset=min(len(raw), expected),
        )
    values = np.frombuffer(raw, dtype=dtype)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise LoadError(f"{path}: non-finite sample", offset=int(bad[0]) * dtype.itemsize)
    return HyperCube(values.reshape(shape).astype(np.float64))


def save_cube(cube: HyperCube, path, header_path=None, extra: Optional[dict] = None) -> Path:
    """Write ``cube`` as float32 BSQ plus its JSON header; returns the header path."""
    path = Path(path)
    header_path = Path(header_path) if header_path else header_path_for(path)
    header = {"bands": cube.bands, "rows": cube.rows, "cols": cube.cols, "dtype": "f32le", "interleave": "bsq"}
    if extra:
        header.update(extra)
    path.write_bytes(cube.data.astype("<f4").tobytes())
    header_path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return header_path


def load_ground_truth(path, rows: Optional[int] = None, cols: Optional[int] = None) -> GroundTruth:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise LoadError(f"ground-truth file not found: {path}") from None
    grid = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = [int(tok) for tok in line.split()]
        except ValueError:
            raise LoadError(f"{path}:{lineno}: non-integer label") from None
        if any(v < 0 for v in row):
            raise LoadError(f"{path}:{lineno}: negative label")
        grid.append(row)
    if not grid:
        raise LoadError(f"{path}: empty label grid")
    width = cols if cols is not None else len(grid[0])
    for lineno, row in enumerate(grid, 1):
        if len(row) != width:
            raise LoadError(f"{path}: row {lineno} has {len(row)} entries, expected {width}")
    if rows is not None and len(grid) != rows:
        raise LoadError(f"{path}: found {len(grid)} rows, expected {rows}")
    return GroundTruth(np.array(grid, dtype=np.int64))


def save_ground_truth(gt: GroundTruth, path) -> None:
    lines = [" ".join(str(int(v)) for v in row) for row in gt.labels]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------- partitions


def _quotas(counts: dict[int, int], budget: int) -> dict[int, int]:
    """Largest-remainder allocation of ``budget`` proportional to ``counts``."""
    total = sum(counts.values())
    exact = {c: n * budget / total for c, n in counts.items()}
    quota = {c: int(math.floor(v)) for c, v in exact.items()}
    left = budget - sum(quota.values())
    order = sorted(counts, key=lambda c: (-(exact[c] - quota[c]), c))
    for c in order[:left]:
        quota[c] += 1
    return quota


def extract_partition(
    cube: HyperCube,
    gt: GroundTruth,
    region: Optional[tuple[int, int, int, int]] = None,
    classes: Optional[Iterable[int]] = None,
    max_pixels: Optional[int] = DEFAULT_MAX_PIXELS,
    seed: int = 0,
) -> Partition:
    """Collect labeled pixels of ``classes`` inside ``region``.

    ``region`` is ``(row0, row1, col0, col1)`` with half-open bounds.
    Above ``max_pixels`` the pixels are subsampled per class in
    proportion to class size; kept pixels stay in raster order.
    """
    m, n = gt.shape
    if (cube.rows, cube.cols) != (m, n):
        raise DomainError(f"cube is {cube.rows}x{cube.cols} but ground truth is {m}x{n}")
    r0, r1, c0, c1 = region if region is not None else (0, m, 0, n)
    if not (0 <= r0 < r1 <= m and 0 <= c0 < c1 <= n):
        raise DomainError(f"region {(r0, r1, c0, c1)} is not inside the {m}x{n} image")
    if classes is None:
        wanted = set(range(1, gt.n_classes + 1))
    else:
        wanted = {int(c) for c in classes}
        if any(c < 1 for c in wanted):
            raise DomainError("class labels must be >= 1")

    mask = np.zeros((m, n), dtype=bool)
    mask[r0:r1, c0:c1] = True
    mask &= np.isin(gt.labels, sorted(wanted))
    rr, cc = np.nonzero(mask)
    if rr.size == 0:
        raise EmptyPartitionError(f"no pixels of classes {sorted(wanted)} in region {(r0, r1, c0, c1)}")
    labels = gt.labels[rr, cc]

    if max_pixels is not None and rr.size > max_pixels:
        if max_pixels < 1:
            raise DomainError("max_pixels must be positive")
        rng = np.random.default_rng(seed)
        vals, counts = np.unique(labels, return_counts=True)
        quota = _quotas(dict(zip(vals.tolist(), counts.tolist())), max_pixels)
        keep = []
        for c in vals.tolist():
            members = np.flatnonzero(labels == c)
            keep.append(rng.choice(members, size=quota[c], replace=False))
        keep = np.sort(np.concatenate(keep))
        rr, cc, labels = rr[keep], cc[keep], labels[keep]

    spectra = cube.data[:, rr, cc].T
    return Partition(rr, cc, labels, spectra, (m, n))


# ---------------------------------------------------------------- synthetic scenes


def parse_band_list(text) -> tuple[int, ...]:
    """Parse ``"0,3,10-14"`` into a sorted tuple of band indices."""
    if isinstance(text, (list, tuple)):
        return tuple(sorted({int(v) for v in text}))
    out = set()
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.update(range(int(lo), int(hi) + 1))
        else:
            out.add(int(part))
    return tuple(sorted(out))


@dataclass(frozen=True)
class SyntheticSpec:
    """Description of a synthetic labeled scene.

    Classes occupy square ``block`` x ``block`` tiles assigned along
    diagonals, so every class region is a union of contiguous blocks and
    neighbouring tiles always differ in class. Class mean spectra share
    a smooth baseline and differ only on ``informative_bands``. Each
    contiguous run of informative bands is one spectral feature: the
    classes keep one random order across the run and sit at least
    ``separation`` apart, widening to ``(1 + peak_gain) * separation`` at
    the run centre. Additive noise has standard deviation ``sigma`` in
    every band and band-to-band correlation ``noise_corr`` (AR(1)).
    """

    classes: int
    bands: int
    rows: int
    cols: int
    informative_bands: tuple[int, ...] = ()
    sigma: float = 0.1
    seed: int = 0
    separation: Optional[float] = None
    block: int = 8
    noise_corr: float = 0.0
    peak_gain: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "informative_bands", parse_band_list(self.informative_bands))
        if self.classes < 2:
            raise SpecError("a synthetic scene needs at least 2 classes")
        if self.bands < 1 or self.rows < 1 or self.cols < 1:
            raise SpecError("bands, rows and cols must be positive")
        if not self.sigma >= 0:
            raise SpecError("sigma must be non-negative")
        if self.block < 1:
            raise SpecError("block must be positive")
        if any(b < 0 or b >= self.bands for b in self.informative_bands):
            raise SpecError("informative band index out of range")
        if self.separation is not None and not self.separation > 0:
            raise SpecError("separation must be positive")
        if not 0.0 <= self.noise_corr < 1.0:
            raise SpecError("noise_corr must lie in [0, 1)")
        if not self.peak_gain >= 0:
            raise SpecError("peak_gain must be non-negative")

    @property
    def class_separation(self) -> float:
        if self.separation is not None:
            return float(self.separation)
        return max(5.0 * self.sigma, 0.5)


SYNTH_KEYS = {
    "classes": int,
    "bands": int,
    "rows": int,
    "cols": int,
    "informative_bands": parse_band_list,
    "sigma": float,
    "seed": int,
    "separation": float,
    "block": int,
    "noise_corr": float,
    "peak_gain": float,
}


def parse_synthetic_config(text: str) -> SyntheticSpec:
    """Parse ``key=value`` lines (``#`` starts a comment) into a SyntheticSpec."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"line {lineno}: expected key=value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in SYNTH_KEYS:
            raise SpecError(f"line {lineno}: unknown key '{key}'")
        try:
            values[key] = SYNTH_KEYS[key](raw)
        except ValueError as exc:
            raise SpecError(f"line {lineno}: bad value for '{key}': {exc}") from None
    missing = {"classes", "bands", "rows", "cols"} - values.keys()
    if missing:
        raise SpecError(f"missing keys: {sorted(missing)}")
    return SyntheticSpec(**values)


def synthetic_labels(spec: SyntheticSpec) -> np.ndarray:
    ti = np.arange(spec.rows)[:, None] // spec.block
    tj = np.arange(spec.cols)[None, :] // spec.block
    return (ti + tj) % spec.classes + 1


def informative_runs(bands: Sequence[int]) -> list[list[int]]:
    """Split sorted band indices into runs of consecutive bands."""
    runs: list[list[int]] = []
    for b in bands:
        if runs and b == runs[-1][-1] + 1:
            runs[-1].append(b)
        else:
            runs.append([b])
    return runs


def class_means(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """P x L mean spectra: shared baseline, class offsets on informative bands only."""
    grid = np.arange(spec.bands) / max(spec.bands - 1, 1)
    baseline = 0.4 + 0.2 * np.sin(2.0 * np.pi * grid) + 0.1 * grid
    means = np.tile(baseline, (spec.classes, 1))
    sep = spec.class_separation
    centred = np.arange(spec.classes) - (spec.classes - 1) / 2.0
    for run in informative_runs(spec.informative_bands):
        order = rng.permutation(spec.classes)
        bump = np.sin(np.pi * (np.arange(len(run)) + 1) / (len(run) + 1))
        for b, g in zip(run, bump):
            means[:, b] += sep * (1.0 + spec.peak_gain * g) * centred[order]
    return means


def band_noise(spec: SyntheticSpec, rng: np.random.Generator, n_pixels: int) -> np.ndarray:
    """L x n_pixels unit-variance noise, AR(1)-correlated along the band axis."""
    eps = rng.standard_normal((spec.bands, n_pixels))
    rho = spec.noise_corr
    if rho == 0.0:
        return eps
    out = np.empty_like(eps)
    out[0] = eps[0]
    scale = np.sqrt(1.0 - rho * rho)
    for b in range(1, spec.bands):
        out[b] = rho * out[b - 1] + scale * eps[b]
    return out


def generate_synthetic(spec: SyntheticSpec, seed: Optional[int] = None) -> tuple[HyperCube, GroundTruth]:
    """Build a seeded synthetic cube and its label grid.

    Values are rounded to float32 so a save/load round trip is exact.
    """
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    labels = synthetic_labels(spec)
    means = class_means(spec, rng)
    data = means[labels - 1].transpose(2, 0, 1)
    if spec.sigma > 0:
        noise = band_noise(spec, rng, spec.rows * spec.cols)
        data = data + spec.sigma * noise.reshape(spec.bands, spec.rows, spec.cols)
    data = data.astype(np.float32).astype(np.float64)
    return HyperCube(data), GroundTruth(labels)
