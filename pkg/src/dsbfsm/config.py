"""Flat ``key=value`` run configuration shared by the command-line tools."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

from .dominant_sets import DEFAULT_DELTA, DEFAULT_TH
from .errors import DomainError
from .evaluation import DEFAULT_REPETITIONS, ClassifierSpec
from .hsi_io import DEFAULT_MAX_PIXELS, parse_band_list
from .stage1 import (
    DEFAULT_C_D,
    DEFAULT_C_S,
    PixelSimilarityParams,
    rescale_spectral_coefficient,
)
from .stage2 import DEFAULT_C_B, DEFAULT_C_V, BandSimilarityParams


def _int_list(text) -> tuple[int, ...]:
    return parse_band_list(text)


def _region(text) -> Optional[tuple[int, int, int, int]]:
    if text in (None, "", "all"):
        return None
    parts = tuple(int(v) for v in str(text).split(","))
    if len(parts) != 4:
        raise ValueError("region needs four integers row0,row1,col0,col1")
    return parts


def _optional_int(text) -> Optional[int]:
    if text in (None, "", "none", "all"):
        return None
    return int(text)


def _optional_float(text) -> Optional[float]:
    if text in (None, "", "none"):
        return None
    return float(text)


def _optional_path(text) -> Optional[str]:
    return None if text in (None, "") else str(text)


def _methods(text) -> tuple[str, ...]:
    return tuple(m.strip() for m in str(text).split(",") if m.strip())


METHODS = ("dsbfsm", "cbs", "sfs")


@dataclass(frozen=True)
class RunConfig:
    """Every input of a pipeline run. Defaults follow the published coefficients."""

    cube: Optional[str] = None
    header: Optional[str] = None
    gt: Optional[str] = None
    out: str = "out"
    region: Optional[tuple[int, int, int, int]] = None
    classes: Optional[tuple[int, ...]] = None
    max_pixels: Optional[int] = DEFAULT_MAX_PIXELS
    eval_max_pixels: Optional[int] = None
    c_d: float = DEFAULT_C_D
    c_s: float = DEFAULT_C_S
    # mean reflectance of the scene c_s was tuned on; rescales c_s to the target partition
    c_s_reference_mean: Optional[float] = None
    th: float = DEFAULT_TH
    delta: float = DEFAULT_DELTA
    c_b: float = DEFAULT_C_B
    c_v: float = DEFAULT_C_V
    t_b: float = DEFAULT_TH
    k: Optional[int] = None
    max_k: Optional[int] = None
    min_gain: float = 0.0
    n_train: tuple[int, ...] = (5, 10, 20)
    repetitions: int = DEFAULT_REPETITIONS
    seed: Optional[int] = None
    classifier: str = "1nn"
    classifier_command: Optional[str] = None
    methods: tuple[str, ...] = METHODS

    def __post_init__(self):
        self.stage1_params()
        self.stage2_params()
        self.classifier_spec()
        if self.repetitions < 1:
            raise DomainError("repetitions must be at least 1")
        if not self.n_train or min(self.n_train) < 1:
            raise DomainError("n_train needs positive sizes")
        if self.k is not None and self.k < 1:
            raise DomainError("k must be positive")
        if self.c_s_reference_mean is not None and not self.c_s_reference_mean > 0:
            raise DomainError("c_s_reference_mean must be positive")
        for name in ("max_pixels", "eval_max_pixels", "max_k"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise DomainError(f"{name} must be positive")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown or not self.methods:
            raise DomainError(f"unknown method(s) {unknown}; choose from {', '.join(METHODS)}")

    def stage1_params(self, target_mean: Optional[float] = None) -> PixelSimilarityParams:
        """Pixel-similarity settings; ``target_mean`` triggers the c_s rescaling."""
        c_s = self.c_s
        if self.c_s_reference_mean is not None and target_mean is not None:
            c_s = rescale_spectral_coefficient(c_s, self.c_s_reference_mean, target_mean)
        return PixelSimilarityParams(c_d=self.c_d, c_s=c_s, th=self.th, delta=self.delta)

    def stage2_params(self) -> BandSimilarityParams:
        return BandSimilarityParams(c_b=self.c_b, c_v=self.c_v, t_b=self.t_b, delta=self.delta)

    def classifier_spec(self) -> ClassifierSpec:
        return ClassifierSpec(self.classifier, self.classifier_command)

    def require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise DomainError(f"missing required setting(s): {', '.join(missing)}")

    def as_dict(self) -> dict:
        """JSON-friendly echo of the configuration."""
        out = {}
        for key, value in asdict(self).items():
            out[key] = list(value) if isinstance(value, tuple) else value
        return out

    def as_text(self) -> str:
        lines = []
        for key, value in self.as_dict().items():
            if value is None:
                text = ""
            elif isinstance(value, list):
                text = ",".join(str(v) for v in value)
            else:
                text = str(value)
            lines.append(f"{key}={text}")
        return "\n".join(lines) + "\n"


PARSERS = {
    "cube": _optional_path,
    "header": _optional_path,
    "gt": _optional_path,
    "out": str,
    "region": _region,
    "classes": lambda t: _int_list(t) or None,
    "max_pixels": _optional_int,
    "eval_max_pixels": _optional_int,
    "c_d": float,
    "c_s": float,
    "c_s_reference_mean": _optional_float,
    "th": float,
    "delta": float,
    "c_b": float,
    "c_v": float,
    "t_b": float,
    "k": _optional_int,
    "max_k": _optional_int,
    "min_gain": float,
    "n_train": _int_list,
    "repetitions": int,
    "seed": _optional_int,
    "classifier": str,
    "classifier_command": _optional_path,
    "methods": _methods,
}


def parse_pairs(text: str, source: str = "config") -> dict[str, str]:
    """Raw ``key=value`` pairs; ``#`` starts a comment, blank lines are skipped."""
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DomainError(f"{source}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        pairs[key.replace("-", "_")] = value
    return pairs


def build_config(pairs: dict[str, str]) -> RunConfig:
    """Convert raw pairs into a validated RunConfig."""
    values = {}
    for key, raw in pairs.items():
        if key not in PARSERS:
            raise DomainError(f"unknown setting '{key}'")
        try:
            values[key] = PARSERS[key](raw)
        except ValueError as exc:
            raise DomainError(f"bad value for '{key}': {exc}") from None
    return RunConfig(**values)


def load_config(path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise DomainError(f"config file not found: {path}") from None
    return parse_pairs(text, str(path))
