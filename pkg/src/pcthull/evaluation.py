"""Hull comparison against ground truth, slice images and detection timing."""

from __future__ import annotations

import statistics
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .geometry import GridSpec
from .hull import AlgorithmThresholds, fbp_detect, msc_detect, sc_detect, sm_detect
from .preprocessing import BinGrid

__all__ = [
    "GridMismatchError",
    "HullComparison",
    "compare_hulls",
    "export_slice_image",
    "ALGORITHMS",
    "detect",
    "BenchReport",
    "run_benchmark",
]

ALGORITHMS = ("fbp", "sc", "msc", "sm")


class GridMismatchError(ValueError):
    """Two volumes that should share a grid do not."""


@dataclass(frozen=True)
class HullComparison:
    missing: int
    extra: int
    missing_per_slice: tuple[int, ...]
    extra_per_slice: tuple[int, ...]
    truth_size: int

    @property
    def exact(self) -> bool:
        return self.missing == 0 and self.extra == 0

    def swapped(self) -> "HullComparison":
        """The comparison with truth and approximation exchanged."""
        approx_size = self.truth_size - self.missing + self.extra
        return HullComparison(self.extra, self.missing, self.extra_per_slice, self.missing_per_slice, approx_size)

    def to_dict(self) -> dict:
        return {
            "missing": self.missing,
            "extra": self.extra,
            "truth_size": self.truth_size,
            "missing_per_slice": list(self.missing_per_slice),
            "extra_per_slice": list(self.extra_per_slice),
        }


def compare_hulls(
    truth: np.ndarray,
    approx: np.ndarray,
    truth_grid: Optional[GridSpec] = None,
    approx_grid: Optional[GridSpec] = None,
) -> HullComparison:
    """Count truth voxels absent from ``approx`` (missing) and ``approx``
    voxels outside truth (extra), in total and per slice."""
    t = np.asarray(truth).astype(bool)
    a = np.asarray(approx).astype(bool)
    if truth_grid is not None and approx_grid is not None and truth_grid != approx_grid:
        raise GridMismatchError(f"grids differ: {truth_grid} vs {approx_grid}")
    if t.shape != a.shape:
        raise GridMismatchError(f"mask shapes differ: {t.shape} vs {a.shape}")
    if t.ndim == 2:
        t, a = t[None], a[None]
    miss = (t & ~a).sum(axis=(1, 2))
    extra = (a & ~t).sum(axis=(1, 2))
    return HullComparison(
        int(miss.sum()),
        int(extra.sum()),
        tuple(int(v) for v in miss),
        tuple(int(v) for v in extra),
        int(t.sum()),
    )


Normalization = Union[str, tuple[float, float]]


def export_slice_image(image: np.ndarray, path, normalization: Normalization = "max") -> Path:
    """Write a 2D array as an 8-bit binary PGM.

    ``normalization`` is ``"max"`` (divide by the maximum), ``"minmax"``,
    ``"none"`` (values already in [0, 1]) or an explicit ``(lo, hi)`` range.
    Pixels become ``round(255 * clamp(v, 0, 1))`` with halves rounded up.
    """
    a = np.asarray(image, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("expected a 2D slice")
    if normalization == "max":
        top = a.max() if a.size else 0.0
        v = a / top if top > 0 else np.zeros_like(a)
    elif normalization == "minmax":
        lo, hi = (a.min(), a.max()) if a.size else (0.0, 0.0)
        v = (a - lo) / (hi - lo) if hi > lo else np.zeros_like(a)
    elif normalization == "none":
        v = a
    elif isinstance(normalization, (tuple, list)) and len(normalization) == 2:
        lo, hi = float(normalization[0]), float(normalization[1])
        if hi <= lo:
            raise ValueError("normalization range must have hi > lo")
        v = (a - lo) / (hi - lo)
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    pixels = np.floor(255.0 * np.clip(v, 0.0, 1.0) + 0.5).astype(np.uint8)
    path = Path(path)
    header = f"P5\n{a.shape[1]} {a.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(pixels.tobytes())
    return path


def detect(
    algorithm: str,
    grid: GridSpec,
    thresholds: AlgorithmThresholds,
    histories: Optional[np.ndarray] = None,
    bins: Optional[BinGrid] = None,
    threads: int = 1,
) -> np.ndarray:
    """Run one detector and return its mask.

    FBP and SC read cut, binned data; MSC and SM read raw histories.
    """
    if algorithm == "fbp":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            return fbp_detect(_need(bins, "bins", algorithm), grid, thresholds)[0]
    if algorithm == "sc":
        return sc_detect(_need(bins, "bins", algorithm), grid, thresholds)
    if algorithm == "msc":
        return msc_detect(_need(histories, "histories", algorithm), grid, thresholds, threads)[0]
    if algorithm == "sm":
        return sm_detect(_need(histories, "histories", algorithm), grid, thresholds, threads)[0]
    raise ValueError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")


def _need(value, name, algorithm):
    if value is None:
        raise ValueError(f"{algorithm} needs {name}")
    return value


@dataclass
class BenchReport:
    """Wall time of each detection stage over repeated runs (seconds)."""

    times: dict[str, list[float]]
    history_count: int
    grid_shape: tuple[int, int, int]
    threads: int
    thresholds: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, ts in self.times.items():
            if not ts or min(ts) <= 0:
                raise ValueError(f"{name}: timings must be positive")

    def min(self, algorithm: str) -> float:
        return min(self.times[algorithm])

    def median(self, algorithm: str) -> float:
        return statistics.median(self.times[algorithm])

    def to_dict(self) -> dict:
        return {
            "history_count": self.history_count,
            "grid_shape": list(self.grid_shape),
            "threads": self.threads,
            "thresholds": dict(self.thresholds),
            "algorithms": {
                k: {"min": self.min(k), "median": self.median(k), "runs": list(v)} for k, v in self.times.items()
            },
        }


def run_benchmark(
    grid: GridSpec,
    thresholds: AlgorithmThresholds = AlgorithmThresholds(),
    histories: Optional[np.ndarray] = None,
    bins: Optional[BinGrid] = None,
    algorithms: Sequence[str] = ALGORITHMS,
    repeats: int = 3,
    threads: int = 1,
    clock: Callable[[], float] = time.perf_counter,
) -> BenchReport:
    """Time each detection stage ``repeats`` times on prepared inputs.

    One untimed warm-up run per algorithm keeps JIT compilation out of the
    numbers.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    times = {}
    for algo in algorithms:
        detect(algo, grid, thresholds, histories, bins, threads)
        runs = []
        for _ in range(repeats):
            t0 = clock()
            detect(algo, grid, thresholds, histories, bins, threads)
            runs.append(max(clock() - t0, 1e-9))
        times[algo] = runs
    n = len(histories) if histories is not None else len(bins.histories) if bins is not None else 0
    return BenchReport(times, n, grid.shape, threads, thresholds.to_dict())
