"""Binning of proton histories and per-bin statistical data cuts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .io import HISTORY_DTYPE

__all__ = [
    "BinningConfig",
    "BinGrid",
    "bin_histories",
    "apply_data_cuts",
    "relative_angles",
    "CUT_QUANTITIES",
]

CUT_QUANTITIES = ("wepl", "rel_horizontal_angle", "rel_vertical_angle")


@dataclass(frozen=True)
class BinningConfig:
    angular_bin: float = 4.0
    lateral_bin: float = 1.0
    vertical_bin: float = 5.0
    cut_sigma: float = 3.0

    def __post_init__(self):
        for name in ("angular_bin", "lateral_bin", "vertical_bin", "cut_sigma"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")

    @property
    def num_angle_bins(self) -> int:
        return max(1, int(round(360.0 / self.angular_bin)))


def relative_angles(histories: np.ndarray):
    """Exit minus entry angle, horizontal and vertical planes."""
    h = histories["exit_angle"] - histories["entry_angle"]
    v = histories["exit_vertical_angle"] - histories["entry_vertical_angle"]
    return h, v


def _bin_keys(histories, cfg: BinningConfig) -> np.ndarray:
    # angle bins are centered on multiples of the bin width so that each
    # projection of a step-and-shoot scan lands in the middle of its bin
    ia = np.floor(histories["projection_angle"] / cfg.angular_bin + 0.5).astype(np.int64)
    ia %= cfg.num_angle_bins
    il = np.floor(histories["lateral_displacement"] / cfg.lateral_bin).astype(np.int64)
    iv = np.floor(histories["vertical_displacement"] / cfg.vertical_bin).astype(np.int64)
    return np.stack([ia, il, iv], axis=1)


def _unique_rows(rows: np.ndarray):
    """Lexicographically sorted unique integer rows and the inverse map.

    Rows are packed into one int64 per row first; a 1D unique is far faster
    than ``np.unique(axis=0)``.
    """
    lo = rows.min(axis=0)
    span = rows.max(axis=0) - lo + 1
    if np.prod(span.astype(np.float64)) >= 2.0**62:
        keys, inverse = np.unique(rows, axis=0, return_inverse=True)
        return keys, inverse.reshape(-1)
    code = np.zeros(len(rows), dtype=np.int64)
    for a in range(rows.shape[1]):
        code = code * span[a] + (rows[:, a] - lo[a])
    uniq, inverse = np.unique(code, return_inverse=True)
    keys = np.empty((len(uniq), rows.shape[1]), dtype=np.int64)
    rest = uniq
    for a in range(rows.shape[1] - 1, -1, -1):
        rest, keys[:, a] = np.divmod(rest, span[a])
        keys[:, a] += lo[a]
    return keys, inverse.reshape(-1)


@dataclass
class BinGrid:
    """Histories grouped by (angle, lateral, vertical) bin.

    ``keys`` holds the occupied bins in lexicographic order. Members of bin
    ``b`` are ``order[offsets[b]:offsets[b + 1]]`` (indices into
    ``histories``), in ascending history order.
    """

    config: BinningConfig
    histories: np.ndarray
    keys: np.ndarray
    order: np.ndarray
    offsets: np.ndarray
    bin_of: np.ndarray
    mean: dict
    std: dict

    def __len__(self):
        return len(self.keys)

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    def members(self, b: int) -> np.ndarray:
        return self.order[self.offsets[b] : self.offsets[b + 1]]

    def angle_centers(self) -> np.ndarray:
        """Bin-center projection angle in degrees."""
        return self.keys[:, 0] * self.config.angular_bin

    def lateral_centers(self) -> np.ndarray:
        return (self.keys[:, 1] + 0.5) * self.config.lateral_bin

    def vertical_ranges(self) -> tuple[np.ndarray, np.ndarray]:
        lo = self.keys[:, 2] * self.config.vertical_bin
        return lo, lo + self.config.vertical_bin

    def representative_paths(self, half_length: float, z: Optional[np.ndarray] = None):
        """Bin-center straight lines, ``(p0, p1)`` arrays of shape (n, 3).

        ``z`` defaults to each bin's vertical center.
        """
        phi = np.deg2rad(self.angle_centers())
        beam = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        lat = np.stack([-np.sin(phi), np.cos(phi)], axis=1)
        s = self.lateral_centers()
        if z is None:
            lo, hi = self.vertical_ranges()
            z = 0.5 * (lo + hi)
        p0 = np.empty((len(self), 3))
        p1 = np.empty((len(self), 3))
        p0[:, :2] = -half_length * beam + s[:, None] * lat
        p1[:, :2] = half_length * beam + s[:, None] * lat
        p0[:, 2] = z
        p1[:, 2] = z
        return p0, p1

    def table(self, limit: Optional[int] = None) -> str:
        """Plain-text bin statistics report."""
        head = (
            f"{'angle':>7} {'lateral':>8} {'vert':>6} {'n':>6} "
            f"{'wepl_mean':>10} {'wepl_std':>9} {'dh_mean':>9} {'dh_std':>8} {'dv_mean':>9} {'dv_std':>8}"
        )
        rows = [head]
        n = len(self) if limit is None else min(limit, len(self))
        counts = self.counts
        for b in range(n):
            rows.append(
                f"{self.angle_centers()[b]:7.1f} {self.lateral_centers()[b]:8.2f} "
                f"{self.keys[b, 2]:6d} {counts[b]:6d} "
                f"{self.mean['wepl'][b]:10.4f} {self.std['wepl'][b]:9.4f} "
                f"{self.mean['rel_horizontal_angle'][b]:9.5f} {self.std['rel_horizontal_angle'][b]:8.5f} "
                f"{self.mean['rel_vertical_angle'][b]:9.5f} {self.std['rel_vertical_angle'][b]:8.5f}"
            )
        return "\n".join(rows) + "\n"


def _quantities(histories) -> dict:
    h, v = relative_angles(histories)
    return {"wepl": histories["wepl"], "rel_horizontal_angle": h, "rel_vertical_angle": v}


def bin_histories(histories: np.ndarray, cfg: BinningConfig = BinningConfig()) -> BinGrid:
    histories = np.asarray(histories)
    if len(histories) == 0:
        empty = np.empty(0)
        return BinGrid(
            cfg,
            np.empty(0, dtype=HISTORY_DTYPE),
            np.empty((0, 3), dtype=np.int64),
            np.empty(0, dtype=np.int64),
            np.zeros(1, dtype=np.int64),
            np.empty(0, dtype=np.int64),
            {q: empty for q in CUT_QUANTITIES},
            {q: empty for q in CUT_QUANTITIES},
        )
    raw = _bin_keys(histories, cfg)
    keys, bin_of = _unique_rows(raw)
    order = np.argsort(bin_of, kind="stable")
    counts = np.bincount(bin_of, minlength=len(keys))
    offsets = np.concatenate([[0], np.cumsum(counts)])
    mean, std = {}, {}
    starts = offsets[:-1]
    for name, x in _quantities(histories).items():
        xs = x[order]
        m = np.add.reduceat(xs, starts) / counts
        dev = xs - np.repeat(m, counts)
        var = np.add.reduceat(dev * dev, starts) / counts
        mean[name] = m
        std[name] = np.sqrt(var)
    return BinGrid(cfg, histories, keys, order, offsets, bin_of, mean, std)


def apply_data_cuts(bins: BinGrid) -> tuple[np.ndarray, BinGrid]:
    """Drop histories beyond ``cut_sigma`` standard deviations of their bin mean.

    Any of WEPL, relative horizontal angle and relative vertical angle can
    trigger removal. Bins with fewer than two members are left alone. One
    pass only: statistics are recomputed on the survivors but not re-cut.
    """
    if len(bins.histories) == 0:
        return bins.histories, bins
    k = bins.config.cut_sigma
    exempt = bins.counts[bins.bin_of] < 2
    keep = np.ones(len(bins.histories), dtype=bool)
    for name, x in _quantities(bins.histories).items():
        m = bins.mean[name][bins.bin_of]
        s = bins.std[name][bins.bin_of]
        keep &= np.abs(x - m) <= k * s
    keep |= exempt
    survivors = bins.histories[keep]
    return survivors, bin_histories(survivors, bins.config)
