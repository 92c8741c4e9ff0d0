"""Silhouette carving (SC) and its count-based variant (MSC)."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..geometry import GridSpec, carve_in_plane, count_lines
from ..preprocessing import BinGrid
from .thresholds import AlgorithmThresholds, miss_classified

__all__ = [
    "average_filter_5x5",
    "miss_bins",
    "slices_in_vertical_bins",
    "sc_carve",
    "sc_detect",
    "count_paths",
    "msc_mask_from_counts",
    "msc_detect",
]


def average_filter_5x5(image: np.ndarray) -> np.ndarray:
    """Mean over the 5x5 window around each pixel, zeros outside the image.

    A 3D input is filtered slice by slice along its first axis.
    """
    a = np.asarray(image, dtype=np.float64)
    size = (1, 5, 5) if a.ndim == 3 else (5, 5)
    return ndimage.uniform_filter(a, size=size, mode="constant", cval=0.0)


def miss_bins(bins: BinGrid, th: AlgorithmThresholds) -> np.ndarray:
    """Bins whose mean WEPL (and mean deflection, if enabled) marks them as misses."""
    sel = bins.mean["wepl"] < th.wepl_miss_cutoff
    if th.miss_angle_cutoff is not None:
        defl = np.hypot(bins.mean["rel_horizontal_angle"], bins.mean["rel_vertical_angle"])
        sel &= defl < th.miss_angle_cutoff
    return sel


def slices_in_vertical_bins(lo: np.ndarray, hi: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Boolean ``(n_bins, nz)`` table: slice center inside ``[lo, hi)``."""
    zc = grid.centers(2)
    return (zc[None, :] >= np.asarray(lo)[:, None]) & (zc[None, :] < np.asarray(hi)[:, None])


def sc_carve(bins: BinGrid, grid: GridSpec, th: AlgorithmThresholds) -> np.ndarray:
    """Carved volume before filtering: 1 where no miss bin's path passed."""
    mask = np.ones(grid.shape, dtype=np.uint8)
    sel = miss_bins(bins, th)
    if not sel.any():
        return mask
    keys = bins.keys[sel]
    lo, hi = bins.vertical_ranges()
    table = slices_in_vertical_bins(lo[sel], hi[sel], grid)
    # every vertical bin of one (angle, lateral) pair shares the same in-plane
    # line, so merge them and traverse each line once
    # (bins are sorted by angle, then lateral, so each pair is contiguous)
    first = np.ones(len(keys), dtype=bool)
    first[1:] = np.any(keys[1:, :2] != keys[:-1, :2], axis=1)
    starts = np.flatnonzero(first)
    pairs = keys[starts, :2]
    merged = np.logical_or.reduceat(table, starts, axis=0)
    phi = np.deg2rad(pairs[:, 0] * bins.config.angular_bin)
    s = (pairs[:, 1] + 0.5) * bins.config.lateral_bin
    beam = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    lat = np.stack([-np.sin(phi), np.cos(phi)], axis=1)
    # lines pass the isocenter at lateral offset s; make them long enough to
    # cross the whole grid
    far = np.maximum(np.abs(grid.origin[:2]), np.abs(grid.upper[:2]))
    half = float(np.hypot(*far)) + 1.0
    base = s[:, None] * lat
    carve_in_plane(base - half * beam, base + half * beam, grid, merged, mask)
    return mask


def sc_detect(bins: BinGrid, grid: GridSpec, th: AlgorithmThresholds = AlgorithmThresholds()) -> np.ndarray:
    """SC hull from cut, binned histories.

    Miss bins are carved along their bin-center line in every slice whose
    center lies inside the bin's vertical range, then each slice is smoothed
    by a 5x5 mean and re-binarized (``> sc_filter_threshold``) so isolated
    carving mistakes near the surface are filled back in.
    """
    carved = sc_carve(bins, grid, th)
    return (average_filter_5x5(carved) > th.sc_filter_threshold).astype(np.uint8)


def count_paths(histories, selected: np.ndarray, grid: GridSpec, threads: int = 1) -> np.ndarray:
    """Per-voxel number of selected straight entry-to-exit paths."""
    h = histories[selected]
    p0 = np.stack([h["entry_x"], h["entry_y"], h["entry_z"]], axis=1)
    p1 = np.stack([h["exit_x"], h["exit_y"], h["exit_z"]], axis=1)
    return count_lines(p0, p1, grid, threads=threads)


def msc_mask_from_counts(counts: np.ndarray, n_t: int) -> np.ndarray:
    """Keep a voxel unless it exceeds one of its in-slice 4-neighbors by ``n_t`` or more.

    Out-of-grid neighbors are ignored. Only differences of counts enter, so
    adding a constant to every count leaves the result unchanged.
    """
    n = np.asarray(counts, dtype=np.int64)
    squeeze = n.ndim == 2
    if squeeze:
        n = n[None]
    p = np.pad(n, ((0, 0), (1, 1), (1, 1)), mode="edge")
    c = p[:, 1:-1, 1:-1]
    drop = np.maximum.reduce(
        [c - p[:, :-2, 1:-1], c - p[:, 2:, 1:-1], c - p[:, 1:-1, :-2], c - p[:, 1:-1, 2:]]
    )
    mask = (drop < n_t).astype(np.uint8)
    return mask[0] if squeeze else mask


def msc_detect(histories, grid: GridSpec, th: AlgorithmThresholds = AlgorithmThresholds(), threads: int = 1):
    """MSC hull from raw histories; returns ``(mask, miss_counts)``."""
    counts = count_paths(histories, miss_classified(histories, th), grid, threads)
    return msc_mask_from_counts(counts, th.msc_Nt), counts
