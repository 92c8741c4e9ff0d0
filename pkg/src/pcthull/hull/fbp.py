"""Parallel-beam filtered backprojection used as a hull detector."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from ..geometry import GridSpec
from ..preprocessing import BinGrid
from .thresholds import AlgorithmThresholds

__all__ = [
    "Sinogram",
    "build_sinogram",
    "shepp_logan_kernel",
    "shepp_logan_filter",
    "fbp_reconstruct",
    "fbp_hull",
    "fbp_detect",
]


@dataclass(frozen=True)
class Sinogram:
    """Mean WEPL per (view, vertical level, lateral bin).

    ``values`` has shape ``(n_views, n_levels, n_lateral)``. Views sit at
    ``angles`` (degrees) and lateral bins at ``lateral_centers`` (mm, uniform
    spacing ``lateral_width``). Level ``j`` covers ``[level_edges[j],
    level_edges[j + 1])`` mm vertically. ``hits`` counts the histories
    behind each entry.
    """

    values: np.ndarray
    angles: np.ndarray
    lateral_centers: np.ndarray
    lateral_width: float
    level_edges: np.ndarray
    hits: np.ndarray

    @property
    def num_views(self) -> int:
        return self.values.shape[0]

    def with_values(self, values) -> "Sinogram":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.values.shape:
            raise ValueError("replacement values must keep the sinogram shape")
        return replace(self, values=values)


def build_sinogram(bins: BinGrid) -> Sinogram:
    """Scatter bin-mean WEPL into a dense sinogram; empty bins read 0."""
    cfg = bins.config
    n_views = cfg.num_angle_bins
    angles = np.arange(n_views) * cfg.angular_bin
    if len(bins) == 0:
        warnings.warn("no histories: sinogram is empty", stacklevel=2)
        return Sinogram(
            np.zeros((n_views, 0, 0)), angles, np.zeros(0), cfg.lateral_bin, np.zeros(1), np.zeros((n_views, 0, 0), np.int64)
        )
    ia, il, iv = bins.keys[:, 0], bins.keys[:, 1], bins.keys[:, 2]
    l0, v0 = il.min(), iv.min()
    n_lat = int(il.max() - l0 + 1)
    n_lev = int(iv.max() - v0 + 1)
    values = np.zeros((n_views, n_lev, n_lat))
    hits = np.zeros((n_views, n_lev, n_lat), dtype=np.int64)
    values[ia, iv - v0, il - l0] = bins.mean["wepl"]
    hits[ia, iv - v0, il - l0] = bins.counts
    empty = int((hits == 0).sum())
    if empty:
        warnings.warn(f"{empty} of {hits.size} sinogram bins are empty and read as 0", stacklevel=2)
    lateral = (np.arange(n_lat) + l0 + 0.5) * cfg.lateral_bin
    edges = (np.arange(n_lev + 1) + v0) * cfg.vertical_bin
    return Sinogram(values, angles, lateral, float(cfg.lateral_bin), edges.astype(np.float64), hits)


def shepp_logan_kernel(n_taps: int, bin_width: float) -> np.ndarray:
    """Kernel samples for offsets ``-(n_taps - 1) .. n_taps - 1``."""
    n = np.arange(-(n_taps - 1), n_taps, dtype=np.float64)
    return -2.0 / (np.pi**2 * bin_width**2 * (4.0 * n * n - 1.0))


def shepp_logan_filter(projection, bin_width: float) -> np.ndarray:
    """Convolve a lateral profile with the Shepp-Logan kernel (same length out)."""
    p = np.asarray(projection, dtype=np.float64)
    if p.ndim != 1 or p.size < 1:
        raise ValueError("projection must be a non-empty 1D profile")
    if bin_width <= 0:
        raise ValueError("bin_width must be > 0")
    k = p.size
    return np.convolve(p, shepp_logan_kernel(k, bin_width))[k - 1 : 2 * k - 1]


def _filter_rows(rows: np.ndarray, bin_width: float) -> np.ndarray:
    k = rows.shape[-1]
    h = shepp_logan_kernel(k, bin_width)
    size = 1 << int(np.ceil(np.log2(3 * k)))
    spec = np.fft.rfft(rows, size, axis=-1) * np.fft.rfft(h, size)
    return np.fft.irfft(spec, size, axis=-1)[..., k - 1 : 2 * k - 1]


def fbp_reconstruct(sino: Sinogram, grid: GridSpec) -> np.ndarray:
    """RSP volume on ``grid``.

    Each slice is reconstructed from the vertical level containing its
    center; slices outside every level stay 0. Views are assumed to cover a
    full turn, hence the factor one half on the angular step.
    """
    out = grid.zeros()
    if sino.values.size == 0:
        return out
    n_views = sino.num_views
    if n_views < 2:
        raise ValueError("filtered backprojection needs at least two views")
    zc = grid.centers(2)
    level = np.searchsorted(sino.level_edges, zc, side="right") - 1
    valid = (level >= 0) & (level < sino.values.shape[1])
    if not valid.any():
        return out
    used = np.unique(level[valid])
    tau = sino.lateral_width
    filtered = tau * _filter_rows(sino.values[:, used, :], tau)
    x = grid.centers(0)[None, :]
    y = grid.centers(1)[:, None]
    s0 = sino.lateral_centers[0]
    n_lat = sino.lateral_centers.size
    images = np.zeros((used.size, grid.ny, grid.nx))
    phi = np.deg2rad(sino.angles)
    for j in range(n_views):
        # lateral coordinate of each pixel for this view
        u = (-np.sin(phi[j]) * x + np.cos(phi[j]) * y - s0) / tau
        i0 = np.floor(u).astype(np.int64)
        w = u - i0
        lo_ok = (i0 >= 0) & (i0 < n_lat)
        hi_ok = (i0 + 1 >= 0) & (i0 + 1 < n_lat)
        a = np.clip(i0, 0, n_lat - 1)
        b = np.clip(i0 + 1, 0, n_lat - 1)
        for k in range(used.size):
            q = filtered[j, k]
            images[k] += np.where(lo_ok, q[a], 0.0) * (1.0 - w) + np.where(hi_ok, q[b], 0.0) * w
    images *= 0.5 * (2.0 * np.pi / n_views)
    pos = np.searchsorted(used, level[valid])
    out[valid] = images[pos]
    return out


def fbp_hull(recon: np.ndarray, th: AlgorithmThresholds = AlgorithmThresholds()) -> np.ndarray:
    """Voxels at or above the RSP threshold."""
    return (np.asarray(recon) >= th.fbp_rsp_threshold).astype(np.uint8)


def fbp_detect(bins: BinGrid, grid: GridSpec, th: AlgorithmThresholds = AlgorithmThresholds()):
    """FBP hull from cut, binned histories; returns ``(mask, reconstruction)``."""
    recon = fbp_reconstruct(build_sinogram(bins), grid)
    return fbp_hull(recon, th), recon
