"""Space modeling (SM): hull from per-voxel hit counts and an edge-derived threshold."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..geometry import GridSpec
from .carving import count_paths
from .thresholds import AlgorithmThresholds, hit_classified

log = logging.getLogger(__name__)

__all__ = ["EdgeChain", "NoEdgeError", "find_edge_chain", "sm_threshold_for_slice", "sm_mask_from_counts", "sm_detect"]

# edge detector settings; gradient thresholds are fractions of the slice maximum
SMOOTHING_SIGMA = 3.0
STRONG_FRACTION = 0.5
WEAK_FRACTION = 0.25
_REL_TOL = 1e-9

# gradient direction sectors (0, 45, 90, 135 degrees) as (dy, dx) steps
_SECTOR_STEPS = ((0, 1), (1, 1), (1, 0), (1, -1))


class NoEdgeError(ValueError):
    """Raised when a slice carries no counts to find an edge in."""


@dataclass(frozen=True)
class EdgeChain:
    pixels: np.ndarray  # boolean [iy, ix]
    mean_gradient: float
    threshold: float


def _smooth(image: np.ndarray, sigma: float) -> np.ndarray:
    # odd reflection keeps linear trends intact up to the border, so a pure
    # ramp comes out of the smoothing unchanged
    pad = int(4.0 * sigma + 0.5) + 1
    padded = np.pad(image, pad, mode="reflect", reflect_type="odd")
    out = ndimage.gaussian_filter(padded, sigma, mode="nearest", truncate=4.0)
    return out[pad:-pad, pad:-pad]


def _thin(mag: np.ndarray, gy: np.ndarray, gx: np.ndarray, tol: float) -> np.ndarray:
    """Non-maximum suppression across the gradient direction (ties kept)."""
    angle = np.mod(np.rad2deg(np.arctan2(gy, gx)), 180.0)
    sector = np.floor((angle + 22.5) / 45.0).astype(np.int64) % 4
    p = np.pad(mag, 1)
    ny, nx = mag.shape
    keep = np.zeros(mag.shape, dtype=bool)
    for k, (dy, dx) in enumerate(_SECTOR_STEPS):
        ahead = p[1 + dy : 1 + dy + ny, 1 + dx : 1 + dx + nx]
        behind = p[1 - dy : 1 - dy + ny, 1 - dx : 1 - dx + nx]
        keep |= (sector == k) & (mag >= ahead - tol) & (mag >= behind - tol)
    return keep & (mag > tol)


def _chains(m_slice: np.ndarray, sigma: float):
    m = np.asarray(m_slice, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("expected a 2D slice")
    if not np.any(m):
        raise NoEdgeError("no edge: slice has no counts")
    smooth = _smooth(m, sigma)
    gy, gx = np.gradient(smooth)
    mag = np.hypot(gx, gy)
    peak = mag.max()
    tol = _REL_TOL * peak
    ridge = _thin(mag, gy, gx, tol)
    weak = ridge & (mag >= WEAK_FRACTION * peak - tol)
    strong = ridge & (mag >= STRONG_FRACTION * peak - tol)
    labels, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    seeded = np.unique(labels[strong])
    return smooth, mag, labels, seeded[seeded > 0], tol


def find_edge_chain(m_slice: np.ndarray, sigma: float = SMOOTHING_SIGMA) -> EdgeChain:
    """Strongest connected edge of a count slice.

    Canny-style: Gaussian smoothing, gradient magnitude, non-maximum
    suppression and hysteresis linking (8-connected). Among the surviving
    chains the one with the largest mean gradient wins; near-ties go to the
    chain with the lower threshold. The threshold is the largest smoothed
    count found on the chain.
    """
    smooth, mag, labels, seeded, tol = _chains(m_slice, sigma)
    if seeded.size == 0:
        raise NoEdgeError("no edge: slice has no gradient")
    best = None
    for lab in seeded:
        pix = labels == lab
        g = float(mag[pix].mean())
        t = float(smooth[pix].max())
        if best is None or g > best.mean_gradient + tol or (g >= best.mean_gradient - tol and t < best.threshold):
            best = EdgeChain(pix, g, t)
    return best


def sm_threshold_for_slice(m_slice: np.ndarray, sigma: float = SMOOTHING_SIGMA) -> float:
    """Count threshold for one slice, read off its strongest edge."""
    return find_edge_chain(m_slice, sigma).threshold


def sm_mask_from_counts(counts: np.ndarray, sigma: float = SMOOTHING_SIGMA):
    """Per-slice ``counts > threshold``; returns ``(mask, thresholds)``.

    Slices without counts give an empty mask and a NaN threshold.
    """
    counts = np.asarray(counts)
    mask = np.zeros(counts.shape, dtype=np.uint8)
    thresholds = np.full(counts.shape[0], np.nan)
    for iz in range(counts.shape[0]):
        try:
            t = sm_threshold_for_slice(counts[iz], sigma)
        except NoEdgeError:
            log.warning("slice %d has no hit paths; its SM hull is empty", iz)
            continue
        thresholds[iz] = t
        mask[iz] = counts[iz] > t
    return mask, thresholds


def sm_detect(histories, grid: GridSpec, th: AlgorithmThresholds = AlgorithmThresholds(), threads: int = 1):
    """SM hull from raw histories; returns ``(mask, hit_counts)``."""
    counts = count_paths(histories, hit_classified(histories, th), grid, threads)
    mask, _ = sm_mask_from_counts(counts)
    return mask, counts
