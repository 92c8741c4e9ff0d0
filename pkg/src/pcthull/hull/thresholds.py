"""Tunable cutoffs shared by the hull-detection algorithms."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

import numpy as np

from ..preprocessing import relative_angles

__all__ = ["AlgorithmThresholds", "miss_classified", "hit_classified"]


@dataclass(frozen=True)
class AlgorithmThresholds:
    """WEPL cutoffs are in mm, angle cutoffs in radians (``None`` disables them)."""

    wepl_miss_cutoff: float = 1.0
    wepl_hit_cutoff: float = 5.0
    miss_angle_cutoff: Optional[float] = None
    hit_angle_cutoff: Optional[float] = None
    msc_Nt: int = 50
    sc_filter_threshold: float = 0.4
    fbp_rsp_threshold: float = 0.6

    def __post_init__(self):
        if self.msc_Nt < 1:
            raise ValueError("msc_Nt must be >= 1")
        if not 0.0 <= self.sc_filter_threshold < 1.0:
            raise ValueError("sc_filter_threshold must lie in [0, 1)")
        for name in ("miss_angle_cutoff", "hit_angle_cutoff"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be > 0 or None")

    def replace(self, **changes) -> "AlgorithmThresholds":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "AlgorithmThresholds":
        d = dict(d or {})
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown threshold fields: {sorted(unknown)}")
        return cls(**d)


def _angle_change(histories):
    h, v = relative_angles(histories)
    return np.hypot(h, v)


def miss_classified(histories, th: AlgorithmThresholds) -> np.ndarray:
    """Protons taken to have missed the object: low WEPL and, if enabled, small deflection."""
    sel = histories["wepl"] < th.wepl_miss_cutoff
    if th.miss_angle_cutoff is not None:
        sel &= _angle_change(histories) < th.miss_angle_cutoff
    return sel


def hit_classified(histories, th: AlgorithmThresholds) -> np.ndarray:
    """Protons taken to have crossed the object: high WEPL or, if enabled, large deflection."""
    sel = histories["wepl"] > th.wepl_hit_cutoff
    if th.hit_angle_cutoff is not None:
        sel |= _angle_change(histories) > th.hit_angle_cutoff
    return sel
