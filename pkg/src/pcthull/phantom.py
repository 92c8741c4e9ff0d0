"""Digital head phantom built from nested elliptic cylinders."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from .geometry import GridSpec

__all__ = [
    "EllipseRegion",
    "PhantomSpec",
    "rasterize_phantom",
    "true_hull",
    "resample_hull",
    "load_phantom_spec",
    "save_phantom_spec",
    "default_neo_spec",
]


@dataclass(frozen=True)
class EllipseRegion:
    center: tuple[float, float]
    semi_axis_a: float
    semi_axis_b: float
    rsp: float
    rotation: float = 0.0
    z_range: Optional[tuple[int, int]] = None
    priority: int = 0
    name: str = ""

    def __post_init__(self):
        if self.semi_axis_a <= 0 or self.semi_axis_b <= 0:
            raise ValueError(f"region {self.name!r}: semi-axes must be > 0")
        if self.rsp < 0:
            raise ValueError(f"region {self.name!r}: rsp must be >= 0")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        if self.z_range is not None:
            lo, hi = (int(v) for v in self.z_range)
            if hi <= lo:
                raise ValueError(f"region {self.name!r}: empty z_range {self.z_range}")
            object.__setattr__(self, "z_range", (lo, hi))

    def contains(self, x, y) -> np.ndarray:
        """In-plane containment test for points (broadcasts)."""
        dx = np.asarray(x, dtype=np.float64) - self.center[0]
        dy = np.asarray(y, dtype=np.float64) - self.center[1]
        c, s = np.cos(self.rotation), np.sin(self.rotation)
        u = dx * c + dy * s
        v = -dx * s + dy * c
        return (u / self.semi_axis_a) ** 2 + (v / self.semi_axis_b) ** 2 <= 1.0

    def bounding_radius(self) -> float:
        return max(self.semi_axis_a, self.semi_axis_b)


@dataclass(frozen=True)
class PhantomSpec:
    grid: GridSpec
    regions: tuple[EllipseRegion, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        g = self.grid
        for r in self.regions:
            rad = r.bounding_radius()
            cx, cy = r.center
            if (
                cx - rad < g.origin[0]
                or cx + rad > g.upper[0]
                or cy - rad < g.origin[1]
                or cy + rad > g.upper[1]
            ):
                warnings.warn(f"region {r.name!r} may be clipped by the grid extent", stacklevel=3)

    def to_dict(self) -> dict:
        regions = []
        for r in self.regions:
            d = {
                "name": r.name,
                "center": list(r.center),
                "semi_axis_a": r.semi_axis_a,
                "semi_axis_b": r.semi_axis_b,
                "rotation": r.rotation,
                "rsp": r.rsp,
                "priority": r.priority,
            }
            if r.z_range is not None:
                d["z_range"] = list(r.z_range)
            regions.append(d)
        return {"grid": self.grid.to_dict(), "regions": regions}

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        grid = GridSpec.from_dict(d["grid"])
        regions = []
        for r in d.get("regions") or []:
            r = dict(r)
            if r.get("z_range") is not None:
                r["z_range"] = tuple(r["z_range"])
            regions.append(EllipseRegion(**r))
        return cls(grid, tuple(regions))


def rasterize_phantom(spec: PhantomSpec) -> np.ndarray:
    """RSP volume: each voxel takes the RSP of the highest-priority region
    containing its center, 0 where no region does.

    Regions with equal priority paint in list order.
    """
    g = spec.grid
    rsp = g.zeros()
    x = g.centers(0)[None, :]
    y = g.centers(1)[:, None]
    order = sorted(range(len(spec.regions)), key=lambda i: (spec.regions[i].priority, i))
    for i in order:
        r = spec.regions[i]
        inside = r.contains(x, y)
        lo, hi = r.z_range if r.z_range is not None else (0, g.nz)
        lo, hi = max(lo, 0), min(hi, g.nz)
        if hi > lo:
            rsp[lo:hi][:, inside] = r.rsp
    return rsp


def true_hull(rsp: np.ndarray) -> np.ndarray:
    return (np.asarray(rsp) > 0).astype(np.uint8)


def resample_hull(hull: np.ndarray, src: GridSpec, dst: GridSpec) -> np.ndarray:
    """Carry a hull onto another grid.

    A destination voxel is set when it contains the center of any set source
    voxel, so the result stays a superset of the object on coarser grids.
    """
    out = dst.zeros(np.uint8)
    iz, iy, ix = np.nonzero(hull)
    if ix.size == 0:
        return out
    idx = []
    for axis, k in enumerate((ix, iy, iz)):
        c = src.origin[axis] + (k + 0.5) * src.sizes[axis]
        idx.append(np.floor((c - dst.origin[axis]) / dst.sizes[axis]).astype(np.int64))
    jx, jy, jz = idx
    keep = (jx >= 0) & (jx < dst.nx) & (jy >= 0) & (jy < dst.ny) & (jz >= 0) & (jz < dst.nz)
    out[jz[keep], jy[keep], jx[keep]] = 1
    return out


def load_phantom_spec(path) -> PhantomSpec:
    with open(path) as fh:
        return PhantomSpec.from_dict(yaml.safe_load(fh))


def save_phantom_spec(spec: PhantomSpec, path) -> None:
    Path(path).write_text(yaml.safe_dump(spec.to_dict(), sort_keys=False))


def default_neo_spec(nz: Optional[int] = None, regions: Optional[Sequence[EllipseRegion]] = None) -> PhantomSpec:
    """The packaged NEO head phantom; ``nz`` overrides the number of 1 mm slices."""
    text = resources.files("pcthull").joinpath("data/neo_default.yaml").read_text()
    d = yaml.safe_load(text)
    if nz is not None:
        d["grid"]["nz"] = int(nz)
    spec = PhantomSpec.from_dict(d)
    if regions is not None:
        spec = PhantomSpec(spec.grid, tuple(regions))
    return spec
