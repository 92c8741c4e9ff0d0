"""Proton history generation for a rotating parallel-beam scan.

Each projection draws entry positions over the field of view, perturbs exit
position and angle of protons whose straight path crosses the object's
bounding box (bivariate normal in the horizontal and the vertical plane),
and records the WEPL accumulated along the entry-to-exit chord through the
phantom (by default each touched voxel counts one full voxel size, see
``ScanConfig.path_length``). WEPL noise is an optional Gaussian perturbation
whose width grows linearly with path length.

Random streams are derived per projection from the seed, so the output
does not depend on how projections are scheduled.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Iterator, Optional

import numpy as np
import yaml

from .geometry import GridSpec, LinePath, integrate_lines
from .io import HISTORY_DTYPE

log = logging.getLogger(__name__)

__all__ = [
    "ScatterModel",
    "NoiseModel",
    "ScanConfig",
    "ProtonHistory",
    "generate_histories",
    "simulate",
    "integrate_wepl",
    "apply_wepl_noise",
    "load_scan_config",
    "FULL_STUDY_HISTORIES",
]

# 90 projections x 131,072 protons
FULL_STUDY_HISTORIES = 11_796_480


@dataclass(frozen=True)
class ScatterModel:
    """Exit displacement (mm) and angle (rad) spread, per plane."""

    sigma_displacement: float = 0.5
    sigma_angle: float = 0.005
    correlation: float = 0.87

    def __post_init__(self):
        if self.sigma_displacement < 0 or self.sigma_angle < 0:
            raise ValueError("scatter sigmas must be >= 0")
        if not -1.0 <= self.correlation <= 1.0:
            raise ValueError("scatter correlation must lie in [-1, 1]")

    @property
    def enabled(self) -> bool:
        return self.sigma_displacement > 0 or self.sigma_angle > 0

    def covariance(self) -> np.ndarray:
        sd, sa, r = self.sigma_displacement, self.sigma_angle, self.correlation
        return np.array([[sd * sd, r * sd * sa], [r * sd * sa, sa * sa]])


@dataclass(frozen=True)
class NoiseModel:
    """WEPL noise with standard deviation ``sigma_base + sigma_slope * wepl``."""

    enabled: bool = False
    sigma_base: float = 1.0
    sigma_slope: float = 0.02

    def __post_init__(self):
        if self.sigma_base < 0 or self.sigma_slope < 0:
            raise ValueError("noise sigmas must be >= 0")


@dataclass(frozen=True)
class ScanConfig:
    num_projections: int = 90
    angular_step: float = 4.0
    protons_per_projection: int = 16_384
    beam_energy: str = "200 MeV"
    # entry/exit planes sit at +-detector_distance from the isocenter
    detector_distance: float = 150.0
    # lateral field is [-field_half_width, field_half_width]; vertical field
    # defaults to the phantom's z extent
    field_half_width: float = 142.0
    vertical_range: Optional[tuple[float, float]] = None
    sampling: str = "stratified"
    # "unit": every touched voxel adds its RSP times one voxel size, so a
    # proton grazing the object never looks like a miss; "exact" uses the
    # true chord length inside each voxel
    path_length: str = "unit"
    scatter: ScatterModel = field(default_factory=ScatterModel)
    noise: NoiseModel = field(default_factory=NoiseModel)
    seed: int = 0

    def __post_init__(self):
        if self.num_projections < 1:
            raise ValueError("num_projections must be >= 1")
        if self.protons_per_projection < 0:
            raise ValueError("protons_per_projection must be >= 0")
        if abs(self.num_projections * self.angular_step - 360.0) > 1e-9:
            raise ValueError(
                f"{self.num_projections} x {self.angular_step} deg does not cover 360 deg"
            )
        if self.sampling not in ("stratified", "uniform"):
            raise ValueError(f"unknown sampling {self.sampling!r}")
        if self.path_length not in PATH_LENGTH_MODELS:
            raise ValueError(f"unknown path_length {self.path_length!r}")
        if self.field_half_width <= 0 or self.detector_distance <= 0:
            raise ValueError("field and detector sizes must be > 0")
        if isinstance(self.scatter, dict):
            object.__setattr__(self, "scatter", ScatterModel(**self.scatter))
        if isinstance(self.noise, dict):
            object.__setattr__(self, "noise", NoiseModel(**self.noise))
        if self.vertical_range is not None:
            object.__setattr__(self, "vertical_range", tuple(float(v) for v in self.vertical_range))

    @property
    def total_histories(self) -> int:
        return self.num_projections * self.protons_per_projection

    def angles(self) -> np.ndarray:
        return np.arange(self.num_projections) * self.angular_step

    def replace(self, **changes) -> "ScanConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return ScanConfig(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["vertical_range"] is not None:
            d["vertical_range"] = list(d["vertical_range"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScanConfig":
        return cls(**d)


def load_scan_config(path) -> ScanConfig:
    with open(path) as fh:
        return ScanConfig.from_dict(yaml.safe_load(fh) or {})


@dataclass(frozen=True)
class ProtonHistory:
    """One record of a history array, for code that wants attribute access."""

    projection_angle: float
    entry_point: tuple[float, float, float]
    exit_point: tuple[float, float, float]
    entry_angle: float
    exit_angle: float
    entry_vertical_angle: float
    exit_vertical_angle: float
    lateral_displacement: float
    vertical_displacement: float
    wepl: float

    @classmethod
    def from_record(cls, r) -> "ProtonHistory":
        return cls(
            float(r["projection_angle"]),
            (float(r["entry_x"]), float(r["entry_y"]), float(r["entry_z"])),
            (float(r["exit_x"]), float(r["exit_y"]), float(r["exit_z"])),
            float(r["entry_angle"]),
            float(r["exit_angle"]),
            float(r["entry_vertical_angle"]),
            float(r["exit_vertical_angle"]),
            float(r["lateral_displacement"]),
            float(r["vertical_displacement"]),
            float(r["wepl"]),
        )

    @property
    def line(self) -> LinePath:
        return LinePath(self.entry_point, self.exit_point)


def beam_axes(angle_deg):
    """Beam direction and lateral unit vectors (in-plane) for projection angles."""
    phi = np.deg2rad(angle_deg)
    c, s = np.cos(phi), np.sin(phi)
    beam = np.stack([c, s, np.zeros_like(c)], axis=-1)
    lateral = np.stack([-s, c, np.zeros_like(c)], axis=-1)
    return beam, lateral


PATH_LENGTH_MODELS = ("exact", "unit")


def _wepl(p0, p1, rsp, grid: GridSpec, path_length: str):
    if path_length == "exact":
        return integrate_lines(p0, p1, grid, rsp)
    if path_length == "unit":
        return integrate_lines(p0, p1, grid, rsp, grid.voxel_size_x)
    raise ValueError(f"unknown path_length {path_length!r}; choose from {PATH_LENGTH_MODELS}")


def integrate_wepl(line: LinePath, rsp: np.ndarray, grid: GridSpec, path_length: str = "exact") -> float:
    """WEPL of a straight chord through an RSP volume.

    ``"exact"`` weights each voxel's RSP by the chord length inside it.
    ``"unit"`` counts every touched voxel with a full voxel size.
    """
    p0 = np.asarray(line.entry_point)[None, :]
    p1 = np.asarray(line.exit_point)[None, :]
    return float(_wepl(p0, p1, rsp, grid, path_length)[0])


def apply_wepl_noise(wepl, sigma_base: float, sigma_slope: float, rng: np.random.Generator):
    """``max(0, wepl + N(0, sigma_base + sigma_slope * wepl))``, elementwise."""
    if sigma_base < 0 or sigma_slope < 0:
        raise ValueError("noise sigmas must be >= 0")
    w = np.asarray(wepl, dtype=np.float64)
    if np.any(w < 0):
        raise ValueError("wepl must be >= 0")
    sigma = sigma_base + sigma_slope * w
    noisy = w + sigma * rng.standard_normal(w.shape)
    out = np.maximum(noisy, 0.0)
    # zero-width noise must be an exact identity
    out = np.where(sigma == 0, w, out)
    return out if out.ndim else float(out)


def object_bounds(rsp: np.ndarray, grid: GridSpec):
    """mm bounding box ``(lo, hi)`` of the non-zero voxels, or ``None``."""
    nz = np.nonzero(rsp)
    if nz[0].size == 0:
        return None
    lo = np.empty(3)
    hi = np.empty(3)
    for axis, k in zip((2, 1, 0), nz):
        lo[axis] = grid.origin[axis] + k.min() * grid.sizes[axis]
        hi[axis] = grid.origin[axis] + (k.max() + 1) * grid.sizes[axis]
    return lo, hi


def _hits_box(p0, p1, lo, hi):
    """Closed slab test, vectorized over segments."""
    d = p1 - p0
    ta = np.zeros(len(p0))
    tb = np.ones(len(p0))
    ok = np.ones(len(p0), dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        for a in range(3):
            flat = d[:, a] == 0
            ok &= ~flat | ((p0[:, a] >= lo[a]) & (p0[:, a] <= hi[a]))
            t1 = (lo[a] - p0[:, a]) / d[:, a]
            t2 = (hi[a] - p0[:, a]) / d[:, a]
            tmin = np.where(flat, -np.inf, np.minimum(t1, t2))
            tmax = np.where(flat, np.inf, np.maximum(t1, t2))
            ta = np.maximum(ta, tmin)
            tb = np.minimum(tb, tmax)
    return ok & (ta <= tb)


def _entry_positions(n, cfg: ScanConfig, zlo, zhi, rng):
    w = cfg.field_half_width
    if n == 0:
        return np.empty(0), np.empty(0)
    if cfg.sampling == "uniform":
        return rng.uniform(-w, w, n), rng.uniform(zlo, zhi, n)
    # jittered grid: one proton per cell of an n_lat x n_vert tiling
    target = np.sqrt(n * (zhi - zlo) / (2 * w))
    divisors = [k for k in range(1, n + 1) if n % k == 0]
    n_vert = min(divisors, key=lambda k: (abs(np.log(k / target)) if target > 0 else k, k))
    n_lat = n // n_vert
    j, i = np.divmod(np.arange(n), n_lat)
    s = -w + (i + rng.random(n)) * (2 * w / n_lat)
    z = zlo + (j + rng.random(n)) * ((zhi - zlo) / n_vert)
    return s, z


def _projection(k, angle, cfg, rsp, grid, bounds, seeds):
    geo_rng = np.random.default_rng(seeds[0])
    noise_rng = np.random.default_rng(seeds[1])
    n = cfg.protons_per_projection
    zlo, zhi = cfg.vertical_range if cfg.vertical_range is not None else (grid.origin[2], grid.upper[2])
    beam, lateral = beam_axes(angle)
    D = cfg.detector_distance
    s_in, z_in = _entry_positions(n, cfg, zlo, zhi, geo_rng)

    p0 = -D * beam + s_in[:, None] * lateral
    p0[:, 2] = z_in
    s_out = s_in.copy()
    z_out = z_in.copy()
    a_out = np.zeros(n)
    v_out = np.zeros(n)
    if cfg.scatter.enabled and bounds is not None and n:
        straight = D * beam + s_in[:, None] * lateral
        straight[:, 2] = z_in
        crossed = _hits_box(p0, straight, *bounds)
        cov = cfg.scatter.covariance()
        h = geo_rng.multivariate_normal([0.0, 0.0], cov, size=n, method="cholesky")
        v = geo_rng.multivariate_normal([0.0, 0.0], cov, size=n, method="cholesky")
        s_out = np.where(crossed, s_in + h[:, 0], s_in)
        a_out = np.where(crossed, h[:, 1], 0.0)
        z_out = np.where(crossed, z_in + v[:, 0], z_in)
        v_out = np.where(crossed, v[:, 1], 0.0)

    p1 = D * beam + s_out[:, None] * lateral
    p1[:, 2] = z_out
    wepl = _wepl(p0, p1, rsp, grid, cfg.path_length)
    if cfg.noise.enabled and n:
        wepl = apply_wepl_noise(wepl, cfg.noise.sigma_base, cfg.noise.sigma_slope, noise_rng)

    out = np.empty(n, dtype=HISTORY_DTYPE)
    out["projection_angle"] = angle
    out["entry_x"], out["entry_y"], out["entry_z"] = p0[:, 0], p0[:, 1], p0[:, 2]
    out["exit_x"], out["exit_y"], out["exit_z"] = p1[:, 0], p1[:, 1], p1[:, 2]
    out["entry_angle"] = 0.0
    out["exit_angle"] = a_out
    out["entry_vertical_angle"] = 0.0
    out["exit_vertical_angle"] = v_out
    out["lateral_displacement"] = 0.5 * (s_in + s_out)
    out["vertical_displacement"] = 0.5 * (z_in + z_out)
    out["wepl"] = wepl
    return out


def generate_histories(rsp: np.ndarray, grid: GridSpec, cfg: ScanConfig) -> Iterator[np.ndarray]:
    """Yield one ``HISTORY_DTYPE`` array per projection angle."""
    if rsp.shape != grid.shape:
        raise ValueError(f"phantom shape {rsp.shape} does not match grid {grid.shape}")
    rsp = np.ascontiguousarray(rsp, dtype=np.float64)
    bounds = object_bounds(rsp, grid)
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.num_projections)
    for k, angle in enumerate(cfg.angles()):
        yield _projection(k, angle, cfg, rsp, grid, bounds, children[k].spawn(2))


def simulate(rsp: np.ndarray, grid: GridSpec, cfg: ScanConfig) -> np.ndarray:
    """All histories of a scan as one array."""
    parts = list(generate_histories(rsp, grid, cfg))
    if not parts:
        return np.empty(0, dtype=HISTORY_DTYPE)
    out = np.concatenate(parts)
    log.info("simulated %d histories over %d projections", len(out), cfg.num_projections)
    return out
