"""Voxel grid model and straight-line traversal.

Volumes are numpy arrays indexed ``[iz, iy, ix]``. Physical coordinates are
in mm with the isocenter at the origin; a grid stores the mm position of its
lower corner.

A line "touches" a voxel when the closed segment intersects the closed voxel
box. Passing exactly through an edge or a corner therefore yields every voxel
sharing it.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numba
import numpy as np

__all__ = [
    "GridSpec",
    "LinePath",
    "VoxelIndex",
    "voxels_along_line",
    "point_to_voxel",
    "slice_view",
    "count_lines",
    "carve_lines",
    "carve_in_plane",
    "integrate_lines",
]


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    nz: int
    voxel_size_x: float = 1.0
    voxel_size_y: float = 1.0
    slice_thickness: float = 1.0
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if min(self.nx, self.ny, self.nz) < 1:
            raise ValueError(f"voxel counts must be >= 1, got {self.shape_xyz}")
        if min(self.voxel_size_x, self.voxel_size_y, self.slice_thickness) <= 0:
            raise ValueError("voxel sizes must be > 0")
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        if len(self.origin) != 3:
            raise ValueError("origin must have three components")

    @classmethod
    def centered(cls, nx, ny, nz, voxel_size_x=1.0, voxel_size_y=1.0, slice_thickness=1.0):
        """Grid whose physical center sits on the isocenter."""
        origin = (
            -0.5 * nx * voxel_size_x,
            -0.5 * ny * voxel_size_y,
            -0.5 * nz * slice_thickness,
        )
        return cls(nx, ny, nz, voxel_size_x, voxel_size_y, slice_thickness, origin)

    @property
    def shape(self) -> tuple[int, int, int]:
        """Array shape of a volume on this grid, ``(nz, ny, nx)``."""
        return (self.nz, self.ny, self.nx)

    @property
    def shape_xyz(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def sizes(self) -> tuple[float, float, float]:
        return (self.voxel_size_x, self.voxel_size_y, self.slice_thickness)

    @property
    def extent(self) -> tuple[float, float, float]:
        return tuple(n * s for n, s in zip(self.shape_xyz, self.sizes))

    @property
    def upper(self) -> tuple[float, float, float]:
        return tuple(o + n * s for o, n, s in zip(self.origin, self.shape_xyz, self.sizes))

    def boundary(self, axis: int, k) -> np.ndarray:
        """Position of boundary plane ``k`` along ``axis``; same formula as the kernels."""
        return self.origin[axis] + np.asarray(k) * self.sizes[axis]

    def centers(self, axis: int) -> np.ndarray:
        n = self.shape_xyz[axis]
        return self.origin[axis] + (np.arange(n) + 0.5) * self.sizes[axis]

    def voxel_center(self, index) -> np.ndarray:
        ix, iy, iz = index
        return np.array(
            [
                self.origin[0] + (ix + 0.5) * self.voxel_size_x,
                self.origin[1] + (iy + 0.5) * self.voxel_size_y,
                self.origin[2] + (iz + 0.5) * self.slice_thickness,
            ]
        )

    def zeros(self, dtype=np.float64) -> np.ndarray:
        return np.zeros(self.shape, dtype=dtype)

    def as_arrays(self):
        """``(origin, sizes, shape_xyz)`` as numpy arrays for the numba kernels."""
        return (
            np.asarray(self.origin, dtype=np.float64),
            np.asarray(self.sizes, dtype=np.float64),
            np.asarray(self.shape_xyz, dtype=np.int64),
        )

    def max_traversal(self) -> int:
        return 8 * (self.nx + self.ny + self.nz + 3)

    def to_dict(self) -> dict:
        return {
            "nx": self.nx,
            "ny": self.ny,
            "nz": self.nz,
            "voxel_size_x": self.voxel_size_x,
            "voxel_size_y": self.voxel_size_y,
            "slice_thickness": self.slice_thickness,
            "origin": list(self.origin),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        d = dict(d)
        if d.pop("centered", False):
            d.pop("origin", None)
            return cls.centered(**d)
        if "origin" in d:
            d["origin"] = tuple(d["origin"])
        return cls(**d)


class VoxelIndex(NamedTuple):
    ix: int
    iy: int
    iz: int


@dataclass(frozen=True)
class LinePath:
    entry_point: tuple[float, float, float]
    exit_point: tuple[float, float, float]

    def __post_init__(self):
        p0 = tuple(float(v) for v in self.entry_point)
        p1 = tuple(float(v) for v in self.exit_point)
        if len(p0) != 3 or len(p1) != 3:
            raise ValueError("line endpoints must be 3D points")
        if p0 == p1:
            raise ValueError("line has zero length")
        object.__setattr__(self, "entry_point", p0)
        object.__setattr__(self, "exit_point", p1)

    @property
    def length(self) -> float:
        return math.dist(self.entry_point, self.exit_point)

    @property
    def direction(self) -> np.ndarray:
        d = np.subtract(self.exit_point, self.entry_point)
        return d / np.linalg.norm(d)

    def reversed(self) -> "LinePath":
        return LinePath(self.exit_point, self.entry_point)


# --------------------------------------------------------------------------
# traversal kernel
# --------------------------------------------------------------------------


@numba.njit(cache=True)
def _first_boundary(p, d, o, s, n, ta):
    """Next boundary index reached at or after ``ta`` and its crossing time."""
    if d > 0:
        k = int(math.floor((p + d * ta - o) / s))
        k = min(max(k, 0), n)
        while k > 0 and (o + (k - 1) * s - p) / d >= ta:
            k -= 1
        while k <= n and (o + k * s - p) / d < ta:
            k += 1
    else:
        k = int(math.ceil((p + d * ta - o) / s))
        k = min(max(k, 0), n)
        while k < n and (o + (k + 1) * s - p) / d >= ta:
            k += 1
        while k >= 0 and (o + k * s - p) / d < ta:
            k -= 1
    if 0 <= k <= n:
        return k, (o + k * s - p) / d
    return k, np.inf


@numba.njit(cache=True)
def _workspace():
    return (
        np.zeros(3, np.int64),  # step
        np.zeros(3, np.int64),  # cur
        np.zeros(3, np.int64),  # knext
        np.zeros(3, np.int64),  # s_lo
        np.zeros(3, np.int64),  # s_cnt
        np.zeros(3, np.int64),  # nidx
        np.zeros(8, np.int64),  # keys
        np.zeros(3, np.bool_),  # crossing
        np.zeros((8, 3), np.int64),  # prev
        np.zeros((8, 3), np.int64),  # prod
        np.zeros((3, 2), np.int64),  # idx
        np.zeros((3, 2), np.int64),  # flg
        np.full(3, np.inf),  # tnext
        np.zeros(3),  # direction
    )


@numba.njit(cache=True)
def _traverse(p0, p1, origin, size, shape, out, ws):
    """Write voxels touched by segment ``p0 -> p1`` into ``out`` (rows ix, iy, iz).

    Returns the number of voxels written; order is entry to exit. ``ws`` is
    scratch space from ``_workspace``.
    """
    step, cur, knext, s_lo, s_cnt, nidx, keys, crossing, prev, prod, idx, flg, tnext, d = ws
    for a in range(3):
        d[a] = p1[a] - p0[a]
    ta = 0.0
    tb = 1.0
    for a in range(3):
        lo = origin[a]
        hi = origin[a] + shape[a] * size[a]
        if d[a] == 0.0:
            if p0[a] < lo or p0[a] > hi:
                return 0
        else:
            t1 = (lo - p0[a]) / d[a]
            t2 = (hi - p0[a]) / d[a]
            if t1 > t2:
                t1, t2 = t2, t1
            ta = max(ta, t1)
            tb = min(tb, t2)
    if ta > tb:
        return 0

    canon = 1
    for a in range(3):
        if d[a] != 0.0:
            canon = 1 if d[a] > 0 else -1
            break

    # static axes may sit exactly on a boundary plane and touch two layers
    for a in range(3):
        o = origin[a]
        s = size[a]
        n = shape[a]
        step[a] = 0
        cur[a] = 0
        tnext[a] = np.inf
        if d[a] == 0.0:
            i = int(math.floor((p0[a] - o) / s))
            i = min(max(i, 0), n - 1)
            while i > 0 and o + i * s > p0[a]:
                i -= 1
            while i < n - 1 and o + (i + 1) * s < p0[a]:
                i += 1
            if o + i * s == p0[a] and i > 0:
                s_lo[a] = i - 1
                s_cnt[a] = 2
            elif o + (i + 1) * s == p0[a] and i < n - 1:
                s_lo[a] = i
                s_cnt[a] = 2
            else:
                s_lo[a] = i
                s_cnt[a] = 1
            cur[a] = s_lo[a]
        else:
            step[a] = 1 if d[a] > 0 else -1
            k, t = _first_boundary(p0[a], d[a], o, s, n, ta)
            knext[a] = k
            tnext[a] = t
            cur[a] = k - 1 if step[a] > 0 else k

    doubled = s_cnt[0] == 2 or s_cnt[1] == 2 or s_cnt[2] == 2
    count = 0
    nprev = 0
    first = True
    while True:
        if first:
            te = ta
            first = False
        else:
            te = np.inf
            for a in range(3):
                if step[a] != 0 and tnext[a] < te:
                    te = tnext[a]
            if te > tb:
                break
        for a in range(3):
            crossing[a] = step[a] != 0 and tnext[a] == te
        for a in range(3):
            if crossing[a]:
                m = 0
                pre = cur[a]
                post = cur[a] + step[a]
                if 0 <= pre < shape[a]:
                    idx[a, m] = pre
                    flg[a, m] = 0
                    m += 1
                if 0 <= post < shape[a]:
                    idx[a, m] = post
                    flg[a, m] = 1
                    m += 1
                nidx[a] = m
            elif step[a] != 0:
                if 0 <= cur[a] < shape[a]:
                    idx[a, 0] = cur[a]
                    flg[a, 0] = 0
                    nidx[a] = 1
                else:
                    nidx[a] = 0
            else:
                if s_cnt[a] == 2:
                    if canon > 0:
                        idx[a, 0] = s_lo[a]
                        idx[a, 1] = s_lo[a] + 1
                    else:
                        idx[a, 0] = s_lo[a] + 1
                        idx[a, 1] = s_lo[a]
                    flg[a, 0] = 0
                    flg[a, 1] = 1
                    nidx[a] = 2
                else:
                    idx[a, 0] = s_lo[a]
                    flg[a, 0] = 0
                    nidx[a] = 1
        m = 0
        for i in range(nidx[0]):
            for j in range(nidx[1]):
                for k in range(nidx[2]):
                    prod[m, 0] = idx[0, i]
                    prod[m, 1] = idx[1, j]
                    prod[m, 2] = idx[2, k]
                    f = (flg[0, i], flg[1, j], flg[2, k])
                    level = 0
                    cbits = 0
                    sbits = 0
                    for a in range(3):
                        if crossing[a]:
                            level += f[a]
                            cbits = cbits * 2 + f[a]
                            sbits = sbits * 2
                        else:
                            cbits = cbits * 2
                            sbits = sbits * 2 + f[a]
                    keys[m] = level * 64 + (7 - cbits) * 8 + sbits
                    m += 1
        # insertion sort on keys, at most 8 entries
        for i in range(1, m):
            kk = keys[i]
            r0 = prod[i, 0]
            r1 = prod[i, 1]
            r2 = prod[i, 2]
            j = i - 1
            while j >= 0 and keys[j] > kk:
                keys[j + 1] = keys[j]
                prod[j + 1, 0] = prod[j, 0]
                prod[j + 1, 1] = prod[j, 1]
                prod[j + 1, 2] = prod[j, 2]
                j -= 1
            keys[j + 1] = kk
            prod[j + 1, 0] = r0
            prod[j + 1, 1] = r1
            prod[j + 1, 2] = r2
        for i in range(m):
            seen = False
            for j in range(nprev):
                if prev[j, 0] == prod[i, 0] and prev[j, 1] == prod[i, 1] and prev[j, 2] == prod[i, 2]:
                    seen = True
                    break
            if not seen:
                out[count, 0] = prod[i, 0]
                out[count, 1] = prod[i, 1]
                out[count, 2] = prod[i, 2]
                count += 1
        for i in range(m):
            prev[i, 0] = prod[i, 0]
            prev[i, 1] = prod[i, 1]
            prev[i, 2] = prod[i, 2]
        nprev = m

        done = False
        for a in range(3):
            if crossing[a]:
                cur[a] += step[a]
                knext[a] += step[a]
                if 0 <= knext[a] <= shape[a]:
                    tnext[a] = (origin[a] + knext[a] * size[a] - p0[a]) / d[a]
                else:
                    tnext[a] = np.inf
                if cur[a] < 0 or cur[a] >= shape[a]:
                    done = True
        if done:
            break
        if doubled:
            continue

        # single-axis crossings: the pre-crossing voxel is already emitted
        c0, c1, c2 = cur[0], cur[1], cur[2]
        k0, k1, k2 = knext[0], knext[1], knext[2]
        t0, t1, t2 = tnext[0], tnext[1], tnext[2]
        st0, st1, st2 = step[0], step[1], step[2]
        o0, o1, o2 = origin[0], origin[1], origin[2]
        z0, z1, z2 = size[0], size[1], size[2]
        n0, n1, n2 = shape[0], shape[1], shape[2]
        q0, q1, q2 = p0[0], p0[1], p0[2]
        e0, e1, e2 = d[0], d[1], d[2]
        finished = False
        while True:
            if t0 < t1 and t0 < t2:
                if t0 > tb:
                    finished = True
                    break
                c0 += st0
                k0 += st0
                t0 = (o0 + k0 * z0 - q0) / e0 if 0 <= k0 <= n0 else np.inf
                if c0 < 0 or c0 >= n0:
                    finished = True
                    break
            elif t1 < t0 and t1 < t2:
                if t1 > tb:
                    finished = True
                    break
                c1 += st1
                k1 += st1
                t1 = (o1 + k1 * z1 - q1) / e1 if 0 <= k1 <= n1 else np.inf
                if c1 < 0 or c1 >= n1:
                    finished = True
                    break
            elif t2 < t0 and t2 < t1:
                if t2 > tb:
                    finished = True
                    break
                c2 += st2
                k2 += st2
                t2 = (o2 + k2 * z2 - q2) / e2 if 0 <= k2 <= n2 else np.inf
                if c2 < 0 or c2 >= n2:
                    finished = True
                    break
            else:
                break
            out[count, 0] = c0
            out[count, 1] = c1
            out[count, 2] = c2
            count += 1
        if finished:
            break
        cur[0], cur[1], cur[2] = c0, c1, c2
        knext[0], knext[1], knext[2] = k0, k1, k2
        tnext[0], tnext[1], tnext[2] = t0, t1, t2
        prev[0, 0], prev[0, 1], prev[0, 2] = c0, c1, c2
        nprev = 1
    return count


@numba.njit(cache=True, nogil=True)
def _count_lines(p0s, p1s, origin, size, shape, counts, buf):
    ws = _workspace()
    for i in range(p0s.shape[0]):
        n = _traverse(p0s[i], p1s[i], origin, size, shape, buf, ws)
        for j in range(n):
            counts[buf[j, 2], buf[j, 1], buf[j, 0]] += 1


@numba.njit(cache=True, nogil=True)
def _carve_lines(p0s, p1s, origin, size, shape, mask, buf):
    ws = _workspace()
    for i in range(p0s.shape[0]):
        n = _traverse(p0s[i], p1s[i], origin, size, shape, buf, ws)
        for j in range(n):
            mask[buf[j, 2], buf[j, 1], buf[j, 0]] = 0


@numba.njit(cache=True, nogil=True)
def _carve_columns(p0s, p1s, origin, size, shape, bits, acc, buf):
    ws = _workspace()
    for i in range(p0s.shape[0]):
        n = _traverse(p0s[i], p1s[i], origin, size, shape, buf, ws)
        for j in range(n):
            acc[buf[j, 1], buf[j, 0]] |= bits[i]


@numba.njit(cache=True)
def _integrate_lines(p0s, p1s, origin, size, shape, values, step_length, out, buf):
    ws = _workspace()
    for i in range(p0s.shape[0]):
        n = _traverse(p0s[i], p1s[i], origin, size, shape, buf, ws)
        acc = 0.0
        for j in range(n):
            acc += values[buf[j, 2], buf[j, 1], buf[j, 0]]
        out[i] = acc * step_length


@numba.njit(cache=True)
def _clip_length(p0, p1, lo, hi):
    # length of the part of segment p0-p1 inside the box; a segment lying in
    # a face belongs to the voxel on the face's upper side only, so that a
    # face shared by two voxels is not counted twice
    ta = 0.0
    tb = 1.0
    for a in range(3):
        d = p1[a] - p0[a]
        if d == 0.0:
            if p0[a] < lo[a] or p0[a] >= hi[a]:
                return 0.0
            continue
        t1 = (lo[a] - p0[a]) / d
        t2 = (hi[a] - p0[a]) / d
        if t1 > t2:
            t1, t2 = t2, t1
        ta = max(ta, t1)
        tb = min(tb, t2)
    if tb <= ta:
        return 0.0
    length = 0.0
    for a in range(3):
        length += (p1[a] - p0[a]) ** 2
    return (tb - ta) * np.sqrt(length)


@numba.njit(cache=True)
def _integrate_lines_exact(p0s, p1s, origin, size, shape, values, out, buf):
    ws = _workspace()
    lo = np.empty(3)
    hi = np.empty(3)
    for i in range(p0s.shape[0]):
        n = _traverse(p0s[i], p1s[i], origin, size, shape, buf, ws)
        acc = 0.0
        for j in range(n):
            v = values[buf[j, 2], buf[j, 1], buf[j, 0]]
            if v == 0.0:
                continue
            for a in range(3):
                lo[a] = origin[a] + buf[j, a] * size[a]
                hi[a] = lo[a] + size[a]
            acc += v * _clip_length(p0s[i], p1s[i], lo, hi)
        out[i] = acc


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------


def voxels_along_line(line: LinePath, grid: GridSpec) -> list[VoxelIndex]:
    """Voxels whose closed box the segment touches, ordered entry to exit.

    An empty list means the segment misses the grid entirely.
    """
    origin, size, shape = grid.as_arrays()
    buf = np.empty((grid.max_traversal(), 3), np.int64)
    n = _traverse(
        np.asarray(line.entry_point, dtype=np.float64),
        np.asarray(line.exit_point, dtype=np.float64),
        origin,
        size,
        shape,
        buf,
        _workspace(),
    )
    return [VoxelIndex(int(r[0]), int(r[1]), int(r[2])) for r in buf[:n]]


def point_to_voxel(p: Sequence[float], grid: GridSpec) -> Optional[VoxelIndex]:
    """Floor-map a mm point to its voxel; ``None`` outside (max faces are outside)."""
    idx = []
    for axis in range(3):
        k = math.floor((float(p[axis]) - grid.origin[axis]) / grid.sizes[axis])
        if k < 0 or k >= grid.shape_xyz[axis]:
            return None
        idx.append(k)
    return VoxelIndex(*idx)


def slice_view(volume: np.ndarray, iz: int) -> np.ndarray:
    """Writable 2D view ``[iy, ix]`` of slice ``iz``."""
    nz = volume.shape[0]
    if not 0 <= iz < nz:
        raise IndexError(f"slice index {iz} out of range for {nz} slices")
    return volume[iz]


def _endpoints(p0s, p1s):
    p0s = np.ascontiguousarray(p0s, dtype=np.float64).reshape(-1, 3)
    p1s = np.ascontiguousarray(p1s, dtype=np.float64).reshape(-1, 3)
    if p0s.shape != p1s.shape:
        raise ValueError("entry and exit arrays differ in shape")
    return p0s, p1s


def _chunks(n: int, threads: int):
    threads = max(1, min(int(threads), n))
    edges = np.linspace(0, n, threads + 1).astype(np.int64)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def count_lines(
    p0s, p1s, grid: GridSpec, counts: Optional[np.ndarray] = None, threads: int = 1
) -> np.ndarray:
    """Add one to every voxel touched by each segment; returns int64 counts.

    With ``threads > 1`` each worker fills a private volume; integer sums do
    not depend on the split, so the result is identical to the serial run.
    """
    p0s, p1s = _endpoints(p0s, p1s)
    if counts is None:
        counts = np.zeros(grid.shape, dtype=np.int64)
    origin, size, shape = grid.as_arrays()
    parts = _chunks(len(p0s), threads)
    if len(parts) <= 1:
        buf = np.empty((grid.max_traversal(), 3), np.int64)
        _count_lines(p0s, p1s, origin, size, shape, counts, buf)
        return counts

    def work(ab):
        a, b = ab
        local = np.zeros(grid.shape, dtype=np.int64)
        buf = np.empty((grid.max_traversal(), 3), np.int64)
        _count_lines(p0s[a:b], p1s[a:b], origin, size, shape, local, buf)
        return local

    with ThreadPoolExecutor(len(parts)) as pool:
        for local in pool.map(work, parts):
            counts += local
    return counts


def carve_lines(p0s, p1s, grid: GridSpec, mask: np.ndarray, threads: int = 1) -> np.ndarray:
    """Zero every voxel of ``mask`` touched by a segment, in place."""
    p0s, p1s = _endpoints(p0s, p1s)
    origin, size, shape = grid.as_arrays()
    parts = _chunks(len(p0s), threads)
    if len(parts) <= 1:
        buf = np.empty((grid.max_traversal(), 3), np.int64)
        _carve_lines(p0s, p1s, origin, size, shape, mask, buf)
        return mask

    def work(ab):
        a, b = ab
        local = np.ones(grid.shape, dtype=mask.dtype)
        buf = np.empty((grid.max_traversal(), 3), np.int64)
        _carve_lines(p0s[a:b], p1s[a:b], origin, size, shape, local, buf)
        return local

    with ThreadPoolExecutor(len(parts)) as pool:
        for local in pool.map(work, parts):
            mask[local == 0] = 0
    return mask


def carve_in_plane(p0s, p1s, grid: GridSpec, slices: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Carve in-plane segments into a chosen set of slices, in place.

    ``p0s``/``p1s`` hold (x, y) endpoints; ``slices`` is a boolean
    ``(n_lines, nz)`` table saying which slices each segment is carved into.
    Each segment is traversed once and marks its slices in a per-column bit
    set, which is much cheaper than carving one 3D line per slice.
    """
    p0 = np.ascontiguousarray(p0s, dtype=np.float64).reshape(-1, 2)
    p1 = np.ascontiguousarray(p1s, dtype=np.float64).reshape(-1, 2)
    slices = np.asarray(slices, dtype=bool)
    if p0.shape != p1.shape or slices.shape != (len(p0), grid.nz):
        raise ValueError("endpoint arrays and slice table disagree in shape")
    plane = GridSpec(
        grid.nx, grid.ny, 1, grid.voxel_size_x, grid.voxel_size_y, 1.0, (grid.origin[0], grid.origin[1], 0.0)
    )
    z = np.full((len(p0), 1), 0.5)
    q0, q1 = np.hstack([p0, z]), np.hstack([p1, z])
    origin, size, shape = plane.as_arrays()
    buf = np.empty((plane.max_traversal(), 3), np.int64)
    for lo in range(0, grid.nz, 63):
        part = slices[:, lo : lo + 63]
        weights = np.left_shift(np.int64(1), np.arange(part.shape[1], dtype=np.int64))
        bits = (part.astype(np.int64) * weights).sum(axis=1)
        use = bits != 0
        acc = np.zeros((grid.ny, grid.nx), dtype=np.int64)
        _carve_columns(q0[use], q1[use], origin, size, shape, bits[use], acc, buf)
        for k in range(part.shape[1]):
            mask[lo + k][(acc >> k) & 1 == 1] = 0
    return mask


def integrate_lines(p0s, p1s, grid: GridSpec, values: np.ndarray, step_length: Optional[float] = None) -> np.ndarray:
    """Line integral of ``values`` along each segment.

    By default every voxel contributes its value times the length of segment
    inside it. Given ``step_length``, every touched voxel contributes its
    value times that fixed length instead, however short the crossing.
    """
    p0s, p1s = _endpoints(p0s, p1s)
    origin, size, shape = grid.as_arrays()
    out = np.empty(p0s.shape[0], dtype=np.float64)
    buf = np.empty((grid.max_traversal(), 3), np.int64)
    values = np.ascontiguousarray(values, dtype=np.float64)
    if step_length is None:
        _integrate_lines_exact(p0s, p1s, origin, size, shape, values, out, buf)
    else:
        _integrate_lines(p0s, p1s, origin, size, shape, values, float(step_length), out, buf)
    return out
