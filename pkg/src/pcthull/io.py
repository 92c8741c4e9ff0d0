"""Binary containers for proton histories and hull masks.

Both file kinds share one header layout (little-endian)::

    magic      8 bytes   b"PCTHIST\\0" or b"PCTMASK\\0"
    version    uint32
    count      uint64    number of records (histories) or voxels (masks)

History files follow the header with ``count`` fixed-width records whose
fields are the float64 columns of ``HISTORY_DTYPE`` in order. Mask files
follow it with the grid (nx, ny, nz as uint32; voxel sizes and origin as
float64) and ``ceil(count / 8)`` bytes of ``numpy.packbits`` payload over the
``[iz, iy, ix]`` raveled mask.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .geometry import GridSpec

__all__ = [
    "HISTORY_DTYPE",
    "FORMAT_VERSION",
    "HistoryFormatError",
    "BadMagicError",
    "VersionMismatchError",
    "TruncatedFileError",
    "write_histories",
    "read_histories",
    "write_mask",
    "read_mask",
]

HISTORY_MAGIC = b"PCTHIST\0"
MASK_MAGIC = b"PCTMASK\0"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIQ")
_MASK_GRID = struct.Struct("<3I6d")

HISTORY_FIELDS = (
    "projection_angle",
    "entry_x",
    "entry_y",
    "entry_z",
    "exit_x",
    "exit_y",
    "exit_z",
    "entry_angle",
    "exit_angle",
    "entry_vertical_angle",
    "exit_vertical_angle",
    "lateral_displacement",
    "vertical_displacement",
    "wepl",
)
HISTORY_DTYPE = np.dtype([(name, "<f8") for name in HISTORY_FIELDS])


class HistoryFormatError(ValueError):
    """Base class for malformed container files."""


class BadMagicError(HistoryFormatError):
    pass


class VersionMismatchError(HistoryFormatError):
    pass


class TruncatedFileError(HistoryFormatError):
    def __init__(self, message, record_index=None):
        super().__init__(message)
        self.record_index = record_index


def _write(path, magic, count, payload: bytes):
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(magic, FORMAT_VERSION, count))
        fh.write(payload)


def _read_header(data: bytes, magic: bytes, path):
    head = data[: len(magic)]
    if head != magic[: len(head)] or (len(head) == len(magic) and head != magic):
        raise BadMagicError(f"{path}: bad magic {head!r}, expected {magic!r}")
    if len(data) < _HEADER.size:
        raise TruncatedFileError(f"{path}: header truncated")
    _, version, count = _HEADER.unpack_from(data)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    return count


def write_histories(path, histories: np.ndarray) -> None:
    histories = np.asarray(histories)
    if histories.dtype != HISTORY_DTYPE:
        histories = histories.astype(HISTORY_DTYPE)
    _write(path, HISTORY_MAGIC, len(histories), np.ascontiguousarray(histories).tobytes())


def read_histories(path) -> np.ndarray:
    data = Path(path).read_bytes()
    count = _read_header(data, HISTORY_MAGIC, path)
    body = memoryview(data)[_HEADER.size :]
    rec = HISTORY_DTYPE.itemsize
    have = len(body) // rec
    if have < count:
        raise TruncatedFileError(
            f"{path}: truncated in record {have} of {count}", record_index=have
        )
    if len(body) != count * rec:
        raise HistoryFormatError(f"{path}: {len(body) - count * rec} trailing bytes")
    return np.frombuffer(body, dtype=HISTORY_DTYPE, count=count).copy()


def write_mask(path, mask: np.ndarray, grid: GridSpec) -> None:
    mask = np.asarray(mask)
    if mask.shape != grid.shape:
        raise ValueError(f"mask shape {mask.shape} does not match grid {grid.shape}")
    head = _MASK_GRID.pack(grid.nx, grid.ny, grid.nz, *grid.sizes, *grid.origin)
    bits = np.packbits(mask.astype(bool).ravel())
    _write(path, MASK_MAGIC, mask.size, head + bits.tobytes())


def read_mask(path) -> tuple[np.ndarray, GridSpec]:
    data = Path(path).read_bytes()
    count = _read_header(data, MASK_MAGIC, path)
    off = _HEADER.size
    if len(data) < off + _MASK_GRID.size:
        raise TruncatedFileError(f"{path}: mask grid header truncated")
    nx, ny, nz, sx, sy, sz, ox, oy, oz = _MASK_GRID.unpack_from(data, off)
    grid = GridSpec(nx, ny, nz, sx, sy, sz, (ox, oy, oz))
    if nx * ny * nz != count:
        raise HistoryFormatError(f"{path}: voxel count {count} disagrees with dims {nx}x{ny}x{nz}")
    payload = np.frombuffer(data, dtype=np.uint8, offset=off + _MASK_GRID.size)
    need = (count + 7) // 8
    if payload.size < need:
        raise TruncatedFileError(f"{path}: mask payload truncated at byte {payload.size} of {need}")
    bits = np.unpackbits(payload[:need], count=count)
    return bits.reshape(grid.shape).astype(np.uint8), grid
