"""Proton CT hull detection: phantom, simulated scans, preprocessing, four
hull detectors and their evaluation against ground truth."""

from .geometry import GridSpec, LinePath, VoxelIndex, point_to_voxel, slice_view, voxels_along_line
from .phantom import EllipseRegion, PhantomSpec, default_neo_spec, rasterize_phantom, true_hull
from .preprocessing import BinGrid, BinningConfig, apply_data_cuts, bin_histories
from .simulator import NoiseModel, ScanConfig, ScatterModel, simulate

__version__ = "0.1.0"

__all__ = [
    "GridSpec",
    "LinePath",
    "VoxelIndex",
    "voxels_along_line",
    "point_to_voxel",
    "slice_view",
    "EllipseRegion",
    "PhantomSpec",
    "default_neo_spec",
    "rasterize_phantom",
    "true_hull",
    "BinningConfig",
    "BinGrid",
    "bin_histories",
    "apply_data_cuts",
    "ScanConfig",
    "ScatterModel",
    "NoiseModel",
    "simulate",
]
