"""Hull-detection algorithms: FBP, SC, MSC and SM."""

from .carving import (
    average_filter_5x5,
    count_paths,
    miss_bins,
    msc_detect,
    msc_mask_from_counts,
    sc_carve,
    sc_detect,
)
from .fbp import (
    Sinogram,
    build_sinogram,
    fbp_detect,
    fbp_hull,
    fbp_reconstruct,
    shepp_logan_filter,
    shepp_logan_kernel,
)
from .modeling import (
    EdgeChain,
    NoEdgeError,
    find_edge_chain,
    sm_detect,
    sm_mask_from_counts,
    sm_threshold_for_slice,
)
from .thresholds import AlgorithmThresholds, hit_classified, miss_classified

__all__ = [
    "AlgorithmThresholds",
    "miss_classified",
    "hit_classified",
    "average_filter_5x5",
    "miss_bins",
    "sc_carve",
    "sc_detect",
    "count_paths",
    "msc_mask_from_counts",
    "msc_detect",
    "EdgeChain",
    "NoEdgeError",
    "find_edge_chain",
    "sm_threshold_for_slice",
    "sm_mask_from_counts",
    "sm_detect",
    "Sinogram",
    "build_sinogram",
    "shepp_logan_kernel",
    "shepp_logan_filter",
    "fbp_reconstruct",
    "fbp_hull",
    "fbp_detect",
]
