"""LiDAR point-cloud geometry codec on spherical-coordinate octrees.

Quantizes positions on a cartesian, cylindrical, or spherical lattice, splits
angle-based lattices into radial parts with per-part resolution doubling,
codes each part's octree occupancy with an adaptive range coder, and verifies
closed-form reconstruction-error bounds alongside standard quality metrics.
"""

from .analysis import (
    ErrorReport,
    bound_cart,
    bound_part,
    bound_sph,
    combined_bound_sph,
    crossover_radii,
    empirical_error,
    error_colormap_export,
    part_edge_bound,
)
from .codec import (
    CodecConfig,
    Container,
    decode_cloud,
    encode_cloud,
    measure_bpp,
    pipeline_reconstruct,
)
from .coords import (
    CARTESIAN,
    CYLINDRICAL,
    SPHERICAL,
    QuantizedCloud,
    QuantSteps,
    cart_to_cyl,
    cart_to_sph,
    cyl_to_cart,
    dequantize,
    derive_steps,
    quantize,
    sph_to_cart,
)
from .errors import ConfigError, CorruptStreamError, FormatError, MetricError
from .metrics import (
    MetricConfig,
    MetricReport,
    RDCurve,
    bd_rate,
    chamfer,
    compute_report,
    d1_psnr,
    d2_psnr,
)
from .octree import (
    ContextCursor,
    MultiLevelConfig,
    Octree,
    build,
    leaf_indices,
    occupancy_stream,
    partition_multilevel,
    rebuild,
)
from .pcio import PointCloud, SynthParams, read_kitti_bin, read_ply, synth_lidar, write_kitti_bin, write_ply

__version__ = "0.1.0"

__all__ = [
    "CARTESIAN",
    "CYLINDRICAL",
    "SPHERICAL",
    "CodecConfig",
    "ConfigError",
    "Container",
    "ContextCursor",
    "CorruptStreamError",
    "ErrorReport",
    "FormatError",
    "MetricConfig",
    "MetricError",
    "MetricReport",
    "MultiLevelConfig",
    "Octree",
    "PointCloud",
    "QuantSteps",
    "QuantizedCloud",
    "RDCurve",
    "SynthParams",
    "bd_rate",
    "bound_cart",
    "bound_part",
    "bound_sph",
    "build",
    "cart_to_cyl",
    "cart_to_sph",
    "chamfer",
    "combined_bound_sph",
    "compute_report",
    "crossover_radii",
    "cyl_to_cart",
    "d1_psnr",
    "d2_psnr",
    "decode_cloud",
    "dequantize",
    "derive_steps",
    "empirical_error",
    "encode_cloud",
    "error_colormap_export",
    "leaf_indices",
    "measure_bpp",
    "occupancy_stream",
    "part_edge_bound",
    "partition_multilevel",
    "pipeline_reconstruct",
    "quantize",
    "read_kitti_bin",
    "read_ply",
    "rebuild",
    "sph_to_cart",
    "synth_lidar",
    "write_kitti_bin",
    "write_ply",
]
