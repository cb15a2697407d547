"""Cartesian/cylindrical/spherical transforms and lattice quantization.

Conventions: θ = atan2(y, x) mapped into [0, 2π); φ = arccos(z/ρ) ∈ [0, π];
the origin maps to (ρ, θ, φ) = (0, 0, 0). Radial and Cartesian axes use the
primary step q; angles use q_θ = 2π/(b−1) and q_φ = π/(b−1) where
b = ⌈ρ_max/q⌉ radial bins. Indices are round-to-nearest and reconstruct at
index·step, so each axis is off by at most half a step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .pcio import PointCloud

CARTESIAN = "cartesian"
CYLINDRICAL = "cylindrical"
SPHERICAL = "spherical"
SYSTEMS = (CARTESIAN, CYLINDRICAL, SPHERICAL)


def _wrap_theta(theta: np.ndarray) -> np.ndarray:
    """atan2 output → [0, 2π); adding 2π to a tiny negative rounds to 2π itself."""
    theta = np.where(theta < 0, theta + 2.0 * np.pi, theta)
    return np.where(theta >= 2.0 * np.pi, 0.0, theta)


def cart_to_sph(p: np.ndarray) -> np.ndarray:
    """(..., 3) xyz → (..., 3) of (ρ, θ∈[0,2π), φ∈[0,π])."""
    p = np.asarray(p, dtype=np.float64)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    rho = np.sqrt(x * x + y * y + z * z)
    theta = _wrap_theta(np.arctan2(y, x))
    with np.errstate(invalid="ignore", divide="ignore"):
        phi = np.arccos(np.clip(np.where(rho > 0, z / rho, 1.0), -1.0, 1.0))
    zero = rho == 0
    return np.stack([rho, np.where(zero, 0.0, theta), np.where(zero, 0.0, phi)], axis=-1)


def sph_to_cart(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    rho, theta, phi = s[..., 0], s[..., 1], s[..., 2]
    sin_phi = np.sin(phi)
    return np.stack(
        [rho * sin_phi * np.cos(theta), rho * sin_phi * np.sin(theta), rho * np.cos(phi)],
        axis=-1,
    )


def cart_to_cyl(p: np.ndarray) -> np.ndarray:
    """(..., 3) xyz → (..., 3) of (ρ, θ∈[0,2π), z)."""
    p = np.asarray(p, dtype=np.float64)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    rho = np.hypot(x, y)
    theta = _wrap_theta(np.arctan2(y, x))
    return np.stack([rho, np.where(rho == 0, 0.0, theta), z], axis=-1)


def cyl_to_cart(c: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    rho, theta, z = c[..., 0], c[..., 1], c[..., 2]
    return np.stack([rho * np.cos(theta), rho * np.sin(theta), z], axis=-1)


def radial_coord(points: np.ndarray, system: str) -> np.ndarray:
    """The radius that scales angular steps: spherical ρ or cylinder ρ."""
    points = np.asarray(points, dtype=np.float64)
    if system == CYLINDRICAL:
        return np.hypot(points[..., 0], points[..., 1])
    return np.linalg.norm(points, axis=-1)


@dataclass(frozen=True)
class QuantSteps:
    """Per-axis quantization steps plus the octree depth that hosts the indices."""

    system: str
    q_primary: float
    q_theta: float
    q_phi: float
    bins: int
    depth: int
    rho_max: float
    origin_offset: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def step_vector(self) -> np.ndarray:
        if self.system == SPHERICAL:
            return np.array([self.q_primary, self.q_theta, self.q_phi])
        if self.system == CYLINDRICAL:
            return np.array([self.q_primary, self.q_theta, self.q_primary])
        return np.array([self.q_primary] * 3)

    def offset_vector(self) -> np.ndarray:
        return np.asarray(self.origin_offset, dtype=np.float64)


@dataclass(frozen=True)
class QuantizedCloud:
    indices: np.ndarray  # (M, 3) int64, deduplicated, lexicographically sorted
    steps: QuantSteps
    original_count: int

    def __post_init__(self):
        idx = np.ascontiguousarray(np.asarray(self.indices, dtype=np.int64))
        if idx.ndim != 2 or idx.shape[1] != 3:
            raise ValueError(f"indices must be (M, 3), got {idx.shape}")
        hi = (1 << self.steps.depth) - 1
        if len(idx) and (idx.min() < 0 or idx.max() > hi):
            raise ValueError(f"indices outside [0, {hi}]")
        idx.flags.writeable = False
        object.__setattr__(self, "indices", idx)


def _angle_steps(bins: int, q: float) -> tuple[float, float]:
    if bins < 2:
        raise ConfigError(f"quantization step too coarse: q={q} gives {bins} radial bin(s)")
    return 2.0 * np.pi / (bins - 1), np.pi / (bins - 1)


def derive_steps(system: str, q: float, cloud: PointCloud, rho_max: float | None = None) -> QuantSteps:
    """Choose steps and octree depth for a cloud.

    ``rho_max`` defaults to the measured maximum radius in the chosen system
    (ignored for Cartesian, where the bounding box rules). The octree depth is
    the smallest D whose 2^D cube covers every index.
    """
    if system not in SYSTEMS:
        raise ConfigError(f"unknown coordinate system '{system}'")
    if not (q > 0 and math.isfinite(q)):
        raise ConfigError(f"quantization step must be positive, got {q}")
    if len(cloud) == 0:
        raise ConfigError("cannot derive steps from an empty cloud")
    pts = cloud.points

    if system == CARTESIAN:
        mins = pts.min(axis=0)
        extent = pts.max(axis=0) - mins
        lattice = int(np.round(extent / q).max()) + 1
        depth = max(1, math.ceil(math.log2(max(lattice, 2))))
        return QuantSteps(system, q, 0.0, 0.0, max(lattice, 2), depth, 0.0, tuple(mins))

    radii = radial_coord(pts, system)
    if rho_max is None:
        rho_max = float(radii.max())
    bins = math.ceil(rho_max / q) if rho_max > 0 else 0
    q_theta, q_phi = _angle_steps(bins, q)
    depth = max(1, math.ceil(math.log2(bins)))
    if system == CYLINDRICAL:
        z_min = float(pts[:, 2].min())
        z_lattice = int(np.round((pts[:, 2].max() - z_min) / q)) + 1
        depth = max(depth, math.ceil(math.log2(max(z_lattice, 2))))
        return QuantSteps(system, q, q_theta, 0.0, bins, depth, rho_max, (0.0, 0.0, z_min))
    return QuantSteps(system, q, q_theta, q_phi, bins, depth, rho_max)


def transform_points(points: np.ndarray, steps: QuantSteps) -> np.ndarray:
    """Cartesian points → the system's (offset-corrected) coordinate triples."""
    if steps.system == SPHERICAL:
        return cart_to_sph(points)
    if steps.system == CYLINDRICAL:
        return cart_to_cyl(points) - steps.offset_vector()[None, :]
    return np.asarray(points, dtype=np.float64) - steps.offset_vector()[None, :]


def untransform_points(coords: np.ndarray, steps: QuantSteps) -> np.ndarray:
    """Inverse of :func:`transform_points`."""
    if steps.system == SPHERICAL:
        return sph_to_cart(coords)
    if steps.system == CYLINDRICAL:
        return cyl_to_cart(coords + steps.offset_vector()[None, :])
    return coords + steps.offset_vector()[None, :]


def quantize(cloud: PointCloud, steps: QuantSteps) -> QuantizedCloud:
    """Round each transformed coordinate to its lattice and merge duplicates."""
    coords = transform_points(cloud.points, steps)
    idx = np.round(coords / steps.step_vector()[None, :]).astype(np.int64)
    np.clip(idx, 0, (1 << steps.depth) - 1, out=idx)
    idx = np.unique(idx, axis=0) if len(idx) else idx
    return QuantizedCloud(idx, steps, len(cloud))


def dequantize(qc: QuantizedCloud) -> PointCloud:
    """Map index triples back to Cartesian voxel centers."""
    coords = qc.indices.astype(np.float64) * qc.steps.step_vector()[None, :]
    return PointCloud(untransform_points(coords, qc.steps))


def reconstruct_points(points: np.ndarray, steps: QuantSteps) -> np.ndarray:
    """Per-point quantize→dequantize, preserving order (no merge).

    Used by the error-analysis pipeline, which needs the original↔reconstruction
    pairing that the deduplicating codec path discards.
    """
    coords = transform_points(points, steps)
    idx = np.round(coords / steps.step_vector()[None, :])
    np.clip(idx, 0, (1 << steps.depth) - 1, out=idx)
    return untransform_points(idx * steps.step_vector()[None, :], steps)
