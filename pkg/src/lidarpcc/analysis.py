"""Closed-form reconstruction-error bounds and their empirical verification.

The angle-based lattices trade radial resolution against an angular cell size
that grows linearly with radius. The worst-case displacement of a point from
its voxel center has a closed form in each system:

* cartesian: half a cell diagonal, √3·q/2, independent of position.
* spherical (small-angle form): (√5·π·q / 2ρ_max)·ρ — the angular terms
  dominate and scale with the radius ρ.
* radial part n of a multi-level lattice (step q/2ⁿ, outer edge t_{n+1}·ρ_max):
  evaluating the spherical form at the part's midpoint radius gives
  √5·π·q·(t_n + t_{n+1}) / 2^(n+2); at the outer edge, √5·π·q·t_{n+1} / 2^(n+1).

The linearized spherical forms drop the radial q/2 term (it is second order at
the outer edge where the bound is tightest), so empirical checks carry a small
slack; `combined_bound_sph` keeps the radial term for exact accounting.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .codec import CodecConfig, pipeline_reconstruct, resolve_step
from .coords import CARTESIAN, SPHERICAL, derive_steps, radial_coord
from .errors import ConfigError
from .metrics import nn_distances
from .octree import part_assignment
from .pcio import PointCloud, write_ply

_SQRT3 = math.sqrt(3.0)
_SQRT5 = math.sqrt(5.0)

#: fraction of ρ_max below which per-point utilization is not meaningful
#: (the linearized bound vanishes at the origin while the radial error does not)
INNER_EXCLUSION = 0.05

#: multiplicative allowance on the small-angle bounds in empirical checks
SMALL_ANGLE_SLACK = 1.01

_DEFAULT_THRESHOLDS = (0.0, 0.25, 0.5, 1.0)


def bound_cart(q: float) -> float:
    """Half cell diagonal of a cubic lattice with step q."""
    return _SQRT3 * q / 2.0


def bound_sph(rho, q: float, rho_max: float):
    """Small-angle worst-case error at radius rho on a spherical lattice."""
    if rho_max <= 0:
        raise ConfigError("rho_max must be positive")
    return (_SQRT5 * math.pi * q / (2.0 * rho_max)) * np.asarray(rho, dtype=np.float64)


def combined_bound_sph(rho, q: float, rho_max: float):
    """Spherical bound with the radial half-step kept: hypot(q/2, angular)."""
    return np.hypot(q / 2.0, bound_sph(rho, q, rho_max))


def bound_part(q: float, n: int, thresholds=_DEFAULT_THRESHOLDS) -> float:
    """Midpoint-radius bound for radial part n (effective step q/2ⁿ)."""
    return _SQRT5 * math.pi * q * (thresholds[n] + thresholds[n + 1]) / (1 << (n + 2))


def part_edge_bound(q: float, n: int, thresholds=_DEFAULT_THRESHOLDS) -> float:
    """Worst case over part n, attained at its outer radius t_{n+1}·ρ_max."""
    return _SQRT5 * math.pi * q * thresholds[n + 1] / (1 << (n + 1))


def crossover_radii(multipliers=(1, 2, 4), rho_max: float = 1.0) -> np.ndarray:
    """Radii where k× the cartesian bound meets the spherical one: k·√3/(√5π)·ρ_max.

    Inside the k=1 crossover an angle-based lattice is tighter than a cubic
    one at the same step; radial part n with step q/2ⁿ pushes its crossover
    out by k = 2ⁿ, doubling the reach of part n−1.
    """
    base = _SQRT3 / (_SQRT5 * math.pi)
    return base * rho_max * np.asarray(multipliers, dtype=np.float64)


# ---------------------------------------------------------------------------
# Empirical verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PartErrorStats:
    part: int
    count: int
    max_error: float
    mean_error: float
    bound_mid: float | None
    bound_edge: float | None
    utilization: float | None  # max_error / bound_edge


@dataclass(frozen=True)
class ErrorReport:
    system: str
    q: float
    pairing: str  # "pipeline" (row-aligned) or "nearest" (flagged fallback)
    max_error: float
    mean_error: float
    bound: float | None
    utilization: float | None
    excluded: int = 0  # inner-radius points left out of utilization
    per_part: tuple[PartErrorStats, ...] | None = None
    per_point: np.ndarray | None = None


def _part_stats(err, part_idx, q, thresholds, n_parts, spherical) -> tuple[PartErrorStats, ...]:
    stats = []
    for n in range(n_parts):
        sel = err[part_idx == n]
        mid = bound_part(q, n, thresholds) if spherical else None
        edge = part_edge_bound(q, n, thresholds) if spherical else None
        if len(sel) == 0:
            stats.append(PartErrorStats(n, 0, 0.0, 0.0, mid, edge, None))
            continue
        mx = float(sel.max())
        util = mx / edge if edge else None
        stats.append(PartErrorStats(n, int(len(sel)), mx, float(sel.mean()), mid, edge, util))
    return tuple(stats)


def empirical_error(
    cloud: PointCloud,
    cfg: CodecConfig,
    rec: PointCloud | None = None,
    keep_per_point: bool = False,
) -> ErrorReport:
    """Per-point reconstruction error against the applicable bound.

    With no `rec`, points are re-quantized in place so each original is paired
    with its own voxel center — the pairing the bounds are stated over. Passing
    an already-decoded cloud loses that pairing (duplicate voxels merge), so
    errors fall back to nearest-neighbor distances and the report says so.
    """
    if rec is None:
        recon, part_idx, steps = pipeline_reconstruct(cloud, cfg)
        err = np.linalg.norm(cloud.points - recon, axis=1)
        pairing = "pipeline"
    else:
        q, rho_override = resolve_step(cfg, cloud)
        steps = derive_steps(cfg.system, q, cloud, rho_override)
        part_idx = part_assignment(cloud.points, cfg.parts, steps.rho_max, cfg.system)
        err, _ = nn_distances(cloud.points, rec.points)
        pairing = "nearest"

    q = steps.q_primary
    n_parts = cfg.parts.n_parts
    thresholds = cfg.parts.thresholds
    spherical = cfg.system == SPHERICAL
    excluded = 0

    if cfg.system == CARTESIAN:
        bound = bound_cart(q)
        util = float(err.max()) / bound
    elif spherical and n_parts == 1:
        rho = radial_coord(cloud.points, SPHERICAL)
        eligible = rho >= INNER_EXCLUSION * steps.rho_max
        excluded = int(len(rho) - eligible.sum())
        b = bound_sph(rho, q, steps.rho_max)
        bound = float(b.max()) if len(b) else None
        util = float((err[eligible] / b[eligible]).max()) if eligible.any() else None
    elif spherical:
        bound = max(part_edge_bound(q, n, thresholds) for n in range(n_parts))
        part_utils = [
            float(err[part_idx == n].max()) / part_edge_bound(q, n, thresholds)
            for n in range(n_parts)
            if (part_idx == n).any() and part_edge_bound(q, n, thresholds) > 0
        ]
        util = max(part_utils) if part_utils else None
    else:  # cylindrical: no closed form in scope
        bound = None
        util = None

    per_part = (
        _part_stats(err, part_idx, q, thresholds, n_parts, spherical) if n_parts > 1 else None
    )
    return ErrorReport(
        cfg.system,
        q,
        pairing,
        float(err.max()),
        float(err.mean()),
        bound,
        util,
        excluded,
        per_part,
        err if keep_per_point else None,
    )


def error_colormap_export(
    points, errors, ply_path, csv_path, bins: int = 10
) -> tuple[np.ndarray, np.ndarray]:
    """Write a per-point error PLY plus a purple-to-red histogram CSV.

    Returns (counts, edges). A zero-error cloud lands in a single bin at 0.
    """
    pts = points.points if isinstance(points, PointCloud) else np.asarray(points, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if errors.shape != (len(pts),):
        raise ConfigError("one error per point required")
    write_ply(PointCloud(pts, attr=errors, attr_name="error"), ply_path)

    emax = float(errors.max()) if len(errors) else 0.0
    if emax <= 0.0:
        counts = np.array([len(errors)], dtype=np.int64)
        edges = np.array([0.0, 0.0])
    else:
        counts, edges = np.histogram(errors, bins=bins, range=(0.0, emax))
    nbins = len(counts)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin", "lo", "hi", "count", "hue_deg"])
        for i in range(nbins):
            hue = 270.0 * (1.0 - i / (nbins - 1)) if nbins > 1 else 270.0
            w.writerow(
                [i, "%.9g" % edges[i], "%.9g" % edges[i + 1], int(counts[i]), "%.6g" % hue]
            )
    return counts, edges
