"""End-to-end codec: partition → quantize → octree → range-code, and back.

Container layout (all little-endian, see FORMAT.md):

    magic 'SCP1' | version u8 | system u8 | depth u8 | n_parts u8
    q f64 | rho_max f64 | origin_offset 3×f64 | thresholds n_parts×f32
    per part: symbol_count u64 | empty u8 | payload_len u64 | payload
    original_count u64

Every part is an independent octree stream with a fresh adaptive model, so
parts decode in isolation. rho_max, q and the header depth fully determine the
quantization lattice; decoding is deterministic with no side state.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import entropy
from .coords import (
    CARTESIAN,
    CYLINDRICAL,
    SPHERICAL,
    SYSTEMS,
    QuantizedCloud,
    QuantSteps,
    dequantize,
    derive_steps,
    quantize,
    radial_coord,
    reconstruct_points,
)
from .errors import ConfigError, CorruptStreamError, FormatError
from .octree import (
    ContextCursor,
    MultiLevelConfig,
    build,
    leaf_indices,
    occupancy_stream,
    part_assignment,
    part_steps,
    partition_multilevel,
    rebuild,
)
from .pcio import PointCloud

MAGIC = b"SCP1"
VERSION = 1
KITTI_RANGE = 400.0
CONVENTIONS = ("kitti", "ford", "raw")

_SYSTEM_CODE = {CARTESIAN: 0, CYLINDRICAL: 1, SPHERICAL: 2}
_SYSTEM_NAME = {v: k for k, v in _SYSTEM_CODE.items()}


@dataclass(frozen=True)
class CodecConfig:
    system: str = SPHERICAL
    depth: int | None = None
    q: float | None = None
    convention: str = "raw"
    parts: MultiLevelConfig = field(default_factory=MultiLevelConfig)
    rho_max: float | None = None  # None → measured from the cloud

    def __post_init__(self):
        if self.system not in SYSTEMS:
            raise ConfigError(f"unknown coordinate system '{self.system}'")
        if self.convention not in CONVENTIONS:
            raise ConfigError(f"unknown convention '{self.convention}'")
        if self.system == CARTESIAN and self.parts.n_parts != 1:
            raise ConfigError("multi-level parts require an angle-based system; use parts=1 for cartesian")


def convention_step(convention: str, depth: int) -> float:
    """Dataset-convention step: kitti 400/(2^D−1) meters, ford 2^(18−D) mm."""
    if convention == "kitti":
        return KITTI_RANGE / ((1 << depth) - 1)
    if convention == "ford":
        return float(2 ** (18 - depth))
    raise ConfigError(f"convention '{convention}' does not define a step from depth alone")


def resolve_step(cfg: CodecConfig, cloud: PointCloud) -> tuple[float, float | None]:
    """Return (q, rho_max) honoring the convention; rho_max None means measured."""
    if cfg.depth is not None and cfg.q is not None:
        raise ConfigError("give either depth or q, not both")
    rho_max = cfg.rho_max
    if cfg.convention in ("kitti", "ford"):
        if cfg.depth is None:
            raise ConfigError(f"convention '{cfg.convention}' needs a depth")
        return convention_step(cfg.convention, cfg.depth), rho_max
    if cfg.q is not None:
        return float(cfg.q), rho_max
    if cfg.depth is None:
        raise ConfigError("raw convention needs q or depth")
    # raw + depth: span the measured coordinate range with 2^D − 1 steps
    denom = (1 << cfg.depth) - 1
    if cfg.system == CARTESIAN:
        extent = float((cloud.points.max(axis=0) - cloud.points.min(axis=0)).max())
        if extent <= 0:
            raise ConfigError("cannot derive a step for a degenerate (single-voxel) cloud")
        return extent / denom, rho_max
    rm = rho_max if rho_max is not None else float(radial_coord(cloud.points, cfg.system).max())
    if rm <= 0:
        raise ConfigError("cannot derive a step: all points at the origin")
    return rm / denom, rho_max


@dataclass(frozen=True)
class PartRecord:
    symbol_count: int
    empty: bool
    payload: bytes


@dataclass(frozen=True)
class Container:
    system: str
    depth: int
    q: float
    rho_max: float
    origin_offset: tuple
    thresholds: tuple  # t_0..t_{N−1}; the closing 1.0 is implicit
    parts: tuple
    original_count: int
    version: int = VERSION

    @property
    def n_parts(self) -> int:
        return len(self.parts)

    def multi_level_config(self) -> MultiLevelConfig:
        return MultiLevelConfig(self.n_parts, tuple(self.thresholds) + (1.0,))

    def base_steps(self) -> QuantSteps:
        """Recover the encoder's QuantSteps from header fields alone."""
        if self.system == CARTESIAN:
            return QuantSteps(self.system, self.q, 0.0, 0.0, 1 << self.depth, self.depth,
                              0.0, tuple(self.origin_offset))
        bins = math.ceil(self.rho_max / self.q)
        if bins < 2:
            raise CorruptStreamError(f"header implies {bins} radial bin(s)")
        q_theta = 2.0 * np.pi / (bins - 1)
        q_phi = np.pi / (bins - 1) if self.system == SPHERICAL else 0.0
        return QuantSteps(self.system, self.q, q_theta, q_phi, bins, self.depth,
                          self.rho_max, tuple(self.origin_offset))

    def to_bytes(self) -> bytes:
        head = bytearray()
        head += MAGIC
        head += struct.pack(
            "<BBBB", self.version, _SYSTEM_CODE[self.system], self.depth, self.n_parts
        )
        head += struct.pack("<dd", self.q, self.rho_max)
        head += struct.pack("<3d", *self.origin_offset)
        head += struct.pack(f"<{self.n_parts}f", *self.thresholds)
        for p in self.parts:
            head += struct.pack("<QBQ", p.symbol_count, 1 if p.empty else 0, len(p.payload))
            head += p.payload
        head += struct.pack("<Q", self.original_count)
        return bytes(head)

    @property
    def nbytes(self) -> int:
        return len(self.to_bytes())

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Container":
        if len(blob) < 4 or blob[:4] != MAGIC:
            raise FormatError("not a point-cloud container (bad magic)")
        if len(blob) < 48:
            raise CorruptStreamError("container header truncated")
        version, system_code, depth, n_parts = struct.unpack_from("<BBBB", blob, 4)
        if version != VERSION:
            raise FormatError(f"unsupported container version {version}")
        if system_code not in _SYSTEM_NAME:
            raise FormatError(f"unknown coordinate-system code {system_code}")
        if n_parts < 1 or depth < 1:
            raise CorruptStreamError(f"invalid header: depth={depth}, n_parts={n_parts}")
        q, rho_max = struct.unpack_from("<dd", blob, 8)
        origin = struct.unpack_from("<3d", blob, 24)
        off = 48
        if len(blob) < off + 4 * n_parts:
            raise CorruptStreamError("container truncated in thresholds")
        thresholds = struct.unpack_from(f"<{n_parts}f", blob, off)
        off += 4 * n_parts
        parts = []
        for n in range(n_parts):
            if len(blob) < off + 17:
                raise CorruptStreamError(f"container truncated in part {n} record")
            count, empty, plen = struct.unpack_from("<QBQ", blob, off)
            off += 17
            if len(blob) < off + plen:
                raise CorruptStreamError(f"container truncated in part {n} payload")
            payload = blob[off : off + plen]
            off += plen
            if empty and (count or plen):
                raise CorruptStreamError(f"part {n} flagged empty but carries data")
            parts.append(PartRecord(count, bool(empty), payload))
        if len(blob) < off + 8:
            raise CorruptStreamError("container missing point-count trailer")
        (original_count,) = struct.unpack_from("<Q", blob, off)
        off += 8
        if off != len(blob):
            raise CorruptStreamError(f"{len(blob) - off} trailing bytes after container end")
        return cls(
            _SYSTEM_NAME[system_code], depth, q, rho_max, origin, thresholds,
            tuple(parts), original_count, version,
        )


def encode_cloud(cloud: PointCloud, cfg: CodecConfig) -> Container:
    """Quantize each radial part, code its octree, and pack the container."""
    if len(cloud) == 0:
        raise ConfigError("cannot encode an empty cloud")
    q, rho_override = resolve_step(cfg, cloud)
    steps = derive_steps(cfg.system, q, cloud, rho_override)
    if cfg.parts.n_parts == 1:
        parts = [cloud]
    else:
        parts = partition_multilevel(cloud, cfg.parts, steps.rho_max, cfg.system)
    records = []
    for n, part in enumerate(parts):
        if len(part) == 0:
            records.append(PartRecord(0, True, b""))
            continue
        st = part_steps(steps, n)
        tree = build(quantize(part, st))
        bs = entropy.encode(occupancy_stream(tree), entropy.AdaptiveContextModel())
        records.append(PartRecord(tree.node_count, False, bs.data))
    return Container(
        cfg.system,
        steps.depth,
        steps.q_primary,
        steps.rho_max,
        steps.origin_offset,
        cfg.parts.thresholds[: cfg.parts.n_parts],
        tuple(records),
        len(cloud),
    )


def decode_cloud(container: Container) -> PointCloud:
    """Voxel centers of every non-empty part, in part order."""
    steps = container.base_steps()
    chunks = []
    for n, part in enumerate(container.parts):
        if part.empty:
            continue
        if part.symbol_count == 0:
            raise CorruptStreamError(f"part {n}: zero symbols but not flagged empty")
        st = part_steps(steps, n)
        cursor = ContextCursor(st.depth)
        bs = entropy.Bitstream(part.payload, 8 * len(part.payload))
        try:
            symbols = entropy.decode(bs, entropy.AdaptiveContextModel(), cursor, part.symbol_count)
        except IndexError:
            raise CorruptStreamError(f"part {n}: symbol count exceeds tree size") from None
        if cursor.pending():
            raise CorruptStreamError(
                f"part {n}: stream ended with {cursor.pending()} nodes still undecoded"
            )
        tree = rebuild(symbols, st.depth)
        qc = QuantizedCloud(leaf_indices(tree), st, part.symbol_count)
        chunks.append(dequantize(qc).points)
    if not chunks:
        raise CorruptStreamError("container has no non-empty parts")
    return PointCloud(np.concatenate(chunks, axis=0))


def measure_bpp(container: Container, original_count: int | None = None) -> float:
    """Bits per original point, container header included."""
    count = container.original_count if original_count is None else original_count
    if count <= 0:
        raise ValueError("original point count must be positive")
    return 8.0 * container.nbytes / count


def pipeline_reconstruct(cloud: PointCloud, cfg: CodecConfig) -> tuple[np.ndarray, np.ndarray, QuantSteps]:
    """Per-point reconstructions keeping the original↔voxel-center pairing.

    Returns (reconstructed points, part index per point, base steps). This is
    the pairing the closed-form error bounds are stated over; the container
    path loses it by merging duplicate voxels.
    """
    if len(cloud) == 0:
        raise ConfigError("empty cloud")
    q, rho_override = resolve_step(cfg, cloud)
    steps = derive_steps(cfg.system, q, cloud, rho_override)
    part_idx = part_assignment(cloud.points, cfg.parts, steps.rho_max, cfg.system)
    recon = np.empty_like(cloud.points)
    for n in range(cfg.parts.n_parts):
        mask = part_idx == n
        if mask.any():
            recon[mask] = reconstruct_points(cloud.points[mask], part_steps(steps, n))
    return recon, part_idx, steps
