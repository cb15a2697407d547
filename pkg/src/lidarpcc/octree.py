"""Octree construction over quantized index triples and breadth-first occupancy streams.

Child octant convention: at level ℓ the octant of a child is
``c = 4·b_x + 2·b_y + b_z`` where ``b_k`` is bit ``depth−ℓ`` of index
coordinate k; the parent's occupancy byte has bit ``c`` (value 2^c) set iff
that sub-voxel holds at least one index. Streams serialize levels 1..depth
breadth-first, nodes in parent order then ascending child octant.

The multi-level radial partition lives here too: part n of the cloud covers
ρ ∈ [t_n·ρ_max, t_{n+1}·ρ_max) and is coded as an independent octree with all
quantization steps divided by 2^n (n extra levels).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .coords import QuantizedCloud, QuantSteps, radial_coord, SPHERICAL
from .errors import ConfigError, CorruptStreamError
from .pcio import PointCloud

_MAX_DEPTH = 20  # 3·depth bits of a Morton code must fit in int64

# octants present in a given occupancy byte, ascending
_OCTANTS_OF = tuple(tuple(c for c in range(8) if s >> c & 1) for s in range(256))


class NodeContext(NamedTuple):
    """Causal description of a node, available to the decoder before its symbol."""

    octant: int  # position within the parent, 1..8 (root: 1)
    level: int  # 1..depth
    ancestors: tuple  # ((occupancy, octant), ...) nearest first, 3 entries, zero-padded
    position: tuple  # node-center coordinates normalized to [0,1] in the index cube


@dataclass(frozen=True)
class OctreeLevel:
    cells: np.ndarray  # (n,) int64 Morton prefixes (3·(level−1) bits), ascending
    symbols: np.ndarray  # (n,) uint8 occupancy bytes, 1..255
    child_base: np.ndarray  # (n,) int64 index of each node's first child in the next level


@dataclass(frozen=True)
class Octree:
    depth: int
    levels: tuple  # OctreeLevel per level 1..depth

    @property
    def node_count(self) -> int:
        return sum(len(lv.symbols) for lv in self.levels)

    def all_symbols(self) -> np.ndarray:
        return np.concatenate([lv.symbols for lv in self.levels])

    def __eq__(self, other):
        if not isinstance(other, Octree) or self.depth != other.depth:
            return NotImplemented if not isinstance(other, Octree) else False
        return all(
            np.array_equal(a.cells, b.cells) and np.array_equal(a.symbols, b.symbols)
            for a, b in zip(self.levels, other.levels)
        )


def _interleave(indices: np.ndarray, depth: int) -> np.ndarray:
    """Index triples → Morton codes, x highest within each 3-bit group."""
    code = np.zeros(len(indices), dtype=np.int64)
    ix, iy, iz = indices[:, 0], indices[:, 1], indices[:, 2]
    for shift in range(depth - 1, -1, -1):
        code = (
            (code << 3)
            | (((ix >> shift) & 1) << 2)
            | (((iy >> shift) & 1) << 1)
            | ((iz >> shift) & 1)
        )
    return code


def _deinterleave(codes: np.ndarray, depth: int) -> np.ndarray:
    out = np.zeros((len(codes), 3), dtype=np.int64)
    for lvl in range(depth):
        group = (codes >> (3 * lvl)) & 7
        out[:, 0] |= ((group >> 2) & 1) << lvl
        out[:, 1] |= ((group >> 1) & 1) << lvl
        out[:, 2] |= (group & 1) << lvl
    return out


def _expand_cells(cells: np.ndarray, symbols: np.ndarray) -> np.ndarray:
    """Child cell codes of each (cell, occupancy) pair, breadth-first order."""
    occupied = ((symbols[:, None] >> np.arange(8, dtype=np.uint8)) & 1).astype(bool)
    grid = (cells[:, None] << 3) | np.arange(8, dtype=np.int64)
    return grid[occupied]


def _child_base(symbols: np.ndarray) -> np.ndarray:
    pops = np.bitwise_count(symbols).astype(np.int64)
    return np.concatenate([[0], np.cumsum(pops)[:-1]])


def build(qc: QuantizedCloud) -> Octree:
    """Top-down octree over the index set; breadth-first deterministic."""
    depth = qc.steps.depth
    if depth < 1 or depth > _MAX_DEPTH:
        raise ConfigError(f"octree depth {depth} outside [1, {_MAX_DEPTH}]")
    if len(qc.indices) == 0:
        raise ValueError("cannot build an octree over an empty index set")
    hi = (1 << depth) - 1
    if qc.indices.min() < 0 or qc.indices.max() > hi:
        raise ValueError(f"index outside [0, {hi}] for depth {depth}")
    codes = np.sort(_interleave(qc.indices, depth))
    levels = []
    for lvl in range(1, depth + 1):
        shift = 3 * (depth - lvl)
        u = np.unique(codes >> shift)  # occupied child cells at this level
        parents = u >> 3
        starts = np.flatnonzero(np.r_[True, parents[1:] != parents[:-1]])
        cells = parents[starts]
        bits = np.left_shift(np.uint8(1), (u & 7).astype(np.uint8))
        symbols = np.bitwise_or.reduceat(bits, starts)
        levels.append(OctreeLevel(cells, symbols, _child_base(symbols)))
    return Octree(depth, tuple(levels))


def leaf_indices(tree: Octree) -> np.ndarray:
    """(M, 3) int64 leaf index triples in breadth-first (Morton) order."""
    last = tree.levels[-1]
    return _deinterleave(_expand_cells(last.cells, last.symbols), tree.depth)


def rebuild(symbols, depth: int) -> Octree:
    """Inverse of serialization: consume breadth-first symbols, validate shape."""
    symbols = np.asarray(symbols, dtype=np.uint8)
    levels = []
    cells = np.zeros(1, dtype=np.int64)
    pos = 0
    for lvl in range(1, depth + 1):
        n = len(cells)
        if pos + n > len(symbols):
            raise CorruptStreamError(
                f"occupancy stream exhausted at node {len(symbols)} (level {lvl} needs {n} nodes)"
            )
        syms = symbols[pos : pos + n]
        if (syms == 0).any():
            bad = pos + int(np.flatnonzero(syms == 0)[0])
            raise CorruptStreamError(f"zero occupancy byte at node {bad}")
        levels.append(OctreeLevel(cells, syms, _child_base(syms)))
        pos += n
        if lvl < depth:
            cells = _expand_cells(cells, syms)
    if pos != len(symbols):
        raise CorruptStreamError(f"{len(symbols) - pos} leftover symbols after node {pos}")
    return Octree(depth, tuple(levels))


class ContextCursor:
    """Causal walk over a breadth-first occupancy stream.

    ``next_context()`` describes the node about to be coded; ``push(symbol)``
    commits its occupancy byte and schedules its children. The encoder and the
    decoder drive the same cursor, so both sides compute identical contexts.
    """

    _ZERO_ANC = ((0, 0), (0, 0), (0, 0))

    def __init__(self, depth: int):
        self.depth = depth
        # queue entries: (cx, cy, cz, level, octant, ancestors)
        self._queue = deque([(0, 0, 0, 1, 1, self._ZERO_ANC)])

    def __bool__(self) -> bool:
        return bool(self._queue)

    def pending(self) -> int:
        return len(self._queue)

    def next_context(self) -> NodeContext:
        cx, cy, cz, level, octant, anc = self._queue[0]
        scale = 1.0 / (1 << (level - 1))
        return NodeContext(
            octant, level, anc, ((cx + 0.5) * scale, (cy + 0.5) * scale, (cz + 0.5) * scale)
        )

    def push(self, symbol: int) -> None:
        cx, cy, cz, level, octant, anc = self._queue.popleft()
        if level >= self.depth:
            return  # children are leaves, not coded
        child_anc = ((symbol, octant), anc[0], anc[1])
        cx, cy, cz = 2 * cx, 2 * cy, 2 * cz
        append = self._queue.append
        for c in _OCTANTS_OF[symbol]:
            append((cx + (c >> 2), cy + ((c >> 1) & 1), cz + (c & 1), level + 1, c + 1, child_anc))


def occupancy_stream(tree: Octree) -> Iterator[tuple[int, NodeContext]]:
    """Yield (symbol, context) pairs in coding order."""
    cursor = ContextCursor(tree.depth)
    for lv in tree.levels:
        for sym in lv.symbols:
            s = int(sym)
            yield s, cursor.next_context()
            cursor.push(s)


# ---------------------------------------------------------------------------
# Multi-level radial partition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MultiLevelConfig:
    """N radial bands; band n is octree-coded with n extra levels (steps /2^n)."""

    n_parts: int = 3
    thresholds: tuple = (0.0, 0.25, 0.5, 1.0)  # t_0..t_N as fractions of rho_max

    def __post_init__(self):
        t = tuple(float(v) for v in self.thresholds)
        object.__setattr__(self, "thresholds", t)
        if self.n_parts < 1:
            raise ConfigError("n_parts must be ≥ 1")
        if len(t) != self.n_parts + 1:
            raise ConfigError(f"need {self.n_parts + 1} thresholds for {self.n_parts} parts, got {len(t)}")
        if t[0] != 0.0 or t[-1] != 1.0:
            raise ConfigError("thresholds must start at 0 and end at 1")
        if any(a >= b for a, b in zip(t, t[1:])):
            raise ConfigError("thresholds must be strictly increasing")


def partition_multilevel(
    cloud: PointCloud, cfg: MultiLevelConfig, rho_max: float, system: str = SPHERICAL
) -> list[PointCloud]:
    """Split by unquantized radius into half-open bands; last band closed at ρ_max."""
    radii = radial_coord(cloud.points, system)
    if len(radii) and radii.max() > rho_max:
        raise ConfigError(f"rho_max={rho_max} smaller than cloud max radius {radii.max():.6g}")
    edges = np.asarray(cfg.thresholds) * rho_max
    part = np.clip(np.searchsorted(edges, radii, side="right") - 1, 0, cfg.n_parts - 1)
    out = []
    for n in range(cfg.n_parts):
        mask = part == n
        attr = cloud.attr[mask] if cloud.attr is not None else None
        out.append(PointCloud(cloud.points[mask], attr, cloud.attr_name))
    return out


def part_assignment(points: np.ndarray, cfg: MultiLevelConfig, rho_max: float,
                    system: str = SPHERICAL) -> np.ndarray:
    """Part index per point (same rule as partition_multilevel, no splitting)."""
    radii = radial_coord(points, system)
    edges = np.asarray(cfg.thresholds) * rho_max
    return np.clip(np.searchsorted(edges, radii, side="right") - 1, 0, cfg.n_parts - 1)


def part_steps(base: QuantSteps, n: int) -> QuantSteps:
    """Steps for part n: every step halved n times, n extra octree levels."""
    if n < 0:
        raise ValueError("part index must be ≥ 0")
    if n == 0:
        return base
    f = float(1 << n)
    return QuantSteps(
        base.system,
        base.q_primary / f,
        base.q_theta / f,
        base.q_phi / f,
        base.bins << n,
        base.depth + n,
        base.rho_max,
        base.origin_offset,
    )
