"""Fixed-depth sparse occupancy tree: root map -> 16^3 internal nodes -> 8^3 leaves.

Uniform regions are stored as boolean tiles.  A root entry is either a tile
covering 128^3 voxels or an internal node; an internal node's children are
either tiles covering 8^3 voxels or leaves holding 512 bits.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, NamedTuple, Tuple

import numpy as np

from .errors import FormatError, TruncatedError
from .grid import (
    FORMAT_VERSION, DenseGrid, GridTransform, Index3, Level, check_header,
    pack_transform, unpack_transform,
)

SPARSE_MAGIC = b"SOG1"

LEAF_DIM = 8
INTERNAL_DIM = 16
INTERNAL_SPAN = LEAF_DIM * INTERNAL_DIM  # 128 voxels per internal node edge
LEAF_VOXELS = LEAF_DIM ** 3
LEAF_BYTES = LEAF_VOXELS // 8
CHILDREN = INTERNAL_DIM ** 3

# Child / root codes; non-negative values index into ``leaves`` / ``internals``.
EMPTY_TILE = -1
FULL_TILE = -2

_KIND_EMPTY, _KIND_FULL, _KIND_NODE = 0, 1, 2
_ROOT_ENTRY = struct.Struct("<3iB")


class NodeInfo(NamedTuple):
    occupied: bool
    level: Level
    origin: Index3
    extent: int


def _zmajor(codes: np.ndarray) -> np.ndarray:
    """Flatten a ``[cx, cy, cz]`` child array with x fastest, z slowest."""
    return codes.transpose(2, 1, 0).ravel()


def _from_zmajor(flat: np.ndarray) -> np.ndarray:
    return flat.reshape(INTERNAL_DIM, INTERNAL_DIM, INTERNAL_DIM).transpose(2, 1, 0)


@dataclass(frozen=True, eq=False)
class SparseGrid:
    transform: GridTransform
    root: Dict[Index3, int]
    internals: np.ndarray  # (n, 16, 16, 16) int32 child codes indexed [cx, cy, cz]
    leaves: np.ndarray     # (m, 64) uint8, x-fastest LSB-first bits

    def __post_init__(self):
        internals = np.ascontiguousarray(self.internals, dtype=np.int32).reshape(-1, 16, 16, 16)
        leaves = np.ascontiguousarray(self.leaves, dtype=np.uint8).reshape(-1, LEAF_BYTES)
        internals.flags.writeable = False
        leaves.flags.writeable = False
        object.__setattr__(self, "internals", internals)
        object.__setattr__(self, "leaves", leaves)

    @property
    def leaf_count(self) -> int:
        return len(self.leaves)

    @property
    def internal_count(self) -> int:
        return len(self.internals)

    def root_slots(self) -> Tuple[int, int, int]:
        return tuple(-(-r // INTERNAL_SPAN) for r in self.transform.resolution)

    @cached_property
    def leaf_voxels(self) -> np.ndarray:
        """Unpacked leaves, shape ``(m, 8, 8, 8)`` indexed ``[leaf, lx, ly, lz]``."""
        m = len(self.leaves)
        flat = np.unpackbits(self.leaves, axis=1, bitorder="little")
        return np.ascontiguousarray(flat.reshape(m, 8, 8, 8).transpose(0, 3, 2, 1))

    @cached_property
    def kernel_tables(self):
        """Flat tables consumed by the compiled traversal core."""
        rx, ry, rz = self.root_slots()
        root = np.full((rx, ry, rz), EMPTY_TILE, dtype=np.int32)
        for (ox, oy, oz), code in self.root.items():
            root[ox // INTERNAL_SPAN, oy // INTERNAL_SPAN, oz // INTERNAL_SPAN] = code
        internals = self.internals if len(self.internals) else np.full((1, 16, 16, 16), EMPTY_TILE, np.int32)
        leaves = self.leaf_voxels if len(self.leaves) else np.zeros((1, 8, 8, 8), np.uint8)
        return (np.ascontiguousarray(root), np.ascontiguousarray(internals, dtype=np.int32),
                np.ascontiguousarray(leaves, dtype=np.uint8))

    def accessor(self) -> "Accessor":
        return Accessor(self)

    def at(self, ijk) -> bool:
        return Accessor(self).query(ijk).occupied

    def to_dense(self) -> DenseGrid:
        rx, ry, rz = self.root_slots()
        occ = np.zeros((rx * INTERNAL_SPAN, ry * INTERNAL_SPAN, rz * INTERNAL_SPAN), dtype=bool)
        vox = self.leaf_voxels.astype(bool)
        view = occ.reshape(rx, 16, 8, ry, 16, 8, rz, 16, 8)
        for (ox, oy, oz), code in self.root.items():
            x, y, z = ox // INTERNAL_SPAN, oy // INTERNAL_SPAN, oz // INTERNAL_SPAN
            if code == FULL_TILE:
                view[x, :, :, y, :, :, z, :, :] = True
            elif code >= 0:
                children = self.internals[code]
                fx, fy, fz = np.nonzero(children == FULL_TILE)
                view[x, fx, :, y, fy, :, z, fz, :] = True
                cx, cy, cz = np.nonzero(children >= 0)
                if len(cx):
                    view[x, cx, :, y, cy, :, z, cz, :] = vox[children[cx, cy, cz]]
        nx, ny, nz = self.transform.resolution
        return DenseGrid.from_occupancy(occ[:nx, :ny, :nz], self.transform)

    def structurally_equal(self, other: "SparseGrid") -> bool:
        return (self.transform == other.transform and self.root == other.root
                and np.array_equal(self.internals, other.internals)
                and np.array_equal(self.leaves, other.leaves))


class Accessor:
    """Tree lookups with a one-node-per-level cache (leaf + internal).

    An accessor is mutable per-worker state; share the grid, not the accessor.
    """

    def __init__(self, grid: SparseGrid):
        self.grid = grid
        self._res = grid.transform.resolution
        self._leaf_origin = None
        self._leaf_bits = None
        self._node_origin = None
        self._node = None
        self._voxels = grid.leaf_voxels
        self.hits = 0
        self.misses = 0

    def query(self, ijk) -> NodeInfo:
        i, j, k = ijk
        nx, ny, nz = self._res
        if not (0 <= i < nx and 0 <= j < ny and 0 <= k < nz):
            ci = min(max(i, 0), nx - 1)
            cj = min(max(j, 0), ny - 1)
            ck = min(max(k, 0), nz - 1)
            origin = (ci & ~127, cj & ~127, ck & ~127)
            return NodeInfo(False, Level.ROOT_TILE, origin, INTERNAL_SPAN)

        lo = self._leaf_origin
        if lo is not None and lo[0] <= i < lo[0] + 8 and lo[1] <= j < lo[1] + 8 and lo[2] <= k < lo[2] + 8:
            self.hits += 1
            return NodeInfo(bool(self._leaf_bits[i & 7, j & 7, k & 7]), Level.LEAF_VOXEL, (i, j, k), 1)

        no = self._node_origin
        if no is not None and no[0] <= i < no[0] + 128 and no[1] <= j < no[1] + 128 and no[2] <= k < no[2] + 128:
            self.hits += 1
            node = self._node
        else:
            self.misses += 1
            origin = (i & ~127, j & ~127, k & ~127)
            code = self.grid.root.get(origin)
            if code is None:
                return NodeInfo(False, Level.ROOT_TILE, origin, INTERNAL_SPAN)
            if code < 0:
                return NodeInfo(code == FULL_TILE, Level.INTERNAL_TILE, origin, INTERNAL_SPAN)
            node = self.grid.internals[code]
            self._node_origin = origin
            self._node = node

        child = int(node[(i >> 3) & 15, (j >> 3) & 15, (k >> 3) & 15])
        if child < 0:
            return NodeInfo(child == FULL_TILE, Level.LEAF_TILE, (i & ~7, j & ~7, k & ~7), LEAF_DIM)
        self._leaf_origin = (i & ~7, j & ~7, k & ~7)
        self._leaf_bits = self._voxels[child]
        return NodeInfo(bool(self._leaf_bits[i & 7, j & 7, k & 7]), Level.LEAF_VOXEL, (i, j, k), 1)

    def at(self, ijk) -> bool:
        return self.query(ijk).occupied


def build_sparse(dense: DenseGrid) -> SparseGrid:
    """Bottom-up conversion: classify every 8^3 block, then collapse internal nodes."""
    transform = dense.transform
    nx, ny, nz = transform.resolution
    rx, ry, rz = (-(-r // INTERNAL_SPAN) for r in transform.resolution)
    padded = np.zeros((rx * INTERNAL_SPAN, ry * INTERNAL_SPAN, rz * INTERNAL_SPAN), dtype=bool)
    padded[:nx, :ny, :nz] = dense.occupancy

    blocks = padded.reshape(rx, 16, 8, ry, 16, 8, rz, 16, 8)
    counts = np.count_nonzero(blocks, axis=(2, 5, 8)).reshape(rx, 16, ry, 16, rz, 16)
    counts = counts.transpose(0, 2, 4, 1, 3, 5)  # [rx, ry, rz, cx, cy, cz]

    root: Dict[Index3, int] = {}
    internals = []
    leaves = []
    n_leaves = 0
    for z in range(rz):
        for y in range(ry):
            for x in range(rx):
                origin = (x * INTERNAL_SPAN, y * INTERNAL_SPAN, z * INTERNAL_SPAN)
                c = counts[x, y, z]
                if not c.any():
                    root[origin] = EMPTY_TILE
                    continue
                if (c == LEAF_VOXELS).all():
                    root[origin] = FULL_TILE
                    continue
                children = np.where(c == 0, EMPTY_TILE, FULL_TILE).astype(np.int32)
                mixed = (c > 0) & (c < LEAF_VOXELS)
                mz, my, mx = np.nonzero(mixed.transpose(2, 1, 0))  # z-major order
                children[mx, my, mz] = np.arange(n_leaves, n_leaves + len(mx), dtype=np.int32)
                if len(mx):
                    node = blocks[x, :, :, y, :, :, z, :, :].transpose(0, 2, 4, 1, 3, 5)
                    vox = node[mx, my, mz]  # (m, 8, 8, 8) [lx, ly, lz]
                    flat = vox.transpose(0, 3, 2, 1).reshape(len(mx), LEAF_VOXELS)
                    leaves.append(np.packbits(flat, axis=1, bitorder="little"))
                    n_leaves += len(mx)
                root[origin] = len(internals)
                internals.append(children)

    internals_arr = np.stack(internals) if internals else np.zeros((0, 16, 16, 16), np.int32)
    leaves_arr = np.concatenate(leaves) if leaves else np.zeros((0, LEAF_BYTES), np.uint8)
    return SparseGrid(transform, root, internals_arr, leaves_arr)


def query(acc: Accessor, ijk) -> NodeInfo:
    return acc.query(ijk)


def _root_order(grid: SparseGrid):
    return sorted(grid.root.items(), key=lambda kv: (kv[0][2], kv[0][1], kv[0][0]))


def serialize(grid: SparseGrid) -> bytes:
    out = bytearray(SPARSE_MAGIC)
    out += struct.pack("<I", FORMAT_VERSION)
    out += pack_transform(grid.transform)
    out += struct.pack("<I", len(grid.root))
    for origin, code in _root_order(grid):
        if code < 0:
            kind = _KIND_FULL if code == FULL_TILE else _KIND_EMPTY
            out += _ROOT_ENTRY.pack(*origin, kind)
            continue
        out += _ROOT_ENTRY.pack(*origin, _KIND_NODE)
        for child in _zmajor(grid.internals[code]):
            if child == EMPTY_TILE:
                out.append(_KIND_EMPTY)
            elif child == FULL_TILE:
                out.append(_KIND_FULL)
            else:
                out.append(_KIND_NODE)
                out += grid.leaves[child].tobytes()
    return bytes(out)


def deserialize(data: bytes) -> SparseGrid:
    offset = check_header(data, SPARSE_MAGIC)
    transform, offset = unpack_transform(data, offset)
    if len(data) < offset + 4:
        raise TruncatedError("truncated")
    (count,) = struct.unpack_from("<I", data, offset)
    offset += 4
    root: Dict[Index3, int] = {}
    internals = []
    leaves = []
    for _ in range(count):
        if len(data) < offset + _ROOT_ENTRY.size:
            raise TruncatedError("truncated")
        ox, oy, oz, kind = _ROOT_ENTRY.unpack_from(data, offset)
        offset += _ROOT_ENTRY.size
        if kind == _KIND_EMPTY:
            root[(ox, oy, oz)] = EMPTY_TILE
        elif kind == _KIND_FULL:
            root[(ox, oy, oz)] = FULL_TILE
        elif kind == _KIND_NODE:
            flat = np.empty(CHILDREN, dtype=np.int32)
            for c in range(CHILDREN):
                if offset >= len(data):
                    raise TruncatedError("truncated")
                ck = data[offset]
                offset += 1
                if ck == _KIND_EMPTY:
                    flat[c] = EMPTY_TILE
                elif ck == _KIND_FULL:
                    flat[c] = FULL_TILE
                elif ck == _KIND_NODE:
                    if len(data) < offset + LEAF_BYTES:
                        raise TruncatedError("truncated")
                    flat[c] = len(leaves)
                    leaves.append(np.frombuffer(data, np.uint8, LEAF_BYTES, offset))
                    offset += LEAF_BYTES
                else:
                    raise FormatError(f"bad child kind {ck}")
            root[(ox, oy, oz)] = len(internals)
            internals.append(_from_zmajor(flat))
        else:
            raise FormatError(f"bad root entry kind {kind}")
    if offset != len(data):
        raise FormatError("trailing bytes")
    internals_arr = np.stack(internals) if internals else np.zeros((0, 16, 16, 16), np.int32)
    leaves_arr = np.stack(leaves) if leaves else np.zeros((0, LEAF_BYTES), np.uint8)
    return SparseGrid(transform, root, internals_arr, leaves_arr)


_HEADER_BYTES = 4 + 4 + 44 + 4


def memory_bytes(grid) -> int:
    """Deterministic storage size.

    Dense grids count their bit payload only (the dense-bitarray baseline);
    sparse grids count their full serialized form.  Sequences (cascades) sum
    their levels.
    """
    if isinstance(grid, DenseGrid):
        return len(grid.bits)
    if isinstance(grid, SparseGrid):
        total = _HEADER_BYTES + _ROOT_ENTRY.size * len(grid.root)
        total += CHILDREN * len(grid.internals) + LEAF_BYTES * len(grid.leaves)
        return total
    levels = getattr(grid, "levels", grid)
    return sum(memory_bytes(g) for g in levels)
