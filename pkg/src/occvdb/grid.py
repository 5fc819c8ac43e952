"""Geometric primitives, the dense bit-per-voxel occupancy grid and ray clipping.

Index space: voxel ``(i, j, k)`` covers ``[i, i+1) x [j, j+1) x [k, k+1)`` and
world space maps onto it through :class:`GridTransform`.  All analyzers work in
index space but keep the world ray parameter ``t``.
"""
from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import BadMagicError, BadVersionError, DegenerateGridError, TruncatedError

Vec3 = Tuple[float, float, float]
Index3 = Tuple[int, int, int]

# Parametric distance used for axes the ray never crosses.
BIG = 1.7976931348623157e308 / 4.0

DENSE_MAGIC = b"SOG0"
FORMAT_VERSION = 1
_TRANSFORM = struct.Struct("<3I3dd")


class Level(enum.IntEnum):
    LEAF_VOXEL = 0
    LEAF_TILE = 1
    INTERNAL_TILE = 2
    ROOT_TILE = 3


class TraversalEvent(NamedTuple):
    """One node crossed by a ray over the parametric range ``[t0, t1)``."""

    ijk: Index3
    level: Level
    t0: float
    t1: float
    occupied: bool
    extent: int = 1


@dataclass(frozen=True)
class Ray:
    origin: Vec3
    direction: Vec3
    t_min: float = 0.0
    t_max: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "direction", tuple(float(v) for v in self.direction))
        if len(self.origin) != 3 or len(self.direction) != 3:
            raise ValueError("ray origin and direction must be 3-vectors")
        norm = math.sqrt(sum(v * v for v in self.direction))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"ray direction must be unit length, got |d| = {norm!r}")
        if not (self.t_min >= 0.0 and self.t_max > self.t_min):
            raise ValueError("ray range must satisfy 0 <= t_min < t_max")

    @classmethod
    def toward(cls, origin, direction, t_min: float = 0.0, t_max: float = math.inf) -> "Ray":
        """Build a ray, normalizing ``direction``."""
        d = np.asarray(direction, dtype=float)
        n = float(np.linalg.norm(d))
        if n == 0.0:
            raise ValueError("zero direction")
        return cls(tuple(origin), tuple(d / n), t_min, t_max)

    def at(self, t: float) -> np.ndarray:
        return np.asarray(self.origin) + t * np.asarray(self.direction)


@dataclass(frozen=True)
class GridTransform:
    resolution: Index3
    world_min: Vec3 = (0.0, 0.0, 0.0)
    voxel_size: float = 1.0

    def __post_init__(self):
        res = tuple(int(r) for r in self.resolution)
        if len(res) != 3 or min(res) < 1:
            raise ValueError(f"resolution must be 3 positive integers, got {self.resolution!r}")
        if not self.voxel_size > 0:
            raise ValueError("voxel_size must be positive")
        object.__setattr__(self, "resolution", res)
        object.__setattr__(self, "world_min", tuple(float(v) for v in self.world_min))
        object.__setattr__(self, "voxel_size", float(self.voxel_size))

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.resolution
        return nx * ny * nz

    @property
    def world_max(self) -> Vec3:
        return tuple(m + r * self.voxel_size for m, r in zip(self.world_min, self.resolution))

    def contains_index(self, ijk) -> bool:
        return all(0 <= c < r for c, r in zip(ijk, self.resolution))

    def index_to_world(self, ijk) -> np.ndarray:
        """World position of the lowest corner of voxel ``ijk``."""
        return np.asarray(self.world_min) + np.asarray(ijk, dtype=float) * self.voxel_size

    def index_to_world_center(self, ijk) -> np.ndarray:
        return np.asarray(self.world_min) + (np.asarray(ijk, dtype=float) + 0.5) * self.voxel_size

    def world_to_index(self, point) -> np.ndarray:
        p = (np.asarray(point, dtype=float) - np.asarray(self.world_min)) / self.voxel_size
        return np.floor(p).astype(np.int64)

    def voxel_centers(self) -> np.ndarray:
        """World coordinates of every voxel center, shape ``(nx, ny, nz, 3)``."""
        axes = [self.world_min[a] + (np.arange(self.resolution[a]) + 0.5) * self.voxel_size
                for a in range(3)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def contains_point(self, point) -> bool:
        lo, hi = self.world_min, self.world_max
        return all(lo[a] <= point[a] < hi[a] for a in range(3))


def pack_bits(occ: np.ndarray) -> np.ndarray:
    """Pack an ``[i, j, k]`` boolean array x-fastest, LSB-first."""
    return np.packbits(np.asarray(occ, dtype=bool).transpose(2, 1, 0).ravel(), bitorder="little")


def unpack_bits(bits: np.ndarray, resolution: Sequence[int]) -> np.ndarray:
    nx, ny, nz = resolution
    flat = np.unpackbits(bits, count=nx * ny * nz, bitorder="little")
    return flat.reshape(nz, ny, nx).transpose(2, 1, 0).astype(bool)


@dataclass(frozen=True, eq=False)
class DenseGrid:
    """Bit-per-voxel occupancy, x-fastest, LSB-first within each byte."""

    transform: GridTransform
    bits: np.ndarray

    def __post_init__(self):
        bits = np.ascontiguousarray(self.bits, dtype=np.uint8)
        need = (self.transform.n_voxels + 7) // 8
        if bits.ndim != 1 or bits.size != need:
            raise ValueError(f"expected {need} payload bytes, got {bits.size}")
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_occupancy(cls, occ, transform: Optional[GridTransform] = None) -> "DenseGrid":
        occ = np.asarray(occ, dtype=bool)
        if occ.ndim != 3 or occ.size == 0:
            raise DegenerateGridError("degenerate grid")
        if transform is None:
            transform = GridTransform(occ.shape)
        elif tuple(occ.shape) != transform.resolution:
            raise ValueError(f"occupancy shape {occ.shape} does not match {transform.resolution}")
        return cls(transform, pack_bits(occ))

    @classmethod
    def empty(cls, transform: GridTransform) -> "DenseGrid":
        return cls(transform, np.zeros((transform.n_voxels + 7) // 8, dtype=np.uint8))

    @cached_property
    def occupancy(self) -> np.ndarray:
        """Boolean array indexed ``[i, j, k]`` (read-only)."""
        occ = unpack_bits(self.bits, self.transform.resolution)
        occ.flags.writeable = False
        return occ

    @cached_property
    def kernel_occ(self) -> np.ndarray:
        return np.ascontiguousarray(self.occupancy, dtype=np.uint8)

    @cached_property
    def _flat(self) -> bytes:
        # x-fastest unpacked bytes; fast scalar lookups for the pure-Python path
        return np.unpackbits(self.bits, count=self.transform.n_voxels, bitorder="little").tobytes()

    def at(self, ijk) -> bool:
        i, j, k = ijk
        nx, ny, nz = self.transform.resolution
        if 0 <= i < nx and 0 <= j < ny and 0 <= k < nz:
            return self._flat[i + nx * (j + ny * k)] == 1
        return False

    def count(self) -> int:
        return int(np.unpackbits(self.bits, count=self.transform.n_voxels).sum())

    def __eq__(self, other):
        if not isinstance(other, DenseGrid):
            return NotImplemented
        return self.transform == other.transform and np.array_equal(self.bits, other.bits)

    __hash__ = None


def binarize(density, threshold: float, transform: Optional[GridTransform] = None) -> DenseGrid:
    """Occupancy grid of voxels whose density is strictly above ``threshold``."""
    density = np.asarray(density, dtype=float)
    if density.ndim != 3 or density.size == 0:
        raise DegenerateGridError("degenerate grid")
    return DenseGrid.from_occupancy(density > threshold, transform)


def voxel_at(grid: DenseGrid, ijk) -> bool:
    return grid.at(ijk)


def ray_setup(origin, direction, t_min: float, t_max: float, transform: GridTransform):
    """Index-space ray parameters and clipped range, or None if the ray misses.

    Returns ``(o, d, t_enter, t_exit)`` where the index-space position is
    ``o + t * d``.  Plane crossings are evaluated as ``(plane - o) / d`` here and
    in every analyzer so that shared planes give bit-identical ``t`` values.
    """
    vs = transform.voxel_size
    wmin = transform.world_min
    res = transform.resolution
    o = [(origin[a] - wmin[a]) / vs for a in range(3)]
    d = [direction[a] / vs for a in range(3)]
    t0, t1 = t_min, t_max
    for a in range(3):
        if d[a] == 0.0:
            if not (0.0 <= o[a] < res[a]):
                return None
            continue
        ta = (0.0 - o[a]) / d[a]
        tb = (res[a] - o[a]) / d[a]
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
    if not t0 < t1:
        return None
    return o, d, t0, t1


def clip_ray(ray: Ray, transform: GridTransform) -> Optional[Tuple[float, float]]:
    setup = ray_setup(ray.origin, ray.direction, ray.t_min, ray.t_max, transform)
    if setup is None:
        return None
    return setup[2], setup[3]


def pack_transform(transform: GridTransform) -> bytes:
    return _TRANSFORM.pack(*transform.resolution, *transform.world_min, transform.voxel_size)


def unpack_transform(data: bytes, offset: int) -> Tuple[GridTransform, int]:
    if len(data) < offset + _TRANSFORM.size:
        raise TruncatedError("truncated")
    vals = _TRANSFORM.unpack_from(data, offset)
    return GridTransform(vals[0:3], vals[3:6], vals[6]), offset + _TRANSFORM.size


def check_header(data: bytes, magic: bytes) -> int:
    if len(data) < 4:
        raise TruncatedError("truncated")
    if data[:4] != magic:
        raise BadMagicError("bad magic")
    if len(data) < 8:
        raise TruncatedError("truncated")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != FORMAT_VERSION:
        raise BadVersionError(f"bad version {version}")
    return 8


def serialize_dense(grid: DenseGrid) -> bytes:
    return (DENSE_MAGIC + struct.pack("<I", FORMAT_VERSION) + pack_transform(grid.transform)
            + grid.bits.tobytes())


def deserialize_dense(data: bytes) -> DenseGrid:
    offset = check_header(data, DENSE_MAGIC)
    transform, offset = unpack_transform(data, offset)
    need = (transform.n_voxels + 7) // 8
    if len(data) < offset + need:
        raise TruncatedError("truncated")
    return DenseGrid(transform, np.frombuffer(data, dtype=np.uint8, count=need, offset=offset).copy())
