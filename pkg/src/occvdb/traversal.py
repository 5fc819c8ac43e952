"""Ray traversal analyzers: voxel DDA, hierarchical DDA over the sparse tree, and
chessboard-distance skipping.

All three share one stepping rule.  Each step looks up the node containing the
current voxel, leaves it through the nearest exit plane (ties go to the lowest
axis index) and re-derives the voxel coordinate on the other axes from plane
crossing times, so identical planes always yield identical ``t`` values.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .grid import BIG, DenseGrid, GridTransform, Level, Ray, TraversalEvent, ray_setup
from .tree import Accessor, SparseGrid


class Analyzer(str, enum.Enum):
    DDA = "dda"
    HDDA = "hdda"
    CD = "cd"


class AnalyzerState:
    """Per-ray traversal state.  Not shareable between workers."""

    __slots__ = ("o", "d", "res", "step", "t_delta", "t_next", "ijk", "stride", "t", "t_exit",
                 "done", "lookup_count", "step_count")

    def __init__(self, ray: Ray, transform: GridTransform):
        self.res = transform.resolution
        self.stride = 1
        self.lookup_count = 0
        self.step_count = 0
        setup = ray_setup(ray.origin, ray.direction, ray.t_min, ray.t_max, transform)
        if setup is None:
            self.done = True
            self.o = self.d = (0.0, 0.0, 0.0)
            self.step = (0, 0, 0)
            self.t_delta = self.t_next = [BIG] * 3
            self.ijk = (0, 0, 0)
            self.t = self.t_exit = ray.t_min
            return
        self._start(*setup)

    @classmethod
    def from_setup(cls, setup, transform: GridTransform) -> "AnalyzerState":
        self = cls.__new__(cls)
        self.res = transform.resolution
        self.stride = 1
        self.lookup_count = 0
        self.step_count = 0
        self._start(*setup)
        return self

    def _start(self, o, d, t_enter, t_exit):
        self.o = o
        self.d = d
        self.step = tuple(1 if v > 0.0 else (-1 if v < 0.0 else 0) for v in d)
        self.t_delta = [1.0 / abs(v) if v != 0.0 else BIG for v in d]
        self.t_next = [BIG] * 3
        self.t = t_enter
        self.t_exit = t_exit
        self.done = False
        cell = []
        for a in range(3):
            n = self.res[a]
            if self.step[a] == 0:
                c = math.floor(o[a])
            else:
                p = o[a] + t_enter * d[a]
                c = math.floor(p) if self.step[a] > 0 else math.ceil(p) - 1
            c = min(max(c, 0), n - 1)
            if self.step[a] != 0:
                c = self._locate(a, c, 0, n - 1, t_enter)
            cell.append(c)
        self.ijk = tuple(cell)

    def _plane_t(self, a: int, plane: float) -> float:
        return (plane - self.o[a]) / self.d[a]

    def _locate(self, a: int, c: int, lo: int, hi: int, t: float) -> int:
        """Voxel coordinate along axis ``a`` occupied at time ``t``, within [lo, hi]."""
        if self.step[a] > 0:
            while c < hi and self._plane_t(a, c + 1) < t:
                c += 1
            while c > lo and self._plane_t(a, c) >= t:
                c -= 1
        else:
            while c > lo and self._plane_t(a, c) < t:
                c -= 1
            while c < hi and self._plane_t(a, c + 1) >= t:
                c += 1
        return c

    def cross(self, lo: Sequence[int], hi: Sequence[int]) -> Optional[Tuple[float, float]]:
        """Leave the box ``[lo, hi)`` containing the current voxel.

        Returns the covered ``(t0, t1)`` span, or None for a zero-length crossing.
        """
        t = self.t
        best = 0.0
        axis = -1
        step = self.step
        for a in range(3):
            s = step[a]
            if s == 0:
                tn = BIG
            elif s > 0:
                tn = (hi[a] - self.o[a]) / self.d[a]
            else:
                tn = (lo[a] - self.o[a]) / self.d[a]
            self.t_next[a] = tn
            if axis < 0 or tn < best:
                best = tn
                axis = a
        self.step_count += 1
        t1 = best if best < self.t_exit else self.t_exit
        span = (t, t1) if t1 > t else None
        if best >= self.t_exit:
            self.done = True
            return span
        c = hi[axis] if step[axis] > 0 else lo[axis] - 1
        if c < 0 or c >= self.res[axis]:
            self.done = True
            return span
        cell = list(self.ijk)
        for j in range(3):
            if j != axis and step[j] != 0 and hi[j] - lo[j] > 1:
                cell[j] = self._locate(j, cell[j], max(lo[j], 0), min(hi[j], self.res[j]) - 1, best)
        cell[axis] = c
        self.ijk = tuple(cell)
        if best > t:
            self.t = best
        return span


def dda_next(state: AnalyzerState, grid) -> Optional[TraversalEvent]:
    """Next voxel with positive length along the ray; None at end of stream.

    ``grid`` is anything with ``at(ijk)``: a DenseGrid or a sparse Accessor.
    """
    at = grid.at
    while not state.done:
        ijk = state.ijk
        occ = at(ijk)
        state.lookup_count += 1
        state.stride = 1
        span = state.cross(ijk, (ijk[0] + 1, ijk[1] + 1, ijk[2] + 1))
        if span is not None:
            return TraversalEvent(ijk, Level.LEAF_VOXEL, span[0], span[1], occ, 1)
    return None


def hdda_next(state: AnalyzerState, acc: Accessor) -> Optional[TraversalEvent]:
    """Next node of the sparse tree along the ray, stepping at the node's stride."""
    while not state.done:
        info = acc.query(state.ijk)
        state.lookup_count += 1
        state.stride = info.extent
        lo = info.origin
        e = info.extent
        span = state.cross(lo, (lo[0] + e, lo[1] + e, lo[2] + e))
        if span is not None:
            return TraversalEvent(lo, info.level, span[0], span[1], info.occupied, e)
    return None


@dataclass(frozen=True, eq=False)
class DistanceGrid:
    """Per-voxel chessboard distance to the nearest occupied voxel."""

    transform: GridTransform
    dist: np.ndarray  # int32 [i, j, k]
    infinite: bool = False

    def __post_init__(self):
        dist = np.ascontiguousarray(self.dist, dtype=np.int32)
        dist.flags.writeable = False
        object.__setattr__(self, "dist", dist)

    @cached_property
    def _flat(self) -> List[int]:
        return self.dist.transpose(2, 1, 0).ravel().tolist()

    def distance(self, ijk) -> int:
        i, j, k = ijk
        nx, ny, nz = self.transform.resolution
        return self._flat[i + nx * (j + ny * k)]

    def at(self, ijk) -> bool:
        if not self.transform.contains_index(ijk):
            return False
        return self.distance(ijk) == 0


def build_distance(dense: DenseGrid, backend=None) -> DistanceGrid:
    from . import _native

    occ = dense.kernel_occ
    if not occ.any():
        sentinel = max(dense.transform.resolution)
        return DistanceGrid(dense.transform, np.full(occ.shape, sentinel, np.int32), infinite=True)
    dist = _native.get(backend).chamfer(occ)
    return DistanceGrid(dense.transform, dist)


def cd_next(state: AnalyzerState, dist: DistanceGrid) -> Optional[TraversalEvent]:
    """DDA that jumps across the guaranteed-empty cube around far-from-surface voxels."""
    while not state.done:
        ijk = state.ijk
        d = dist.distance(ijk)
        state.lookup_count += 1
        if d >= 2:
            r = d - 1
            lo = (ijk[0] - r, ijk[1] - r, ijk[2] - r)
            e = 2 * r + 1
            state.stride = e
            span = state.cross(lo, (lo[0] + e, lo[1] + e, lo[2] + e))
            if span is not None:
                return TraversalEvent(lo, Level.LEAF_VOXEL, span[0], span[1], False, e)
        else:
            state.stride = 1
            span = state.cross(ijk, (ijk[0] + 1, ijk[1] + 1, ijk[2] + 1))
            if span is not None:
                return TraversalEvent(ijk, Level.LEAF_VOXEL, span[0], span[1], d == 0, 1)
    return None


def resolve(grid, analyzer) -> Tuple[int, object]:
    """Map a (grid, analyzer) pair to a kernel mode and the grid object it reads."""
    analyzer = Analyzer(analyzer)
    if analyzer is Analyzer.DDA:
        if isinstance(grid, DenseGrid):
            return MODE_DENSE_DDA, grid
        if isinstance(grid, SparseGrid):
            return MODE_SPARSE_DDA, grid
    elif analyzer is Analyzer.HDDA:
        if isinstance(grid, SparseGrid):
            return MODE_SPARSE_HDDA, grid
    elif analyzer is Analyzer.CD:
        if isinstance(grid, DistanceGrid):
            return MODE_DENSE_CD, grid
        if isinstance(grid, DenseGrid):
            return MODE_DENSE_CD, build_distance(grid)
    raise TypeError(f"analyzer {analyzer.value!r} cannot traverse {type(grid).__name__}")


MODE_DENSE_DDA = 0
MODE_SPARSE_DDA = 1
MODE_SPARSE_HDDA = 2
MODE_DENSE_CD = 3


def iter_events(ray: Ray, grid, analyzer="dda", state: Optional[AnalyzerState] = None
                ) -> Iterator[TraversalEvent]:
    """Pure-Python event stream; counters accumulate on ``state`` if given."""
    mode, g = resolve(grid, analyzer)
    if state is None:
        state = AnalyzerState(ray, g.transform)
    if mode == MODE_DENSE_DDA:
        step, target = dda_next, g
    elif mode == MODE_SPARSE_DDA:
        step, target = dda_next, g.accessor()
    elif mode == MODE_SPARSE_HDDA:
        step, target = hdda_next, g.accessor()
    else:
        step, target = cd_next, g
    while True:
        ev = step(state, target)
        if ev is None:
            return
        yield ev


@dataclass(frozen=True, eq=False)
class Trace:
    """Array form of an event stream plus instrumentation counters."""

    ijk: np.ndarray      # (n, 3) int64
    extent: np.ndarray   # (n,) int64
    level: np.ndarray    # (n,) uint8
    t0: np.ndarray
    t1: np.ndarray
    occupied: np.ndarray  # (n,) bool
    step_count: int
    lookup_count: int

    def __len__(self):
        return len(self.t0)

    def events(self) -> List[TraversalEvent]:
        return [TraversalEvent(tuple(int(c) for c in self.ijk[n]), Level(int(self.level[n])),
                               float(self.t0[n]), float(self.t1[n]), bool(self.occupied[n]),
                               int(self.extent[n]))
                for n in range(len(self.t0))]

    def occupied_intervals(self) -> List[Tuple[float, float]]:
        return merge_occupied(self.t0, self.t1, self.occupied)

    def same_events(self, other: "Trace") -> bool:
        return (np.array_equal(self.ijk, other.ijk) and np.array_equal(self.extent, other.extent)
                and np.array_equal(self.level, other.level) and np.array_equal(self.t0, other.t0)
                and np.array_equal(self.t1, other.t1) and np.array_equal(self.occupied, other.occupied))


def trace(ray: Ray, grid, analyzer="dda", backend=None) -> Trace:
    """Full event stream for one ray using the selected kernel backend."""
    from . import _native

    mode, g = resolve(grid, analyzer)
    return Trace(*_native.get(backend).trace(mode, g, ray.origin, ray.direction,
                                             ray.t_min, ray.t_max))


def merge_occupied(t0, t1, occupied) -> List[Tuple[float, float]]:
    """Merge occupied spans that share a boundary into maximal intervals."""
    out: List[List[float]] = []
    for a, b, occ in zip(t0, t1, occupied):
        if not occ:
            continue
        if out and out[-1][1] == a:
            out[-1][1] = float(b)
        else:
            out.append([float(a), float(b)])
    return [tuple(iv) for iv in out]


def intervals_match(a, b, rtol: float = 1e-9) -> bool:
    if len(a) != len(b):
        return False
    for (a0, a1), (b0, b1) in zip(a, b):
        if abs(a0 - b0) > rtol * max(1.0, abs(a0)) or abs(a1 - b1) > rtol * max(1.0, abs(a1)):
            return False
    return True


def format_trace(events) -> str:
    """Tab-separated dump: level, i,j,k, t0, t1, occupied (17 significant digits)."""
    lines = []
    for ev in events:
        lines.append("\t".join([
            Level(ev.level).name.lower(),
            "%d,%d,%d" % tuple(ev.ijk),
            "%.17g" % ev.t0,
            "%.17g" % ev.t1,
            "1" if ev.occupied else "0",
        ]))
    return "\n".join(lines) + ("\n" if lines else "")
