"""Ray-sampling kernels over an occupancy traversal.

Both kernels walk one global ladder ``t <- t + step(t)`` starting at the ray's
``t_min`` and keep the ladder points that fall inside occupied nodes (an event
``[t0, t1]`` claims points with ``t0 < t <= t1``).  *branch* consults occupancy
at every ladder point; *skip* seeks past empty nodes first and then marches.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from . import _native
from .errors import KernelStalled
from .grid import DenseGrid, GridTransform, Ray, TraversalEvent, clip_ray
from .traversal import iter_events, resolve, trace
from .tree import build_sparse

KERNEL_BRANCH = 0
KERNEL_SKIP = 1


class Kernel(str, enum.Enum):
    BRANCH = "branch"
    SKIP = "skip"


@dataclass(frozen=True)
class StepSchedule:
    """Ladder step ``max(dt0, growth * t)``; growth is zero for a constant step."""

    kind: str = "constant"
    dt0: float = 0.01
    growth: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "linear"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not self.dt0 > 0:
            raise ValueError("dt0 must be positive")
        if self.growth < 0:
            raise ValueError("growth must be non-negative")
        if self.kind == "constant" and self.growth != 0.0:
            raise ValueError("constant schedules have zero growth")

    @classmethod
    def constant(cls, dt: float) -> "StepSchedule":
        return cls("constant", dt, 0.0)

    @classmethod
    def linear(cls, dt0: float, growth: float = 1.0 / 256) -> "StepSchedule":
        return cls("linear", dt0, growth)

    def step(self, t: float) -> float:
        s = self.growth * t
        return s if s > self.dt0 else self.dt0

    def ladder(self, t_min: float, t_max: float) -> np.ndarray:
        """Ladder points after ``t_min`` up to ``t_max`` inclusive."""
        out = []
        t = t_min + self.step(t_min)
        while t <= t_max:
            out.append(t)
            t += self.step(t)
        return np.asarray(out)


@dataclass(frozen=True, eq=False)
class SampleBuffer:
    t: np.ndarray
    step_count: int = 0
    lookup_count: int = 0

    def __len__(self):
        return len(self.t)

    def __iter__(self):
        return iter(self.t.tolist())

    def same_samples(self, other: "SampleBuffer") -> bool:
        return bool(np.array_equal(self.t, other.t))


@dataclass(frozen=True, eq=False)
class RayBatchSamples:
    """Samples for many rays: ray ``r`` owns ``t[offsets[r]:offsets[r+1]]``."""

    t: np.ndarray
    offsets: np.ndarray
    step_count: int
    lookup_count: int

    def __len__(self):
        return len(self.offsets) - 1

    def ray(self, r: int) -> np.ndarray:
        return self.t[self.offsets[r]:self.offsets[r + 1]]

    def same_samples(self, other: "RayBatchSamples") -> bool:
        return bool(np.array_equal(self.offsets, other.offsets) and np.array_equal(self.t, other.t))


def _kernel_id(kernel) -> int:
    return KERNEL_BRANCH if Kernel(kernel) is Kernel.BRANCH else KERNEL_SKIP


def sample_rays(origins, directions, grid, analyzer="dda", kernel="branch",
                sched: Optional[StepSchedule] = None, t_min: float = 0.0, t_max: float = math.inf,
                backend=None) -> RayBatchSamples:
    """Run one kernel over a batch of unit-direction rays sharing ``[t_min, t_max]``."""
    sched = sched or StepSchedule()
    if isinstance(grid, CascadeGrid):
        return _cascade_batch(origins, directions, grid, analyzer, kernel, sched, t_min, t_max, backend)
    mode, g = resolve(grid, analyzer)
    t, offsets, steps, lookups = _native.get(backend).sample_batch(
        mode, _kernel_id(kernel), g, origins, directions, t_min, t_max, sched.dt0, sched.growth)
    return RayBatchSamples(t, offsets, int(steps), int(lookups))


def _single(ray: Ray, grid, analyzer, kernel, sched, backend) -> SampleBuffer:
    batch = sample_rays([ray.origin], [ray.direction], grid, analyzer, kernel, sched,
                        ray.t_min, ray.t_max, backend)
    return SampleBuffer(batch.t, batch.step_count, batch.lookup_count)


def sample_branch(ray: Ray, grid, analyzer="dda", sched: Optional[StepSchedule] = None,
                  backend=None) -> SampleBuffer:
    """Per-node branching kernel: every ladder point inside a node tests its occupancy."""
    return _single(ray, grid, analyzer, Kernel.BRANCH, sched, backend)


def sample_skip(ray: Ray, grid, analyzer="dda", sched: Optional[StepSchedule] = None,
                backend=None, literal: bool = False) -> SampleBuffer:
    """Skip-then-march kernel.

    With ``literal=True`` runs the naive variant of the loop (restart the seek
    from ``t_min`` and stop on the first *empty* node), which samples empty
    space and stalls; see :func:`sample_skip_literal`.
    """
    if literal:
        return sample_skip_literal(ray, grid, analyzer, sched)
    return _single(ray, grid, analyzer, Kernel.SKIP, sched, backend)


def sample_skip_literal(ray: Ray, grid, analyzer="dda", sched: Optional[StepSchedule] = None,
                        max_stalls: int = 1) -> SampleBuffer:
    """Naive skip loop: the seek restarts at ``t_min`` and stops on empty nodes.

    Kept to document why the default kernel resumes from the current event.
    The positional analyzer returns the node containing its argument.  Because
    the seek restarts from ``t_min`` and stops at the first empty node, every
    pass after the first revisits the same node; the stall is reported by
    raising :class:`KernelStalled` carrying the partial buffer.  Grids without
    empty nodes run off the end of the stream and return normally.
    """
    sched = sched or StepSchedule()
    events = list(iter_events(ray, grid, analyzer))

    def analyzer_at(t):
        for ev in events:
            if t < ev.t1:
                return ev
        return None

    buf: List[float] = []
    t_last = ray.t_min
    stalls = 0
    while t_last <= ray.t_max:
        before = (t_last, len(buf))
        t1 = ray.t_min
        while True:
            ev = analyzer_at(t1)
            if ev is None:
                return SampleBuffer(np.asarray(buf))
            t0, t1 = ev.t0, ev.t1
            if not ev.occupied:
                break
        while t_last <= t0:
            t_last += sched.step(t_last)
        while t_last <= t1:
            buf.append(t_last)
            t_last += sched.step(t_last)
        if (t_last, len(buf)) == before:
            stalls += 1
            if stalls >= max_stalls:
                raise KernelStalled(np.asarray(buf))
    return SampleBuffer(np.asarray(buf))


# ---------------------------------------------------------------------------
# multi-resolution cascades


@dataclass(frozen=True, eq=False)
class CascadeGrid:
    """Concentric grids, level ``b`` at ``2**b`` times the base voxel size."""

    levels: tuple

    def __post_init__(self):
        levels = tuple(self.levels)
        if not levels:
            raise ValueError("cascade needs at least one level")
        for fine, coarse in zip(levels, levels[1:]):
            ft, ct = fine.transform, coarse.transform
            if any(c > f for c, f in zip(ct.world_min, ft.world_min)) or \
                    any(c < f for c, f in zip(ct.world_max, ft.world_max)):
                raise ValueError("each cascade level must contain the previous one")
        object.__setattr__(self, "levels", levels)

    def __len__(self):
        return len(self.levels)

    @staticmethod
    def transforms(resolution: int = 128, base_voxel: float = 2.0 / 128,
                   center=(0.0, 0.0, 0.0), n_levels: int = 4) -> List[GridTransform]:
        out = []
        for b in range(n_levels):
            vs = base_voxel * 2 ** b
            half = 0.5 * resolution * vs
            out.append(GridTransform((resolution,) * 3, tuple(c - half for c in center), vs))
        return out

    def sparse(self) -> "CascadeGrid":
        return CascadeGrid(tuple(build_sparse(g) if isinstance(g, DenseGrid) else g
                                 for g in self.levels))

    def level_of(self, point) -> int:
        """Finest level whose voxel-center bounds contain ``point``, or -1.

        A level owns ``[first center, last center)`` on every axis, so the
        outer half voxel of a fine level defers to the next coarser level.
        """
        for b, g in enumerate(self.levels):
            lo, hi = center_bounds(g.transform)
            if all(lo[a] <= point[a] < hi[a] for a in range(3)):
                return b
        if self.levels:
            g = self.levels[-1]
            if g.transform.contains_point(point):
                return len(self.levels) - 1
        return -1

    def occupied_at(self, point) -> bool:
        b = self.level_of(point)
        if b < 0:
            return False
        g = self.levels[b]
        ijk = tuple(int(c) for c in g.transform.world_to_index(point))
        return bool(g.at(ijk))


def center_bounds(transform: GridTransform):
    """World box spanned by a grid's voxel centers."""
    h = 0.5 * transform.voxel_size
    return (tuple(m + h for m in transform.world_min), tuple(m - h for m in transform.world_max))


def _owned_span(ray: Ray, transform: GridTransform, coarsest: bool):
    """Ray range over a level's ownership box (full bounds for the coarsest level)."""
    if coarsest:
        return clip_ray(ray, transform)
    vs = transform.voxel_size
    t0, t1 = ray.t_min, ray.t_max
    for a in range(3):
        o = (ray.origin[a] - transform.world_min[a]) / vs
        d = ray.direction[a] / vs
        lo, hi = 0.5, transform.resolution[a] - 0.5
        if d == 0.0:
            if not lo <= o < hi:
                return None
            continue
        ta, tb = (lo - o) / d, (hi - o) / d
        if ta > tb:
            ta, tb = tb, ta
        t0, t1 = max(t0, ta), min(t1, tb)
    return (t0, t1) if t0 < t1 else None


def _subtract(span, covered):
    """``span`` minus the union of ``covered`` intervals, as a sorted list."""
    pieces = [span]
    for c0, c1 in covered:
        nxt = []
        for a, b in pieces:
            if c1 <= a or c0 >= b:
                nxt.append((a, b))
                continue
            if a < c0:
                nxt.append((a, c0))
            if c1 < b:
                nxt.append((c1, b))
        pieces = nxt
    return pieces


def cascade_events(ray: Ray, cascade: CascadeGrid, analyzer="dda", backend=None):
    """Composite event stream: each span is owned by the finest level containing it.

    Ownership follows :meth:`CascadeGrid.level_of`.  Returns ``(events,
    step_count, lookup_count)``.
    """
    events: List[TraversalEvent] = []
    steps = lookups = 0
    covered = []
    last = len(cascade.levels) - 1
    for b, g in enumerate(cascade.levels):
        span = _owned_span(ray, g.transform, b == last)
        if span is None:
            continue
        owned = _subtract(span, covered)
        covered.append(span)
        if not owned:
            continue
        tr = trace(ray, g, analyzer, backend)
        steps += tr.step_count
        lookups += tr.lookup_count
        for ev in tr.events():
            for a, b in owned:
                lo = max(a, ev.t0)
                hi = min(b, ev.t1)
                if hi > lo:
                    events.append(ev._replace(t0=lo, t1=hi))
    events.sort(key=lambda e: e.t0)
    return events, steps, lookups


def sample_cascade(ray: Ray, cascade: CascadeGrid, kernel="branch", analyzer="dda",
                   sched: Optional[StepSchedule] = None, backend=None) -> SampleBuffer:
    """Sample over the composite occupancy of a cascade (finest level wins)."""
    from ._pycore import run_kernel

    sched = sched or StepSchedule()
    events, steps, lookups = cascade_events(ray, cascade, analyzer, backend)
    it = iter(events)
    current = [None]

    def at(ijk):
        # the composite event already carries its owning level's occupancy
        return current[0].occupied

    def nxt():
        current[0] = next(it, None)
        return current[0]

    out: List[float] = []
    lookups += run_kernel(_kernel_id(kernel), nxt, at, ray.t_min, ray.t_max,
                          sched.dt0, sched.growth, out)
    return SampleBuffer(np.asarray(out, dtype=float), steps, lookups)


def _cascade_batch(origins, directions, cascade, analyzer, kernel, sched, t_min, t_max, backend):
    chunks = []
    offsets = [0]
    steps = lookups = 0
    for o, d in zip(np.asarray(origins, float), np.asarray(directions, float)):
        buf = sample_cascade(Ray(tuple(o), tuple(d), t_min, t_max), cascade, kernel, analyzer,
                             sched, backend)
        chunks.append(buf.t)
        offsets.append(offsets[-1] + len(buf))
        steps += buf.step_count
        lookups += buf.lookup_count
    t = np.concatenate(chunks) if chunks else np.zeros(0)
    return RayBatchSamples(t, np.asarray(offsets, dtype=np.int64), steps, lookups)
