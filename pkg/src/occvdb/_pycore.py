"""Pure-Python kernel backend.  Same contract as the compiled ``_core`` module."""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from .grid import ray_setup
from .traversal import (
    MODE_DENSE_CD, MODE_DENSE_DDA, MODE_SPARSE_DDA, MODE_SPARSE_HDDA, AnalyzerState, cd_next,
    dda_next, hdda_next,
)

NAME = "python"

KERNEL_BRANCH = 0
KERNEL_SKIP = 1


def _stepper(mode, grid):
    """(next_event, at) callables for one ray."""
    if mode == MODE_DENSE_DDA:
        return dda_next, grid, grid.at
    if mode == MODE_SPARSE_DDA:
        acc = grid.accessor()
        return dda_next, acc, acc.at
    if mode == MODE_SPARSE_HDDA:
        acc = grid.accessor()
        return hdda_next, acc, acc.at
    if mode == MODE_DENSE_CD:
        return cd_next, grid, grid.at
    raise ValueError(f"unknown mode {mode}")


def trace(mode, grid, origin, direction, t_min, t_max):
    transform = grid.transform
    setup = ray_setup(origin, direction, t_min, t_max, transform)
    ijk, extent, level, t0, t1, occ = [], [], [], [], [], []
    steps = lookups = 0
    if setup is not None:
        state = AnalyzerState.from_setup(setup, transform)
        nxt, target, _ = _stepper(mode, grid)
        while True:
            ev = nxt(state, target)
            if ev is None:
                break
            ijk.append(ev.ijk)
            extent.append(ev.extent)
            level.append(int(ev.level))
            t0.append(ev.t0)
            t1.append(ev.t1)
            occ.append(ev.occupied)
        steps, lookups = state.step_count, state.lookup_count
    return (np.asarray(ijk, dtype=np.int64).reshape(-1, 3), np.asarray(extent, dtype=np.int64),
            np.asarray(level, dtype=np.uint8), np.asarray(t0, dtype=float),
            np.asarray(t1, dtype=float), np.asarray(occ, dtype=bool), steps, lookups)


def run_kernel(kernel, next_event, at, t_min, t_max, dt0, growth, out):
    """Sample ladder filtered by occupancy.  Returns the kernel's own lookups.

    ``next_event()`` yields events or None.  The ladder ``t <- t + max(dt0,
    growth * t)`` starts at ``t_min`` and is never reset, so both kernels see
    the same ladder.
    """
    t_last = t_min
    lookups = 0
    while t_last <= t_max:
        ev = next_event()
        if kernel == KERNEL_SKIP:
            while ev is not None and not ev.occupied:
                ev = next_event()
        if ev is None:
            break
        t0, t1 = ev.t0, ev.t1
        while t_last <= t0:
            s = growth * t_last
            t_last += s if s > dt0 else dt0
        if kernel == KERNEL_SKIP:
            while t_last <= t1:
                out.append(t_last)
                s = growth * t_last
                t_last += s if s > dt0 else dt0
        else:
            ijk = ev.ijk
            while t_last <= t1:
                lookups += 1
                if at(ijk):
                    out.append(t_last)
                s = growth * t_last
                t_last += s if s > dt0 else dt0
    return lookups


def sample_batch(mode, kernel, grid, origins, directions, t_min, t_max, dt0, growth):
    transform = grid.transform
    origins = np.asarray(origins, dtype=float).reshape(-1, 3)
    directions = np.asarray(directions, dtype=float).reshape(-1, 3)
    n = len(origins)
    offsets = np.zeros(n + 1, dtype=np.int64)
    out = []
    steps = lookups = 0
    for r in range(n):
        o = origins[r].tolist()
        d = directions[r].tolist()
        setup = ray_setup(o, d, t_min, t_max, transform)
        if setup is not None:
            state = AnalyzerState.from_setup(setup, transform)
            nxt, target, at = _stepper(mode, grid)
            lookups += run_kernel(kernel, lambda: nxt(state, target), at,
                                  t_min, t_max, dt0, growth, out)
            steps += state.step_count
            lookups += state.lookup_count
        offsets[r + 1] = len(out)
    return np.asarray(out, dtype=float), offsets, steps, lookups


def chamfer(occ):
    """Chessboard distance to the nearest occupied voxel (scipy's two-pass chamfer)."""
    occ = np.asarray(occ, dtype=bool)
    dist = ndimage.distance_transform_cdt(~occ, metric="chessboard")
    return np.ascontiguousarray(dist, dtype=np.int32)
