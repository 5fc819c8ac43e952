# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled traversal and sampling kernels.

Mirrors ``_pycore`` operation for operation; every floating-point expression
is evaluated in the same order so both backends return identical values.
"""
import numpy as np

from libc.math cimport floor, ceil
from libc.stdlib cimport malloc, realloc, free

NAME = "compiled"

cdef double BIG = 1.7976931348623157e308 / 4.0

cdef enum:
    MODE_DENSE_DDA = 0
    MODE_SPARSE_DDA = 1
    MODE_SPARSE_HDDA = 2
    MODE_DENSE_CD = 3

cdef enum:
    KERNEL_BRANCH = 0
    KERNEL_SKIP = 1

cdef enum:
    LEAF_VOXEL = 0
    LEAF_TILE = 1
    INTERNAL_TILE = 2

cdef struct Grid:
    int mode
    int res[3]
    const unsigned char* occ
    const int* dist
    const int* root
    int rdim[3]
    const int* children
    const unsigned char* leaves

cdef struct Walk:
    double o[3]
    double d[3]
    int step[3]
    int cell[3]
    double t
    double t_exit
    int done
    long long steps
    long long lookups

cdef struct Event:
    int lo[3]
    int extent
    int level
    int occ
    double t0
    double t1

cdef struct Buffer:
    double* data
    Py_ssize_t size
    Py_ssize_t cap


cdef inline int push(Buffer* b, double v) noexcept nogil:
    cdef double* p
    if b.size == b.cap:
        b.cap = b.cap * 2 if b.cap else 1024
        p = <double*>realloc(b.data, b.cap * sizeof(double))
        if p == NULL:
            return -1
        b.data = p
    b.data[b.size] = v
    b.size += 1
    return 0


cdef inline double plane_t(Walk* w, int a, double plane) noexcept nogil:
    return (plane - w.o[a]) / w.d[a]


cdef int locate(Walk* w, int a, int c, int lo, int hi, double t) noexcept nogil:
    if w.step[a] > 0:
        while c < hi and plane_t(w, a, c + 1) < t:
            c += 1
        while c > lo and plane_t(w, a, c) >= t:
            c -= 1
    else:
        while c > lo and plane_t(w, a, c) < t:
            c -= 1
        while c < hi and plane_t(w, a, c + 1) >= t:
            c += 1
    return c


cdef int setup(Walk* w, Grid* g, const double* origin, const double* direction,
               double t_min, double t_max, const double* wmin, double vs) noexcept nogil:
    cdef int a, c
    cdef double ta, tb, tmp, p
    cdef double t0 = t_min
    cdef double t1 = t_max
    for a in range(3):
        w.o[a] = (origin[a] - wmin[a]) / vs
        w.d[a] = direction[a] / vs
    for a in range(3):
        if w.d[a] == 0.0:
            if not (0.0 <= w.o[a] and w.o[a] < g.res[a]):
                return 0
            continue
        ta = (0.0 - w.o[a]) / w.d[a]
        tb = (g.res[a] - w.o[a]) / w.d[a]
        if ta > tb:
            tmp = ta
            ta = tb
            tb = tmp
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
    if not t0 < t1:
        return 0
    w.t = t0
    w.t_exit = t1
    w.done = 0
    w.steps = 0
    w.lookups = 0
    for a in range(3):
        if w.d[a] > 0.0:
            w.step[a] = 1
        elif w.d[a] < 0.0:
            w.step[a] = -1
        else:
            w.step[a] = 0
    for a in range(3):
        if w.step[a] == 0:
            c = <int>floor(w.o[a])
        else:
            p = w.o[a] + t0 * w.d[a]
            if w.step[a] > 0:
                c = <int>floor(p)
            else:
                c = <int>ceil(p) - 1
        if c < 0:
            c = 0
        if c > g.res[a] - 1:
            c = g.res[a] - 1
        if w.step[a] != 0:
            c = locate(w, a, c, 0, g.res[a] - 1, t0)
        w.cell[a] = c
    return 1


cdef int cross(Walk* w, Grid* g, int* lo, int* hi, double* t0, double* t1) noexcept nogil:
    cdef double t = w.t
    cdef double best = 0.0
    cdef double tn, tend
    cdef int a, j, c, lj, hj
    cdef int axis = -1
    cdef int emitted
    for a in range(3):
        if w.step[a] == 0:
            tn = BIG
        elif w.step[a] > 0:
            tn = (hi[a] - w.o[a]) / w.d[a]
        else:
            tn = (lo[a] - w.o[a]) / w.d[a]
        if axis < 0 or tn < best:
            best = tn
            axis = a
    w.steps += 1
    tend = best if best < w.t_exit else w.t_exit
    emitted = tend > t
    t0[0] = t
    t1[0] = tend
    if best >= w.t_exit:
        w.done = 1
        return emitted
    if w.step[axis] > 0:
        c = hi[axis]
    else:
        c = lo[axis] - 1
    if c < 0 or c >= g.res[axis]:
        w.done = 1
        return emitted
    for j in range(3):
        if j != axis and w.step[j] != 0 and hi[j] - lo[j] > 1:
            lj = lo[j] if lo[j] > 0 else 0
            hj = (hi[j] if hi[j] < g.res[j] else g.res[j]) - 1
            w.cell[j] = locate(w, j, w.cell[j], lj, hj, best)
    w.cell[axis] = c
    if best > t:
        w.t = best
    return emitted


cdef inline Py_ssize_t dense_index(Grid* g, int i, int j, int k) noexcept nogil:
    return (<Py_ssize_t>i * g.res[1] + j) * g.res[2] + k


cdef int sparse_query(Grid* g, int i, int j, int k, int* lo, int* extent, int* level) noexcept nogil:
    cdef int code, child
    code = g.root[((i >> 7) * g.rdim[1] + (j >> 7)) * g.rdim[2] + (k >> 7)]
    if code < 0:
        lo[0] = i & ~127
        lo[1] = j & ~127
        lo[2] = k & ~127
        extent[0] = 128
        level[0] = INTERNAL_TILE
        return code == -2
    child = g.children[<Py_ssize_t>code * 4096 + (((i >> 3) & 15) * 16 + ((j >> 3) & 15)) * 16 + ((k >> 3) & 15)]
    if child < 0:
        lo[0] = i & ~7
        lo[1] = j & ~7
        lo[2] = k & ~7
        extent[0] = 8
        level[0] = LEAF_TILE
        return child == -2
    lo[0] = i
    lo[1] = j
    lo[2] = k
    extent[0] = 1
    level[0] = LEAF_VOXEL
    return g.leaves[<Py_ssize_t>child * 512 + ((i & 7) * 8 + (j & 7)) * 8 + (k & 7)]


cdef int at(Grid* g, int* ijk) noexcept nogil:
    """Occupancy test used by the branch kernel for each ladder point."""
    cdef int lo[3]
    cdef int extent, level
    if g.mode == MODE_DENSE_DDA:
        return g.occ[dense_index(g, ijk[0], ijk[1], ijk[2])]
    if g.mode == MODE_DENSE_CD:
        if ijk[0] < 0 or ijk[1] < 0 or ijk[2] < 0 or ijk[0] >= g.res[0] or ijk[1] >= g.res[1] or ijk[2] >= g.res[2]:
            return 0
        return g.dist[dense_index(g, ijk[0], ijk[1], ijk[2])] == 0
    return sparse_query(g, ijk[0], ijk[1], ijk[2], lo, &extent, &level)


cdef int next_event(Walk* w, Grid* g, Event* ev) noexcept nogil:
    cdef int hi[3]
    cdef int a, dv, r, e
    cdef double t0, t1
    while not w.done:
        w.lookups += 1
        ev.level = LEAF_VOXEL
        if g.mode == MODE_DENSE_DDA:
            ev.occ = g.occ[dense_index(g, w.cell[0], w.cell[1], w.cell[2])]
            e = 1
            for a in range(3):
                ev.lo[a] = w.cell[a]
        elif g.mode == MODE_SPARSE_DDA:
            ev.occ = sparse_query(g, w.cell[0], w.cell[1], w.cell[2], ev.lo, &e, &ev.level)
            e = 1
            ev.level = LEAF_VOXEL
            for a in range(3):
                ev.lo[a] = w.cell[a]
        elif g.mode == MODE_SPARSE_HDDA:
            ev.occ = sparse_query(g, w.cell[0], w.cell[1], w.cell[2], ev.lo, &e, &ev.level)
        else:
            dv = g.dist[dense_index(g, w.cell[0], w.cell[1], w.cell[2])]
            if dv >= 2:
                r = dv - 1
                e = 2 * r + 1
                for a in range(3):
                    ev.lo[a] = w.cell[a] - r
                ev.occ = 0
            else:
                e = 1
                for a in range(3):
                    ev.lo[a] = w.cell[a]
                ev.occ = dv == 0
        for a in range(3):
            hi[a] = ev.lo[a] + e
        if cross(w, g, ev.lo, hi, &t0, &t1):
            ev.extent = e
            ev.t0 = t0
            ev.t1 = t1
            return 1
    return 0


cdef object make_grid(Grid* g, int mode, object grid):
    """Fill ``g`` from a Python grid object; returns the arrays to keep alive."""
    cdef const unsigned char[:, :, ::1] occ
    cdef const int[:, :, ::1] dist
    cdef const int[:, :, ::1] root
    cdef const int[:, :, :, ::1] children
    cdef const unsigned char[:, :, :, ::1] leaves
    res = grid.transform.resolution
    g.mode = mode
    for a in range(3):
        g.res[a] = res[a]
    if mode == MODE_DENSE_DDA:
        arr = grid.kernel_occ
        occ = arr
        g.occ = &occ[0, 0, 0]
        return (arr,)
    if mode == MODE_DENSE_CD:
        arr = grid.dist
        dist = arr
        g.dist = &dist[0, 0, 0]
        return (arr,)
    if mode == MODE_SPARSE_DDA or mode == MODE_SPARSE_HDDA:
        tables = grid.kernel_tables
        root = tables[0]
        children = tables[1]
        leaves = tables[2]
        g.root = &root[0, 0, 0]
        for a in range(3):
            g.rdim[a] = root.shape[a]
        g.children = &children[0, 0, 0, 0]
        g.leaves = &leaves[0, 0, 0, 0]
        return tables
    raise ValueError(f"unknown mode {mode}")


def trace(int mode, grid, origin, direction, double t_min, double t_max):
    cdef Grid g
    cdef Walk w
    cdef Event ev
    cdef double o[3]
    cdef double d[3]
    cdef double wmin[3]
    cdef Py_ssize_t n = 0, cap
    keep = make_grid(&g, mode, grid)
    tr = grid.transform
    for a in range(3):
        o[a] = origin[a]
        d[a] = direction[a]
        wmin[a] = tr.world_min[a]
    cap = g.res[0] + g.res[1] + g.res[2] + 4
    ijk = np.empty((cap, 3), dtype=np.int64)
    extent = np.empty(cap, dtype=np.int64)
    level = np.empty(cap, dtype=np.uint8)
    t0 = np.empty(cap, dtype=np.float64)
    t1 = np.empty(cap, dtype=np.float64)
    occ = np.empty(cap, dtype=np.bool_)
    cdef long long[:, ::1] v_ijk = ijk
    cdef long long[::1] v_ext = extent
    cdef unsigned char[::1] v_lvl = level
    cdef double[::1] v_t0 = t0
    cdef double[::1] v_t1 = t1
    cdef unsigned char[::1] v_occ = occ.view(np.uint8)
    if not setup(&w, &g, o, d, t_min, t_max, wmin, tr.voxel_size):
        return (ijk[:0], extent[:0], level[:0], t0[:0], t1[:0], occ[:0], 0, 0)
    with nogil:
        while n < cap and next_event(&w, &g, &ev):
            v_ijk[n, 0] = ev.lo[0]
            v_ijk[n, 1] = ev.lo[1]
            v_ijk[n, 2] = ev.lo[2]
            v_ext[n] = ev.extent
            v_lvl[n] = ev.level
            v_t0[n] = ev.t0
            v_t1[n] = ev.t1
            v_occ[n] = ev.occ
            n += 1
    if not w.done:
        raise RuntimeError("event buffer overflow")
    return (ijk[:n].copy(), extent[:n].copy(), level[:n].copy(), t0[:n].copy(), t1[:n].copy(),
            occ[:n].copy(), w.steps, w.lookups)


cdef int run_kernel(Walk* w, Grid* g, int kernel, double t_min, double t_max, double dt0,
                    double growth, Buffer* out, long long* lookups) noexcept nogil:
    cdef Event ev
    cdef double t_last = t_min
    cdef double s
    cdef int got
    while t_last <= t_max:
        got = next_event(w, g, &ev)
        if kernel == KERNEL_SKIP:
            while got and not ev.occ:
                got = next_event(w, g, &ev)
        if not got:
            break
        while t_last <= ev.t0:
            s = growth * t_last
            t_last += s if s > dt0 else dt0
        if kernel == KERNEL_SKIP:
            while t_last <= ev.t1:
                if push(out, t_last):
                    return -1
                s = growth * t_last
                t_last += s if s > dt0 else dt0
        else:
            while t_last <= ev.t1:
                lookups[0] += 1
                if at(g, ev.lo):
                    if push(out, t_last):
                        return -1
                s = growth * t_last
                t_last += s if s > dt0 else dt0
    return 0


def sample_batch(int mode, int kernel, grid, origins, directions, double t_min, double t_max,
                 double dt0, double growth):
    cdef Grid g
    cdef Walk w
    cdef Buffer buf
    cdef double wmin[3]
    cdef double vs
    cdef long long steps = 0, lookups = 0
    cdef Py_ssize_t r, n
    cdef int failed = 0
    keep = make_grid(&g, mode, grid)
    tr = grid.transform
    for a in range(3):
        wmin[a] = tr.world_min[a]
    vs = tr.voxel_size
    o_arr = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
    d_arr = np.ascontiguousarray(directions, dtype=np.float64).reshape(-1, 3)
    cdef const double[:, ::1] vo = o_arr
    cdef const double[:, ::1] vd = d_arr
    n = vo.shape[0]
    offsets = np.zeros(n + 1, dtype=np.int64)
    cdef long long[::1] voff = offsets
    buf.data = NULL
    buf.size = 0
    buf.cap = 0
    try:
        with nogil:
            for r in range(n):
                if setup(&w, &g, &vo[r, 0], &vd[r, 0], t_min, t_max, wmin, vs):
                    if run_kernel(&w, &g, kernel, t_min, t_max, dt0, growth, &buf, &lookups):
                        failed = 1
                        break
                    steps += w.steps
                    lookups += w.lookups
                voff[r + 1] = buf.size
        if failed:
            raise MemoryError()
        samples = np.empty(buf.size, dtype=np.float64)
        if buf.size:
            samples[:] = <double[:buf.size]>buf.data
    finally:
        free(buf.data)
    return samples, offsets, steps, lookups


def chamfer(occ_in):
    """Two-pass 26-neighbour chamfer with unit weights (exact chessboard distance)."""
    arr = np.ascontiguousarray(occ_in, dtype=np.uint8)
    cdef const unsigned char[:, :, ::1] occ = arr
    cdef int nx = occ.shape[0], ny = occ.shape[1], nz = occ.shape[2]
    cdef int inf = nx + ny + nz + 1
    out = np.empty((nx, ny, nz), dtype=np.int32)
    cdef int[:, :, ::1] d = out
    cdef int i, j, k, di, dj, dk, a, b, c, v, m
    with nogil:
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    d[i, j, k] = 0 if occ[i, j, k] else inf
        # forward: neighbours preceding (i, j, k) in raster order
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    m = d[i, j, k]
                    if m == 0:
                        continue
                    for di in range(-1, 1):
                        a = i + di
                        if a < 0:
                            continue
                        for dj in range(-1, 2):
                            b = j + dj
                            if b < 0 or b >= ny:
                                continue
                            for dk in range(-1, 2):
                                if di == 0 and (dj > 0 or (dj == 0 and dk >= 0)):
                                    continue
                                c = k + dk
                                if c < 0 or c >= nz:
                                    continue
                                v = d[a, b, c] + 1
                                if v < m:
                                    m = v
                    d[i, j, k] = m
        # backward: neighbours following (i, j, k)
        for i in range(nx - 1, -1, -1):
            for j in range(ny - 1, -1, -1):
                for k in range(nz - 1, -1, -1):
                    m = d[i, j, k]
                    if m == 0:
                        continue
                    for di in range(0, 2):
                        a = i + di
                        if a >= nx:
                            continue
                        for dj in range(-1, 2):
                            b = j + dj
                            if b < 0 or b >= ny:
                                continue
                            for dk in range(-1, 2):
                                if di == 0 and (dj < 0 or (dj == 0 and dk <= 0)):
                                    continue
                                c = k + dk
                                if c < 0 or c >= nz:
                                    continue
                                v = d[a, b, c] + 1
                                if v < m:
                                    m = v
                    d[i, j, k] = m
    return out
