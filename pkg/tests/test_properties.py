"""Randomized invariants over hypothesis-drawn grids and rays."""
import numpy as np
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from occvdb.grid import DenseGrid, GridTransform, Ray, clip_ray
from occvdb.sampling import StepSchedule, sample_branch, sample_skip
from occvdb.traversal import build_distance, intervals_match, trace
from occvdb.tree import build_sparse

shapes = st.tuples(*[st.integers(1, 20)] * 3)


@st.composite
def grid_and_ray(draw):
    shape = draw(shapes)
    occ = draw(hnp.arrays(bool, shape, elements=st.booleans() if draw(st.booleans()) else st.just(False)
                          ) if draw(st.integers(0, 3)) == 0 else st.just(None))
    if occ is None:
        # blocky content: a few solid boxes so tiles appear
        occ = np.zeros(shape, bool)
        for _ in range(draw(st.integers(0, 4))):
            lo = [draw(st.integers(0, s - 1)) for s in shape]
            hi = [draw(st.integers(l + 1, s)) for l, s in zip(lo, shape)]
            occ[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]] = True
    vs = draw(st.sampled_from([1.0, 0.5, 0.3, 2.0 / 7]))
    wmin = draw(st.tuples(*[st.sampled_from([0.0, -1.25, 3.1])] * 3))
    tf = GridTransform(shape, wmin, vs)
    lo, hi = np.asarray(tf.world_min), np.asarray(tf.world_max)
    target = lo + np.asarray(draw(st.tuples(*[st.floats(0, 1)] * 3))) * (hi - lo)
    d = np.asarray(draw(st.tuples(*[st.sampled_from([-1.0, -0.3, 0.0, 0.25, 0.7, 1.0])] * 3)))
    if not d.any():
        d[0] = 1.0
    d /= np.linalg.norm(d)
    back = draw(st.floats(0.0, 3.0)) * np.linalg.norm(hi - lo)
    t_min = draw(st.sampled_from([0.0, 0.5]))
    ray = Ray(tuple(target - d * back), tuple(d), t_min)
    return DenseGrid.from_occupancy(occ, tf), ray


@given(grid_and_ray())
def test_partition_and_soundness(gr):
    dense, ray = gr
    span = clip_ray(ray, dense.transform)
    ref = trace(ray, dense, "dda")
    for grid, an in ((build_sparse(dense), "hdda"), (build_distance(dense), "cd"), (dense, "dda")):
        tr = trace(ray, grid, an)
        if span is None:
            assert len(tr) == 0
            continue
        assert tr.t0[0] == span[0] and tr.t1[-1] == span[1]
        assert np.array_equal(tr.t0[1:], tr.t1[:-1]) and (tr.t0 < tr.t1).all()
        assert intervals_match(tr.occupied_intervals(), ref.occupied_intervals())
        assert tr.lookup_count >= len(tr) and tr.step_count >= len(tr)


@given(grid_and_ray(), st.floats(0.05, 1.5), st.sampled_from([0.0, 0.01, 0.1]))
def test_kernel_equivalence(gr, dt, growth):
    dense, ray = gr
    sched = StepSchedule.constant(dt) if growth == 0 else StepSchedule.linear(dt, growth)
    ref = sample_branch(ray, dense, "dda", sched)
    sp = build_sparse(dense)
    for grid, an in ((dense, "dda"), (sp, "dda"), (sp, "hdda"), (build_distance(dense), "cd")):
        assert sample_skip(ray, grid, an, sched).same_samples(ref)
        assert sample_branch(ray, grid, an, sched).same_samples(ref)
    t = ref.t
    assert (np.diff(t) > 0).all()
    if len(t):
        assert ray.t_min < t[0] and t[-1] <= ray.t_max
        # every sample sits on the global ladder
        lad = set(sched.ladder(ray.t_min, float(t[-1])).tolist())
        assert set(t.tolist()) <= lad


@given(grid_and_ray())
def test_hdda_no_more_steps_than_dda(gr):
    dense, ray = gr
    assert trace(ray, build_sparse(dense), "hdda").step_count <= trace(ray, dense, "dda").step_count
