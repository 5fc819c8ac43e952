import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from occvdb import _native
from occvdb.errors import KernelStalled
from occvdb.grid import DenseGrid, GridTransform, Ray, clip_ray
from occvdb.sampling import (
    CascadeGrid, StepSchedule, sample_branch, sample_cascade, sample_rays, sample_skip,
    sample_skip_literal,
)
from occvdb.traversal import build_distance, trace
from occvdb.tree import build_sparse

from conftest import blocky_dense, random_dense, random_ray_through

UNIT4 = GridTransform((4, 4, 4))
Q = StepSchedule.constant(0.25)
X_RAY = Ray((0.0, 0.5, 0.5), (1.0, 0.0, 0.0))


def one_voxel_grid():
    occ = np.zeros((4, 4, 4), bool)
    occ[2, 0, 0] = True
    return DenseGrid.from_occupancy(occ)


def all_variants(dense, backend=None):
    sp = build_sparse(dense)
    return [(dense, "dda"), (sp, "dda"), (sp, "hdda"), (build_distance(dense, backend), "cd")]


def test_single_interval_example(backend):
    g = one_voxel_grid()
    for grid, an in all_variants(g, backend):
        assert sample_branch(X_RAY, grid, an, Q, backend).t.tolist() == [2.25, 2.5, 2.75, 3.0]
        assert sample_skip(X_RAY, grid, an, Q, backend).t.tolist() == [2.25, 2.5, 2.75, 3.0]


def test_empty_grid(backend):
    for grid, an in all_variants(DenseGrid.empty(UNIT4), backend):
        assert len(sample_branch(X_RAY, grid, an, Q, backend)) == 0
        assert len(sample_skip(X_RAY, grid, an, Q, backend)) == 0


def test_full_ladder(backend):
    g = DenseGrid.from_occupancy(np.ones((4, 4, 4), bool))
    ray = Ray((0.0, 0.5, 0.5), (1.0, 0.0, 0.0), 0.5)
    t_exit = clip_ray(ray, UNIT4)[1]
    want = [0.5 + 0.25 * k for k in range(1, 100) if 0.5 + 0.25 * k <= t_exit]
    assert len(want) == math.floor((t_exit - ray.t_min) / 0.25)
    # entering from outside keeps the ladder phase and drops points before the entry
    outside = Ray((-1.0, 0.5, 0.5), (1.0, 0.0, 0.0), 0.5)
    want_out = [0.5 + 0.25 * k for k in range(1, 100) if 1.0 < 0.5 + 0.25 * k <= 5.0]
    for grid, an in all_variants(g, backend):
        assert sample_branch(ray, grid, an, Q, backend).t.tolist() == want
        assert sample_skip(ray, grid, an, Q, backend).t.tolist() == want
        assert sample_skip(outside, grid, an, Q, backend).t.tolist() == want_out


def test_skip_fewer_lookups_on_tiles(backend):
    occ = np.zeros((64, 64, 64), bool)
    occ[0:8, 0:8, 0:8] = True
    occ[40:48, 0:8, 0:8] = True
    sp = build_sparse(DenseGrid.from_occupancy(occ))
    ray = Ray((-0.5, 3.5, 3.5), (1.0, 0.0, 0.0))
    b = sample_branch(ray, sp, "hdda", Q, backend)
    s = sample_skip(ray, sp, "hdda", Q, backend)
    assert b.same_samples(s) and len(s) == 64
    assert s.lookup_count < b.lookup_count


def test_literal_skip_stalls():
    with pytest.raises(KernelStalled) as err:
        sample_skip_literal(X_RAY, one_voxel_grid(), "dda", Q)
    # literal seek stops on the first *empty* voxel, so its samples lie in empty space
    assert all(t <= 1.0 for t in err.value.samples)
    with pytest.raises(KernelStalled):
        sample_skip(X_RAY, one_voxel_grid(), "dda", Q, literal=True)
    full = DenseGrid.from_occupancy(np.ones((4, 4, 4), bool))
    assert len(sample_skip_literal(X_RAY, full, "dda", Q)) == 0


def test_schedule_validation():
    with pytest.raises(ValueError):
        StepSchedule("constant", 0.0)
    with pytest.raises(ValueError):
        StepSchedule("linear", 0.1, -1.0)
    with pytest.raises(ValueError):
        StepSchedule("cubic", 0.1)
    assert StepSchedule.linear(0.01).growth == 1 / 256


@given(st.floats(1e-3, 0.5), st.floats(0, 0.2), st.floats(0, 5))
def test_linear_steps_positive_nondecreasing(dt0, growth, t_min):
    lad = StepSchedule("linear", dt0, growth).ladder(t_min, t_min + 10)
    gaps = np.diff(np.concatenate(([t_min], lad)))
    assert (gaps > 0).all()
    assert (np.diff(gaps) >= -1e-12 * lad[1:]).all()


@pytest.mark.parametrize("seed", range(6))
def test_kernel_and_analyzer_equivalence(seed, backend):
    rng = np.random.default_rng(seed)
    tf = GridTransform((24, 24, 24), (-1.5, -1.5, -1.5), 0.125)
    dense = blocky_dense(rng, tf.resolution, transform=tf) if seed % 2 else random_dense(rng, tf.resolution, p=0.05, transform=tf)
    sched = StepSchedule.constant(0.03) if seed < 3 else StepSchedule.linear(0.01, 0.02)
    variants = all_variants(dense, backend)
    for _ in range(60):
        ray = random_ray_through(rng, tf)
        ref = sample_branch(ray, dense, "dda", sched, backend)
        assert (np.diff(ref.t) > 0).all()
        assert ((ref.t >= ray.t_min) & (ref.t <= ray.t_max)).all()
        for grid, an in variants:
            assert sample_branch(ray, grid, an, sched, backend).same_samples(ref)
            assert sample_skip(ray, grid, an, sched, backend).same_samples(ref)
        # no false samples: each sample sits in a closed occupied interval of dense DDA
        ivs = trace(ray, dense, "dda", backend).occupied_intervals()
        for t in ref.t:
            assert any(a <= t <= b for a, b in ivs)


def test_linear_sample_gaps_nondecreasing():
    rng = np.random.default_rng(4)
    dense = DenseGrid.from_occupancy(np.ones((16, 16, 16), bool))
    sched = StepSchedule.linear(0.05, 0.05)
    for _ in range(20):
        ray = random_ray_through(rng, dense.transform)
        gaps = np.diff(sample_skip(ray, dense, "dda", sched).t)
        assert (np.diff(gaps) >= -1e-12).all()


def test_batch_matches_single(backend):
    rng = np.random.default_rng(8)
    dense = random_dense(rng, (16, 16, 16), p=0.1)
    rays = [random_ray_through(rng, dense.transform) for _ in range(30)]
    o = np.array([r.origin for r in rays])
    d = np.array([r.direction for r in rays])
    batch = sample_rays(o, d, dense, "dda", "skip", Q, backend=backend)
    assert len(batch) == 30
    for n, r in enumerate(rays):
        assert np.array_equal(batch.ray(n), sample_skip(r, dense, "dda", Q, backend).t)


def test_backends_agree_on_samples():
    if len(_native.available()) < 2:
        pytest.skip("compiled backend not built")
    rng = np.random.default_rng(10)
    tf = GridTransform((32, 24, 16), (-2.0, -1.5, -1.0), 0.125)
    dense = blocky_dense(rng, tf.resolution, transform=tf)
    rays = [random_ray_through(rng, tf) for _ in range(200)]
    o = np.array([r.origin for r in rays])
    d = np.array([r.direction for r in rays])
    sched = StepSchedule.linear(0.02, 0.01)
    for grid, an in all_variants(dense):
        for kernel in ("branch", "skip"):
            a = sample_rays(o, d, grid, an, kernel, sched, backend="compiled")
            b = sample_rays(o, d, grid, an, kernel, sched, backend="python")
            assert a.same_samples(b)
            assert (a.step_count, a.lookup_count) == (b.step_count, b.lookup_count)


# ---------------------------------------------------------------------------
# cascades


def make_cascade(rng, res=16, p=0.25):
    tfs = CascadeGrid.transforms(res, 2.0 / res)
    return CascadeGrid(tuple(random_dense(rng, (res,) * 3, p=p, transform=tf) for tf in tfs))


def test_cascade_transforms():
    tfs = CascadeGrid.transforms()
    assert len(tfs) == 4
    assert [tf.voxel_size for tf in tfs] == [2 / 128 * 2 ** b for b in range(4)]
    assert all(tf.resolution == (128, 128, 128) for tf in tfs)


def test_cascade_rejects_non_nested():
    a = DenseGrid.empty(GridTransform((8, 8, 8), (0, 0, 0), 1.0))
    b = DenseGrid.empty(GridTransform((8, 8, 8), (4, 0, 0), 1.0))
    with pytest.raises(ValueError):
        CascadeGrid((a, b))


def test_cascade_finest_priority():
    tfs = CascadeGrid.transforms(8, 0.25, n_levels=2)   # level 0 spans [-1, 1), level 1 [-2, 2)
    fine = DenseGrid.from_occupancy(np.ones((8, 8, 8), bool), tfs[0])
    coarse = DenseGrid.empty(tfs[1])
    cas = CascadeGrid((fine, coarse))
    assert cas.occupied_at((0.1, 0.2, 0.3))
    occ = np.zeros((8, 8, 8), bool)
    occ[6, 4, 4] = True              # world x in [1, 1.5)
    cas = CascadeGrid((DenseGrid.empty(tfs[0]), DenseGrid.from_occupancy(occ, tfs[1])))
    assert cas.occupied_at((1.2, 0.1, 0.1))
    assert not cas.occupied_at((5.0, 0.0, 0.0))
    ray = Ray((-3.0, 0.1, 0.1), (1.0, 0.0, 0.0))
    got = sample_cascade(ray, cas, "branch", "dda", StepSchedule.constant(0.05)).t
    assert len(got) and all(4.0 <= t <= 4.5 + 1e-12 for t in got)


def test_cascade_point_oracle(backend):
    rng = np.random.default_rng(12)
    cas = make_cascade(rng)
    sp = cas.sparse()
    sched = StepSchedule.constant(0.021)
    far = 2 ** 3 * 2.0
    mismatches = 0
    for _ in range(150):
        ray = random_ray_through(rng, cas.levels[-1].transform, margin=0.8)
        ray = Ray(ray.origin, ray.direction, 0.0, 4 * far)
        b = sample_cascade(ray, cas, "branch", "dda", sched, backend)
        s = sample_cascade(ray, sp, "skip", "hdda", sched, backend)
        assert b.same_samples(s)
        got = set(b.t.tolist())
        for t in sched.ladder(ray.t_min, ray.t_max):
            mismatches += cas.occupied_at(ray.at(t)) != (t in got)
    assert mismatches == 0


def test_cascade_batch():
    rng = np.random.default_rng(13)
    cas = make_cascade(rng, res=8)
    o = np.array([[-9.0, 0.1, 0.2], [0.3, -9.0, 0.1]])
    d = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    batch = sample_rays(o, d, cas, "dda", "skip", StepSchedule.constant(0.1))
    for n in range(2):
        single = sample_cascade(Ray(tuple(o[n]), tuple(d[n])), cas, "skip", "dda", StepSchedule.constant(0.1))
        assert np.array_equal(batch.ray(n), single.t)
