"""Acceptance suite: one test and one PASS/FAIL line per criterion.

Runs on the default backend (compiled core when built).
"""
import math
import statistics
import time

import numpy as np
import pytest

from occvdb import backend_name
from occvdb.bench import ALL_VARIANTS, BenchConfig, generate_scene, parse_variant, run_matrix
from occvdb.grid import DenseGrid, GridTransform, Ray, voxel_at
from occvdb.render import Camera, shade
from occvdb.sampling import StepSchedule, sample_rays
from occvdb.traversal import build_distance, intervals_match, trace
from occvdb.tree import build_sparse, memory_bytes

from conftest import blocky_dense, random_dense, random_ray_through, record
from test_render import slab_opacity
from test_traversal import brute_chessboard

pytestmark = pytest.mark.acceptance


def suite_grids(n, seed, max_dim=32):
    """Random grids up to ``max_dim`` per axis with random non-unit transforms."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        shape = tuple(int(s) for s in rng.integers(1, max_dim + 1, 3))
        tf = GridTransform(shape, tuple(rng.uniform(-5, 5, 3)), float(rng.uniform(0.05, 2.0)))
        maker = (random_dense, blocky_dense)[k % 2]
        out.append(maker(rng, shape, transform=tf))
    return out, rng


@pytest.fixture(scope="module")
def ray_suite():
    """50 random grids x 1000 random rays, shared by criteria 2 and 3."""
    grids, rng = suite_grids(50, 2024)
    rays = []
    for g in grids:
        # a few grids at full 32^3 so every tile kind is crossed
        rs = [random_ray_through(rng, g.transform) for _ in range(1000)]
        rays.append((np.array([r.origin for r in rs]), np.array([r.direction for r in rs])))
    return grids, rays


def test_criterion_1_occupancy_equivalence():
    start = time.perf_counter()
    grids, _ = suite_grids(200, 1)
    mismatches = voxels = 0
    for dense in grids:
        acc = build_sparse(dense).accessor()
        for ijk in np.ndindex(*dense.transform.resolution):
            mismatches += acc.query(ijk).occupied != voxel_at(dense, ijk)
            voxels += 1
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 30.0
    record(1, ok, f"{mismatches} mismatches over {voxels} voxels in 200 grids, {elapsed:.1f} s (< 30 s)")
    assert ok


def test_criterion_2_analyzer_soundness(ray_suite):
    grids, rays = ray_suite
    bad = total = 0
    for dense, (origins, dirs) in zip(grids, rays):
        sparse, dist = build_sparse(dense), build_distance(dense)
        for o, d in zip(origins, dirs):
            ray = Ray(tuple(o), tuple(d))
            a = trace(ray, dense, "dda").occupied_intervals()
            b = trace(ray, sparse, "hdda").occupied_intervals()
            c = trace(ray, dist, "cd").occupied_intervals()
            total += 1
            if not (intervals_match(a, b) and intervals_match(a, c) and intervals_match(b, c)):
                bad += 1
    ok = bad == 0
    record(2, ok, f"{bad} interval-set mismatches over {total} rays x 3 analyzers (backend {backend_name()})")
    assert ok


PSNR_SCENES = [
    dict(kind="blobs", seed=1, fraction=0.05),
    dict(kind="shell", seed=2, fraction=0.03),
    dict(kind="sponge", seed=3, fraction=0.1),
    dict(kind="random", seed=4, fraction=0.05),
    dict(kind="blobs", seed=5, fraction=0.15),
]


def test_criterion_3_kernel_equivalence(ray_suite):
    grids, rays = ray_suite
    kernel_bad = 0
    boundary_violations = 0
    differing = 0
    for k, (dense, (origins, dirs)) in enumerate(zip(grids, rays)):
        sparse, dist = build_sparse(dense), build_distance(dense)
        vs = dense.transform.voxel_size
        sched = StepSchedule.constant(0.37 * vs) if k % 2 else StepSchedule.linear(0.2 * vs, 0.01)
        dda = None
        for grid, an in ((dense, "dda"), (sparse, "dda"), (sparse, "hdda"), (dist, "cd")):
            br = sample_rays(origins, dirs, grid, an, "branch", sched)
            sk = sample_rays(origins, dirs, grid, an, "skip", sched)
            kernel_bad += not br.same_samples(sk)
            if an == "dda" and grid is dense:
                dda = br
            if an == "hdda":
                for r in range(len(origins)):
                    a, b = dda.ray(r), br.ray(r)
                    if np.array_equal(a, b):
                        continue
                    diff = len(np.setxor1d(a, b))
                    differing += diff
                    tiles = trace(Ray(tuple(origins[r]), tuple(dirs[r])), sparse, "hdda").extent
                    boundary_violations += diff > 2 * int((tiles > 1).sum())
    psnrs = []
    for spec in PSNR_SCENES:
        cfg = BenchConfig(scene=spec["kind"], seed=spec["seed"], fraction=spec["fraction"],
                          resolution=64, width=48, height=48)
        rep = run_matrix(cfg)
        assert rep.all_ok, [r.status for r in rep.rows]
        psnrs.extend(r.psnr_db for r in rep.rows)
    ok = kernel_bad == 0 and boundary_violations == 0 and min(psnrs) >= 40.0
    record(3, ok, f"{kernel_bad} branch/skip buffer mismatches; {differing} hdda-vs-dda differing samples "
                  f"({boundary_violations} rays over the tile-boundary bound); min PSNR {min(psnrs):.1f} dB "
                  f"over {len(PSNR_SCENES)} scenes x {len(ALL_VARIANTS)} variants (>= 40)")
    assert ok


def test_criterion_4_operation_reduction():
    details = []
    ok = True
    for kind in ("blobs", "shell", "sponge", "random"):
        cfg = BenchConfig(scene=kind, seed=7, fraction=0.04, resolution=128, width=64, height=64,
                          variants=("dense+dda+branch", "sparse+hdda+skip", "sparse+dda+skip"),
                          render=False)
        rep = run_matrix(cfg)
        occ = rep.meta["occupancy"]
        ref, hdda = rep.row("dense+dda+branch"), rep.row("sparse+hdda+skip")
        ratio = hdda.step_count / ref.step_count
        fast = hdda.wall_ms <= ref.wall_ms
        ok &= occ <= 0.05 and ratio <= 0.5 and fast and rep.all_ok
        details.append(f"{kind}: occ {occ:.3f}, steps {ratio:.2f}x, wall {hdda.wall_ms:.1f}/{ref.wall_ms:.1f} ms")
    record(4, ok, "; ".join(details) + " (steps <= 0.5x, sparse+hdda+skip wall <= dense+dda+branch)")
    assert ok


def test_criterion_5_conversion_speed():
    cases = {
        "random 0.05": generate_scene("random", 0, 0.05, 128)[1],
        "random 0.5": generate_scene("random", 1, 0.5, 128)[1],
        "blobs 0.2": generate_scene("blobs", 2, 0.2, 128)[1],
        "checkerboard": DenseGrid.from_occupancy(np.indices((128,) * 3).sum(axis=0) % 2 == 0),
    }
    medians = {}
    for name, dense in cases.items():
        build_sparse(dense)  # warm caches
        times = []
        for _ in range(10):
            t0 = time.perf_counter()
            build_sparse(dense)
            times.append((time.perf_counter() - t0) * 1e3)
        medians[name] = statistics.median(times)
    worst = max(medians.values())
    ok = worst <= 100.0
    record(5, ok, "median of 10 build_sparse runs at 128^3: "
                  + ", ".join(f"{k} {v:.1f} ms" for k, v in medians.items()) + " (<= 100 ms)")
    assert ok


def test_criterion_6_memory_accounting():
    dense = DenseGrid.empty(GridTransform((128,) * 3))
    single = memory_bytes(dense)
    _, cascade = generate_scene("blobs", 0, 0.05, 128, cascades=4)
    cascade_total = memory_bytes(cascade)
    rng = np.random.default_rng(6)
    decreases = 0
    for case in range(50):
        shape = tuple(int(s) for s in rng.integers(2, 9, 3) * 8)
        occ = rng.random(shape) < rng.uniform(0.01, 0.3)
        before = memory_bytes(build_sparse(DenseGrid.from_occupancy(occ)))
        blocks = [tuple(rng.integers(0, s // 8) * 8 for s in shape) for _ in range(int(rng.integers(1, 6)))]
        for b in blocks:
            occ[b[0]:b[0] + 8, b[1]:b[1] + 8, b[2]:b[2] + 8] = bool(rng.integers(2))
        after = memory_bytes(build_sparse(DenseGrid.from_occupancy(occ)))
        decreases += after < before
    ok = single == 262144 and cascade_total == 1048576 and decreases == 50
    record(6, ok, f"dense 128^3 = {single} B, 4-cascade = {cascade_total} B, "
                  f"sparse bytes strictly decreased in {decreases}/50 uniform-block edits")
    assert ok


def test_criterion_7_distance_exactness():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    mismatches = 0
    for _ in range(30):
        occ = rng.random((16, 16, 16)) < rng.uniform(0.001, 0.1)
        if not occ.any():
            occ[tuple(rng.integers(0, 16, 3))] = True
        mismatches += int((build_distance(DenseGrid.from_occupancy(occ)).dist != brute_chessboard(occ)).sum())
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 60.0
    record(7, ok, f"{mismatches} voxel mismatches vs brute force on 30 grids of 16^3, {elapsed:.1f} s (< 60 s)")
    assert ok


def test_criterion_8_compositing():
    sigma, length = 3.0, 1.0
    exact = 1.0 - math.exp(-sigma * length)
    errs = [abs(slab_opacity(2.0 ** -m, sigma, length) - exact) for m in range(2, 9)]
    ratios = [b / (a / 2) for a, b in zip(errs, errs[1:])]
    worst = 0.0
    n_rays = 0
    cam = Camera(width=40, height=40)
    origins, dirs = cam.rays()
    for spec in PSNR_SCENES:
        scene, dense = generate_scene(spec["kind"], spec["seed"], spec["fraction"], 64)
        sched = StepSchedule.constant(dense.transform.voxel_size * 0.5)
        grids = {"dense": dense, "sparse": build_sparse(dense)}
        dist = build_distance(dense)
        for variant in ALL_VARIANTS:
            gk, an, kn = parse_variant(variant)
            grid = dist if an == "cd" else grids[gk]
            check = []
            shade(origins, dirs, sample_rays(origins, dirs, grid, an, kn, sched), scene, sched,
                  cam.width, cam.height, weight_check=check)
            worst = max(worst, check[0])
            n_rays += len(origins)
    ok = all(0.3 <= r <= 3.0 for r in ratios) and worst <= 1e-12
    record(8, ok, f"slab error ratios vs first-order prediction {min(ratios):.3f}..{max(ratios):.3f} "
                  f"(within [0.3, 3]); worst |sum(w) + T - 1| = {worst:.2e} over {n_rays} rays (<= 1e-12)")
    assert ok
