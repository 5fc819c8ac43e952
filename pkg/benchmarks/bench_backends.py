"""Compiled vs pure-Python backend timings for the hot kernels.

    python3 benchmarks/bench_backends.py [--resolution 64] [--rays 1024] [--reps 5]

Prints one CSV row per (kernel, backend) with the median wall time and the
speedup of the compiled core.  Results are checked for equality first.
"""
import argparse
import statistics
import sys
import time

import numpy as np

from occvdb import _native
from occvdb.bench import generate_scene, random_rays
from occvdb.grid import Ray
from occvdb.sampling import StepSchedule, sample_rays
from occvdb.traversal import build_distance, trace
from occvdb.tree import build_sparse


def median_ms(fn, reps):
    out = []
    for _ in range(reps):
        t = time.perf_counter()
        fn()
        out.append((time.perf_counter() - t) * 1e3)
    return statistics.median(out)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--resolution", type=int, default=64)
    ap.add_argument("--rays", type=int, default=1024)
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--scene", default="blobs")
    ap.add_argument("--fraction", type=float, default=0.05)
    args = ap.parse_args(argv)

    if "compiled" not in _native.available():
        print("compiled backend not built; nothing to compare", file=sys.stderr)
        return 1

    _, dense = generate_scene(args.scene, 0, args.fraction, args.resolution)
    sparse = build_sparse(dense)
    dist = build_distance(dense)
    origins, dirs = random_rays(args.rays, seed=1)
    sched = StepSchedule.constant(dense.transform.voxel_size * 0.5)
    trace_rays = [Ray(tuple(o), tuple(d)) for o, d in zip(origins[:128], dirs[:128])]

    cases = {
        "trace/dense+dda": lambda b: [trace(r, dense, "dda", b) for r in trace_rays],
        "trace/sparse+hdda": lambda b: [trace(r, sparse, "hdda", b) for r in trace_rays],
        "chamfer": lambda b: build_distance(dense, b),
    }
    for variant in ("dense+dda+branch", "dense+cd+skip", "sparse+dda+branch", "sparse+hdda+skip"):
        gk, an, kn = variant.split("+")
        grid = sparse if gk == "sparse" else dist if an == "cd" else dense
        cases["sample/" + variant] = (
            lambda b, grid=grid, an=an, kn=kn: sample_rays(origins, dirs, grid, an, kn, sched, backend=b))

    print("case,backend,median_ms,speedup")
    for name, fn in cases.items():
        a, b = fn("compiled"), fn("python")
        if name.startswith("sample/") and not a.same_samples(b):
            print(f"{name}: backends disagree", file=sys.stderr)
            return 1
        if name == "chamfer" and not np.array_equal(a.dist, b.dist):
            print("chamfer: backends disagree", file=sys.stderr)
            return 1
        reps = args.reps if not name.startswith("sample/") else max(1, args.reps // 2)
        tc = median_ms(lambda: fn("compiled"), args.reps)
        tp = median_ms(lambda: fn("python"), reps)
        print(f"{name},compiled,{tc:.3f},{tp / tc:.1f}")
        print(f"{name},python,{tp:.3f},1.0")
    return 0


if __name__ == "__main__":
    sys.exit(main())
