import numpy as np
import pytest
from hypothesis import settings

from occvdb import _native
from occvdb.grid import DenseGrid, GridTransform

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

BACKENDS = sorted(_native.available())


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def random_dense(rng, shape, p=None, transform=None):
    p = rng.uniform(0.02, 0.6) if p is None else p
    occ = rng.random(shape) < p
    tf = transform or GridTransform(shape, (0.0, 0.0, 0.0), 1.0)
    return DenseGrid.from_occupancy(occ, tf)


def blocky_dense(rng, shape, n_blocks=4, transform=None):
    """Grids made of random 8-aligned blocks and sprinkled voxels (exercise every tile kind)."""
    occ = np.zeros(shape, dtype=bool)
    for _ in range(n_blocks):
        lo = [int(rng.integers(0, max(1, s // 8))) * 8 for s in shape]
        size = [int(rng.integers(1, 3)) * 8 for _ in shape]
        occ[lo[0]:lo[0] + size[0], lo[1]:lo[1] + size[1], lo[2]:lo[2] + size[2]] = True
    occ |= rng.random(shape) < 0.01
    tf = transform or GridTransform(shape, (0.0, 0.0, 0.0), 1.0)
    return DenseGrid.from_occupancy(occ, tf)


def random_ray_through(rng, transform, margin=2.0):
    """Unit ray starting outside the box aimed at a random interior point."""
    from occvdb.grid import Ray

    lo = np.asarray(transform.world_min)
    hi = np.asarray(transform.world_max)
    size = hi - lo
    target = lo + rng.random(3) * size
    d = rng.normal(size=3)
    # some axis-aligned and planar rays to hit the degenerate paths
    r = rng.random()
    if r < 0.1:
        d = np.zeros(3)
        d[rng.integers(3)] = rng.choice([-1.0, 1.0])
    elif r < 0.2:
        d[rng.integers(3)] = 0.0
    d /= np.linalg.norm(d)
    origin = target - d * (np.linalg.norm(size) * margin)
    return Ray(tuple(origin), tuple(d))


ACCEPTANCE = []


def record(criterion, passed, detail):
    ACCEPTANCE.append((criterion, bool(passed), detail))
    print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} - {detail}")
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} - {detail}")
