"""Benchmark harness: synthetic scenes, the sampler variant matrix and reports.

Variant ids are ``<grid>+<analyzer>+<kernel>``, e.g. ``sparse+hdda+skip``.  The
reference variant is ``dense+dda+branch``.
"""
from __future__ import annotations

import csv
import io
import json
import math
import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .grid import DenseGrid, GridTransform
from .render import AnalyticScene, Box, Camera, Sphere, occupancy_grid, psnr, shade
from .sampling import CascadeGrid, StepSchedule, sample_rays
from .traversal import build_distance
from .tree import build_sparse, memory_bytes

REFERENCE_VARIANT = "dense+dda+branch"
ALL_VARIANTS = tuple(f"{g}+{a}+{k}"
                     for g, a in (("dense", "dda"), ("dense", "cd"), ("sparse", "dda"), ("sparse", "hdda"))
                     for k in ("branch", "skip"))
SCENE_KINDS = ("blobs", "shell", "sponge", "random")

REPORT_COLUMNS = ("variant", "status", "wall_ms", "fps", "lookup_count", "step_count", "samples",
                  "memory_bytes", "psnr_db", "convert_ms")
REPORT_SCHEMA = "occvdb.bench_report"
REPORT_VERSION = 1

DOMAIN_MIN = -1.0
DOMAIN_SIZE = 2.0


def parse_variant(variant: str) -> Tuple[str, str, str]:
    try:
        grid, analyzer, kernel = variant.split("+")
    except ValueError:
        raise ValueError(f"variant must look like 'dense+dda+branch', got {variant!r}") from None
    if f"{grid}+{analyzer}+{kernel}" not in ALL_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {', '.join(ALL_VARIANTS)}")
    return grid, analyzer, kernel


# ---------------------------------------------------------------------------
# scenes


def domain_transform(resolution: int, level: int = 0) -> GridTransform:
    vs = DOMAIN_SIZE / resolution * 2 ** level
    half = 0.5 * resolution * vs
    return GridTransform((resolution,) * 3, (-half, -half, -half), vs)


def _color(rng) -> Tuple[float, float, float]:
    return tuple(float(c) for c in rng.uniform(0.15, 1.0, 3))


def _blobs(rng, fraction, count=3, density=20.0):
    if fraction <= 0:
        return []
    r = (fraction * DOMAIN_SIZE ** 3 / (count * 4.0 / 3.0 * math.pi)) ** (1.0 / 3.0)
    r = min(r, 0.5 * DOMAIN_SIZE)
    out = []
    for _ in range(count):
        c = rng.uniform(DOMAIN_MIN + r, DOMAIN_MIN + DOMAIN_SIZE - r, 3) if r < 1.0 else np.zeros(3)
        out.append(Sphere(tuple(float(v) for v in c), float(r), density, _color(rng)))
    return out


def _shell(rng, fraction, radius=0.8, density=20.0):
    if fraction <= 0:
        return []
    vol = fraction * DOMAIN_SIZE ** 3
    inner3 = radius ** 3 - vol * 3.0 / (4.0 * math.pi)
    if inner3 <= 0:
        return [Sphere((0.0, 0.0, 0.0), float((vol * 3 / (4 * math.pi)) ** (1 / 3)), density, _color(rng))]
    return [Sphere((0.0, 0.0, 0.0), radius, density, _color(rng), float(inner3 ** (1.0 / 3.0)))]


def _sponge(rng, fraction, depth=2, density=20.0):
    if fraction <= 0:
        return []
    solid = (20.0 / 27.0) ** depth
    side = min(DOMAIN_SIZE * (fraction / solid) ** (1.0 / 3.0), DOMAIN_SIZE)
    cubes = [(np.full(3, -0.5 * side), side)]
    for _ in range(depth):
        nxt = []
        for lo, s in cubes:
            s3 = s / 3.0
            for i in range(3):
                for j in range(3):
                    for k in range(3):
                        if (i == 1) + (j == 1) + (k == 1) >= 2:
                            continue
                        nxt.append((lo + s3 * np.array([i, j, k]), s3))
        cubes = nxt
    color = _color(rng)
    return [Box(tuple(lo), tuple(lo + s), density, color) for lo, s in cubes]


def _random_boxes(rng, fraction, resolution, max_side=12, density=20.0):
    """Voxel-aligned random boxes added until the requested fill fraction is met."""
    if fraction <= 0:
        return []
    n = resolution
    vs = DOMAIN_SIZE / n
    if fraction >= 1:
        return [Box((DOMAIN_MIN,) * 3, (DOMAIN_MIN + DOMAIN_SIZE,) * 3, density, _color(rng))]
    target = fraction * n ** 3
    occ = np.zeros((n, n, n), dtype=bool)
    filled = 0
    boxes = []
    while filled < 0.97 * target:
        remaining = target - filled
        side = int(rng.integers(1, max_side + 1))
        side = max(1, min(side, int(remaining ** (1.0 / 3.0)), n))
        lo = rng.integers(0, n - side + 1, 3)
        sl = tuple(slice(int(a), int(a) + side) for a in lo)
        filled += int(np.count_nonzero(~occ[sl]))
        occ[sl] = True
        wlo = DOMAIN_MIN + lo * vs
        boxes.append(Box(tuple(float(v) for v in wlo), tuple(float(v) for v in wlo + side * vs),
                         density, _color(rng)))
    return boxes


def generate_scene(kind: str = "blobs", seed: int = 0, fraction: float = 0.05,
                   resolution: int = 128, threshold: float = 0.01, cascades: int = 1,
                   **params) -> Tuple[AnalyticScene, object]:
    """Deterministic analytic scene plus its occupancy grid (a cascade if ``cascades > 1``)."""
    if kind not in SCENE_KINDS:
        raise ValueError(f"unknown scene kind {kind!r}; choose from {', '.join(SCENE_KINDS)}")
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    if resolution < 1 or cascades < 1:
        raise ValueError("resolution and cascades must be positive")
    rng = np.random.default_rng(seed)
    if kind == "blobs":
        prims = _blobs(rng, fraction, **params)
    elif kind == "shell":
        prims = _shell(rng, fraction, **params)
    elif kind == "sponge":
        prims = _sponge(rng, fraction, **params)
    else:
        prims = _random_boxes(rng, fraction, resolution, **params)
    scene = AnalyticScene(tuple(prims), background=(0.0, 0.0, 0.0))
    if cascades == 1:
        return scene, occupancy_grid(scene, domain_transform(resolution), threshold)
    levels = tuple(occupancy_grid(scene, domain_transform(resolution, b), threshold)
                   for b in range(cascades))
    return scene, CascadeGrid(levels)


def parse_scene_spec(spec: str) -> Dict[str, object]:
    """``kind[:key=value,...]`` -> keyword arguments for :func:`generate_scene`."""
    kind, _, rest = spec.partition(":")
    out: Dict[str, object] = {"kind": kind.strip()}
    for item in filter(None, (p.strip() for p in rest.split(","))):
        key, eq, value = item.partition("=")
        if not eq:
            raise ValueError(f"bad scene parameter {item!r}")
        out[key.strip()] = _parse_value(value.strip())
    return out


def _parse_value(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


# ---------------------------------------------------------------------------
# configuration


@dataclass
class BenchConfig:
    scene: str = "blobs"
    seed: int = 0
    fraction: float = 0.05
    resolution: int = 128
    cascades: int = 1
    schedule: str = "constant"
    dt: float = 0.0
    growth: float = 1.0 / 256
    width: int = 64
    height: int = 64
    variants: Tuple[str, ...] = ALL_VARIANTS
    reps: int = 5
    render: bool = True
    backend: Optional[str] = None
    csv: Optional[str] = None
    json: Optional[str] = None
    scene_params: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.resolution % 8:
            raise ValueError("resolution must be a multiple of 8")
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError("fraction must lie in [0, 1]")
        if self.cascades not in (1, 4):
            raise ValueError("cascades must be 1 or 4")
        if self.reps < 5:
            raise ValueError("reps must be at least 5 (timings are medians)")
        self.variants = tuple(self.variants)
        for v in self.variants:
            parse_variant(v)

    @property
    def ray_count(self) -> int:
        return self.width * self.height

    def step_schedule(self) -> StepSchedule:
        dt = self.dt or DOMAIN_SIZE / self.resolution * 0.5
        if self.schedule == "linear":
            return StepSchedule.linear(dt, self.growth)
        return StepSchedule.constant(dt)


def parse_config(text: str) -> BenchConfig:
    """``key = value`` lines; ``#`` starts a comment.  Unknown keys are errors.

    ``variants`` takes a comma-separated list; keys prefixed ``scene.`` are
    passed to the scene generator.
    """
    kwargs: Dict[str, object] = {}
    scene_params: Dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not eq or not key:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        if key.startswith("scene."):
            scene_params[key[6:]] = _parse_value(value)
        elif key == "variants":
            kwargs[key] = tuple(v.strip() for v in value.split(",") if v.strip())
        elif key == "render":
            kwargs[key] = value.lower() in ("1", "true", "yes", "on")
        elif key in ("seed", "resolution", "cascades", "width", "height", "reps"):
            kwargs[key] = int(value)
        elif key in ("fraction", "dt", "growth"):
            kwargs[key] = float(value)
        elif key in ("scene", "schedule", "backend", "csv", "json"):
            kwargs[key] = value
        else:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
    return BenchConfig(scene_params=scene_params, **kwargs)


def load_config(path) -> BenchConfig:
    with open(path) as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------------------
# matrix


@dataclass
class BenchRow:
    variant: str
    status: str = "ok"
    wall_ms: float = 0.0
    fps: float = 0.0
    lookup_count: int = 0
    step_count: int = 0
    samples: int = 0
    memory_bytes: int = 0
    psnr_db: Optional[float] = None
    convert_ms: Optional[float] = None


@dataclass
class BenchReport:
    rows: List[BenchRow] = field(default_factory=list)
    meta: Dict[str, object] = field(default_factory=dict)

    def row(self, variant: str) -> BenchRow:
        for r in self.rows:
            if r.variant == variant:
                return r
        raise KeyError(variant)

    @property
    def all_ok(self) -> bool:
        return all(r.status == "ok" for r in self.rows)


def _median_ms(fn, reps: int) -> Tuple[float, object]:
    times = []
    result = None
    for _ in range(reps):
        start = time.perf_counter()
        result = fn()
        times.append((time.perf_counter() - start) * 1e3)
    return statistics.median(times), result


def time_conversion(dense: DenseGrid, reps: int = 10) -> float:
    return _median_ms(lambda: build_sparse(dense), reps)[0]


def _grids_for(grid_kind: str, analyzer: str, dense, sparse, dist):
    if grid_kind == "sparse":
        return sparse
    if analyzer == "cd":
        return dist
    return dense


def _default_camera(config: BenchConfig) -> Camera:
    return Camera(width=config.width, height=config.height)


def run_matrix(config: BenchConfig, camera: Optional[Camera] = None, scene=None) -> BenchReport:
    """Execute every selected variant on identical camera rays.

    ``scene`` may be a prebuilt ``(AnalyticScene, grid)`` pair; otherwise the
    config's generator is used.
    """
    if scene is None:
        scene = generate_scene(config.scene, config.seed, config.fraction, config.resolution,
                               cascades=config.cascades, **config.scene_params)
    scene, grid = scene
    sched = config.step_schedule()
    camera = camera or _default_camera(config)
    origins, dirs = camera.rays()
    report = BenchReport(meta={
        "scene": config.scene, "seed": config.seed, "fraction": config.fraction,
        "resolution": config.resolution, "cascades": config.cascades, "rays": len(origins),
        "schedule": sched.kind, "dt0": sched.dt0, "growth": sched.growth, "reps": config.reps,
    })
    from . import _native
    report.meta["backend"] = _native.get(config.backend).NAME

    if isinstance(grid, CascadeGrid):
        dense = grid
        convert_ms = _median_ms(grid.sparse, config.reps)[0]
        sparse = grid.sparse()
        dist = None
        report.meta["occupancy"] = float(grid.levels[0].count()) / grid.levels[0].transform.n_voxels
    else:
        dense = grid
        convert_ms = time_conversion(dense, max(config.reps, 10))
        sparse = build_sparse(dense)
        dist = build_distance(dense) if any("+cd+" in v for v in config.variants) else None
        report.meta["occupancy"] = float(dense.count()) / dense.transform.n_voxels

    variants = list(config.variants)
    if REFERENCE_VARIANT in variants:
        variants.remove(REFERENCE_VARIANT)
        variants.insert(0, REFERENCE_VARIANT)
    ref_samples = None
    ref_image = None
    for variant in variants:
        gk, an, kn = parse_variant(variant)
        row = BenchRow(variant)
        try:
            if an == "cd" and isinstance(grid, CascadeGrid):
                raise ValueError("cd analyzer is not defined for cascades")
            target = _grids_for(gk, an, dense, sparse, dist)
            wall, batch = _median_ms(
                lambda: sample_rays(origins, dirs, target, an, kn, sched, backend=config.backend),
                config.reps)
            row.wall_ms = wall
            row.fps = 1e3 / wall if wall > 0 else math.inf
            row.lookup_count = batch.lookup_count
            row.step_count = batch.step_count
            row.samples = len(batch.t)
            row.memory_bytes = memory_bytes(target if an != "cd" else dense)
            if gk == "sparse":
                row.convert_ms = convert_ms
            if ref_samples is None and variant == REFERENCE_VARIANT:
                ref_samples = batch
            elif ref_samples is not None and not batch.same_samples(ref_samples):
                row.status = "mismatch"
            if config.render:
                image = shade(origins, dirs, batch, scene, sched, camera.width, camera.height)
                if variant == REFERENCE_VARIANT:
                    ref_image = image
                if ref_image is not None:
                    row.psnr_db = psnr(image, ref_image)
        except Exception as exc:  # recorded, run continues
            row.status = f"failed: {type(exc).__name__}: {exc}"
        report.rows.append(row)
    return report


# ---------------------------------------------------------------------------
# reports


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(round(value, 6))
    return str(value)


def emit_report(report: BenchReport, fmt: str = "csv") -> bytes:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for row in report.rows:
            d = asdict(row)
            writer.writerow([_fmt(d[c]) for c in REPORT_COLUMNS])
        return buf.getvalue().encode()
    if fmt == "json":
        doc = {
            "schema": REPORT_SCHEMA,
            "version": REPORT_VERSION,
            "columns": list(REPORT_COLUMNS),
            "meta": report.meta,
            "rows": [asdict(r) for r in report.rows],
        }
        return json.dumps(doc, indent=2, sort_keys=False).encode()
    raise ValueError(f"unknown report format {fmt!r}")


def parse_report_json(data: bytes) -> BenchReport:
    doc = json.loads(data)
    if doc.get("schema") != REPORT_SCHEMA or doc.get("version") != REPORT_VERSION:
        raise ValueError("unsupported report schema")
    return BenchReport([BenchRow(**r) for r in doc["rows"]], doc.get("meta", {}))


# ---------------------------------------------------------------------------
# verification


def random_rays(n: int, seed: int = 0, radius: float = 2.5):
    """Rays from a sphere around the domain aimed at jittered interior points."""
    rng = np.random.default_rng(seed)
    eye = rng.normal(size=(n, 3))
    eye *= radius / np.linalg.norm(eye, axis=1, keepdims=True)
    target = rng.uniform(-0.9, 0.9, (n, 3))
    d = target - eye
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return eye, d


def verify_scene(spec: Dict[str, object], n_rays: int = 256, seed: int = 0,
                 backend=None) -> List[Tuple[str, bool, str]]:
    """Equivalence checks for one generated scene; returns ``(name, passed, detail)``."""
    from .grid import Ray, deserialize_dense, serialize_dense
    from .traversal import intervals_match, trace
    from .tree import deserialize, serialize

    spec = dict(spec)
    kind = spec.pop("kind")
    _, dense = generate_scene(kind, **spec)
    if isinstance(dense, CascadeGrid):
        dense = dense.levels[0]
    results: List[Tuple[str, bool, str]] = []
    sparse = build_sparse(dense)
    dist = build_distance(dense, backend)

    results.append(("sparse_occupancy", bool(np.array_equal(sparse.to_dense().occupancy, dense.occupancy)),
                    f"{sparse.leaf_count} leaves, {sparse.internal_count} internal"))
    results.append(("dense_roundtrip", deserialize_dense(serialize_dense(dense)) == dense, ""))
    results.append(("sparse_roundtrip", deserialize(serialize(sparse)).structurally_equal(sparse), ""))

    origins, dirs = random_rays(n_rays, seed)
    bad = 0
    for o, d in zip(origins, dirs):
        ray = Ray(tuple(o), tuple(d))
        ref = trace(ray, dense, "dda", backend).occupied_intervals()
        for g, an in ((sparse, "hdda"), (sparse, "dda"), (dist, "cd")):
            if not intervals_match(trace(ray, g, an, backend).occupied_intervals(), ref):
                bad += 1
    results.append(("analyzer_intervals", bad == 0, f"{bad} mismatches over {n_rays} rays"))

    sched = StepSchedule.constant(dense.transform.voxel_size * 0.5)
    ref = sample_rays(origins, dirs, dense, "dda", "branch", sched, backend=backend)
    bad_variants = []
    for variant in ALL_VARIANTS:
        gk, an, kn = parse_variant(variant)
        batch = sample_rays(origins, dirs, _grids_for(gk, an, dense, sparse, dist), an, kn, sched,
                            backend=backend)
        if not batch.same_samples(ref):
            bad_variants.append(variant)
    results.append(("kernel_samples", not bad_variants,
                    ",".join(bad_variants) or f"{len(ALL_VARIANTS)} variants, {len(ref.t)} samples"))
    return results
