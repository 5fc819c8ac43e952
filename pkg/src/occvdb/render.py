"""Emission-absorption compositing over analytic density scenes, images and PSNR."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .grid import DenseGrid, GridTransform, Ray, binarize
from .sampling import StepSchedule, sample_rays

PSNR_IDENTICAL = 99.0


@dataclass(frozen=True)
class Sphere:
    center: Tuple[float, float, float]
    radius: float
    density: float = 20.0
    color: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    inner_radius: float = 0.0  # > 0 makes a hollow shell

    def contains(self, p: np.ndarray) -> np.ndarray:
        r2 = ((p - np.asarray(self.center)) ** 2).sum(axis=-1)
        inside = r2 <= self.radius ** 2
        if self.inner_radius > 0:
            inside &= r2 >= self.inner_radius ** 2
        return inside

    def bounds(self):
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius


@dataclass(frozen=True)
class Box:
    lo: Tuple[float, float, float]
    hi: Tuple[float, float, float]
    density: float = 20.0
    color: Tuple[float, float, float] = (1.0, 1.0, 1.0)

    def contains(self, p: np.ndarray) -> np.ndarray:
        return ((p >= np.asarray(self.lo)) & (p < np.asarray(self.hi))).all(axis=-1)

    def bounds(self):
        return np.asarray(self.lo, dtype=float), np.asarray(self.hi, dtype=float)


@dataclass(frozen=True)
class AnalyticScene:
    primitives: tuple = ()
    background: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))
        for prim in self.primitives:
            if prim.density < 0:
                raise ValueError("densities must be non-negative")
            if not all(0.0 <= c <= 1.0 for c in prim.color):
                raise ValueError("colors must lie in [0, 1]")
        if not all(0.0 <= c <= 1.0 for c in self.background):
            raise ValueError("background must lie in [0, 1]")

    def density_color(self, points) -> Tuple[np.ndarray, np.ndarray]:
        """Summed density and density-weighted color at ``points`` (n, 3)."""
        p = np.asarray(points, dtype=float).reshape(-1, 3)
        sigma = np.zeros(len(p))
        rgb = np.zeros((len(p), 3))
        for prim in self.primitives:
            m = prim.contains(p)
            if m.any():
                sigma[m] += prim.density
                rgb[m] += prim.density * np.asarray(prim.color)
        nz = sigma > 0
        rgb[nz] /= sigma[nz, None]
        return sigma, rgb


def rasterize(scene: AnalyticScene, transform: GridTransform) -> np.ndarray:
    """Density at every voxel center, evaluated only inside primitive bounds."""
    res = np.asarray(transform.resolution)
    wmin = np.asarray(transform.world_min)
    vs = transform.voxel_size
    density = np.zeros(transform.resolution)
    for prim in scene.primitives:
        lo, hi = prim.bounds()
        i0 = np.clip(np.floor((lo - wmin) / vs - 0.5).astype(int), 0, res)
        i1 = np.clip(np.ceil((hi - wmin) / vs - 0.5).astype(int) + 1, 0, res)
        if (i1 <= i0).any():
            continue
        axes = [wmin[a] + (np.arange(i0[a], i1[a]) + 0.5) * vs for a in range(3)]
        centers = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        m = prim.contains(centers)
        density[i0[0]:i1[0], i0[1]:i1[1], i0[2]:i1[2]] += np.where(m, prim.density, 0.0)
    return density


def occupancy_grid(scene: AnalyticScene, transform: GridTransform, threshold: float = 0.01) -> DenseGrid:
    return binarize(rasterize(scene, transform), threshold, transform)


def accumulate(ray: Ray, samples, scene: AnalyticScene, sched: StepSchedule):
    """Front-to-back compositing; returns ``(rgb, weights, transmittance)``."""
    t = np.asarray(samples, dtype=float)
    bg = np.asarray(scene.background, dtype=float)
    if len(t) == 0:
        return bg.copy(), np.zeros(0), 1.0
    delta = np.empty_like(t)
    delta[:-1] = np.diff(t)
    delta[-1] = sched.step(float(t[-1]))
    points = np.asarray(ray.origin) + t[:, None] * np.asarray(ray.direction)
    sigma, rgb = scene.density_color(points)
    alpha = 1.0 - np.exp(-sigma * delta)
    trans = np.cumprod(np.concatenate(([1.0], 1.0 - alpha)))
    weights = trans[:-1] * alpha
    final_t = float(trans[-1])
    color = (weights[:, None] * rgb).sum(axis=0) + final_t * bg
    return color, weights, final_t


def composite(ray: Ray, samples, scene: AnalyticScene, sched: StepSchedule) -> np.ndarray:
    return accumulate(ray, samples, scene, sched)[0]


@dataclass(frozen=True, eq=False)
class Image:
    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) uint8

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.shape != (self.height, self.width, 3):
            raise ValueError(f"pixel array {px.shape} does not match {self.width}x{self.height}")
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_float(cls, rgb: np.ndarray) -> "Image":
        rgb = np.asarray(rgb, dtype=float)
        px = np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)
        return cls(px.shape[1], px.shape[0], px)

    def to_ppm(self) -> bytes:
        return b"P6\n%d %d\n255\n" % (self.width, self.height) + self.pixels.tobytes()

    def write_ppm(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_ppm())

    def write_png(self, path) -> None:
        from PIL import Image as PILImage  # optional dependency

        PILImage.fromarray(self.pixels, "RGB").save(path)

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)

    __hash__ = None


def read_ppm(data: bytes) -> Image:
    parts = data.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P6" or parts[3] != b"255":
        raise ValueError("not an 8-bit binary PPM")
    w, h = int(parts[1]), int(parts[2])
    px = np.frombuffer(parts[4][: w * h * 3], dtype=np.uint8)
    return Image(w, h, px.reshape(h, w, 3))


def psnr(a: Image, b: Image) -> float:
    if (a.width, a.height) != (b.width, b.height):
        raise ValueError("image dimensions differ")
    diff = a.pixels.astype(float) - b.pixels.astype(float)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_IDENTICAL
    return min(10.0 * math.log10(255.0 ** 2 / mse), PSNR_IDENTICAL)


@dataclass(frozen=True)
class Camera:
    """Pinhole camera; rays leave the eye through pixel centers, row 0 at the top."""

    eye: Tuple[float, float, float] = (2.2, 2.6, 1.8)
    target: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    up: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    fov_deg: float = 45.0
    width: int = 64
    height: int = 64

    def rays(self) -> Tuple[np.ndarray, np.ndarray]:
        eye = np.asarray(self.eye, dtype=float)
        fwd = np.asarray(self.target, dtype=float) - eye
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, np.asarray(self.up, dtype=float))
        right /= np.linalg.norm(right)
        up = np.cross(right, fwd)
        half = math.tan(math.radians(self.fov_deg) / 2)
        aspect = self.width / self.height
        xs = ((np.arange(self.width) + 0.5) / self.width * 2 - 1) * half * aspect
        ys = (1 - (np.arange(self.height) + 0.5) / self.height * 2) * half
        px, py = np.meshgrid(xs, ys)
        dirs = fwd + px[..., None] * right + py[..., None] * up
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        dirs = dirs.reshape(-1, 3)
        return np.broadcast_to(eye, dirs.shape).copy(), dirs


def shade(origins, directions, batch, scene: AnalyticScene, sched: StepSchedule,
          width: int, height: int, t_min: float = 0.0, t_max: float = math.inf,
          weight_check: Optional[list] = None) -> Image:
    """Composite a sampled ray batch into an image.

    If ``weight_check`` is a list, the worst ``|sum(weights) + T - 1|`` is appended.
    """
    out = np.empty((len(origins), 3))
    worst = 0.0
    for r in range(len(origins)):
        ray = Ray(tuple(origins[r]), tuple(directions[r]), t_min, t_max)
        rgb, w, tr = accumulate(ray, batch.ray(r), scene, sched)
        out[r] = rgb
        worst = max(worst, abs(float(w.sum()) + tr - 1.0))
    if weight_check is not None:
        weight_check.append(worst)
    return Image.from_float(out.reshape(height, width, 3))


def render(scene: AnalyticScene, grid, camera: Camera, analyzer="dda", kernel="branch",
           sched: Optional[StepSchedule] = None, backend=None) -> Image:
    sched = sched or StepSchedule()
    origins, dirs = camera.rays()
    batch = sample_rays(origins, dirs, grid, analyzer, kernel, sched, backend=backend)
    return shade(origins, dirs, batch, scene, sched, camera.width, camera.height)
