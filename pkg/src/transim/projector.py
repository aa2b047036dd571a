"""Parallel- and fan-beam projectors.

Conventions: a parallel view at angle ``theta`` integrates along the
direction ``w = (-sin theta, cos theta)``; detector offsets run along
``e = (cos theta, sin theta)``.  A fan view at source angle ``beta`` puts the
source at ``-R * w(beta)`` and uses a flat detector through the origin along
``e(beta)``, so its central ray coincides with the parallel ray at offset 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import ndimage

from .phantom import EllipsePhantom, Image2D, analytic_line_integral

# image support for the default experiment grid covering [-1, 1]^2
DEFAULT_SUPPORT_RADIUS = math.sqrt(2.0)
COVERAGE = 1.1


def _check_angles(angles) -> np.ndarray:
    a = np.asarray(angles, dtype=float)
    if a.ndim != 1 or a.size == 0:
        raise ValueError("geometry needs at least one angle")
    if a.size > 1 and np.any(np.diff(a) <= 0):
        raise ValueError("angles must be strictly increasing")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ParallelGeometry:
    angles: np.ndarray
    n_detectors: int
    detector_spacing: float

    def __post_init__(self):
        object.__setattr__(self, "angles", _check_angles(self.angles))
        if int(self.n_detectors) < 1:
            raise ValueError("n_detectors must be >= 1")
        if not self.detector_spacing > 0:
            raise ValueError("detector_spacing must be positive")
        object.__setattr__(self, "n_detectors", int(self.n_detectors))
        object.__setattr__(self, "detector_spacing", float(self.detector_spacing))

    kind = "parallel"

    @property
    def n_angles(self) -> int:
        return self.angles.size

    @property
    def offsets(self) -> np.ndarray:
        return (np.arange(self.n_detectors) - (self.n_detectors - 1) / 2.0) * self.detector_spacing

    def rays(self):
        """Points on and unit directions of every ray, shaped (A, D, 2)."""
        th = self.angles[:, None]
        s = self.offsets[None, :]
        pts = np.stack([s * np.cos(th), s * np.sin(th)], axis=-1)
        w = np.stack([-np.sin(th), np.cos(th)], axis=-1)
        return pts, np.broadcast_to(w, pts.shape)

    def header(self) -> dict:
        return {"kind": self.kind, "n_angles": self.n_angles,
                "n_detectors": self.n_detectors, "spacing": self.detector_spacing,
                "angle_start": float(self.angles[0]),
                "angle_step": float(self.angles[1] - self.angles[0]) if self.n_angles > 1 else 0.0}

    @classmethod
    def standard(cls, n_angles: int = 360, n_detectors: int = 509,
                 support_radius: float = DEFAULT_SUPPORT_RADIUS) -> "ParallelGeometry":
        """Equispaced angles over [0, pi); detectors span the support diameter x 1.1."""
        angles = np.arange(n_angles) * (math.pi / n_angles)
        return cls(angles, n_detectors, COVERAGE * 2.0 * support_radius / n_detectors)


@dataclass(frozen=True)
class FanGeometry:
    source_radius: float
    angles: np.ndarray
    n_detectors: int
    detector_spacing: float

    def __post_init__(self):
        object.__setattr__(self, "angles", _check_angles(self.angles))
        if not self.source_radius > 0:
            raise ValueError("source_radius must be positive")
        if int(self.n_detectors) < 1:
            raise ValueError("n_detectors must be >= 1")
        if not self.detector_spacing > 0:
            raise ValueError("detector_spacing must be positive")
        object.__setattr__(self, "source_radius", float(self.source_radius))
        object.__setattr__(self, "n_detectors", int(self.n_detectors))
        object.__setattr__(self, "detector_spacing", float(self.detector_spacing))

    kind = "fan"

    @property
    def n_angles(self) -> int:
        return self.angles.size

    @property
    def offsets(self) -> np.ndarray:
        return (np.arange(self.n_detectors) - (self.n_detectors - 1) / 2.0) * self.detector_spacing

    def sources(self) -> np.ndarray:
        b = self.angles
        return self.source_radius * np.stack([np.sin(b), -np.cos(b)], axis=-1)

    def rays(self):
        """Source points and unit directions towards each detector, (A, D, 2)."""
        b = self.angles[:, None]
        p = self.offsets[None, :]
        det = np.stack([p * np.cos(b), p * np.sin(b)], axis=-1)
        src = np.broadcast_to(self.sources()[:, None, :], det.shape)
        d = det - src
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        return src, d

    def header(self) -> dict:
        return {"kind": self.kind, "n_angles": self.n_angles,
                "n_detectors": self.n_detectors, "spacing": self.detector_spacing,
                "source_radius": self.source_radius,
                "angle_start": float(self.angles[0]),
                "angle_step": float(self.angles[1] - self.angles[0]) if self.n_angles > 1 else 0.0}

    @classmethod
    def standard(cls, n_angles: int = 360, n_detectors: int = 509, source_radius: float = 3.0,
                 support_radius: float = DEFAULT_SUPPORT_RADIUS) -> "FanGeometry":
        """Full-circle source trajectory; the flat detector covers the fan
        shadow of the support circle with a 10% margin."""
        if source_radius <= support_radius:
            raise ValueError("source must lie outside the support circle")
        angles = np.arange(n_angles) * (2.0 * math.pi / n_angles)
        shadow = support_radius * source_radius / math.sqrt(source_radius ** 2 - support_radius ** 2)
        return cls(source_radius, angles, n_detectors, COVERAGE * 2.0 * shadow / n_detectors)


Geometry = Union[ParallelGeometry, FanGeometry]


@dataclass(frozen=True)
class Sinogram:
    """Projection data, one row per view and one column per detector."""

    geometry: Geometry
    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        g = self.geometry
        if arr.shape != (g.n_angles, g.n_detectors):
            raise ValueError(f"data shape {arr.shape} does not match geometry "
                             f"({g.n_angles}, {g.n_detectors})")
        if not np.all(np.isfinite(arr)):
            raise ValueError("sinogram data must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    @property
    def kind(self) -> str:
        return self.geometry.kind

    @property
    def shape(self):
        return self.data.shape

    def with_data(self, data) -> "Sinogram":
        return Sinogram(self.geometry, data)


FanSinogram = Sinogram


def _march(img: Image2D, points: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """Ray-marched line integrals of the bilinearly interpolated image.

    Samples sit at fixed offsets from each ray's closest approach to the
    origin, so the result is independent of where ``points`` lie on the line.
    """
    data = img.data
    M, N = data.shape
    dy, dx = img.spacing
    T = img.support_radius
    n_steps = int(math.ceil(2.0 * T / (0.5 * img.pixel_spacing)))
    h = 2.0 * T / n_steps
    t = -T + (np.arange(n_steps) + 0.5) * h

    out = np.empty(points.shape[:-1])
    for a in range(points.shape[0]):
        p = points[a]
        d = directions[a]
        c = p - np.sum(p * d, axis=-1, keepdims=True) * d
        x = c[:, 0:1] + t[None, :] * d[:, 0:1]
        y = c[:, 1:2] + t[None, :] * d[:, 1:2]
        cols = x / dx + (N - 1) / 2.0
        rows = (M - 1) / 2.0 - y / dy
        vals = ndimage.map_coordinates(data, [rows.ravel(), cols.ravel()], order=1,
                                       mode="grid-constant", cval=0.0, prefilter=False)
        out[a] = vals.reshape(rows.shape).sum(axis=1) * h
    return out


def parallel_project(img: Image2D, geom: ParallelGeometry) -> Sinogram:
    """Joseph-style ray-marched parallel-beam projection (step = half a pixel)."""
    pts, dirs = geom.rays()
    return Sinogram(geom, _march(img, pts, dirs))


def fan_project(img: Image2D, geom: FanGeometry) -> Sinogram:
    """Ray-marched fan-beam projection from each source through each detector."""
    if geom.source_radius <= img.support_radius:
        raise ValueError(f"source radius {geom.source_radius} lies inside the image "
                         f"support (radius {img.support_radius:.4g})")
    src, dirs = geom.rays()
    return Sinogram(geom, _march(img, src, dirs))


def analytic_parallel_sinogram(phantom: EllipsePhantom, geom: ParallelGeometry) -> Sinogram:
    pts, dirs = geom.rays()
    return Sinogram(geom, np.broadcast_to(analytic_line_integral(phantom, pts, dirs), pts.shape[:-1]))


def analytic_fan_sinogram(phantom: EllipsePhantom, geom: FanGeometry) -> Sinogram:
    if len(phantom) and geom.source_radius <= phantom.support_radius:
        raise ValueError("source lies inside the phantom support")
    src, dirs = geom.rays()
    return Sinogram(geom, np.broadcast_to(analytic_line_integral(phantom, src, dirs), src.shape[:-1]))


# --- 3-D parallel projection of voxel volumes -------------------------------

@dataclass(frozen=True)
class Volume:
    """Piecewise-constant voxel density on an axis-aligned grid.

    ``data[i, j, k]`` is the density of the voxel
    ``origin + voxel_size * ([i, i+1] x [j, j+1] x [k, k+1])``.
    """

    data: np.ndarray
    origin: tuple[float, float, float]
    voxel_size: float


def voxelize(indicator, origin, voxel_size: float, shape, supersample: int = 1) -> Volume:
    """Occupancy fraction of ``indicator(x, y, z)`` per voxel, estimated on a
    ``supersample**3`` midpoint sub-grid."""
    origin = np.asarray(origin, dtype=float)
    axes = []
    for ax in range(3):
        sub = (np.arange(shape[ax] * supersample) + 0.5) * (voxel_size / supersample)
        axes.append(origin[ax] + sub)
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    occ = np.asarray(indicator(X, Y, Z), dtype=float)
    s = supersample
    occ = occ.reshape(shape[0], s, shape[1], s, shape[2], s).mean(axis=(1, 3, 5))
    return Volume(occ, tuple(origin), float(voxel_size))


def detector_basis(direction) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unit direction and an orthonormal basis of the plane perpendicular to it."""
    w = np.asarray(direction, dtype=float)
    w = w / np.linalg.norm(w)
    ref = np.zeros(3)
    ref[int(np.argmin(np.abs(w)))] = 1.0
    if np.allclose(np.abs(w), [0, 0, 1]):
        e1 = np.array([1.0, 0.0, 0.0])
    else:
        e1 = np.cross(ref, w)
        e1 /= np.linalg.norm(e1)
    e2 = np.cross(w, e1)
    return w, e1, e2


def project_volume(vol: Volume, direction, n_detectors: int, extent: float = 1.0,
                   chunk: int = 65536) -> Image2D:
    """Exact parallel projection of a voxel volume along ``direction``.

    The detector is an ``n x n`` grid of pixel centres covering
    ``[-extent, extent]^2`` in the plane through the origin perpendicular to
    ``direction``.  Line integrals are computed by exact voxel traversal, so
    the result equals the integral of the piecewise-constant density.
    """
    w, e1, e2 = detector_basis(direction)
    h = 2.0 * extent / n_detectors
    c = -extent + (np.arange(n_detectors) + 0.5) * h
    # row 0 at the top (largest e2 coordinate)
    S1, S2 = np.meshgrid(c, c[::-1])
    origins = S1.ravel()[:, None] * e1 + S2.ravel()[:, None] * e2

    data = vol.data
    shape = np.array(data.shape)
    lo = np.asarray(vol.origin, dtype=float)
    hi = lo + shape * vol.voxel_size
    out = np.zeros(origins.shape[0])
    for start in range(0, origins.shape[0], chunk):
        o = origins[start:start + chunk]
        out[start:start + chunk] = _traverse(data, lo, hi, vol.voxel_size, o, w)
    return Image2D(out.reshape(n_detectors, n_detectors), (h, h))


def _traverse(data, lo, hi, size, o, w) -> np.ndarray:
    n_rays = o.shape[0]
    a_min = np.full(n_rays, -np.inf)
    a_max = np.full(n_rays, np.inf)
    inside = np.ones(n_rays, dtype=bool)
    crossings = []
    for ax in range(3):
        if w[ax] == 0.0:
            inside &= (o[:, ax] > lo[ax]) & (o[:, ax] < hi[ax])
            continue
        planes = lo[ax] + np.arange(data.shape[ax] + 1) * size
        alpha = (planes[None, :] - o[:, ax:ax + 1]) / w[ax]
        a_min = np.maximum(a_min, alpha.min(axis=1))
        a_max = np.minimum(a_max, alpha.max(axis=1))
        crossings.append(alpha)
    alphas = np.sort(np.concatenate(crossings, axis=1), axis=1)
    alphas = np.clip(alphas, a_min[:, None], a_max[:, None])
    seg = np.diff(alphas, axis=1)
    mid = 0.5 * (alphas[:, 1:] + alphas[:, :-1])
    idx = []
    for ax in range(3):
        pos = o[:, ax:ax + 1] + mid * w[ax]
        i = np.floor((pos - lo[ax]) / size).astype(np.int64)
        idx.append(np.clip(i, 0, data.shape[ax] - 1))
    vals = data[idx[0], idx[1], idx[2]]
    total = np.sum(vals * seg, axis=1)
    return np.where(inside & (a_max > a_min), total, 0.0)
