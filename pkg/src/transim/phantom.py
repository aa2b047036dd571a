"""Ellipse phantoms: evaluation, rasterisation and exact line integrals.

World coordinates cover [-1, 1]^2 with x to the right and y up; image row 0
is the top row (largest y).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Ellipse:
    center: tuple[float, float]
    semi_axes: tuple[float, float]
    rotation: float = 0.0
    density: float = 1.0

    def __post_init__(self):
        a, b = self.semi_axes
        if not (a > 0 and b > 0):
            raise ValueError(f"semi-axes must be positive, got {self.semi_axes}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "semi_axes", (float(a), float(b)))
        object.__setattr__(self, "rotation", float(self.rotation) % math.pi)
        object.__setattr__(self, "density", float(self.density))

    def contains(self, x, y) -> np.ndarray:
        """Boolean mask of points inside (or on) the ellipse."""
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        dx = np.asarray(x, dtype=float) - self.center[0]
        dy = np.asarray(y, dtype=float) - self.center[1]
        xr = c * dx + s * dy
        yr = -s * dx + c * dy
        a, b = self.semi_axes
        return (xr / a) ** 2 + (yr / b) ** 2 <= 1.0

    def rotated(self, angle: float) -> "Ellipse":
        """The ellipse rotated about the world origin by ``angle``."""
        c, s = math.cos(angle), math.sin(angle)
        x, y = self.center
        return Ellipse((c * x - s * y, s * x + c * y), self.semi_axes,
                       self.rotation + angle, self.density)

    def chord(self, point, direction) -> np.ndarray:
        """Length of the intersection of the full line ``point + t*direction``
        with the ellipse. ``direction`` must be unit length; arrays broadcast
        over a trailing axis of size 2."""
        p = np.asarray(point, dtype=float)
        d = np.asarray(direction, dtype=float)
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        a, b = self.semi_axes
        px = p[..., 0] - self.center[0]
        py = p[..., 1] - self.center[1]
        # into the ellipse frame, scaled to the unit circle
        qx = (c * px + s * py) / a
        qy = (-s * px + c * py) / b
        ex = (c * d[..., 0] + s * d[..., 1]) / a
        ey = (-s * d[..., 0] + c * d[..., 1]) / b
        A = ex * ex + ey * ey
        B = qx * ex + qy * ey
        C = qx * qx + qy * qy - 1.0
        disc = B * B - A * C
        return np.where(disc > 0, 2.0 * np.sqrt(np.maximum(disc, 0.0)) / A, 0.0)


@dataclass(frozen=True)
class EllipsePhantom:
    ellipses: tuple[Ellipse, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "ellipses", tuple(self.ellipses))

    def __len__(self):
        return len(self.ellipses)

    def __add__(self, other: "EllipsePhantom") -> "EllipsePhantom":
        return EllipsePhantom(self.ellipses + other.ellipses)

    def evaluate(self, x, y) -> np.ndarray:
        """Density at world points; overlapping ellipses add."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape)
        for e in self.ellipses:
            out += np.where(e.contains(x, y), e.density, 0.0)
        return out

    def rotated(self, angle: float) -> "EllipsePhantom":
        return EllipsePhantom(tuple(e.rotated(angle) for e in self.ellipses))

    def total_mass(self) -> float:
        return float(sum(e.density * math.pi * e.semi_axes[0] * e.semi_axes[1]
                         for e in self.ellipses))

    @property
    def support_radius(self) -> float:
        r = 0.0
        for e in self.ellipses:
            r = max(r, math.hypot(*e.center) + max(e.semi_axes))
        return r


@dataclass(frozen=True)
class Image2D:
    """Dense M x N image centred on the world origin.

    ``spacing`` is ``(row_spacing, col_spacing)`` in world units per pixel.
    """

    data: np.ndarray
    spacing: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"image data must be a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image data must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        dy, dx = (float(v) for v in self.spacing)
        if dy <= 0 or dx <= 0:
            raise ValueError("pixel spacing must be positive")
        object.__setattr__(self, "spacing", (dy, dx))

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def pixel_spacing(self) -> float:
        return min(self.spacing)

    @property
    def support_radius(self) -> float:
        """Radius of the circle enclosing the image rectangle."""
        return 0.5 * math.hypot(self.rows * self.spacing[0], self.cols * self.spacing[1])

    def pixel_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """World ``(x, y)`` coordinate grids of the pixel centres."""
        return pixel_centers(self.rows, self.cols, self.spacing)


def pixel_centers(M: int, N: int, spacing: tuple[float, float]):
    dy, dx = spacing
    xs = (np.arange(N) - (N - 1) / 2.0) * dx
    ys = ((M - 1) / 2.0 - np.arange(M)) * dy
    return np.meshgrid(xs, ys)


# Modified Shepp-Logan (Toft): x0, y0, a, b, rotation (deg), density
_SHEPP_LOGAN = (
    (0.0, 0.0, 0.69, 0.92, 0.0, 1.0),
    (0.0, -0.0184, 0.6624, 0.874, 0.0, -0.8),
    (0.22, 0.0, 0.11, 0.31, -18.0, -0.2),
    (-0.22, 0.0, 0.16, 0.41, 18.0, -0.2),
    (0.0, 0.35, 0.21, 0.25, 0.0, 0.1),
    (0.0, 0.1, 0.046, 0.046, 0.0, 0.1),
    (0.0, -0.1, 0.046, 0.046, 0.0, 0.1),
    (-0.08, -0.605, 0.046, 0.023, 0.0, 0.1),
    (0.0, -0.606, 0.023, 0.023, 0.0, 0.1),
    (0.06, -0.605, 0.023, 0.046, 0.0, 0.1),
)


def standard_shepp_logan() -> EllipsePhantom:
    """The 10-ellipse (modified) Shepp-Logan head phantom."""
    return EllipsePhantom(tuple(
        Ellipse((x0, y0), (a, b), math.radians(phi), rho)
        for x0, y0, a, b, phi, rho in _SHEPP_LOGAN
    ))


def disk(radius: float = 1.0, center=(0.0, 0.0), density: float = 1.0) -> EllipsePhantom:
    return EllipsePhantom((Ellipse(center, (radius, radius), 0.0, density),))


def rasterize(phantom: EllipsePhantom, M: int, N: int) -> Image2D:
    """Sample the phantom at pixel centres of an M x N grid spanning [-1, 1]^2."""
    if M < 1 or N < 1:
        raise ValueError(f"image size must be positive, got {M}x{N}")
    spacing = (2.0 / M, 2.0 / N)
    x, y = pixel_centers(M, N, spacing)
    return Image2D(phantom.evaluate(x, y), spacing)


def analytic_line_integral(phantom: EllipsePhantom, point, direction) -> np.ndarray:
    """Exact integral of the phantom density along full lines.

    ``point`` and ``direction`` may carry leading batch dimensions with a
    trailing axis of size 2.
    """
    d = np.asarray(direction, dtype=float)
    norm = np.linalg.norm(d, axis=-1)
    if np.any(norm == 0):
        raise ValueError("direction must be non-zero")
    if not np.allclose(norm, 1.0, atol=1e-9):
        raise ValueError("direction must have unit norm")
    p = np.asarray(point, dtype=float)
    shape = np.broadcast_shapes(p.shape[:-1], d.shape[:-1])
    total = np.zeros(shape)
    for e in phantom.ellipses:
        total += e.density * e.chord(p, d)
    return total if shape else float(total)

