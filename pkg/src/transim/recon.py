"""Filtered backprojection, with fan data rebinned to parallel rays first."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .phantom import Image2D, pixel_centers
from .projector import FanGeometry, ParallelGeometry, Sinogram

WINDOWS = ("ram-lak", "hamming")


@dataclass(frozen=True)
class FbpConfig:
    window: str = "ram-lak"
    rows: int = 256
    cols: int = 256
    circle: bool = False

    def __post_init__(self):
        if self.window not in WINDOWS:
            raise ValueError(f"unknown window {self.window!r}; expected one of {WINDOWS}")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("output size must be positive")


def ramp_filter(n_detectors: int, spacing: float, window: str = "ram-lak") -> np.ndarray:
    """Frequency response of the band-limited ramp on a zero-padded grid.

    Built from the sampled spatial ramp kernel so the DC term is handled
    correctly; its response approximates ``|omega|``.
    """
    size = 1 << int(math.ceil(math.log2(max(2 * n_detectors, 2))))
    k = np.concatenate([np.arange(0, size // 2), np.arange(-size // 2, 0)])
    h = np.zeros(size)
    h[0] = 1.0 / (4.0 * spacing ** 2)
    odd = k % 2 == 1
    h[odd] = -1.0 / (np.pi * k[odd] * spacing) ** 2
    H = np.real(np.fft.fft(h)) * spacing
    if window == "hamming":
        w = np.abs(np.fft.fftfreq(size)) / 0.5
        H = H * (0.54 + 0.46 * np.cos(np.pi * w))
    elif window != "ram-lak":
        raise ValueError(f"unknown window {window!r}")
    return H


def filter_projections(data: np.ndarray, spacing: float, window: str = "ram-lak") -> np.ndarray:
    n = data.shape[1]
    H = ramp_filter(n, spacing, window)
    padded = np.zeros((data.shape[0], H.size))
    padded[:, :n] = data
    return np.real(np.fft.ifft(np.fft.fft(padded, axis=1) * H, axis=1))[:, :n]


def fbp_parallel(sino: Sinogram, cfg: FbpConfig = FbpConfig()) -> Image2D:
    """Ramp-filter every view and backproject onto an image spanning [-1, 1]^2."""
    geom = sino.geometry
    if not isinstance(geom, ParallelGeometry):
        raise TypeError("fbp_parallel needs a parallel-beam sinogram; use reconstruct_fan")
    if geom.n_angles < 2:
        raise ValueError("filtered backprojection needs at least two angles")
    q = filter_projections(sino.data, geom.detector_spacing, cfg.window)
    spacing = (2.0 / cfg.rows, 2.0 / cfg.cols)
    x, y = pixel_centers(cfg.rows, cfg.cols, spacing)
    s0 = geom.offsets[0]
    ds = geom.detector_spacing
    n = geom.n_detectors
    img = np.zeros(x.shape)
    for theta, row in zip(geom.angles, q):
        s = x * math.cos(theta) + y * math.sin(theta)
        t = (s - s0) / ds
        i0 = np.floor(t).astype(np.int64)
        w = t - i0
        lo = np.where((i0 >= 0) & (i0 < n), row[np.clip(i0, 0, n - 1)], 0.0)
        hi = np.where((i0 + 1 >= 0) & (i0 + 1 < n), row[np.clip(i0 + 1, 0, n - 1)], 0.0)
        img += (1.0 - w) * lo + w * hi
    img *= math.pi / geom.n_angles
    if cfg.circle:
        img[x * x + y * y > 1.0] = 0.0
    return Image2D(img, spacing)


def fan_to_parallel(fan: Sinogram, n_angles: int | None = None,
                    n_detectors: int | None = None) -> Sinogram:
    """Rebin flat-detector fan data onto parallel rays over [0, pi).

    A parallel ray ``(theta, s)`` is the fan ray with source angle
    ``theta + asin(s/R)`` hitting the detector at ``R * tan(asin(s/R))``;
    fan data are interpolated bilinearly in (source angle, detector).
    """
    g = fan.geometry
    if not isinstance(g, FanGeometry):
        raise TypeError("fan_to_parallel needs fan-beam data")
    if g.n_angles < 2:
        raise ValueError("insufficient angular coverage for rebinning")
    step = (g.angles[-1] - g.angles[0]) / (g.n_angles - 1)
    if not np.allclose(np.diff(g.angles), step, rtol=1e-9, atol=1e-12) or \
            step * g.n_angles < 2.0 * math.pi - 1e-9:
        raise ValueError("rebinning needs equispaced source angles covering the full circle")
    R = g.source_radius
    n_angles = n_angles or g.n_angles
    n_det = n_detectors or g.n_detectors
    p_max = (g.n_detectors - 1) / 2.0 * g.detector_spacing
    s_max = R * p_max / math.hypot(R, p_max)
    spacing = 2.0 * s_max / max(n_det - 1, 1)
    pgeom = ParallelGeometry(np.arange(n_angles) * (math.pi / n_angles), n_det, spacing)

    theta = pgeom.angles[:, None]
    s = pgeom.offsets[None, :]
    gamma = np.arcsin(s / R)
    beta = theta + gamma
    p = R * np.tan(gamma)

    bi = ((beta - g.angles[0]) / step) % g.n_angles
    b0 = np.floor(bi).astype(np.int64)
    wb = bi - b0
    b0 %= g.n_angles
    b1 = (b0 + 1) % g.n_angles
    pj = p / g.detector_spacing + (g.n_detectors - 1) / 2.0
    j0 = np.floor(pj).astype(np.int64)
    wp = pj - j0

    data = fan.data

    def tap(b, j):
        ok = (j >= 0) & (j < g.n_detectors)
        return np.where(ok, data[b, np.clip(j, 0, g.n_detectors - 1)], 0.0)

    out = ((1 - wb) * ((1 - wp) * tap(b0, j0) + wp * tap(b0, j0 + 1))
           + wb * ((1 - wp) * tap(b1, j0) + wp * tap(b1, j0 + 1)))
    return Sinogram(pgeom, out)


def reconstruct_fan(fan: Sinogram, cfg: FbpConfig = FbpConfig()) -> Image2D:
    return fbp_parallel(fan_to_parallel(fan), cfg)
