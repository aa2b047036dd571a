"""Undecimated tensor-product B-spline framelet transforms.

The transform works on arrays of any dimension (1-D signals and 2-D images
are what the solvers use) with periodic boundaries.  Band ``(i1, ..., id)``
applies filter ``a_{i1}`` along axis 0, ``a_{i2}`` along axis 1, and so on.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

KINDS = ("haar", "linear", "cubic")


@dataclass(frozen=True)
class FilterBank:
    """Low-pass ``filters[0]`` and high-pass ``filters[1:]``.

    ``origin`` is the tap index that sits at offset zero; analysis is the
    correlation ``(W_i u)[n] = sum_k a_i[k] u[n + k - origin]``.
    """

    kind: str
    filters: tuple[np.ndarray, ...]
    origin: int

    @property
    def r(self) -> int:
        return len(self.filters) - 1

    def offsets(self, level: int = 0) -> np.ndarray:
        n = len(self.filters[0])
        return (np.arange(n) - self.origin) * (2 ** level)

    def dense_kernels(self, level: int = 0) -> list[np.ndarray]:
        """Odd-length kernels centred on offset zero, holes inserted for ``level``."""
        m = self.offsets(level)
        R = int(np.max(np.abs(m)))
        out = []
        for a in self.filters:
            k = np.zeros(2 * R + 1)
            k[m + R] = a
            out.append(k)
        return out

    def frequency_response(self, omega) -> np.ndarray:
        """``sum_k a_i[k] exp(1j * omega * offset_k)`` for every filter, shape (r+1, len(omega))."""
        w = np.asarray(omega, dtype=float)
        phase = np.exp(1j * np.outer(self.offsets(), w))
        return np.array([a @ phase for a in self.filters])


def filter_bank(kind: str) -> FilterBank:
    kind = kind.lower()
    if kind == "haar":
        f = (np.array([1.0, 1.0]) / 2, np.array([1.0, -1.0]) / 2)
        return FilterBank("haar", f, 0)
    if kind == "linear":
        f = (np.array([1.0, 2.0, 1.0]) / 4,
             np.array([1.0, 0.0, -1.0]) * math.sqrt(2) / 4,
             np.array([-1.0, 2.0, -1.0]) / 4)
        return FilterBank("linear", f, 1)
    if kind == "cubic":
        f = (np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16,
             np.array([-1.0, -2.0, 0.0, 2.0, 1.0]) / 8,
             # sign-corrected so the taps sum to zero (the UEP requires it)
             np.array([1.0, 0.0, -2.0, 0.0, 1.0]) * math.sqrt(6) / 16,
             np.array([-1.0, 2.0, 0.0, -2.0, 1.0]) / 8,
             np.array([1.0, -4.0, 6.0, -4.0, 1.0]) / 16)
        return FilterBank("cubic", f, 2)
    raise ValueError(f"unknown filter bank {kind!r}; expected one of {KINDS}")


@dataclass
class FrameCoefficients:
    """Frame coefficients of an undecimated multi-level decomposition.

    ``planes[p]`` holds band ``index[p] = (level, band)``.  Every level keeps
    its high-pass bands; only the coarsest level keeps its low-pass band,
    since finer low-pass outputs are decomposed further.
    """

    kind: str
    levels: int
    shape: tuple[int, ...]
    index: list[tuple[int, tuple[int, ...]]]
    planes: np.ndarray

    def band(self, level: int, *band: int) -> np.ndarray:
        return self.planes[self.index.index((level, tuple(band)))]

    def is_lowpass(self) -> np.ndarray:
        return np.array([not any(b) for _, b in self.index])

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.planes ** 2)))

    def with_planes(self, planes: np.ndarray) -> "FrameCoefficients":
        return FrameCoefficients(self.kind, self.levels, self.shape, self.index, planes)


def _bands(ndim: int, r: int):
    return list(itertools.product(range(r + 1), repeat=ndim))


def _level_analysis(u: np.ndarray, kernels, out: np.ndarray, axes) -> None:
    """Write the ``(r+1)**len(axes)`` tensor bands of one level into ``out``."""
    for j, band in enumerate(_level_analysis_rest(u, kernels, axes)):
        out[j] = band


def _level_analysis_rest(u, kernels, axes):
    if not axes:
        yield u
        return
    for k in kernels:
        y = ndimage.correlate1d(u, k, axis=axes[0], mode="wrap")
        yield from _level_analysis_rest(y, kernels, axes[1:])


def _level_synthesis(bands: np.ndarray, kernels, axes) -> np.ndarray:
    """Adjoint of :func:`_level_analysis` for the band stack ``bands``."""
    r1 = len(kernels)
    block = bands.shape[0] // r1
    out = None
    tmp = np.empty(bands.shape[1:])
    for i, k in enumerate(kernels):
        part = bands[i * block:(i + 1) * block]
        inner = part[0] if block == 1 else _level_synthesis(part, kernels, axes[1:])
        ndimage.correlate1d(inner, k[::-1], axis=axes[0], mode="wrap", output=tmp)
        if out is None:
            out = tmp.copy()
        else:
            out += tmp
    return out


def _layout(ndim: int, r: int, levels: int):
    bands = _bands(ndim, r)
    index = [(lev, b) for lev in range(levels) for b in bands[1:]]
    index.append((levels - 1, bands[0]))
    return index


def _axes(shape, ndim) -> tuple[int, ...]:
    ndim = len(shape) if ndim is None else int(ndim)
    if not 1 <= ndim <= len(shape):
        raise ValueError(f"cannot transform {ndim} axes of an array of shape {shape}")
    return tuple(range(len(shape) - ndim, len(shape)))


def analysis(u: np.ndarray, bank: FilterBank, levels: int = 1, ndim=None) -> np.ndarray:
    """Frame coefficient planes of ``u``, ordered as in :func:`decompose`.

    Only the trailing ``ndim`` axes are transformed (all by default); leading axes
    are a batch. Planes are stacked on a new axis 0.
    """
    u = np.asarray(u, dtype=np.float64)
    axes = _axes(u.shape, ndim)
    nb = (bank.r + 1) ** len(axes)
    planes = np.empty((levels * (nb - 1) + 1,) + u.shape)
    work = np.empty((nb,) + u.shape)
    low = u
    for lev in range(levels):
        _level_analysis(low, bank.dense_kernels(lev), work, axes)
        planes[lev * (nb - 1):(lev + 1) * (nb - 1)] = work[1:]
        low = work[0].copy()
    planes[-1] = low
    return planes


def synthesis(planes: np.ndarray, bank: FilterBank, levels: int = 1, ndim=None) -> np.ndarray:
    """Adjoint of :func:`analysis`."""
    shape = planes.shape[1:]
    axes = _axes(shape, ndim)
    nb = (bank.r + 1) ** len(axes)
    if planes.shape[0] != levels * (nb - 1) + 1:
        raise ValueError(f"coefficient planes {planes.shape} do not match a "
                         f"{levels}-level {bank.kind} frame of shape {shape}")
    low = planes[-1]
    work = np.empty((nb,) + shape)
    for lev in reversed(range(levels)):
        work[0] = low
        work[1:] = planes[lev * (nb - 1):(lev + 1) * (nb - 1)]
        low = _level_synthesis(work, bank.dense_kernels(lev), axes)
    return low


def decompose(u, bank: FilterBank, levels: int = 1) -> FrameCoefficients:
    """Undecimated (a trous) framelet decomposition with periodic boundaries."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    u = np.asarray(u, dtype=np.float64)
    return FrameCoefficients(bank.kind, levels, u.shape, _layout(u.ndim, bank.r, levels),
                             analysis(u, bank, levels))


def reconstruct(coeffs: FrameCoefficients, bank: FilterBank) -> np.ndarray:
    """Adjoint transform; for these tight frames it inverts :func:`decompose`."""
    if coeffs.kind != bank.kind:
        raise ValueError(f"coefficients from {coeffs.kind!r} bank, got {bank.kind!r}")
    return synthesis(coeffs.planes, bank, coeffs.levels)


def verify_uep(bank: FilterBank, levels: int = 1, size: int = 32, n_random: int = 4,
               seed: int = 0) -> float:
    """Max ``|W^T W u - u|`` over every ``size x size`` impulse and a few random images."""
    worst = 0.0
    for p in range(size * size):
        u = np.zeros((size, size))
        u.flat[p] = 1.0
        rec = reconstruct(decompose(u, bank, levels), bank)
        worst = max(worst, float(np.max(np.abs(rec - u))))
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        u = rng.standard_normal((size, size))
        rec = reconstruct(decompose(u, bank, levels), bank)
        worst = max(worst, float(np.max(np.abs(rec - u))))
    return worst
