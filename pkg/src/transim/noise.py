"""Poisson photon-count noise with per-entry counter-based sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .rng import STREAM_NOISE, uniform, uniform_pair

# inversion below this mean, transformed rejection (PTRS) above
INVERSION_LIMIT = 30.0
DEFAULT_DOSE = 128.0


@dataclass(frozen=True)
class NoiseSpec:
    """``dose`` is the expected photon count per unit of sinogram value."""

    dose: float = DEFAULT_DOSE
    seed: int = 0

    def __post_init__(self):
        if not (self.dose > 0 and math.isfinite(self.dose)):
            raise ValueError(f"dose must be positive and finite, got {self.dose}")


def _poisson_inversion(lam: np.ndarray, u: np.ndarray) -> np.ndarray:
    k = np.zeros(lam.shape, dtype=np.int64)
    p = np.exp(-lam)
    cdf = p.copy()
    active = u > cdf
    n = 0
    while np.any(active):
        n += 1
        idx = np.nonzero(active)[0]
        p[idx] *= lam[idx] / n
        cdf[idx] += p[idx]
        k[idx] = n
        # p underflow means the remaining tail is below double resolution
        active[idx] = (u[idx] > cdf[idx]) & (p[idx] > 0)
    return k


def _poisson_ptrs(lam: np.ndarray, seed: int, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Hormann's transformed rejection with squeeze, one attempt per counter draw."""
    slam = np.sqrt(lam)
    loglam = np.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)

    out = np.full(lam.shape, -1, dtype=np.int64)
    pending = np.arange(lam.size)
    draw = 1  # draw 0 is reserved for the inversion uniform
    while pending.size:
        U, V = uniform_pair(seed, rows[pending], cols[pending], draw, STREAM_NOISE)
        U = U - 0.5
        us = 0.5 - np.abs(U)
        lp, ap, bp = lam[pending], a[pending], b[pending]
        k = np.floor((2.0 * ap / us + bp) * U + lp + 0.43)
        fast = (us >= 0.07) & (V <= vr[pending])
        reject = (k < 0) | ((us < 0.013) & (V > us))
        with np.errstate(divide="ignore", invalid="ignore"):
            lhs = np.log(V) + np.log(invalpha[pending]) - np.log(ap / (us * us) + bp)
            rhs = -lp + k * loglam[pending] - gammaln(k + 1.0)
        accept = fast | (~reject & (lhs <= rhs))
        out[pending[accept]] = k[accept].astype(np.int64)
        pending = pending[~accept]
        draw += 1
    return out


def poisson_counts(lam, seed: int, rows=None, cols=None) -> np.ndarray:
    """Poisson(lam) samples; entry ``(i, j)`` depends only on ``(seed, i, j, lam[i, j])``.

    ``rows``/``cols`` default to the array indices of a 2-D ``lam``.
    """
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise ValueError("Poisson means must be finite and non-negative")
    if rows is None or cols is None:
        grid = np.indices(lam.shape if lam.ndim == 2 else (1, lam.size))
        rows, cols = grid[0].reshape(lam.shape), grid[1].reshape(lam.shape)
    lam_f = lam.ravel()
    r = np.broadcast_to(rows, lam.shape).ravel().astype(np.uint64)
    c = np.broadcast_to(cols, lam.shape).ravel().astype(np.uint64)

    k = np.zeros(lam_f.size, dtype=np.int64)
    small = (lam_f > 0) & (lam_f < INVERSION_LIMIT)
    if np.any(small):
        u = uniform(seed, r[small], c[small], 0, STREAM_NOISE)
        k[small] = _poisson_inversion(lam_f[small], u)
    big = lam_f >= INVERSION_LIMIT
    if np.any(big):
        k[big] = _poisson_ptrs(lam_f[big], seed, r[big], c[big])
    return k.reshape(lam.shape)


def add_poisson(sino, spec: NoiseSpec):
    """Replace every value ``y`` with ``k / dose`` where ``k ~ Poisson(y * dose)``.

    Accepts a :class:`~transim.projector.Sinogram` (returns one of the same
    geometry) or a plain array.
    """
    data = np.asarray(sino, dtype=np.float64)
    if np.any(data < 0):
        raise ValueError("sinogram entries must be non-negative for Poisson noise")
    noisy = poisson_counts(data * spec.dose, spec.seed) / spec.dose
    if hasattr(sino, "with_data"):
        return sino.with_data(noisy)
    return noisy
