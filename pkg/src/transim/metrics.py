"""SNR and Frobenius error."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np


class UndefinedSNR(ValueError):
    """Raised when the SNR ratio has a zero numerator or denominator."""

    def __init__(self, reason: str):
        super().__init__(f"undefined SNR: {reason}")
        self.reason = reason


def _pair(u, u0):
    u = np.asarray(u, dtype=np.float64)
    u0 = np.asarray(u0, dtype=np.float64)
    if u.shape != u0.shape:
        raise ValueError(f"shape mismatch: {u.shape} vs {u0.shape}")
    return u, u0


def snr(u, u0) -> float:
    """``10 log10(||u0 - mean(u0)||^2 / ||u - u0||^2)`` in dB."""
    u, u0 = _pair(u, u0)
    err = float(np.sum((u - u0) ** 2))
    sig = float(np.sum((u0 - u0.mean()) ** 2))
    if err == 0:
        raise UndefinedSNR("estimate equals reference")
    if sig == 0:
        raise UndefinedSNR("constant reference")
    return 10.0 * math.log10(sig / err)


def frobenius_error(u, u0) -> float:
    u, u0 = _pair(u, u0)
    return float(np.sqrt(np.sum((u - u0) ** 2)))


@dataclass(frozen=True)
class MetricReport:
    label: str
    shape: tuple[int, ...]
    snr_db: Optional[float]
    frobenius: float
    flag: str = ""

    def snr_text(self) -> str:
        return "undefined" if self.snr_db is None else f"{self.snr_db:.6f}"


def report(label: str, u, u0) -> MetricReport:
    """SNR and Frobenius error, with a degenerate SNR flagged instead of raised."""
    u, u0 = _pair(u, u0)
    try:
        value, flag = snr(u, u0), ""
    except UndefinedSNR as exc:
        value, flag = None, exc.reason
    return MetricReport(label, u.shape, value, frobenius_error(u, u0), flag)
