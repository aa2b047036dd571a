"""RM2 matrices, sinogram sidecar headers, PGM previews and metric CSVs."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np

from .phantom import Image2D
from .projector import FanGeometry, ParallelGeometry, Sinogram

MAGIC = b"RM2"


def write_rm2(path, data) -> None:
    """``"RM2 <M> <N>\\n"`` followed by little-endian float64, row-major."""
    a = np.asarray(data, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"RM2 holds 2-D matrices, got shape {a.shape}")
    with open(path, "wb") as fh:
        fh.write(b"RM2 %d %d\n" % a.shape)
        fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_rm2(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline()
        parts = header.split()
        if len(parts) != 3 or parts[0] != MAGIC:
            raise ValueError(f"{path}: not an RM2 file (header {header[:32]!r})")
        m, n = int(parts[1]), int(parts[2])
        if m < 1 or n < 1:
            raise ValueError(f"{path}: invalid RM2 shape {m}x{n}")
        raw = fh.read()
    if len(raw) != 8 * m * n:
        raise ValueError(f"{path}: expected {8 * m * n} data bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype="<f8").reshape(m, n).astype(np.float64)


def write_image(path, img: Image2D) -> None:
    write_rm2(path, img.data)


def read_image(path) -> Image2D:
    """Images are taken to span [-1, 1]^2."""
    a = read_rm2(path)
    return Image2D(a, (2.0 / a.shape[0], 2.0 / a.shape[1]))


def _header_path(path) -> Path:
    return Path(str(path) + ".hdr")


def _fmt(x: float) -> str:
    return repr(float(x))


def geometry_header(geom) -> dict:
    """Key/value description of an equispaced parallel or fan geometry."""
    angles = np.asarray(geom.angles)
    step = float(angles[1] - angles[0]) if len(angles) > 1 else 0.0
    if len(angles) > 2 and not np.allclose(np.diff(angles), step, rtol=1e-12, atol=1e-15):
        raise ValueError("sidecar headers describe equispaced angles only")
    h = {"kind": geom.kind, "n_angles": str(len(angles)), "n_detectors": str(geom.n_detectors),
         "spacing": _fmt(geom.detector_spacing),
         "source_radius": _fmt(geom.source_radius) if geom.kind == "fan" else "inf",
         "angle_start": _fmt(angles[0]), "angle_step": _fmt(step)}
    return h


def geometry_from_header(h: dict):
    try:
        n = int(h["n_angles"])
        angles = float(h["angle_start"]) + float(h["angle_step"]) * np.arange(n)
        nd, ds = int(h["n_detectors"]), float(h["spacing"])
        if h["kind"] == "parallel":
            return ParallelGeometry(angles, nd, ds)
        if h["kind"] == "fan":
            return FanGeometry(float(h["source_radius"]), angles, nd, ds)
    except KeyError as exc:
        raise ValueError(f"sinogram header lacks key {exc.args[0]!r}") from None
    raise ValueError(f"unknown sinogram kind {h.get('kind')!r}")


def write_sinogram(path, sino: Sinogram) -> None:
    write_rm2(path, sino.data)
    lines = [f"{k}={v}\n" for k, v in geometry_header(sino.geometry).items()]
    _header_path(path).write_text("".join(lines))


def read_sinogram(path) -> Sinogram:
    hp = _header_path(path)
    if not hp.exists():
        raise ValueError(f"{path}: missing geometry sidecar {hp.name}")
    h = {}
    for line in hp.read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            key, _, value = line.partition("=")
            h[key.strip()] = value.strip()
    return Sinogram(geometry_from_header(h), read_rm2(path))


def write_pgm(path, data) -> None:
    """8-bit binary PGM with linear min-max scaling (constant images map to 0)."""
    a = np.asarray(data, dtype=np.float64)
    lo, hi = float(a.min()), float(a.max())
    scaled = np.zeros(a.shape) if hi <= lo else (a - lo) / (hi - lo) * 255.0
    pix = np.clip(np.rint(scaled), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (a.shape[1], a.shape[0]))
        fh.write(pix.tobytes())


def read_pgm(path) -> np.ndarray:
    """Reader for the PGM layout :func:`write_pgm` produces."""
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"P5":
            raise ValueError(f"{path}: not a binary PGM")
        w, h = (int(t) for t in fh.readline().split())
        if int(fh.readline()) != 255:
            raise ValueError(f"{path}: only 8-bit PGM is supported")
        raw = fh.read()
    return np.frombuffer(raw, dtype=np.uint8)[: w * h].reshape(h, w)


def config_hash(cfg: dict) -> str:
    """Short, stable digest of a resolved configuration."""
    blob = json.dumps(cfg, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


CSV_FIELDS = ("experiment", "item", "metric", "value", "config_hash")


def format_value(value) -> str:
    if value is None:
        return "undefined"
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    if math.isnan(v):
        return "nan"
    return repr(v)


def write_csv(path, rows, cfg_hash: str) -> None:
    """Rows are ``(experiment, item, metric, value)``; the hash is appended to each."""
    tmp = str(path) + ".tmp"
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for exp, item, metric, value in rows:
            w.writerow((exp, item, metric, format_value(value), cfg_hash))
    os.replace(tmp, path)


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
