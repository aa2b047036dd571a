"""Curvature classification, singular-direction sampling and jump detection.

Parametric surfaces carry their partial derivatives and a distance function.
Curvature comes from the second fundamental form expressed in an orthonormal
tangent frame, so the principal directions are returned as unit 3-vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from .projector import Volume, project_volume, voxelize
from .rng import STREAM_DIRECTIONS, uniform_pair

TAU = 1e-8
RAY_LENGTH = 0.1
RAY_SAMPLES = 32
TOL_LADDER = (0.1, 0.05, 0.025, 0.0125)

SIGMA_PLUS, SIGMA_ZERO, SIGMA_ONE, SIGMA_MINUS = "sigma+", "sigma0", "sigma1", "sigma-"
CLASSES = (SIGMA_PLUS, SIGMA_ZERO, SIGMA_ONE, SIGMA_MINUS)


class _AllDirections:
    """Marker returned for planar points, where every tangent direction is asymptotic."""

    def __repr__(self):
        return "ALL_DIRECTIONS"


ALL_DIRECTIONS = _AllDirections()

Partials = Callable[[np.ndarray, np.ndarray], tuple]


@dataclass(frozen=True)
class SurfacePatch:
    """``p(u, v)`` over ``domain = ((u0, u1), (v0, v1))``.

    ``partials(u, v)`` returns ``(p_u, p_v, p_uu, p_uv, p_vv)``; when omitted,
    central differences are used.  Points and derivatives are arrays with a
    trailing axis of length 3.  ``distance(x)`` returns the Euclidean distance
    (or a first-order estimate of it) from points ``x`` to the patch.
    """

    name: str
    point: Callable[[np.ndarray, np.ndarray], np.ndarray]
    domain: tuple[tuple[float, float], tuple[float, float]]
    partials: Optional[Partials] = None
    distance: Optional[Callable[[np.ndarray], np.ndarray]] = None
    fd_step: float = 1e-4

    def __post_init__(self):
        (u0, u1), (v0, v1) = self.domain
        if not all(np.isfinite([u0, u1, v0, v1])) or not (u0 < u1 and v0 < v1):
            raise ValueError(f"invalid parameter domain {self.domain}")

    def derivatives(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.partials is not None:
            return tuple(np.broadcast_to(np.asarray(d, dtype=float), u.shape + (3,))
                         for d in self.partials(u, v))
        h = self.fd_step
        p = self.point
        pu = (p(u + h, v) - p(u - h, v)) / (2 * h)
        pv = (p(u, v + h) - p(u, v - h)) / (2 * h)
        c = p(u, v)
        puu = (p(u + h, v) - 2 * c + p(u - h, v)) / h ** 2
        pvv = (p(u, v + h) - 2 * c + p(u, v - h)) / h ** 2
        puv = (p(u + h, v + h) - p(u + h, v - h) - p(u - h, v + h) + p(u - h, v - h)) / (4 * h * h)
        return pu, pv, puu, puv, pvv

    def contains_param(self, u, v) -> np.ndarray:
        (u0, u1), (v0, v1) = self.domain
        return (u >= u0) & (u <= u1) & (v >= v0) & (v <= v1)

    def swapped(self) -> "SurfacePatch":
        """The same surface in the chart ``(u, v) -> (v, u)``."""
        parts = None
        if self.partials is not None:
            def parts(u, v, f=self.partials):
                pu, pv, puu, puv, pvv = f(v, u)
                return pv, pu, pvv, puv, puu
        return SurfacePatch(self.name + "-swapped", lambda u, v, p=self.point: p(v, u),
                            (self.domain[1], self.domain[0]), parts, self.distance, self.fd_step)

    def grid(self, n_u: int, n_v: int):
        """Cell-centred parameter grid of ``n_u x n_v`` points."""
        (u0, u1), (v0, v1) = self.domain
        u = u0 + (np.arange(n_u) + 0.5) * (u1 - u0) / n_u
        v = v0 + (np.arange(n_v) + 0.5) * (v1 - v0) / n_v
        return np.meshgrid(u, v, indexing="ij")


@dataclass(frozen=True)
class CurvatureData:
    """Fundamental forms, principal curvatures (k1 >= k2) and class at one point.

    ``V1`` and ``V2`` are unit principal directions in R^3; ``H`` is the sum
    ``k1 + k2``.
    """

    E: float
    F: float
    G: float
    L: float
    M: float
    N: float
    k1: float
    k2: float
    K: float
    H: float
    point: np.ndarray
    normal: np.ndarray
    V1: np.ndarray
    V2: np.ndarray
    cls: str

    def directional_curvature(self, w) -> np.ndarray:
        """Normal curvature ``II(w, w) / |w|^2`` for tangent vectors ``w`` (..., 3)."""
        w = np.asarray(w, dtype=float)
        a = w @ self.V1
        b = w @ self.V2
        n2 = np.sum(w * w, axis=-1)
        return (self.k1 * a * a + self.k2 * b * b) / n2


def classify(k1, k2, tau: float = TAU):
    """Partition label from principal curvatures; near-zero curvatures go to
    the more singular class."""
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    z1 = np.abs(k1) <= tau
    z2 = np.abs(k2) <= tau
    out = np.where(k1 * k2 > 0, SIGMA_PLUS, SIGMA_MINUS).astype(object)
    out[z1 ^ z2] = SIGMA_ONE
    out[z1 & z2] = SIGMA_ZERO
    return out if out.ndim else str(out)


def curvature_field(patch: SurfacePatch, u, v, tau: float = TAU) -> dict:
    """Vectorised curvature data on arrays of parameters.

    Returns a dict of arrays with keys ``E F G L M N k1 k2 K H point normal
    V1 V2 cls``.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    pu, pv, puu, puv, pvv = patch.derivatives(u, v)
    cross = np.cross(pu, pv)
    area = np.linalg.norm(cross, axis=-1)
    if np.any(area <= 1e-12 * np.linalg.norm(pu, axis=-1) * np.linalg.norm(pv, axis=-1)):
        raise ValueError(f"{patch.name}: degenerate parametrisation (p_u x p_v = 0)")
    n = cross / area[..., None]
    E = np.sum(pu * pu, -1)
    F = np.sum(pu * pv, -1)
    G = np.sum(pv * pv, -1)
    L = np.sum(n * puu, -1)
    M = np.sum(n * puv, -1)
    N = np.sum(n * pvv, -1)

    # orthonormal tangent frame e1 = p_u/|p_u|, e2 = n x e1 and its (a, b) coordinates
    e1 = pu / np.sqrt(E)[..., None]
    e2 = np.cross(n, e1)
    det = E * G - F * F
    coords = []
    for e in (e1, e2):
        gu = np.sum(e * pu, -1)
        gv = np.sum(e * pv, -1)
        coords.append(((G * gu - F * gv) / det, (E * gv - F * gu) / det))

    def II(x, y):
        return L * x[0] * y[0] + M * (x[0] * y[1] + x[1] * y[0]) + N * x[1] * y[1]

    B = np.empty(u.shape + (2, 2))
    B[..., 0, 0] = II(coords[0], coords[0])
    B[..., 1, 1] = II(coords[1], coords[1])
    B[..., 0, 1] = B[..., 1, 0] = II(coords[0], coords[1])
    lam, vec = np.linalg.eigh(B)
    k2, k1 = lam[..., 0], lam[..., 1]
    V2 = vec[..., 0, 0, None] * e1 + vec[..., 1, 0, None] * e2
    V1 = vec[..., 0, 1, None] * e1 + vec[..., 1, 1, None] * e2
    return dict(E=E, F=F, G=G, L=L, M=M, N=N, k1=k1, k2=k2, K=k1 * k2, H=k1 + k2,
                point=patch.point(u, v), normal=n, V1=V1, V2=V2, cls=classify(k1, k2, tau))


def second_fundamental_form(patch: SurfacePatch, u: float, v: float,
                            tau: float = TAU) -> CurvatureData:
    if not patch.contains_param(u, v):
        raise ValueError(f"({u}, {v}) lies outside the domain {patch.domain}")
    f = curvature_field(patch, np.array(float(u)), np.array(float(v)), tau)
    scal = {k: float(f[k]) for k in ("E", "F", "G", "L", "M", "N", "k1", "k2", "K", "H")}
    vecs = {k: np.asarray(f[k], dtype=float).reshape(3) for k in ("point", "normal", "V1", "V2")}
    return CurvatureData(**scal, **vecs, cls=str(f["cls"]))


def zero_curvature_directions(cd: CurvatureData, tau: float = TAU):
    """Unit tangent directions with vanishing normal curvature, both signs.

    Empty for elliptic points, ``ALL_DIRECTIONS`` for planar points, the
    null principal direction for parabolic points and the four signed
    asymptotic directions for hyperbolic points.
    """
    expected = classify(cd.k1, cd.k2, tau)
    if expected != cd.cls:
        raise ValueError(f"class {cd.cls!r} inconsistent with curvatures ({cd.k1}, {cd.k2})")
    if cd.cls == SIGMA_PLUS:
        return np.zeros((0, 3))
    if cd.cls == SIGMA_ZERO:
        return ALL_DIRECTIONS
    if cd.cls == SIGMA_ONE:
        w = cd.V1 if abs(cd.k1) <= tau else cd.V2
        return np.stack([w, -w])
    a, b = math.sqrt(abs(cd.k2)), math.sqrt(abs(cd.k1))
    out = np.stack([sa * a * cd.V1 + sb * b * cd.V2 for sa in (1, -1) for sb in (1, -1)])
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def _field_directions(f: dict, tau: float):
    """Zero-curvature directions of a curvature field, flattened.

    Returns ``(points, directions, planar_points, planar_normals)``.
    """
    cls = np.asarray(f["cls"]).ravel()
    P = f["point"].reshape(-1, 3)
    V1 = f["V1"].reshape(-1, 3)
    V2 = f["V2"].reshape(-1, 3)
    k1 = f["k1"].ravel()
    k2 = f["k2"].ravel()
    pts, dirs = [], []
    one = cls == SIGMA_ONE
    if np.any(one):
        w = np.where((np.abs(k1[one]) <= tau)[:, None], V1[one], V2[one])
        for s in (1.0, -1.0):
            pts.append(P[one])
            dirs.append(s * w)
    minus = cls == SIGMA_MINUS
    if np.any(minus):
        a = np.sqrt(np.abs(k2[minus]))[:, None]
        b = np.sqrt(np.abs(k1[minus]))[:, None]
        for sa in (1.0, -1.0):
            for sb in (1.0, -1.0):
                w = sa * a * V1[minus] + sb * b * V2[minus]
                pts.append(P[minus])
                dirs.append(w / np.linalg.norm(w, axis=1, keepdims=True))
    zero = cls == SIGMA_ZERO
    pts = np.concatenate(pts) if pts else np.zeros((0, 3))
    dirs = np.concatenate(dirs) if dirs else np.zeros((0, 3))
    return pts, dirs, P[zero], f["normal"].reshape(-1, 3)[zero]


def sample_directions(n: int, seed: int) -> np.ndarray:
    """``n`` directions uniform on S^2 from the counter-based generator."""
    u1, u2 = uniform_pair(seed, np.zeros(n, dtype=np.int64), np.arange(n),
                          stream=STREAM_DIRECTIONS)
    z = 2.0 * u1 - 1.0
    phi = 2.0 * np.pi * u2
    rho = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)


def _ray_stays(patch: SurfacePatch, p: np.ndarray, w: np.ndarray, tol: float,
               eps0: float, n_steps: int) -> np.ndarray:
    t = eps0 * np.arange(1, n_steps + 1) / n_steps
    x = p[:, None, :] + t[None, :, None] * w[:, None, :]
    return np.all(patch.distance(x) <= tol, axis=1)


def singular_direction_fraction(patch: SurfacePatch, n_samples: int, tol: float, seed: int = 0,
                                grid: int = 512, eps0: float = RAY_LENGTH,
                                n_steps: int = RAY_SAMPLES, max_candidates: int = 64,
                                tau: float = TAU) -> float:
    """Fraction of random directions that are tol-singular for ``patch``.

    A direction ``W`` counts when some sampled surface point ``p`` has a
    zero-curvature tangent direction within angle ``tol`` of ``W`` and the
    samples of ``p + t W``, ``0 < t <= eps0``, all lie within distance
    ``tol`` of the surface.  Surface points are a ``grid x grid`` parameter
    grid; at most ``max_candidates`` candidate points per direction are
    tested, so the count can only err low.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if not (tol > 0 and np.isfinite(tol)):
        raise ValueError("tol must be a positive finite number")
    if patch.distance is None:
        raise ValueError(f"{patch.name}: a distance function is required")
    W = sample_directions(n_samples, seed)
    uu, vv = patch.grid(grid, grid)
    pts, dirs, flat_pts, flat_normals = _field_directions(curvature_field(patch, uu, vv, tau), tau)
    hit = np.zeros(n_samples, dtype=bool)

    if len(dirs):
        tree = cKDTree(dirs)
        radius = 2.0 * math.sin(min(tol, math.pi) / 2.0)
        lists = tree.query_ball_point(W, radius)
        wi, pi = [], []
        for i, cand in enumerate(lists):
            if cand:
                cand = sorted(cand)
                if len(cand) > max_candidates:
                    cand = cand[:: int(math.ceil(len(cand) / max_candidates))]
                wi.extend([i] * len(cand))
                pi.extend(cand)
        wi = np.asarray(wi, dtype=np.int64)
        pi = np.asarray(pi, dtype=np.int64)
        for start in range(0, len(wi), 65536):
            a, b = wi[start:start + 65536], pi[start:start + 65536]
            ok = _ray_stays(patch, pts[b], W[a], tol, eps0, n_steps)
            hit[a[ok]] = True

    if len(flat_pts):
        # planar points: every tangent direction is asymptotic
        todo = np.flatnonzero(~hit)
        tangent = np.abs(W[todo] @ flat_normals.T) <= math.sin(tol)
        for row, i in enumerate(todo):
            cand = np.flatnonzero(tangent[row])
            if len(cand) == 0:
                continue
            cand = cand[:: max(1, int(math.ceil(len(cand) / max_candidates)))]
            ok = _ray_stays(patch, flat_pts[cand], np.broadcast_to(W[i], (len(cand), 3)),
                            tol, eps0, n_steps)
            hit[i] = bool(np.any(ok))
    return float(np.mean(hit))


def tol_ladder(patch: SurfacePatch, n_samples: int, seed: int = 0,
               tols=TOL_LADDER, **kwargs) -> list[tuple[float, float]]:
    """``(tol, fraction)`` along a tolerance ladder with shared direction samples."""
    return [(float(t), singular_direction_fraction(patch, n_samples, t, seed, **kwargs))
            for t in tols]


# ---------------------------------------------------------------- surfaces

def _graph_distance(g, grad, half: float = 1.0):
    """First-order distance to the graph ``z = g(x, y)`` over ``[-half, half]^2``."""
    def dist(x):
        X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
        Xc = np.clip(X, -half, half)
        Yc = np.clip(Y, -half, half)
        gx, gy = grad(Xc, Yc)
        vert = np.abs(Z - g(Xc, Yc)) / np.sqrt(1.0 + gx * gx + gy * gy)
        return np.sqrt(vert ** 2 + (X - Xc) ** 2 + (Y - Yc) ** 2)
    return dist


def _graph_patch(name, g, grad, hess, half=1.0) -> SurfacePatch:
    def point(u, v):
        return np.stack(np.broadcast_arrays(u, v, g(u, v)), axis=-1)

    def partials(u, v):
        gx, gy = grad(u, v)
        gxx, gxy, gyy = hess(u, v)
        zero, one = np.zeros_like(u), np.ones_like(u)
        pu = np.stack([one, zero, gx + zero], -1)
        pv = np.stack([zero, one, gy + zero], -1)
        return (pu, pv, np.stack([zero, zero, gxx + zero], -1),
                np.stack([zero, zero, gxy + zero], -1), np.stack([zero, zero, gyy + zero], -1))

    return SurfacePatch(name, point, ((-half, half), (-half, half)), partials,
                        _graph_distance(g, grad, half))


def sphere(radius: float = 1.0, polar_margin: float = 0.05) -> SurfacePatch:
    """Latitude-longitude sphere with the poles trimmed (the chart is singular there)."""
    R = radius

    def point(u, v):
        return R * np.stack(np.broadcast_arrays(np.cos(u) * np.cos(v), np.sin(u) * np.cos(v),
                                                np.sin(v)), axis=-1)

    def partials(u, v):
        cu, su, cv, sv = np.cos(u), np.sin(u), np.cos(v), np.sin(v)
        z = np.zeros_like(u * v)
        pu = R * np.stack([-su * cv, cu * cv, z], -1)
        pv = R * np.stack([-cu * sv, -su * sv, cv + z], -1)
        puu = R * np.stack([-cu * cv, -su * cv, z], -1)
        puv = R * np.stack([su * sv, -cu * sv, z], -1)
        pvv = R * np.stack([-cu * cv, -su * cv, -sv + z], -1)
        return pu, pv, puu, puv, pvv

    def dist(x):
        return np.abs(np.linalg.norm(x, axis=-1) - R)

    lat = math.pi / 2 - polar_margin
    return SurfacePatch("sphere", point, ((0.0, 2 * math.pi), (-lat, lat)), partials, dist)


def cylinder(radius: float = 1.0, half_height: float = 1.0) -> SurfacePatch:
    """Finite circular cylinder ``x^2 + y^2 = radius^2``, ``|z| <= half_height``."""
    R, h = radius, half_height

    def point(u, v):
        return np.stack(np.broadcast_arrays(R * np.cos(u), R * np.sin(u), v), axis=-1)

    def partials(u, v):
        cu, su = np.cos(u), np.sin(u)
        z = np.zeros_like(u * v)
        return (np.stack([-R * su, R * cu, z], -1), np.stack([z, z, z + 1.0], -1),
                np.stack([-R * cu, -R * su, z], -1), np.stack([z, z, z], -1),
                np.stack([z, z, z], -1))

    def dist(x):
        radial = np.abs(np.hypot(x[..., 0], x[..., 1]) - R)
        axial = np.maximum(np.abs(x[..., 2]) - h, 0.0)
        return np.hypot(radial, axial)

    return SurfacePatch("cylinder", point, ((0.0, 2 * math.pi), (-h, h)), partials, dist)


def plane(half: float = 1.0) -> SurfacePatch:
    """The square ``z = 0``, ``|x|, |y| <= half``."""
    return _graph_patch("plane", lambda x, y: 0.0 * x * y,
                        lambda x, y: (0.0 * x, 0.0 * y),
                        lambda x, y: (0.0 * x, 0.0 * x, 0.0 * x), half)


def saddle(half: float = 1.0) -> SurfacePatch:
    """The doubly ruled saddle ``z = x y``."""
    return _graph_patch("saddle", lambda x, y: x * y, lambda x, y: (y, x),
                        lambda x, y: (0.0 * x, 1.0 + 0.0 * x, 0.0 * x), half)


def hyperbolic_paraboloid(half: float = 1.0) -> SurfacePatch:
    """``z = x^2 - y^2``, principal curvatures +-2 at the origin."""
    return _graph_patch("hyperbolic-paraboloid", lambda x, y: x * x - y * y,
                        lambda x, y: (2 * x, -2 * y),
                        lambda x, y: (2.0 + 0.0 * x, 0.0 * x, -2.0 + 0.0 * x), half)


def torus(major: float = 0.08, minor: float = 0.015) -> SurfacePatch:
    """Ring torus; ``u`` runs around the axis, ``v`` around the tube.

    The default is small on purpose: a straight asymptotic ray leaves a torus
    only at third order, so the drift over ``RAY_LENGTH`` must exceed the
    smallest ladder tolerance for the tolerance ladder to resolve it.
    """
    R, r = major, minor
    if not 0 < r < R:
        raise ValueError("need 0 < minor < major")

    def point(u, v):
        rho = R + r * np.cos(v)
        return np.stack(np.broadcast_arrays(rho * np.cos(u), rho * np.sin(u), r * np.sin(v)),
                        axis=-1)

    def partials(u, v):
        cu, su, cv, sv = np.cos(u), np.sin(u), np.cos(v), np.sin(v)
        rho = R + r * cv
        z = np.zeros_like(u * v)
        pu = np.stack([-rho * su, rho * cu, z], -1)
        pv = np.stack([-r * sv * cu, -r * sv * su, r * cv], -1)
        puu = np.stack([-rho * cu, -rho * su, z], -1)
        puv = np.stack([r * sv * su, -r * sv * cu, z], -1)
        pvv = np.stack([-r * cv * cu, -r * cv * su, -r * sv], -1)
        return pu, pv, puu, puv, pvv

    def dist(x):
        return np.abs(np.hypot(np.hypot(x[..., 0], x[..., 1]) - R, x[..., 2]) - r)

    return SurfacePatch("torus", point, ((0.0, 2 * math.pi), (0.0, 2 * math.pi)), partials, dist)


SURFACES = {
    "sphere": sphere,
    "cylinder": cylinder,
    "plane": plane,
    "saddle": saddle,
    "hyperbolic-paraboloid": hyperbolic_paraboloid,
    "torus": torus,
}


def surface(name: str) -> SurfacePatch:
    try:
        return SURFACES[name]()
    except KeyError:
        raise ValueError(f"unknown surface {name!r}; expected one of {sorted(SURFACES)}") from None


# ---------------------------------------------------------------- jumps

@dataclass(frozen=True)
class JumpReport:
    count: int
    max_jump: float


def detect_jumps(img, threshold: float) -> JumpReport:
    """Largest absolute 4-neighbour difference and the number of neighbour
    pairs whose difference exceeds ``threshold``."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    a = np.asarray(img, dtype=float)
    if a.ndim != 2:
        raise ValueError("detect_jumps expects a 2-D image")
    dx = np.abs(np.diff(a, axis=1))
    dy = np.abs(np.diff(a, axis=0))
    big = max(float(dx.max(initial=0.0)), float(dy.max(initial=0.0)))
    return JumpReport(int(np.sum(dx > threshold) + np.sum(dy > threshold)), big)


GENERIC_DIRECTION = (1.0, 0.41, 0.73)
AXIS_DIRECTION = (0.0, 0.0, 1.0)
DETECTOR_LADDER = (128, 256, 512)


def unit_cube(side: float = 1.0, voxels: int = 16, pad: int = 4) -> Volume:
    """Axis-aligned cube centred at the origin; voxel faces coincide with the cube faces."""
    size = side / voxels
    n = voxels + 2 * pad
    origin = (-(side / 2 + pad * size),) * 3
    half = side / 2

    def inside(x, y, z):
        return (np.abs(x) < half) & (np.abs(y) < half) & (np.abs(z) < half)

    return voxelize(inside, origin, size, (n, n, n))


def ball(radius: float = 0.5, voxels: int = 64, supersample: int = 2) -> Volume:
    size = 2.0 * radius / voxels * 1.25
    n = int(math.ceil(2.0 * radius / size)) + 2
    origin = (-n * size / 2,) * 3

    def inside(x, y, z):
        return x * x + y * y + z * z < radius * radius

    return voxelize(inside, origin, size, (n, n, n), supersample)


def jump_ladder(vol: Volume, direction, detectors=DETECTOR_LADDER, extent: float = 1.0,
                threshold: float = 0.05) -> list[tuple[int, JumpReport]]:
    """Jump statistics of the projection of ``vol`` along ``direction`` at each detector count."""
    return [(int(n), detect_jumps(project_volume(vol, direction, int(n), extent), threshold))
            for n in detectors]


def refinement_ratios(ladder) -> list[float]:
    """Successive max-jump ratios of a jump ladder (finer over coarser)."""
    jumps = [rep.max_jump for _, rep in ladder]
    return [b / a if a > 0 else float("nan") for a, b in zip(jumps, jumps[1:])]
