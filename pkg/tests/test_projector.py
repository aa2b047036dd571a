import math

import numpy as np
import pytest

from transim.phantom import Ellipse, EllipsePhantom, Image2D, disk, rasterize, standard_shepp_logan
from transim.projector import (FanGeometry, ParallelGeometry, Sinogram, analytic_fan_sinogram,
                               analytic_parallel_sinogram, detector_basis, fan_project,
                               parallel_project, project_volume, voxelize)


def rel_l2(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_geometry_validation():
    with pytest.raises(ValueError):
        ParallelGeometry([0.0], 0, 0.1)
    with pytest.raises(ValueError):
        ParallelGeometry([], 4, 0.1)
    with pytest.raises(ValueError):
        ParallelGeometry([0.2, 0.1], 4, 0.1)
    with pytest.raises(ValueError):
        FanGeometry(3.0, [0.0], 4, 0.0)
    with pytest.raises(ValueError):
        FanGeometry.standard(source_radius=1.0)


def test_standard_geometries():
    g = ParallelGeometry.standard()
    assert (g.n_angles, g.n_detectors) == (360, 509)
    assert g.offsets[-1] - g.offsets[0] == pytest.approx(1.1 * 2 * math.sqrt(2), rel=0.01)
    f = FanGeometry.standard()
    assert f.angles[-1] < 2 * math.pi and f.source_radius == 3.0


def test_sinogram_shape_check():
    g = ParallelGeometry.standard(4, 5)
    with pytest.raises(ValueError):
        Sinogram(g, np.zeros((5, 4)))


def test_zero_image_projects_to_zero():
    img = Image2D(np.zeros((32, 32)), (2 / 32, 2 / 32))
    assert not parallel_project(img, ParallelGeometry.standard(8, 11)).data.any()
    assert not fan_project(img, FanGeometry.standard(8, 11)).data.any()


def test_disk_diameter_chord():
    img = rasterize(disk(1.0), 256, 256)
    g = ParallelGeometry(np.array([0.0, 0.7]), 1, 0.1)
    assert parallel_project(img, g).data == pytest.approx(2.0, rel=0.02)


def test_parallel_matches_analytic_small():
    ph = standard_shepp_logan()
    img = rasterize(ph, 128, 128)
    g = ParallelGeometry.standard(90, 255)
    assert rel_l2(parallel_project(img, g), analytic_parallel_sinogram(ph, g)) < 0.04


def test_fan_matches_analytic_small():
    ph = standard_shepp_logan()
    img = rasterize(ph, 128, 128)
    g = FanGeometry.standard(90, 255)
    assert rel_l2(fan_project(img, g), analytic_fan_sinogram(ph, g)) < 0.04


def test_central_fan_ray_equals_parallel_ray():
    ph = standard_shepp_logan()
    img = rasterize(ph, 128, 128)
    beta = np.linspace(0, 2 * math.pi, 12, endpoint=False)
    fan = fan_project(img, FanGeometry(3.0, beta, 3, 0.5))
    par = parallel_project(img, ParallelGeometry(beta, 3, 0.5))
    np.testing.assert_allclose(fan.data[:, 1], par.data[:, 1], rtol=0.01)
    # analytic versions agree exactly
    a_fan = analytic_fan_sinogram(ph, FanGeometry(3.0, beta, 3, 0.5))
    a_par = analytic_parallel_sinogram(ph, ParallelGeometry(beta, 3, 0.5))
    np.testing.assert_allclose(a_fan.data[:, 1], a_par.data[:, 1], rtol=1e-12)


def test_fan_source_inside_support_rejected():
    img = Image2D(np.ones((16, 16)), (2 / 16, 2 / 16))
    with pytest.raises(ValueError):
        fan_project(img, FanGeometry(1.2, [0.0], 5, 0.1))
    with pytest.raises(ValueError):
        analytic_fan_sinogram(disk(1.0), FanGeometry(0.5, [0.0], 5, 0.1))


def test_analytic_disk_profiles():
    g = ParallelGeometry.standard(16, 65)
    s = analytic_parallel_sinogram(disk(0.9), g).data
    expected = 2 * np.sqrt(np.maximum(0.81 - g.offsets ** 2, 0))
    np.testing.assert_allclose(s, np.broadcast_to(expected, s.shape), atol=1e-12)
    fan = analytic_fan_sinogram(disk(0.9), FanGeometry.standard(16, 65)).data
    np.testing.assert_allclose(fan, np.broadcast_to(fan[0], fan.shape), atol=1e-12)
    assert not analytic_parallel_sinogram(EllipsePhantom(), g).data.any()
    assert not analytic_fan_sinogram(EllipsePhantom(), FanGeometry.standard(4, 9)).data.any()


def test_analytic_opposite_views_mirror():
    ph = EllipsePhantom([Ellipse((0.3, -0.2), (0.3, 0.1), 0.4)])
    th = np.array([0.3, 0.3 + math.pi])
    s = analytic_parallel_sinogram(ph, ParallelGeometry(th, 41, 0.04)).data
    np.testing.assert_allclose(s[0], s[1, ::-1], atol=1e-12)


def test_projector_linearity(rng):
    a = rasterize(standard_shepp_logan(), 48, 48)
    b = Image2D(rng.random((48, 48)), a.spacing)
    c = Image2D(2.0 * a.data - 0.5 * b.data, a.spacing)
    for proj, g in ((parallel_project, ParallelGeometry.standard(10, 31)),
                    (fan_project, FanGeometry.standard(10, 31))):
        lhs = proj(c, g).data
        rhs = 2.0 * proj(a, g).data - 0.5 * proj(b, g).data
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)
    ph1, ph2 = standard_shepp_logan(), disk(0.3, (0.1, 0.2))
    both = EllipsePhantom(ph1.ellipses + ph2.ellipses)
    for fn, g in ((analytic_parallel_sinogram, ParallelGeometry.standard(10, 31)),
                  (analytic_fan_sinogram, FanGeometry.standard(10, 31))):
        np.testing.assert_allclose(fn(both, g).data, fn(ph1, g).data + fn(ph2, g).data, atol=1e-10)


def test_nonnegativity(rng):
    img = Image2D(rng.random((40, 40)), (0.05, 0.05))
    assert parallel_project(img, ParallelGeometry.standard(12, 21)).data.min() >= 0
    assert fan_project(img, FanGeometry.standard(12, 21)).data.min() >= 0


def test_analytic_sinogram_continuity_under_refinement():
    # adjacent-detector differences shrink as spacing shrinks
    ph = standard_shepp_logan()
    jumps = []
    for n in (129, 257, 513):
        s = analytic_parallel_sinogram(ph, ParallelGeometry(np.array([0.37]), n, 2.4 / n)).data
        jumps.append(np.abs(np.diff(s[0])).max())
    assert jumps[2] < jumps[1] < jumps[0]


def test_volume_projection_of_cube_is_exact():
    half = 0.25
    vol = voxelize(lambda x, y, z: (abs(x) < half) & (abs(y) < half) & (abs(z) < half),
                   (-0.5, -0.5, -0.5), 1 / 16, (16, 16, 16))
    img = project_volume(vol, (0, 0, 1), 64, extent=1.0)
    mass = img.data.sum() * img.spacing[0] * img.spacing[1]
    assert mass == pytest.approx(0.5 ** 3, rel=1e-12)
    assert img.data.max() == pytest.approx(0.5)
    generic = project_volume(vol, (1, 0.41, 0.73), 64, extent=1.0)
    assert generic.data.sum() * generic.spacing[0] ** 2 == pytest.approx(0.125, rel=0.02)


def test_detector_basis_orthonormal():
    for d in ((0, 0, 1), (1, 0.41, 0.73), (1, 0, 0)):
        w, e1, e2 = detector_basis(d)
        m = np.stack([w, e1, e2])
        np.testing.assert_allclose(m @ m.T, np.eye(3), atol=1e-12)
