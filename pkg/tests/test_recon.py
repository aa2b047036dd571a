import math

import numpy as np
import pytest

from transim.metrics import frobenius_error, snr
from transim.noise import NoiseSpec, add_poisson
from transim.optimizer import SolverConfig, denoise_tv
from transim.phantom import disk, rasterize, standard_shepp_logan
from transim.projector import (FanGeometry, ParallelGeometry, Sinogram, analytic_fan_sinogram,
                               analytic_parallel_sinogram)
from transim.recon import FbpConfig, fan_to_parallel, fbp_parallel, ramp_filter, reconstruct_fan


def test_config_validation():
    with pytest.raises(ValueError):
        FbpConfig(window="shepp")
    with pytest.raises(ValueError):
        FbpConfig(rows=0)


def test_ramp_filter_shape():
    H = ramp_filter(509, 0.01)
    assert H.size == 1024
    freqs = np.abs(np.fft.fftfreq(H.size, d=0.01))
    # close to |omega| (in cycles) away from DC and Nyquist
    mid = (freqs > 2) & (freqs < 30)
    np.testing.assert_allclose(H[mid], freqs[mid], rtol=0.02)
    assert H[0] > 0
    Hh = ramp_filter(509, 0.01, "hamming")
    assert np.all(Hh <= H + 1e-15) and Hh[H.size // 2] == pytest.approx(0.08 * H[H.size // 2])


def test_zero_in_zero_out():
    g = ParallelGeometry.standard(20, 31)
    assert not fbp_parallel(Sinogram(g, np.zeros((20, 31))), FbpConfig(rows=16, cols=16)).data.any()
    f = FanGeometry.standard(20, 31)
    assert not reconstruct_fan(Sinogram(f, np.zeros((20, 31))), FbpConfig(rows=16, cols=16)).data.any()


def test_rejects_wrong_inputs():
    f = FanGeometry.standard(20, 31)
    with pytest.raises(TypeError):
        fbp_parallel(Sinogram(f, np.zeros((20, 31))))
    p = ParallelGeometry(np.array([0.0]), 5, 0.1)
    with pytest.raises(ValueError):
        fbp_parallel(Sinogram(p, np.zeros((1, 5))))
    half = FanGeometry(3.0, np.linspace(0, math.pi, 20), 31, 0.1)
    with pytest.raises(ValueError):
        fan_to_parallel(Sinogram(half, np.zeros((20, 31))))


def test_disk_centre_value():
    s = analytic_parallel_sinogram(disk(1.0), ParallelGeometry.standard())
    img = fbp_parallel(s)
    assert img.data[127:129, 127:129].mean() == pytest.approx(1.0, rel=0.05)


def test_linearity(rng):
    g = ParallelGeometry.standard(30, 41)
    a, b = rng.random((30, 41)), rng.random((30, 41))
    cfg = FbpConfig(rows=24, cols=24)
    lhs = fbp_parallel(Sinogram(g, 2 * a - b), cfg).data
    rhs = 2 * fbp_parallel(Sinogram(g, a), cfg).data - fbp_parallel(Sinogram(g, b), cfg).data
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_clean_shepp_logan_snr(shepp_256, thresholds):
    s = analytic_parallel_sinogram(standard_shepp_logan(), ParallelGeometry.standard())
    img = fbp_parallel(s)
    assert snr(img.data, shepp_256.data) >= thresholds["recon_parallel_analytic_shepp_256"]["min_snr_db"]
    # total mass is preserved
    assert img.data.sum() == pytest.approx(shepp_256.data.sum(), rel=0.05)


def test_circle_mask():
    s = analytic_parallel_sinogram(disk(0.5), ParallelGeometry.standard(60, 101))
    img = fbp_parallel(s, FbpConfig(rows=32, cols=32, circle=True))
    x, y = np.meshgrid(np.arange(32) - 15.5, np.arange(32) - 15.5)
    assert not img.data[np.hypot(x, y) * 2 / 32 > 1].any()


def test_rebinned_disk_profile():
    fan = analytic_fan_sinogram(disk(0.5), FanGeometry.standard())
    par = fan_to_parallel(fan)
    ref = analytic_parallel_sinogram(disk(0.5), par.geometry)
    assert np.linalg.norm(par.data - ref.data) / np.linalg.norm(ref.data) < 0.02


def test_central_rays_map_to_zero_offset():
    g = FanGeometry.standard(72, 101)
    par = fan_to_parallel(Sinogram(g, np.zeros((72, 101))))
    mid = (par.geometry.n_detectors - 1) // 2
    assert par.geometry.offsets[mid] == 0.0
    # a fan sinogram that marks only the central detector lands on s = 0
    data = np.zeros((72, 101))
    data[:, 50] = 1.0
    out = fan_to_parallel(Sinogram(g, data)).data
    np.testing.assert_allclose(out[::2, mid], 1.0, atol=1e-12)


def test_rebinning_large_radius_limit():
    ph = standard_shepp_logan()
    fan = analytic_fan_sinogram(ph, FanGeometry.standard(source_radius=100.0))
    par = fan_to_parallel(fan)
    ref = analytic_parallel_sinogram(ph, par.geometry)
    assert np.linalg.norm(par.data - ref.data) / np.linalg.norm(ref.data) < 0.01


def test_fan_pipeline_errors(small_fan_benchmark, thresholds):
    img, clean = small_fan_benchmark
    cfg = FbpConfig(rows=128, cols=128)
    clean_err = frobenius_error(reconstruct_fan(clean, cfg).data, img.data)
    assert clean_err <= thresholds["recon_fan_clean_small"]["max_frobenius"]
    rec = reconstruct_fan(clean, cfg)
    assert rec.data.sum() == pytest.approx(img.data.sum(), rel=0.05)

    dose = 128.0
    noisy = add_poisson(clean, NoiseSpec(dose, 1))
    u, _ = denoise_tv(noisy.data * dose, SolverConfig(alpha=0.2), trace=False)
    noisy_err = frobenius_error(reconstruct_fan(noisy, cfg).data, img.data)
    den_err = frobenius_error(reconstruct_fan(clean.with_data(u / dose), cfg).data, img.data)
    assert clean_err < den_err < noisy_err
