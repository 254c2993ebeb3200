import numpy as np
import pytest
from numpy.testing import assert_allclose

from markovgate.weights import TrimWeight, WeightSpec, build_weight


@pytest.fixture
def sample():
    rng = np.random.default_rng(2)
    return rng.normal(size=500), rng.normal(size=500)


def test_spec_validation():
    with pytest.raises(ValueError):
        WeightSpec(kind="nope")
    with pytest.raises(ValueError):
        WeightSpec(trim_quantile=0.6)
    with pytest.raises(ValueError):
        WeightSpec(smoothness=0.0)


def test_box_from_quantiles(sample):
    x, z = sample
    w = build_weight(WeightSpec("density_weight", trim_quantile=0.1), x, z)
    assert w.x_lo == pytest.approx(np.quantile(x, 0.1))
    assert w.x_hi == pytest.approx(np.quantile(x, 0.9))
    assert w.z_lo == pytest.approx(np.quantile(z, 0.1))
    assert w.bivariate


def test_zero_outside_one_on_core(sample):
    x, z = sample
    w = build_weight(WeightSpec(), x, z)
    assert w(w.x_lo - 1e-9, 0.0) == 0.0
    assert w(w.x_hi + 1e-9, 0.0) == 0.0
    mid_x = 0.5 * (w.x_lo + w.x_hi)
    mid_z = 0.5 * (w.z_lo + w.z_hi)
    assert w(mid_x, mid_z) == pytest.approx(1.0, abs=1e-15)
    vals = w(np.linspace(w.x_lo - 1, w.x_hi + 1, 301),
             np.full(301, mid_z))
    assert np.all((vals >= 0.0) & (vals <= 1.0))


def test_taper_is_c2():
    # curvature vanishes approaching every joint from both sides, so the
    # centered second difference at a joint is tiny next to the interior
    # curvature scale of the taper
    w = TrimWeight("x_only_weight", 0.0, 1.0, 0.2)
    eps = 1e-4
    interior = np.linspace(0.01, 0.19, 200)
    vals = w.x_factor(np.stack([interior - eps, interior, interior + eps]))
    curv_scale = np.abs((vals[2] - 2 * vals[1] + vals[0]) / eps ** 2).max()
    for joint in (0.0, 0.2, 0.8, 1.0):
        x = joint + np.array([-eps, 0.0, eps])
        v = w.x_factor(x)
        second = (v[2] - 2 * v[1] + v[0]) / eps ** 2
        assert abs(second) < 0.02 * curv_scale
    # first derivative also dies at the joints (C^1)
    for joint in (0.0, 0.2, 0.8, 1.0):
        slope = (w.x_factor(joint + eps) - w.x_factor(joint - eps)) / (2 * eps)
        assert abs(slope) < 0.02 * (1.875 / 0.2)  # max quintic slope / taper


def test_x_only_weight_has_no_z(sample):
    x, _ = sample
    w = build_weight(WeightSpec("x_only_weight"), x)
    assert not w.bivariate
    with pytest.raises(ValueError):
        w.z_factor(0.0)
    assert w(0.0) == w.x_factor(0.0)


def test_mass_and_l2_analytic():
    # box [0, 10] with taper 1: int S = 1/2 and int S^2 = 181/462 per taper
    w = TrimWeight("x_only_weight", 0.0, 10.0, 1.0)
    assert w.x_mass() == pytest.approx(8.0 + 2 * 0.5, rel=1e-8)
    assert w.x_l2() == pytest.approx(8.0 + 2 * 181.0 / 462.0, rel=1e-8)


def test_mass_matches_grid_quadrature(sample):
    x, z = sample
    w = build_weight(WeightSpec(), x, z)
    grid = np.linspace(w.x_lo, w.x_hi, 200001)
    riemann = np.trapz(w.x_factor(grid), grid)
    assert_allclose(w.x_mass(), riemann, rtol=1e-6)
    riemann2 = np.trapz(w.x_factor(grid) ** 2, grid)
    assert_allclose(w.x_l2(), riemann2, rtol=1e-6)


def test_midpoint_grid(sample):
    x, z = sample
    w = build_weight(WeightSpec(), x, z)
    g = w.x_grid(101)
    assert g.size == 101
    step = (w.x_hi - w.x_lo) / 101
    assert g[0] == pytest.approx(w.x_lo + 0.5 * step)
    assert g[-1] == pytest.approx(w.x_hi - 0.5 * step)
    assert np.all(np.diff(g) > 0)


def test_affine_equivariance(sample):
    x, z = sample
    w = build_weight(WeightSpec(), x, z)
    a, c = 3.0, -1.2
    w2 = build_weight(WeightSpec(), a * x + c, a * z + c)
    pts_x = np.linspace(w.x_lo, w.x_hi, 37)
    pts_z = np.linspace(w.z_lo, w.z_hi, 37)
    assert_allclose(w2(a * pts_x + c, a * pts_z + c), w(pts_x, pts_z),
                    rtol=1e-10, atol=1e-12)
