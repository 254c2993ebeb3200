import numpy as np
import pytest
from numpy.testing import assert_allclose

import markovgate as mg
from markovgate.kernels import KERNEL_NAMES, moments_batch

from _naive import effective_weights as naive_weights
from _naive import kernel as naive_kernel


def simpson(y, dx):
    # composite Simpson on an odd-length grid
    return dx / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-2:2].sum())


def conv_l2_oracle(name, npts=40001):
    """||K*K||^2 by two-level fixed-grid quadrature, independent of the
    adaptive quadrature used to build the cached constants."""
    v = np.linspace(-1.0, 1.0, npts)
    dv = v[1] - v[0]
    u = np.linspace(-2.0, 2.0, 4001)
    kv = naive_kernel(name, v)
    conv = np.array([simpson(kv * naive_kernel(name, ui - v), dv) for ui in u])
    return simpson(conv ** 2, u[1] - u[0])


@pytest.mark.parametrize("name", KERNEL_NAMES)
def test_cached_constants_match_quadrature(name):
    k = mg.get_kernel(name)
    u = np.linspace(-1.0, 1.0, 40001)
    vals = naive_kernel(name, u)
    du = u[1] - u[0]
    assert_allclose(k.mu0, simpson(vals, du), atol=1e-8)
    assert_allclose(k.mu0, 1.0, atol=1e-8)
    assert_allclose(k.l2_norm_sq, simpson(vals ** 2, du), atol=1e-8)
    assert_allclose(k.mu2, simpson(u * u * vals, du), atol=1e-8)
    assert_allclose(k.conv_l2_norm_sq, conv_l2_oracle(name), atol=1e-8)


def test_epanechnikov_exact_values():
    k = mg.get_kernel("epanechnikov")
    assert abs(k.l2_norm_sq - 0.6) < 1e-9
    assert mg.kernel_eval(k, 0.0) == pytest.approx(0.75, abs=1e-15)
    assert mg.kernel_eval(k, 2.0) == 0.0
    assert mg.kernel_eval(k, -1.0) == 0.0


@pytest.mark.parametrize("name", KERNEL_NAMES)
def test_kernel_symmetry_and_support(name):
    k = mg.get_kernel(name)
    u = np.linspace(-3, 3, 601)
    vals = mg.kernel_eval(k, u)
    assert_allclose(vals, vals[::-1], atol=0)
    assert np.all(vals[np.abs(u) > 1.0] == 0.0)
    assert np.all(vals >= 0.0)


@pytest.mark.parametrize("name", KERNEL_NAMES)
def test_conv_norm_bounded_by_l2(name):
    # Young's inequality: ||K*K||_2 <= ||K||_1 ||K||_2 with ||K||_1 = 1
    k = mg.get_kernel(name)
    assert mg.conv_norm(k) <= k.l2_norm_sq + 1e-12


def test_unknown_kernel_rejected():
    with pytest.raises(ValueError):
        mg.get_kernel("gaussian")


# ---------------------------------------------------------------------------
# Local moments
# ---------------------------------------------------------------------------

def test_local_moments_single_centered_point():
    k = mg.get_kernel("epanechnikov")
    m = mg.local_moments([0.4], 0.4, 0.2, k)
    assert m.s0 == pytest.approx(0.75 / 0.2, rel=1e-14)
    assert m.s1 == 0.0
    assert m.n_window == 1
    assert not m.distinct


def test_local_moments_match_naive_sum():
    rng = np.random.default_rng(3)
    sample = rng.normal(size=5)
    k = mg.get_kernel("epanechnikov")
    y, b = 0.1, 0.8
    m = mg.local_moments(sample, y, b, k)
    u = (sample - y) / b
    w = naive_kernel("epanechnikov", u) / b
    assert_allclose(m.s0, np.mean(w), rtol=1e-12)
    assert_allclose(m.s1, np.mean(w * u), rtol=1e-12)
    assert_allclose(m.s2, np.mean(w * u * u), rtol=1e-12)
    assert m.determinant >= 0.0


def test_local_moments_empty_window_raises():
    k = mg.get_kernel("epanechnikov")
    with pytest.raises(mg.DegenerateWindowError):
        mg.local_moments([1.0, 2.0, 3.0], 10.0, 0.5, k)


def test_windowed_equals_full_sum():
    rng = np.random.default_rng(9)
    sample = np.sort(rng.normal(size=200))
    k = mg.get_kernel("epanechnikov")
    pts = np.array([-0.5, 0.0, 1.2])
    s0, s1, s2, _, _ = moments_batch(sample, pts, 0.3, k, sample.size)
    for i, y in enumerate(pts):
        u = (sample - y) / 0.3
        w = naive_kernel("epanechnikov", u) / 0.3
        assert_allclose(s0[i], np.mean(w), rtol=1e-12)
        assert_allclose(s1[i], np.mean(w * u), rtol=1e-12)
        assert_allclose(s2[i], np.mean(w * u * u), rtol=1e-12)


# ---------------------------------------------------------------------------
# Effective weights
# ---------------------------------------------------------------------------

def test_effective_weights_reproduction_identities():
    rng = np.random.default_rng(17)
    k = mg.get_kernel("epanechnikov")
    for trial in range(50):
        sample = rng.normal(scale=1.0 + trial % 3, size=40)
        y = float(np.median(sample) + 0.2 * rng.standard_normal())
        w, idx = mg.effective_weights(sample, y, 0.7, k)
        assert np.sum(w) / sample.size == pytest.approx(1.0, abs=1e-12)
        lin = np.sum(w * (sample[idx] - y))
        scale = np.sum(np.abs(w) * np.abs(sample[idx] - y)) + 1e-300
        assert abs(lin) / scale < 1e-10


def test_effective_weights_match_normal_equations():
    rng = np.random.default_rng(4)
    sample = np.array([0.1, 0.4, 0.55, 0.9])
    y = float(np.median(sample))
    b = 0.6
    k = mg.get_kernel("epanechnikov")
    w, idx = mg.effective_weights(sample, y, b, k)
    # brute force: solve the 2x2 weighted least-squares normal equations
    d = sample - y
    kw = naive_kernel("epanechnikov", d / b) / b
    design = np.column_stack([np.ones_like(d), d])
    gram = design.T @ (kw[:, None] * design)
    # intercept coefficient row of the hat matrix, scaled to match
    coef = np.linalg.solve(gram, design.T * kw)
    expected = coef[0] * sample.size
    got = np.zeros_like(sample)
    got[idx] = w
    assert_allclose(got, expected, rtol=1e-6, atol=1e-9)


def test_effective_weights_and_naive_agree():
    rng = np.random.default_rng(21)
    sample = rng.normal(size=30)
    k = mg.get_kernel("epanechnikov")
    w, idx = mg.effective_weights(sample, 0.2, 0.8, k)
    full = naive_weights(sample, 0.2, 0.8)
    got = np.zeros_like(sample)
    got[idx] = w
    assert_allclose(got, full, rtol=1e-12, atol=1e-12)


def test_effective_weights_degenerate_design():
    k = mg.get_kernel("epanechnikov")
    with pytest.raises(mg.DegenerateDesignError):
        mg.effective_weights([0.5, 0.5, 0.5], 0.5, 0.1, k)
    with pytest.raises(mg.DegenerateWindowError):
        mg.effective_weights([0.0, 1.0], 5.0, 0.1, k)


# ---------------------------------------------------------------------------
# Local-linear fit
# ---------------------------------------------------------------------------

def test_local_linear_fit_reproduces_constants_and_lines():
    rng = np.random.default_rng(8)
    xs = rng.normal(size=25)
    k = mg.get_kernel("epanechnikov")
    const = np.full_like(xs, 3.7)
    assert mg.local_linear_fit(xs, const, 0.1, 1.0, k) == pytest.approx(3.7, abs=1e-12)
    lin = 2.0 * xs - 0.3
    got = mg.local_linear_fit(xs, lin, 0.1, 1.0, k)
    assert got == pytest.approx(2.0 * 0.1 - 0.3, rel=1e-10, abs=1e-10)


def test_local_linear_fit_matches_minimizer():
    rng = np.random.default_rng(11)
    xs = rng.normal(size=20)
    ys = np.sin(xs) + 0.1 * rng.standard_normal(20)
    k = mg.get_kernel("epanechnikov")
    y0, b = 0.3, 0.9
    got = mg.local_linear_fit(xs, ys, y0, b, k)
    d = xs - y0
    kw = naive_kernel("epanechnikov", d / b) / b
    design = np.column_stack([np.ones_like(d), d])
    gram = design.T @ (kw[:, None] * design)
    rhs = design.T @ (kw * ys)
    alpha = np.linalg.solve(gram, rhs)[0]
    assert got == pytest.approx(alpha, rel=1e-6)


def test_local_linear_fit_length_mismatch():
    k = mg.get_kernel("epanechnikov")
    with pytest.raises(ValueError):
        mg.local_linear_fit([1.0, 2.0], [1.0], 1.0, 1.0, k)
