"""Parity between the compiled kernels and the numpy fallback, and accuracy
of log I0 against a high-precision quadrature of its integral definition."""
import mpmath
import numpy as np
import pytest

from tagtrack import _kernels_py, kernels
from tests.conftest import rng


def quad_log_i0(x: float) -> float:
    # I0(x) = (1/pi) * integral_0^pi exp(x cos t) dt, evaluated at 50 digits
    mpmath.mp.dps = 50
    val = mpmath.quad(lambda t: mpmath.exp(x * mpmath.cos(t)), [0, mpmath.pi])
    return float(mpmath.log(val / mpmath.pi))


@pytest.mark.parametrize("x", [0.0, 1e-8, 0.5, 1.0, 7.9, 8.1, 25.0, 49.9,
                               50.1, 80.0, 200.0, 500.0])
def test_log_i0_matches_quadrature(x):
    ref = quad_log_i0(x)
    for impl in (kernels, _kernels_py):
        got = float(impl.log_i0(np.array([x]))[0])
        assert abs(got - ref) <= 1e-10 * abs(ref) + 1e-15


def test_log_i0_even_and_shapes():
    x = np.linspace(-30, 30, 101)
    out = kernels.log_i0(x)
    assert out.shape == x.shape
    np.testing.assert_allclose(out, out[::-1], rtol=1e-13, atol=1e-13)
    assert float(kernels.log_i0(0.0)) == 0.0


def test_implementations_agree():
    x = np.concatenate([np.linspace(0, 60, 500), np.linspace(60, 600, 100)])
    a = kernels.log_i0(x)
    b = _kernels_py.log_i0(x)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-13)


def test_bin_log_ratio_sum_parity():
    g = rng(7)
    m, n_fft, n, b = 16, 32, 400, 8
    z = np.abs(g.normal(size=(m, n_fft)))
    frame0 = g.integers(0, m + 3, n)
    gamma = np.abs(g.normal(size=n)) * 4
    cols = np.sort(g.choice(n_fft, b, replace=False)).astype(np.int64)
    wmag = np.abs(g.normal(size=b)) * 12
    args = (z, frame0, gamma, cols, wmag, 0.37)
    a = kernels.bin_log_ratio_sum(*args)
    py = _kernels_py.bin_log_ratio_sum(*args)
    np.testing.assert_allclose(a, py, rtol=1e-11, atol=1e-11)


def test_bin_log_ratio_sum_against_direct_formula():
    g = rng(11)
    m, n_fft = 8, 16
    z = np.abs(g.normal(size=(m, n_fft)))
    frame0 = np.array([0, 3, m - 1, m + 1])
    gamma = np.array([0.5, 1.0, 2.0, 3.0])
    cols = np.array([2, 3, 4], dtype=np.int64)
    wmag = np.array([1.0, 2.0, 0.5])
    s2 = 0.8
    out = kernels.bin_log_ratio_sum(z, frame0, gamma, cols, wmag, s2)
    for i in range(4):
        expect = 0.0
        for mm in (frame0[i] % m, (frame0[i] + 1) % m):
            for c, w in zip(cols, wmag):
                nu = gamma[i] * w
                expect += float(kernels.log_i0(z[mm, c] * nu / s2)) - nu * nu / (2 * s2)
        assert abs(out[i] - expect) < 1e-10


def test_empty_bins_give_zero():
    z = np.ones((4, 4))
    out = kernels.bin_log_ratio_sum(z, np.array([0, 1]), np.array([1.0, 2.0]),
                                    np.empty(0, dtype=np.int64), np.empty(0), 1.0)
    assert np.all(out == 0.0)
