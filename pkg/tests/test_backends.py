"""The compiled kernels and the numpy fallback must agree."""

import numpy as np
import pytest

from pdmpjump import _pycore

core = pytest.importorskip("pdmpjump._core")


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(1)
    e = rng.standard_exponential(5000)
    z, zm, s = _pycore.tcp_chain(1.0, 0.4, e)
    order = np.argsort(z[:-1], kind="stable")
    return e, z, zm, s, z[:-1][order], s[order]


def test_chain_bitwise(data):
    e = data[0]
    for a, b in zip(core.tcp_chain(1.0, 0.4, e), _pycore.tcp_chain(1.0, 0.4, e)):
        assert np.array_equal(a, b)


def test_kernel_sums(data):
    zsorted = np.sort(data[2])
    centers = np.linspace(-0.5, 4, 91)
    for h in (0.01, 0.2, 1.0):
        assert np.allclose(core.epan_sums(zsorted, centers, h), _pycore.epan_sums(zsorted, centers, h),
                           rtol=1e-12, atol=1e-12)


def test_conditional_sums(data):
    zs, ss = data[4], data[5]
    hts = np.array([0.05, 0.3, 1.5])
    for xi, t in ((0.5, 0.2), (1.0, 1.0), (9.0, 0.1)):
        n1, d1 = core.lcp_sums(zs, ss, xi, t, 0.1, hts)
        n2, d2 = _pycore.lcp_sums(zs, ss, xi, t, 0.1, hts)
        assert np.allclose(n1, n2, rtol=1e-12, atol=1e-12) and d1 == pytest.approx(d2, rel=1e-12, abs=1e-12)


def test_criterion_table(data):
    zs, ss = data[4], data[5]
    xs = np.linspace(0.5, 2.5, 41)
    grid = np.round(0.01 * np.arange(1, 251), 10)
    for hs in (0.01, 0.1, 0.5):
        a = core.amg_criterion(zs, ss, xs, grid, hs)
        b = _pycore.amg_criterion(zs, ss, xs, grid, hs)
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12)
