import math

import numpy as np
import pytest
from scipy import integrate

from pdmpjump import theory as th
from pdmpjump.errors import DegenerateDenominator, ParameterOutOfRange
from pdmpjump.model import attach_rate, growth_model, rate_from_curve, tcp_model

KAPPAS = [0.3, 0.4, 0.5, 0.6, 0.7, 0.8]

# Invariant density at kappa = 0.4 obtained as the fixed point of the one-step
# transition operator on a 7001-point grid (power iteration), independently of
# the series; accurate to about 3e-5 relative.
FIXED_POINT_MU = {
    0.5: 1.7220247462537894,
    1.0: 0.3371345156681207,
    1.5: 0.01017259361660071,
    2.0: 5.7190314389617136e-05,
    3.0: 1.4046316930928657e-11,
}


@pytest.mark.parametrize("x,expected", sorted(FIXED_POINT_MU.items()))
def test_mu_matches_fixed_point_oracle(x, expected):
    assert th.tcp_mu(x, 0.4) == pytest.approx(expected, rel=1e-4)


def test_densities_vanish_at_zero():
    assert th.tcp_mu(0.0, 0.4) == 0.0
    assert th.tcp_mu_minus(0.0, 0.4) == 0.0


@pytest.mark.parametrize("kappa", KAPPAS)
def test_densities_normalise(kappa):
    for f in (th.tcp_mu, th.tcp_mu_ct, th.tcp_mu_minus):
        val = integrate.quad(lambda x: f(x, kappa), 0, 8, limit=200)[0]
        tail = integrate.quad(lambda x: f(x, kappa), 8, np.inf)[0]
        assert val + tail == pytest.approx(1.0, abs=1e-6)


def test_mu_ct_positive_on_open_interval():
    x = np.linspace(0.01, 3.99, 200)
    assert np.all(th.tcp_mu_ct(x, 0.4) > 0)


def test_mu_ct_is_time_average_of_mu():
    # occupation density: mu_ct(x) = int_0^x mu(xi) G(x - xi | xi) dxi / E[S]
    kappa = 0.4
    mean_s = integrate.quad(
        lambda xi: th.tcp_mu(xi, kappa)
        * integrate.quad(lambda t: math.exp(-(xi * t + t * t / 2)), 0, np.inf)[0],
        0, 8, limit=200)[0]
    for x in (0.3, 0.8, 1.5, 2.5):
        occ = integrate.quad(lambda xi: th.tcp_mu(xi, kappa) * math.exp(-(x * x - xi * xi) / 2), 0, x)[0]
        assert th.tcp_mu_ct(x, kappa) == pytest.approx(occ / mean_s, rel=1e-7)


def test_mu_minus_relation():
    x = np.linspace(0, 5, 50)
    assert np.allclose(th.tcp_mu_minus(x, 0.4), 0.4 * th.tcp_mu(0.4 * x, 0.4), atol=1e-12, rtol=0)
    assert th.tcp_mu_minus(1.0, 0.4) == 0.4 * th.tcp_mu(0.4, 0.4)


def test_series_truncation_stable():
    x = np.linspace(0, 6, 121)
    a = th.tcp_mu(x, 0.4, th.SeriesTolerance(abs_tol=1e-12, max_terms=100))
    b = th.tcp_mu(x, 0.4, th.SeriesTolerance(abs_tol=1e-16, max_terms=200))
    assert np.max(np.abs(a - b)) < 1e-10


def test_series_tolerance_validation():
    with pytest.raises(ParameterOutOfRange):
        th.SeriesTolerance(abs_tol=0.0)
    with pytest.raises(ParameterOutOfRange):
        th.SeriesTolerance(max_terms=0)
    with pytest.raises(ParameterOutOfRange):
        th.tcp_mu(-1.0, 0.4)
    with pytest.raises(ParameterOutOfRange):
        th.tcp_mu(1.0, 1.5)


def test_survival_closed_form_and_quadrature():
    m = tcp_model(0.4)
    assert th.survival_G(m, 1.0, 0.0) == 1.0
    assert th.survival_G(m, 1.0, 1.0) == pytest.approx(math.exp(-1.5), abs=1e-15)
    assert th.survival_G(m, 1.0, 1.0, method="quad") == pytest.approx(math.exp(-1.5), abs=1e-9)
    assert th.survival_G(m, 1.0, 1.0) > th.survival_G(m, 1.0, 2.0)


def test_survival_log_concave_for_tcp():
    m = tcp_model(0.4)
    t = np.linspace(0, 4, 81)
    logg = np.log([th.survival_G(m, 0.7, s) for s in t])
    assert np.all(np.diff(logg) < 0)
    assert np.all(np.diff(logg, 2) <= 1e-12)


def test_conditional_density():
    m = tcp_model(0.4)
    assert th.conditional_density_f(m, 1.3, 0.0) == pytest.approx(1.3)
    total = integrate.quad(lambda t: th.conditional_density_f(m, 1.0, t), 0, np.inf)[0]
    assert total == pytest.approx(1.0, abs=1e-6)
    for t in (0.2, 1.1):
        ratio = th.conditional_density_f(m, 0.5, t) / th.survival_G(m, 0.5, t)
        assert ratio == pytest.approx(0.5 + t, rel=1e-12)


def test_r_density():
    m = tcp_model(0.4)
    assert th.r_density(m, 1.0, 0.5) == 0.0
    total = integrate.quad(lambda z: th.r_density(m, 1.0, z), 1.0, np.inf)[0]
    assert total == pytest.approx(1.0, abs=1e-6)
    for z in (1.0, 1.7, 3.2):
        assert th.r_density(m, 1.0, z) == pytest.approx(z * math.exp(-(z * z - 1) / 2), rel=1e-12)


def test_hazard_quadrature_path_for_tabulated_rate():
    m = attach_rate(growth_model(0.5, 0.5, 0.05), rate_from_curve([0, 2], [0.0, 2.0]))
    closed = th.cumulative_hazard(m, 0.2, 1.5)
    quad = th.cumulative_hazard(m, 0.2, 1.5, method="quad")
    assert closed == pytest.approx(quad, abs=1e-9)


@pytest.mark.parametrize("kappa", KAPPAS)
def test_variance_ratio_is_kappa(kappa):
    for x in np.linspace(0.5, 3.0, 100):
        assert th.sigma_k2(x, kappa) / th.sigma_ks2(x, kappa) == pytest.approx(kappa, rel=1e-12)


def test_oracle_argmax_inside_reachable_set_and_scale_free():
    xi = th.tcp_oracle_argmax(2.0, 0.4)
    assert 0 < xi < 2
    grid = th.cx_grid(2.0)
    crit = th.tcp_oracle_criterion(grid, 2.0, 0.4)
    assert grid[np.argmax(crit)] == xi
    assert grid[np.argmax(7.3 * crit)] == xi


def test_cx_grid():
    g = th.cx_grid(0.05)
    assert np.allclose(g, [0.01, 0.02, 0.03, 0.04, 0.05])
    assert th.cx_grid(0.005).size == 0


def test_sigma_amg_plateau():
    # once x is past the mode of mu the maximiser no longer moves and the ratio
    # of the two standard deviations flattens out (near 0.97 for kappa = 0.4)
    ratios = [math.sqrt(th.sigma_amg2(x, 0.4) / th.sigma_k2(x, 0.4)) for x in (1.5, 2.0, 2.5, 3.0)]
    assert np.ptp(ratios) < 0.01
    assert th.tcp_oracle_argmax(3.0, 0.4) == th.tcp_oracle_argmax(2.0, 0.4)


def test_degenerate_variances():
    with pytest.raises(DegenerateDenominator):
        th.sigma_k2(0.0, 0.4)
    with pytest.raises(DegenerateDenominator):
        th.sigma_amg2(0.005, 0.4)


def test_normalized_curves_scaling():
    grid = np.linspace(0.5, 3, 26)
    bw = {"k": 0.1, "ks": 0.25, "amg": (0.2, 0.3)}
    a = th.normalized_sd_curves(1000, bw, grid, 0.4)
    b = th.normalized_sd_curves(10000, bw, grid, 0.4)
    for name in ("sd_k", "sd_ks", "sd_amg"):
        assert np.allclose(getattr(b, name), getattr(a, name) / math.sqrt(10), rtol=1e-12)
    assert np.allclose(a.sd_k / a.sd_ks, math.sqrt(0.4 * 0.25 / 0.1), rtol=1e-12)
    with pytest.raises(ParameterOutOfRange):
        th.normalized_sd_curves(1000, {"k": 0, "ks": 1, "amg": (1, 1)}, grid, 0.4)


def test_sign_changes():
    g = np.arange(6.0)
    assert th.sign_changes(g, [1, 1, -1, -1, 1, 1]) == [1.5, 3.5]
    assert th.sign_changes(g, [1, np.nan, -1, 0, -2, -1]) == [1.0]
    assert th.sign_changes(g, np.ones(6)) == []


def test_theory_table_columns():
    tab = th.theory_table(np.array([1.0, 2.0]), 0.4)
    assert set(tab) == {"x", "mu", "mu_ct", "mu_minus", "sigma_k", "sigma_ks", "sigma_amg"}
    assert tab["sigma_k"][1] == pytest.approx(math.sqrt(th.sigma_k2(2.0, 0.4)))
