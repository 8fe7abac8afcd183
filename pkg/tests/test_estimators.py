import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from pdmpjump import _pycore
from pdmpjump.errors import DegenerateCriterion, DenominatorZero, ParameterOutOfRange
from pdmpjump.estimators import (
    amg_argmax,
    epanechnikov,
    estimate_curve,
    k_denominator_counts,
    ks_denominator_counts,
    lambda_amg,
    lambda_amg_batch,
    lambda_amgo,
    lambda_amgo_batch,
    lambda_circ_phi,
    lambda_k,
    lambda_k_batch,
    lambda_ks,
    lambda_ks_batch,
    oracle_argmax,
)
from pdmpjump.model import growth_model
from pdmpjump.simulate import trajectory_from_arrays
from pdmpjump.theory import cx_grid

K = epanechnikov()


def kh(u, h):
    return K(np.asarray(u) / h) / h


# direct transcriptions of the estimator formulas, used as oracles
def naive_k(tr, x, h, kappa):
    z = tr.z
    num = np.sum(kh(z[:-1] - kappa * x, h))
    den = np.sum((z[:-1] <= x) & (z[1:] >= kappa * x))
    return kappa * num / den


def naive_ks(tr, x, h):
    num = np.sum(kh(tr.z_minus - x, h))
    den = np.sum((tr.z[:-1] <= x) & (x < tr.z_minus))
    return num / den


def naive_circ(tr, xi, t, hs, ht):
    w = kh(tr.z[:-1] - xi, hs)
    return np.sum(w * kh(tr.s - t, ht)) / np.sum(w * (tr.s > t))


def naive_amg_xi(tr, x, hs):
    grid = cx_grid(x)
    crit = [np.sum(kh(tr.z[:-1] - xi, hs) * (tr.s > x - xi)) for xi in grid]
    return grid[int(np.argmax(crit))]


def test_kernel():
    assert K(0.0) == 0.75
    assert K(1.0) == 0.0
    assert K(1.5) == 0.0
    assert integrate.quad(K, -1, 1)[0] == pytest.approx(1.0, abs=1e-14)
    assert integrate.quad(lambda u: K(u) ** 2, -1, 1)[0] == pytest.approx(K.tau2, abs=1e-14)


@pytest.mark.parametrize("x", [0.6, 1.0, 1.7, 2.3])
def test_estimators_match_formulas(chain, tcp, x):
    assert lambda_k(chain, x, 0.12, tcp) == pytest.approx(naive_k(chain, x, 0.12, 0.4), rel=1e-10)
    assert lambda_ks(chain, x, 0.3, tcp) == pytest.approx(naive_ks(chain, x, 0.3), rel=1e-10)
    assert lambda_circ_phi(chain, x / 2, x / 2, 0.1, 0.3) == pytest.approx(
        naive_circ(chain, x / 2, x / 2, 0.1, 0.3), rel=1e-10)
    xi = naive_amg_xi(chain, x, 0.1)
    assert amg_argmax(chain, [x], 0.1)[0] == pytest.approx(xi, abs=1e-12)
    assert lambda_amg(chain, x, 0.1, 0.3) == pytest.approx(naive_circ(chain, xi, x - xi, 0.1, 0.3), rel=1e-10)
    xo = oracle_argmax(x, tcp)
    assert lambda_amgo(chain, x, 0.1, 0.3, tcp) == pytest.approx(naive_circ(chain, xo, x - xo, 0.1, 0.3), rel=1e-10)


def test_prefactor_is_kappa(chain, tcp):
    x, h = 1.3, 0.1
    num = np.sum(kh(chain.z[:-1] - 0.4 * x, h))
    den = k_denominator_counts(chain, [x], tcp)[0]
    assert lambda_k(chain, x, h, tcp) == pytest.approx(0.4 * num / den, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(x=st.floats(0.0, 5.0))
def test_k_and_ks_share_denominator(chain, tcp, x):
    assert k_denominator_counts(chain, [x], tcp)[0] == ks_denominator_counts(chain, [x])[0]


def test_denominator_zero(chain, tcp):
    top = float(chain.z_minus.max()) + 1.0
    with pytest.raises(DenominatorZero):
        lambda_k(chain, top, 0.1, tcp)
    with pytest.raises(DenominatorZero):
        lambda_ks(chain, 0.0, 0.1, tcp)
    with pytest.raises(DenominatorZero):
        lambda_circ_phi(chain, 50.0, 0.5, 0.1, 0.1)


def test_circ_phi_values(chain):
    assert lambda_circ_phi(chain, 1.0, 1.0, 0.1, 0.3) == pytest.approx(2.0, abs=0.5)
    # at t = 0 every sample survives, so the denominator is the spatial kernel mass
    zs, ss = chain.pairs_by_z
    _, den = _pycore.lcp_sums(zs, ss, 1.0, 0.0, 0.1, np.array([0.3]))
    assert den == pytest.approx(np.sum(kh(chain.z[:-1] - 1.0, 0.1)), rel=1e-12)


def test_amg_skips_empty_kernel_mass():
    # every Z_i is far above 0.3: the only positive criterion values are near 1
    z = np.array([1.0, 1.02, 0.98, 1.01])
    s = np.array([2.0, 2.0, 2.0])
    tr = trajectory_from_arrays(z, z[:-1] + s, s)
    xi = amg_argmax(tr, [1.5], 0.05)[0]
    assert 0.95 <= xi <= 1.05
    with pytest.raises(DegenerateCriterion):
        lambda_amg(tr, 0.3, 0.05, 0.1)


def test_bandwidth_checks(chain, tcp):
    with pytest.raises(ParameterOutOfRange):
        lambda_k(chain, 1.0, 0.0, tcp)
    with pytest.raises(ParameterOutOfRange):
        lambda_circ_phi(chain, 1.0, 1.0, 0.1, -1.0)
    with pytest.raises(ParameterOutOfRange):
        lambda_amg(chain, 0.0, 0.1, 0.1)
    with pytest.raises(ParameterOutOfRange):
        lambda_k(chain, 1.0, 0.1, growth_model(0.1, 0.5, 0.1))
    with pytest.raises(ParameterOutOfRange):
        lambda_amgo(chain, 1.0, 0.1, 0.1, growth_model(0.1, 0.5, 0.1))


def test_permutation_invariance(chain, tcp):
    rng = np.random.default_rng(0)
    perm = rng.permutation(chain.n)
    head, zm, s = chain.z[:-1], chain.z_minus, chain.s
    shuffled = trajectory_from_arrays(np.append(head[perm], chain.z[-1]), zm[perm], s[perm])
    for x in (0.8, 1.9):
        assert lambda_ks(shuffled, x, 0.2, tcp) == pytest.approx(lambda_ks(chain, x, 0.2, tcp), rel=1e-12)
        assert lambda_amg(shuffled, x, 0.1, 0.3) == pytest.approx(lambda_amg(chain, x, 0.1, 0.3), rel=1e-12)
        assert lambda_circ_phi(shuffled, x / 2, 0.4, 0.1, 0.3) == pytest.approx(
            lambda_circ_phi(chain, x / 2, 0.4, 0.1, 0.3), rel=1e-12)


def test_batches_match_scalar_calls(chain, tcp):
    grid = np.array([0.5, 1.0, 1.55, 2.0, 2.5])
    hs_list, ht_list = [0.05, 0.2], [0.1, 0.45]
    kb = lambda_k_batch(chain, grid, [0.1, 0.3], tcp)
    ksb = lambda_ks_batch(chain, grid, [0.1, 0.3], tcp)
    ab = lambda_amg_batch(chain, grid, hs_list, ht_list)
    ob = lambda_amgo_batch(chain, grid, hs_list, ht_list, tcp)
    for j, x in enumerate(grid):
        for a, h in enumerate([0.1, 0.3]):
            assert kb[a, j] == pytest.approx(lambda_k(chain, x, h, tcp), rel=1e-12)
            assert ksb[a, j] == pytest.approx(lambda_ks(chain, x, h, tcp), rel=1e-12)
        for a, hs in enumerate(hs_list):
            for b, ht in enumerate(ht_list):
                assert ab[a, b, j] == pytest.approx(lambda_amg(chain, x, hs, ht), rel=1e-12)
                assert ob[a, b, j] == pytest.approx(lambda_amgo(chain, x, hs, ht, tcp), rel=1e-12)


def test_estimate_curve_failures_and_csv(tmp_path, chain, tcp):
    grid = np.array([0.0, 1.0, 60.0])
    c = estimate_curve(chain, grid, "ks", 0.2, tcp)
    assert c.failures == (0, 2)
    assert c.values[1] > 0
    c.to_csv(tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "x,estimate,failed"
    assert lines[1].endswith(",,1") and lines[2].endswith(",0")
    assert estimate_curve(chain, grid, "amg", (0.1, 0.3)).failures == (0, 2)
    with pytest.raises(ParameterOutOfRange):
        estimate_curve(chain, grid, "bogus", 0.1)


def test_values_nonnegative(chain, tcp):
    grid = np.linspace(0.3, 2.8, 26)
    for kind, bw in (("k", 0.1), ("ks", 0.25), ("amgo", (0.1, 0.3)), ("amg", (0.1, 0.3))):
        c = estimate_curve(chain, grid, kind, bw, tcp)
        ok = np.setdiff1d(np.arange(grid.size), c.failures)
        assert np.all(np.isfinite(c.values[ok])) and np.all(c.values[ok] >= 0)
