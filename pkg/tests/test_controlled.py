import numpy as np
import pytest

from roughdelay.controlled import (CCP, DCP, ccp_norm, dcp_norm, t_sigma,
                                   t_sigma_lipschitz_probe, taylor_part, taylor_remainder_bound)
from roughdelay.fbm import FbmSpec, sample_fbm
from roughdelay.fields import constant, linear, sine
from roughdelay.increments import Grid, delta1, holder_seminorm2
from roughdelay.suites import chainrule_suite

from helpers import smooth_ccp

KAPPA = 0.4


@pytest.fixture(scope="module")
def driver():
    return sample_fbm(FbmSpec(0.45, 2, Grid(-0.25, 1.0, 1 / 128), seed=21))


def pairs(seed, lo, hi, count=300):
    rng = np.random.default_rng(seed)
    return np.sort(rng.integers(0, hi - lo + 1, size=(count, 2)), axis=1).T


def test_constant_path_has_zero_norm(driver):
    z = CCP(driver, 32, np.full((97, 2), 3.0), np.zeros((97, 2, 2)))
    assert ccp_norm(z, KAPPA).total == 0.0


def test_driver_with_identity_density(driver):
    x = driver.values[32:]
    z = CCP(driver, 32, x, np.broadcast_to(np.eye(2), (len(x), 2, 2)))
    n = ccp_norm(z, KAPPA)
    assert n.remainder_seminorm <= 1e-14 and n.density_seminorm == 0.0
    assert n.density_sup == 1.0
    expect = holder_seminorm2(delta1(driver.restrict(32, 160)), KAPPA)
    assert n.total == pytest.approx(expect + 1.0, rel=1e-14)


def test_norm_matches_brute_force():
    grid = Grid(0, 1, 1 / 128)
    drv = sample_fbm(FbmSpec(0.45, 2, grid, seed=2))
    z = smooth_ccp(drv, 0, 128, seed=4)
    t, v, zeta, x = grid.times, z.value, z.density, drv.values
    best = np.zeros(3)
    for i in range(129):
        for j in range(i + 1, 129):
            w = t[j] - t[i]
            rho = v[j] - v[i] - zeta[i] @ (x[j] - x[i])
            best = np.maximum(best, [np.max(np.abs(v[j] - v[i])) / w ** KAPPA,
                                     np.max(np.abs(rho)) / w ** (2 * KAPPA),
                                     np.max(np.abs(zeta[j] - zeta[i])) / w ** KAPPA])
    n = ccp_norm(z, KAPPA)
    np.testing.assert_allclose([n.value_seminorm, n.remainder_seminorm, n.density_seminorm],
                               best, rtol=1e-12)
    assert n.density_sup == pytest.approx(np.max(np.abs(zeta)))
    assert n.total == pytest.approx(best.sum() + n.density_sup, rel=1e-12)


def test_decomposition_reconstructs_increments(driver):
    rng = np.random.default_rng(0)
    lo, m = 32, 97
    dens = rng.normal(size=(2, m, 2, 2))
    z = DCP(driver, lo, rng.normal(size=(m, 2)).cumsum(0), dens, (0, 32))
    i, j = pairs(1, lo, lo + m - 1)
    x = driver.values
    rebuilt = z.remainder_at(i, j)
    for q, s in enumerate(z.shifts):
        rebuilt = rebuilt + np.einsum("tla,ta->tl", dens[q][i], x[lo + j - s] - x[lo + i - s])
    dz = z.value[j] - z.value[i]
    assert np.max(np.abs(rebuilt - dz)) / (1 + np.max(np.abs(dz))) <= 1e-12


def test_ccp_embeds_as_dcp(driver):
    z = smooth_ccp(driver, 32, 160, seed=1)
    a = ccp_norm(z, KAPPA)
    b = dcp_norm(z.as_dcp((0, 32)), KAPPA)
    assert a == b
    with pytest.raises(ValueError):
        z.as_dcp((32,))


def test_kappa_range(driver):
    z = smooth_ccp(driver, 32, 160, seed=1)
    for k in (1 / 3, 0.2, 1.2):
        with pytest.raises(ValueError):
            ccp_norm(z, k)
    with pytest.raises(ValueError):
        ccp_norm(z, 0.45, gamma=0.42)


def test_shape_and_coverage_errors(driver):
    with pytest.raises(ValueError):
        CCP(driver, 0, np.zeros((5, 2)), np.zeros((5, 2, 3)))
    with pytest.raises(ValueError):
        DCP(driver, 10, np.zeros((5, 2)), np.zeros((2, 5, 2, 2)), (0, 32))
    z = smooth_ccp(driver, 32, 160, seed=1)
    short = smooth_ccp(driver, 20, 100, seed=2)
    with pytest.raises(ValueError):
        t_sigma(z, short, sine(2, 2, 1), (0, 32))


def test_t_sigma_constant(driver):
    S = np.array([[0.5, -1.0], [2.0, 0.25]])
    z = smooth_ccp(driver, 32, 160, seed=1)
    zt = smooth_ccp(driver, 0, 160, seed=2)
    out = t_sigma(z, zt, constant(S)(1), (0, 32))
    assert np.all(out.value == S) and np.all(out.densities == 0)
    i, j = pairs(2, 32, 160)
    assert np.all(out.remainder_at(i, j) == 0)


def test_t_sigma_linear_is_exact(driver):
    rng = np.random.default_rng(3)
    A, C = rng.uniform(-1, 1, size=(2, 2, 2, 2))
    sig = linear([A, C])
    z = smooth_ccp(driver, 32, 160, seed=1)
    zt = smooth_ccp(driver, 0, 160, seed=2)
    out = t_sigma(z, zt, sig, (0, 32))
    np.testing.assert_allclose(out.densities[0], np.einsum("lbm,tma->tlba", A, z.density), atol=1e-14)
    np.testing.assert_allclose(out.densities[1],
                               np.einsum("lbm,tma->tlba", C, zt.density[0:129]), atol=1e-14)
    i, j = pairs(4, 32, 160)
    rho = z.remainder.at(i, j)
    rho_t = zt.remainder.at(i, j)  # zt starts 32 steps earlier, so local indices line up
    expect = np.einsum("lbm,tm->tlb", A, rho) + np.einsum("lbm,tm->tlb", C, rho_t)
    np.testing.assert_allclose(out.remainder_at(i, j), expect, atol=1e-12)


def test_t_sigma_initial_value(driver):
    sig = sine(2, 2, 1, seed=4)
    z = smooth_ccp(driver, 32, 160, seed=1)
    zt = smooth_ccp(driver, 0, 160, seed=2)
    out = t_sigma(z, zt, sig, (0, 32))
    u = np.column_stack([z.initial, zt.value[0]])
    np.testing.assert_allclose(out.value[0], sig.eval(u), rtol=0, atol=1e-15)


def test_taylor_bound_pairwise(driver):
    sig = sine(2, 2, 1, seed=4)
    z = smooth_ccp(driver, 32, 160, seed=1)
    zt = smooth_ccp(driver, 0, 160, seed=2)
    i, j = pairs(5, 32, 160, count=2000)
    part = np.max(np.abs(taylor_part(z, zt, sig, (0, 32), i, j)).reshape(len(i), -1), axis=1)
    bound = taylor_remainder_bound(z, zt, sig, (0, 32), i, j)
    assert np.all(part <= bound * (1 + 1e-12) + 1e-15)


def test_chain_rule_oracle():
    rows = chainrule_suite(seed=3)
    assert all(r.passed for r in rows), [(r.name, r.value) for r in rows]


def test_lipschitz_probe_constant_and_equal(driver):
    z1 = smooth_ccp(driver, 32, 160, seed=1)
    z2 = smooth_ccp(driver, 32, 160, seed=5)
    z2 = CCP(driver, 32, z2.value - z2.value[0] + z1.value[0], z2.density)
    zt = smooth_ccp(driver, 0, 160, seed=2)
    rep = t_sigma_lipschitz_probe(z1, z2, zt, constant(np.eye(2))(1), (0, 32), KAPPA)
    assert rep.ratio == 0.0 and not rep.skipped
    rep = t_sigma_lipschitz_probe(z1, z1, zt, sine(2, 2, 1), (0, 32), KAPPA)
    assert rep.skipped and rep.ratio == 0.0
    with pytest.raises(ValueError):
        t_sigma_lipschitz_probe(z1, smooth_ccp(driver, 32, 160, seed=5), zt, sine(2, 2, 1),
                                (0, 32), KAPPA)


def test_lipschitz_probe_linear(driver):
    rng = np.random.default_rng(8)
    A, C = rng.uniform(-1, 1, size=(2, 2, 2, 2))
    sig = linear([A, C])
    zt = smooth_ccp(driver, 0, 160, seed=2)
    # with z~ shared only A acts on the difference; its max-norm gain is a row sum
    gain = np.max(np.sum(np.abs(A), axis=2))
    for seed in range(8):
        z1 = smooth_ccp(driver, 32, 160, seed=10 + seed)
        z2 = smooth_ccp(driver, 32, 160, seed=40 + seed)
        z2 = CCP(driver, 32, z2.value - z2.value[0] + z1.value[0], z2.density)
        rep = t_sigma_lipschitz_probe(z1, z2, zt, sig, (0, 32), KAPPA)
        assert rep.ratio <= gain + np.max(np.sum(np.abs(C), axis=2))
        assert rep.ratio <= gain * (1 + 1e-12)
