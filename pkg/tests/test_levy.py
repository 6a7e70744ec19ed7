import json

import numpy as np
import pytest

from roughdelay.fbm import FbmSpec, fbm_driver, sample_fbm
from roughdelay.increments import Grid, GridPath, holder_seminorm2, restrict
from roughdelay.levy import CONVENTION, area_moment_check, area_over, build_area
from roughdelay.reference import cumulative_quadrature, smooth_driver, smooth_driver_derivative, smooth_path


def triples(seed, n, low=0, count=1000):
    rng = np.random.default_rng(seed)
    return np.sort(rng.integers(low, n, size=(count, 3)), axis=1).T


@pytest.mark.parametrize("H", [0.4, 0.45, 0.5, 0.7])
def test_chen_relation_all_delays(H):
    grid = Grid(-0.5, 1.0, 1 / 256)
    drv = fbm_driver(FbmSpec(H, 2, grid, seed=1), [0.25, 0.5])
    A, x = drv.areas, drv.path.values
    for sh in A.shifts:
        s, u, t = triples(sh, grid.n_points, low=sh)
        lhs = A.between(sh, s, t) - A.between(sh, s, u) - A.between(sh, u, t)
        outer = (x[u - sh] - x[s - sh])[:, :, None] * (x[t] - x[u])[:, None, :]
        assert np.max(np.abs(lhs - outer) / (1 + np.abs(outer))) <= 1e-12


def test_diagonal_identity_all_pairs():
    grid = Grid(0, 1, 1 / 128)
    x = sample_fbm(FbmSpec(0.4, 3, grid, seed=4))
    A = build_area(x, [0.0])
    I, J = np.triu_indices(grid.n_points, k=0)
    diag = np.diagonal(A.between(0, I, J), axis1=1, axis2=2)
    half = 0.5 * (x.values[J] - x.values[I]) ** 2
    assert np.max(np.abs(diag - half) / (1 + half)) <= 1e-12


def test_linear_path_area():
    grid = Grid(0, 1, 1 / 16)
    w = np.array([0.7, -1.3])
    A = build_area(GridPath(grid, grid.times[:, None] * w), [0.0])
    val = area_over(A, 0.0, 0.25, 0.875)
    np.testing.assert_allclose(val, 0.5 * np.outer(w, w) * 0.625 ** 2, rtol=1e-13)


def test_area_over_trivial_cases():
    grid = Grid(-0.25, 1, 1 / 64)
    drv = fbm_driver(FbmSpec(0.45, 2, grid, seed=3), [0.25])
    A = drv.areas
    assert np.all(area_over(A, -0.25, 0.5, 0.5) == 0)
    k = grid.index(0.5)
    np.testing.assert_allclose(area_over(A, -0.25, 0.5, 0.5 + grid.mesh), A.cell(16)[k],
                               rtol=0, atol=1e-15)
    with pytest.raises(ValueError):
        area_over(A, 0.0, 0.5, 0.25)
    with pytest.raises(ValueError):
        area_over(A, 0.0, 0.5, 1.5)
    with pytest.raises(ValueError):
        A.between(16, [3], [20])  # delayed path not defined before the grid start
    with pytest.raises(KeyError):
        A.shift_of(-0.5)


def test_build_rejects_bad_delays():
    grid = Grid(0, 1, 1 / 16)
    x = GridPath(grid, np.zeros((17, 2)))
    with pytest.raises(ValueError):
        build_area(x, [0.1])
    with pytest.raises(ValueError):
        build_area(x, [-0.1])


def _smooth_area_error(mesh):
    # area(0, 1)[0, 1] = int_0^1 sin(u) d(cos 2u) for v = 0
    grid = Grid(0, 1, mesh)
    A = build_area(smooth_path(grid), [0.0])
    got = area_over(A, 0.0, 0.0, 1.0)[0, 1]
    fine = np.linspace(0, 1, int(round(1 / mesh)) * 64 + 1)
    ref = cumulative_quadrature(lambda u: np.sin(u) * smooth_driver_derivative(u)[..., 1], fine)[-1]
    return abs(got - ref)


def test_smooth_area_matches_quadrature_at_second_order():
    e1, e2 = _smooth_area_error(1 / 64), _smooth_area_error(1 / 128)
    assert e1 <= 1 / 64 ** 2
    assert 3.5 <= e1 / e2 <= 4.5


def test_delayed_smooth_area():
    # area over [s, t] at v = -r is int_s^t (x^a_{u-r} - x^a_{s-r}) dx^b_u
    r, mesh = 0.25, 1 / 256
    grid = Grid(-r, 1, mesh)
    A = build_area(smooth_path(grid), [-r])
    got = area_over(A, -r, 0.0, 1.0)
    fine = np.linspace(0, 1, 256 * 64 + 1)
    x0 = smooth_driver(-r)
    ref = cumulative_quadrature(
        lambda u: (smooth_driver(u - r) - x0)[..., :, None] * smooth_driver_derivative(u)[..., None, :],
        fine)[-1]
    assert np.max(np.abs(got - ref)) <= mesh ** 2


def test_transposed_view_and_sidecar():
    grid = Grid(-0.25, 1, 1 / 32)
    A = fbm_driver(FbmSpec(0.45, 2, grid, seed=1), [0.25]).areas
    T = A.transposed()
    np.testing.assert_array_equal(T.between(8, [8], [40])[0], A.between(8, [8], [40])[0].T)
    np.testing.assert_array_equal(T.cell(8), np.swapaxes(A.cell(8), 1, 2))
    meta = json.loads(A.sidecar())
    assert meta["convention"] == CONVENTION and "inner-first" in CONVENTION
    assert meta["delays"] == [0.0, -0.25]


def test_antisymmetry_defect_at_zero_delay():
    # each trapezoid cell has symmetric part dx_k dx_k^T / 2 + its transpose, so Chen
    # assembly gives A + A^T = dx_st dx_st^T on every pair, for any path
    grid = Grid(0, 1, 1 / 128)
    x = sample_fbm(FbmSpec(0.4, 2, grid, seed=6))
    A = build_area(x, [0.0])
    I, J = np.triu_indices(grid.n_points, k=1)
    val = A.between(0, I, J)
    dx = x.values[J] - x.values[I]
    outer = dx[:, :, None] * dx[:, None, :]
    d = val + np.swapaxes(val, 1, 2) - outer
    assert np.max(np.abs(d) / (1 + np.abs(outer))) <= 1e-12


def test_area_holder_scan_is_finite():
    H = 0.45
    grid = Grid(-0.25, 1, 1 / 256)
    drv = fbm_driver(FbmSpec(H, 2, grid, seed=8), [0.25])
    i0, iT = grid.index(0.0), grid.n_cells
    for v in (0.0, -0.25):
        val = holder_seminorm2(restrict(drv.areas.increment(v), i0, iT), 2 * (H - 0.05))
        assert np.isfinite(val) and val > 0


def test_moment_exponent_brownian():
    rep = area_moment_check(0.5, 0.0, (0, 0), trials=1024, seed=1)
    assert abs(rep.exponent - 2.0) <= 0.3


def test_moment_check_needs_trials():
    with pytest.raises(ValueError):
        area_moment_check(0.5, 0.0, trials=100)
