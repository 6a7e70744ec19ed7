import numpy as np
import pytest

from roughdelay.increments import (Grid, GridPath, Increment3, delta1, delta2,
                                   holder_norm3_split, holder_seminorm2, increment_from_function)
from roughdelay.sewing import SewingError, cocycle_defect, dyadic_sums, lambda_op, sew

GRID = Grid(0.0, 1.0, 1 / 256)


def triples(seed, n=GRID.n_points, count=200):
    rng = np.random.default_rng(seed)
    return np.sort(rng.integers(0, n, size=(count, 3)), axis=1).T


def rel(a, b):
    return float(np.max(np.abs(a - b)) / (1 + np.max(np.abs(b))))


# twenty smooth germs, each with an analytic delta in C_3^{1+}
def family(k):
    a, b, c = 0.3 + 0.1 * k, 1.0 + 0.05 * k, 0.2 * (k % 5)
    mu = 1.2 + 0.04 * k
    return lambda s, t: (a * np.sin(b * s + c) * (t - s) + np.exp(-s) * np.abs(t - s) ** mu
                         + c * (t * t - s * s))


def test_sew_of_left_point_germ():
    g = increment_from_function(GRID, lambda s, t: s * (t - s))
    res = sew(g)
    # the grid sum is (1 - mesh) / 2; the limit 1/2 is reached up to one mesh
    assert res.value(0.0, 1.0) == pytest.approx((1 - GRID.mesh) / 2, abs=1e-14)
    assert abs(res.value(0.0, 1.0) - 0.5) <= GRID.mesh
    assert res.converged


def test_sew_of_exact_increment_telescopes():
    rng = np.random.default_rng(0)
    f = GridPath(GRID, rng.normal(size=(GRID.n_points, 2)).cumsum(axis=0))
    g = delta1(f)
    sums = dyadic_sums(g, 0, GRID.n_cells)
    np.testing.assert_allclose(sums, np.broadcast_to(f.values[-1] - f.values[0], sums.shape),
                               rtol=0, atol=1e-12)
    res = sew(g)
    s, _, t = triples(1)
    assert rel(res.value.at(s, t), g.at(s, t)) <= 1e-12
    assert res.converged


def test_sew_of_square_germ_halves_per_level():
    g = increment_from_function(GRID, lambda s, t: (t - s) ** 2)
    res = sew(g)
    ratios = np.asarray(res.deltas[1:]) / np.asarray(res.deltas[:-1])
    np.testing.assert_allclose(ratios, 0.5, rtol=1e-9)
    assert res.converged
    # the grid sum (t - s) mesh is the zero limit up to one mesh
    assert res.value(0.0, 1.0) == pytest.approx(GRID.mesh, rel=1e-12)


@pytest.mark.parametrize("mu", [1.25, 1.5, 2.0])
def test_dyadic_ratio_matches_regularity(mu):
    g = increment_from_function(GRID, lambda s, t: np.abs(t - s) ** mu)
    d = np.abs(np.diff(dyadic_sums(g, 0, GRID.n_cells)))
    assert np.all(d[1:] / d[:-1] <= 2 ** (1 - mu) + 0.1)


def test_divergent_sums_are_flagged():
    g = increment_from_function(GRID, lambda s, t: np.abs(t - s) ** 0.5)
    res = sew(g)
    assert not res.converged and res.ratio > 1
    with pytest.raises(SewingError):
        lambda_op(delta2(g))


def test_lambda_of_zero():
    h = Increment3(GRID, (), lambda s, u, t: np.zeros(len(s)))
    s, _, t = triples(2)
    assert np.all(lambda_op(h).at(s, t) == 0)


def test_lambda_of_delta_square():
    g = increment_from_function(GRID, lambda s, t: (t - s) ** 2)
    L = lambda_op(delta2(g))
    # Lambda(delta g) = g - sew(g); at (0, 1) that is 1 - mesh
    assert L(0.0, 1.0) == pytest.approx(1 - GRID.mesh, abs=1e-12)
    assert abs(L(0.0, 1.0) - 1.0) <= GRID.mesh


def test_lambda_rejects_non_cocycle():
    h = Increment3(GRID, (), lambda s, u, t: (GRID.times[u] - GRID.times[s]) ** 2
                   * (GRID.times[t] - GRID.times[u]))
    assert cocycle_defect(h) > 1e-10
    with pytest.raises(ValueError, match="h is not a cocycle"):
        lambda_op(h)


@pytest.mark.parametrize("k", range(20))
def test_lambda_inverts_delta(k):
    g = increment_from_function(GRID, family(k))
    h = delta2(g)
    L = lambda_op(h)
    s, u, t = triples(k)
    assert rel(delta2(L).at(s, u, t), h.at(s, u, t)) <= 1e-8
    # Lambda delta g + sew(g) = g
    S = sew(g).value
    assert rel(L.at(s, t) + S.at(s, t), g.at(s, t)) <= 1e-8


def test_lambda_with_base_point():
    g = increment_from_function(GRID, family(3))
    h = delta2(g)
    a = lambda_op(h).at([10, 50], [200, 256])
    b = lambda_op(h, base_point=0.0).at([10, 50], [200, 256])
    np.testing.assert_array_equal(a, b)
    c = lambda_op(h, base_point=0.5)
    s, u, t = triples(9)
    keep = s >= 128
    assert rel(delta2(c).at(s[keep], u[keep], t[keep]), h.at(s[keep], u[keep], t[keep])) <= 1e-8


def test_lambda_bound_with_slack():
    mu = 1.5
    g = increment_from_function(GRID, lambda s, t: np.abs(t - s) ** mu)
    h = delta2(g)
    lhs = holder_seminorm2(lambda_op(h), mu)
    bound = holder_norm3_split(h, mu / 2, mu / 2) / (2 ** mu - 2)
    assert lhs <= 2.0 * bound
