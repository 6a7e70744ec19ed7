"""The rough integral of a delayed controlled path against the driver.

The production form is the corrected Riemann sum over grid cells,

    (delta z)_{t_k t_{k+1}} = m_{t_k} dx_k + sum_q <zeta^{(q)}_{t_k}, x^2_{t_k t_{k+1}}(-r_q)>,

with the pairing ``<zeta, A> = sum_{a,b} zeta[..., b, a] A[a, b]`` (``b`` the
column of ``m``, ``a`` the delayed inner component).  The Lambda form adds
the sewing correction of the germ explicitly and is used for cross-checks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .controlled import CCP, DCP, dcp_norm, ccp_norm
from .increments import Increment3, delta1, holder_seminorm2, restrict
from .levy import DelayedArea
from .sewing import lambda_op


def _pair(dens: np.ndarray, area: np.ndarray, flip: bool) -> np.ndarray:
    """Batched pairing ``sum_{a,b} dens[t, ..., b, a] area[t, a, b]``."""
    if flip:
        area = np.swapaxes(area, -1, -2)
    return np.einsum("t...ba,tab->t...", dens, area)


def _check_areas(m: DCP, areas: DelayedArea):
    missing = [s for s in m.shifts if s not in areas.cells]
    if missing:
        raise ValueError(f"no delayed area for shifts {missing}")
    if areas.path.grid != m.driver.grid:
        raise ValueError("areas and integrand use different grids")


def cell_increments(m: DCP, areas: DelayedArea, flip: bool = False) -> np.ndarray:
    """Corrected Riemann terms on each cell of ``m``'s window, shape ``(cells, *rows)``."""
    _check_areas(m, areas)
    lo, npts = m.lo, m.n_points
    x = m.driver.values
    dx = np.diff(x[lo:lo + npts], axis=0)
    inc = np.einsum("t...b,tb->t...", m.value[:-1], dx)
    for q, s in enumerate(m.shifts):
        A = areas.cell(s)[lo:lo + npts - 1]
        inc = inc + _pair(m.densities[q][:-1], A, flip)
    return inc


def rough_integral(m: DCP, areas: DelayedArea, initial, mode: str = "riemann",
                   flip: bool = False) -> CCP:
    """``z_a = initial``, ``delta z = J(m dx)``; returns the CCP ``(z, m)``.

    ``m`` has values ``(points, *rows, d)``; the integral has values
    ``(points, *rows)`` and density ``m``.  ``flip`` reads every area with
    its indices swapped (for guard tests only).
    """
    initial = np.asarray(initial, dtype=float)
    rows = m.vshape[:-1]
    if initial.shape != rows:
        raise ValueError(f"initial value must have shape {rows}, got {initial.shape}")
    if mode == "riemann":
        inc = cell_increments(m, areas, flip)
        z = np.empty((m.n_points,) + rows)
        z[0] = initial
        z[1:] = initial + np.cumsum(inc, axis=0)
    elif mode == "lambda":
        z = initial + _lambda_increments(m, areas, flip)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return CCP(m.driver, m.lo, z, m.value)


def _germ(m: DCP, areas: DelayedArea, flip: bool):
    """``g_{st} = m_s dx_st + sum_q <zeta_s, x^2_st>`` on local index pairs."""
    x = m.driver.values
    lo = m.lo

    def g(i, j):
        out = np.einsum("t...b,tb->t...", m.value[i], x[lo + j] - x[lo + i])
        for q, s in enumerate(m.shifts):
            out = out + _pair(m.densities[q][i], areas.between(s, lo + i, lo + j), flip)
        return out
    return g


def _lambda_increments(m: DCP, areas: DelayedArea, flip: bool) -> np.ndarray:
    """``(delta z)_{a t} = g_{at} + Lambda_{at}(rho dx + sum_q delta zeta^q . x^2)``."""
    _check_areas(m, areas)
    x = m.driver.values
    lo = m.lo
    rows = m.vshape[:-1]
    rem = m.remainder_at

    def h2(s, u, t):
        out = np.einsum("t...b,tb->t...", rem(s, u), x[lo + t] - x[lo + u])
        for q, sh in enumerate(m.shifts):
            dz = m.densities[q][u] - m.densities[q][s]
            out = out + _pair(dz, areas.between(sh, lo + u, lo + t), flip)
        return out

    h = Increment3(m.grid, rows, h2)
    lam = lambda_op(h)
    g = _germ(m, areas, flip)
    J = np.arange(m.n_points, dtype=np.int64)
    I = np.zeros_like(J)
    return g(I, J) + lam.at(I, J)


@dataclass(frozen=True)
class LadderRow:
    level: int
    cells: int
    value: np.ndarray
    difference: float
    error: float


def corrected_sum(m: DCP, areas: DelayedArea, points, flip: bool = False) -> np.ndarray:
    """Corrected Riemann sum over the partition ``points`` (local indices)."""
    pts = np.asarray(points, dtype=np.int64)
    g = _germ(m, areas, flip)
    return np.sum(g(pts[:-1], pts[1:]), axis=0)


def riemann_convergence_study(m: DCP, areas: DelayedArea, lo: int | None = None,
                              hi: int | None = None, reference=None, flip: bool = False):
    """Corrected sums on nested dyadic partitions of ``[lo, hi]`` (local indices).

    Returns rows from the coarsest partition (one cell) to the grid.  Each row
    holds the change from the previous level and, when ``reference`` is
    given, the error against it.
    """
    lo = 0 if lo is None else lo
    hi = m.n_points - 1 if hi is None else hi
    span = hi - lo
    levels = int(np.log2(span))
    if 2 ** levels != span:
        raise ValueError("interval length must be a power of two in grid cells")
    rows, prev = [], None
    for L in range(levels + 1):
        pts = lo + np.arange(0, span + 1, span // 2 ** L)
        val = corrected_sum(m, areas, pts, flip)
        diff = np.nan if prev is None else float(np.max(np.abs(val - prev)))
        err = np.nan if reference is None else float(np.max(np.abs(val - reference)))
        rows.append(LadderRow(L, 2 ** L, val, diff, err))
        prev = val
    return rows


def empirical_order(mesh, errors) -> float:
    """Least-squares slope of log error against log mesh."""
    mesh = np.asarray(mesh, dtype=float)
    errors = np.asarray(errors, dtype=float)
    return float(np.polyfit(np.log(mesh), np.log(errors), 1)[0])


@dataclass(frozen=True)
class StabilityReport:
    integral_norm: float
    m_sup: float
    m_norm: float
    c_int: float
    span: float
    envelope_ratio: float


def stability_probe(m: DCP, areas: DelayedArea, initial, kappa: float,
                    gamma: float) -> StabilityReport:
    """Both sides of the integral bound, up to its unknown constant.

    ``envelope_ratio = N[J(m dx)] / (|m|_inf + c_int (b - a)^{gamma - kappa} N[m])``
    with ``c_int = |x|_gamma + sum_q |x^2(-r_q)|_{2 gamma}`` measured on the
    window.
    """
    z = rough_integral(m, areas, initial)
    nz = ccp_norm(z, kappa).total
    nm = dcp_norm(m, kappa).total
    msup = float(np.max(np.abs(m.value)))
    grid = m.grid
    x = m.driver
    lo, hi = m.lo, m.lo + m.n_points - 1
    xw = x.restrict(lo, hi)
    c_int = holder_seminorm2(delta1(xw), gamma)
    for s in m.shifts:
        A = areas.increment(-s * grid.mesh)
        c_int += holder_seminorm2(restrict(A, lo, hi), 2 * gamma)
    span = grid.t_max - grid.t_min
    denom = msup + c_int * span ** (gamma - kappa) * nm
    return StabilityReport(nz, msup, nm, c_int, span, nz / denom if denom > 0 else 0.0)

