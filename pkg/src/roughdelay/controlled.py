"""Controlled paths, delayed controlled paths and the composition map ``T_sigma``.

A controlled path is stored as its values and densities on a run of
consecutive driver-grid points starting at index ``lo``.  Remainders are
never stored; they are derived from the decomposition

    (delta z)_{st} = sum_q zeta^{(q)}_s (x_{t - r_q} - x_{s - r_q}) + rho_{st}.

Densities have shape ``(points, *value_shape, d)``: the last axis pairs with
the driver increment.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import SigmaField
from .increments import Grid, GridPath, Increment2, holder_seminorm2, sup_norm


def _contract(dens: np.ndarray, dx: np.ndarray) -> np.ndarray:
    """``dens[..., a] * dx[a]`` batched over the leading axis."""
    return np.einsum("t...a,ta->t...", dens, dx)


@dataclass(frozen=True)
class DCP:
    """Delayed controlled path: ``value`` ``(m, *vshape)``, ``densities``
    ``(len(shifts), m, *vshape, d)`` on the driver grid from index ``lo``."""

    driver: GridPath
    lo: int
    value: np.ndarray
    densities: np.ndarray
    shifts: tuple = (0,)

    def __post_init__(self):
        v = np.asarray(self.value, dtype=float)
        z = np.asarray(self.densities, dtype=float)
        d = self.driver.values.shape[1]
        if z.shape != (len(self.shifts),) + v.shape + (d,):
            raise ValueError(f"densities shape {z.shape} does not match value {v.shape}, "
                             f"{len(self.shifts)} delays and driver dimension {d}")
        if self.lo - max(self.shifts) < 0 or self.lo + len(v) > self.driver.grid.n_points:
            raise ValueError("controlled path is not covered by its driver")
        object.__setattr__(self, "value", v)
        object.__setattr__(self, "densities", z)
        object.__setattr__(self, "shifts", tuple(int(s) for s in self.shifts))

    @property
    def n_points(self) -> int:
        return self.value.shape[0]

    @property
    def vshape(self) -> tuple:
        return self.value.shape[1:]

    @property
    def grid(self) -> Grid:
        return self.driver.grid.sub(self.lo, self.lo + self.n_points - 1)

    @property
    def initial(self) -> np.ndarray:
        return self.value[0]

    def remainder_at(self, i, j) -> np.ndarray:
        """``rho`` at local index pairs."""
        x = self.driver.values
        out = self.value[j] - self.value[i]
        for q, s in enumerate(self.shifts):
            dx = x[self.lo + j - s] - x[self.lo + i - s]
            out = out - _contract(self.densities[q][i], dx)
        return out

    @property
    def remainder(self) -> Increment2:
        return Increment2(self.grid, self.vshape, self.remainder_at)

    @property
    def increments(self) -> Increment2:
        v = self.value
        return Increment2(self.grid, self.vshape, lambda i, j: v[j] - v[i])

    def density(self, q: int) -> Increment2:
        z = self.densities[q]
        return Increment2(self.grid, z.shape[1:], lambda i, j: z[j] - z[i])

    def __sub__(self, other: "DCP") -> "DCP":
        if (other.lo, other.shifts, other.value.shape) != (self.lo, self.shifts, self.value.shape):
            raise ValueError("paths live on different windows")
        return DCP(self.driver, self.lo, self.value - other.value,
                   self.densities - other.densities, self.shifts)

    def scaled(self, c: float) -> "DCP":
        return DCP(self.driver, self.lo, c * self.value, c * self.densities, self.shifts)


@dataclass(frozen=True)
class CCP:
    """Classical controlled path: a single density paired with the undelayed driver."""

    driver: GridPath
    lo: int
    value: np.ndarray
    density: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.value, dtype=float)
        z = np.asarray(self.density, dtype=float)
        d = self.driver.values.shape[1]
        if z.shape != v.shape + (d,):
            raise ValueError(f"density shape {z.shape} does not match value {v.shape}")
        if self.lo < 0 or self.lo + len(v) > self.driver.grid.n_points:
            raise ValueError("controlled path is not covered by its driver")
        object.__setattr__(self, "value", v)
        object.__setattr__(self, "density", z)

    def as_dcp(self, shifts=(0,)) -> DCP:
        """The same path seen as a DCP with zero densities on the extra delays."""
        shifts = tuple(shifts)
        if shifts[0] != 0:
            raise ValueError("the first delay must be 0")
        z = np.zeros((len(shifts),) + self.density.shape)
        z[0] = self.density
        return DCP(self.driver, self.lo, self.value, z, shifts)

    @property
    def n_points(self) -> int:
        return self.value.shape[0]

    @property
    def grid(self) -> Grid:
        return self.driver.grid.sub(self.lo, self.lo + self.n_points - 1)

    @property
    def initial(self) -> np.ndarray:
        return self.value[0]

    @property
    def remainder(self) -> Increment2:
        return self.as_dcp().remainder

    @property
    def increments(self) -> Increment2:
        return self.as_dcp().increments

    def restrict(self, lo: int, hi: int) -> "CCP":
        """Sub-path between driver-grid indices ``lo`` and ``hi`` inclusive."""
        a, b = lo - self.lo, hi - self.lo
        if a < 0 or b >= self.n_points or b < a:
            raise ValueError(f"[{lo}, {hi}] is not inside the path's window")
        return CCP(self.driver, lo, self.value[a:b + 1], self.density[a:b + 1])

    def __sub__(self, other: "CCP") -> "CCP":
        if (other.lo, other.value.shape) != (self.lo, self.value.shape):
            raise ValueError("paths live on different windows")
        return CCP(self.driver, self.lo, self.value - other.value, self.density - other.density)


@dataclass(frozen=True)
class CPNorm:
    kappa: float
    value_seminorm: float
    remainder_seminorm: float
    density_sup: float
    density_seminorm: float

    @property
    def total(self) -> float:
        return (self.value_seminorm + self.remainder_seminorm
                + self.density_sup + self.density_seminorm)


def _check_kappa(kappa: float, gamma: float | None):
    top = 1.0 if gamma is None else gamma
    if not 1 / 3 < kappa <= top:
        raise ValueError(f"kappa must lie in (1/3, {top}], got {kappa}")


def dcp_norm(z: DCP, kappa: float, gamma: float | None = None) -> CPNorm:
    """The four suprema of the delayed controlled path norm (densities summed over delays)."""
    _check_kappa(kappa, gamma)
    if z.n_points < 2:
        return CPNorm(kappa, 0.0, 0.0, sum(sup_norm(q) for q in z.densities), 0.0)
    vs = holder_seminorm2(z.increments, kappa)
    rs = holder_seminorm2(z.remainder, 2 * kappa)
    ds = sum(sup_norm(z.densities[q]) for q in range(len(z.shifts)))
    dss = sum(holder_seminorm2(z.density(q), kappa) for q in range(len(z.shifts)))
    return CPNorm(kappa, vs, rs, ds, dss)


def ccp_norm(z: CCP, kappa: float, gamma: float | None = None) -> CPNorm:
    return dcp_norm(z.as_dcp(), kappa, gamma)


def t_sigma(z: CCP, z_tilde: CCP, sigma: SigmaField, shifts) -> DCP:
    """``T_sigma(z, z~)_t = sigma(z_t, z~_{t-r_1}, ..., z~_{t-r_k})`` with its densities.

    ``shifts`` are the delays in grid steps, ``(0, s_1, ..., s_k)``.  The
    densities follow the chain rule, contracting the Jacobian over the state
    index: ``zeta^(i)[l, b, a] = sum_m J_i[l, b, m] zeta_src[m, a]`` with
    ``zeta_src = zeta`` for ``i = 0`` and ``z~``'s density at ``t - r_i`` otherwise.
    """
    shifts = tuple(int(s) for s in shifts)
    if shifts[0] != 0 or len(shifts) != sigma.k + 1:
        raise ValueError("shifts must be (0, s_1, ..., s_k) matching sigma")
    if z.driver is not z_tilde.driver and z.driver.grid != z_tilde.driver.grid:
        raise ValueError("paths are driven by different grids")
    m = z.n_points
    idx = np.arange(z.lo, z.lo + m)
    u = np.empty((m, sigma.n, sigma.k + 1))
    u[:, :, 0] = z.value
    src = [z.density]
    for i, s in enumerate(shifts[1:], start=1):
        loc = idx - s - z_tilde.lo
        if loc.min() < 0 or loc.max() >= z_tilde.n_points:
            raise ValueError(f"z_tilde does not cover the times delayed by {s} steps")
        u[:, :, i] = z_tilde.value[loc]
        src.append(z_tilde.density[loc])
    value = sigma.eval(u)
    dens = np.stack([np.einsum("tlbm,tma->tlba", sigma.jac(u, i), src[i])
                     for i in range(sigma.k + 1)])
    return DCP(z.driver, z.lo, value, dens, shifts)


@dataclass(frozen=True)
class LipschitzReport:
    ratio: float
    difference_norm: float
    input_norm: float
    C: float
    skipped: bool


def t_sigma_lipschitz_probe(z1: CCP, z2: CCP, z_tilde: CCP, sigma: SigmaField, shifts,
                            kappa: float) -> LipschitzReport:
    """``N[T(z1, z~) - T(z2, z~)] / N[z1 - z2]`` and ``C = N[z~] + N[z1] + N[z2]``.

    The bound envelope is ``c (1 + C)^2`` with an unknown constant ``c``; the
    caller fits it.  Equal inputs give a skipped report with ratio 0.
    """
    if z1.lo != z2.lo or z1.n_points != z2.n_points:
        raise ValueError("z1 and z2 must share their window")
    if not np.allclose(z1.initial, z2.initial, rtol=0, atol=1e-14):
        raise ValueError("z1 and z2 must share their initial value")
    diff_in = ccp_norm(z1 - z2, kappa).total
    C = ccp_norm(z_tilde, kappa).total + ccp_norm(z1, kappa).total + ccp_norm(z2, kappa).total
    if diff_in == 0.0:
        return LipschitzReport(0.0, 0.0, 0.0, C, True)
    diff_out = dcp_norm(t_sigma(z1, z_tilde, sigma, shifts) - t_sigma(z2, z_tilde, sigma, shifts),
                        kappa).total
    return LipschitzReport(diff_out / diff_in, diff_out, diff_in, C, False)


def taylor_remainder_bound(z: CCP, z_tilde: CCP, sigma: SigmaField, shifts, I, J) -> np.ndarray:
    """Pointwise ``1/2 |sigma''| (|dz_st|^2 + sum_i |dz~_{s-r_i,t-r_i}|^2)`` at local pairs."""
    I = np.asarray(I)
    J = np.asarray(J)
    total = np.max(np.abs(z.value[J] - z.value[I]).reshape(len(I), -1), axis=1) ** 2
    for s in shifts[1:]:
        a = z.lo + I - s - z_tilde.lo
        b = z.lo + J - s - z_tilde.lo
        total = total + np.max(np.abs(z_tilde.value[b] - z_tilde.value[a]).reshape(len(I), -1),
                               axis=1) ** 2
    return 0.5 * sigma.second * total


def taylor_part(z: CCP, z_tilde: CCP, sigma: SigmaField, shifts, I, J) -> np.ndarray:
    """``sigma(U_t) - sigma(U_s) - sum_i J_i(U_s) (U_t - U_s)[:, i]`` at local pairs."""
    I = np.asarray(I)
    J = np.asarray(J)
    idx = np.arange(z.lo, z.lo + z.n_points)
    u = np.empty((z.n_points, sigma.n, sigma.k + 1))
    u[:, :, 0] = z.value
    for i, s in enumerate(shifts[1:], start=1):
        u[:, :, i] = z_tilde.value[idx - s - z_tilde.lo]
    out = sigma.eval(u[J]) - sigma.eval(u[I])
    for i in range(sigma.k + 1):
        out -= np.einsum("tlbm,tm->tlb", sigma.jac(u[I], i), u[J, :, i] - u[I, :, i])
    return out
