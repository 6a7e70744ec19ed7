"""Classical oracles for smooth drivers.

When the driver is smooth the rough integral is the Riemann-Stieltjes integral
and the delay equation is the ordinary delay ODE ``y' = sigma(y, s(y)) x'``.
These references are computed by Gauss-Legendre quadrature and by a
fourth-order Runge-Kutta march with cubic Hermite dense output.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .fields import SigmaField
from .increments import Grid, GridPath


def smooth_driver(t):
    """``x_t = (sin t, cos 2t)``."""
    t = np.asarray(t, dtype=float)
    return np.stack([np.sin(t), np.cos(2 * t)], axis=-1)


def smooth_driver_derivative(t):
    t = np.asarray(t, dtype=float)
    return np.stack([np.cos(t), -2 * np.sin(2 * t)], axis=-1)


def smooth_path(grid: Grid) -> GridPath:
    return GridPath(grid, smooth_driver(grid.times))


def cumulative_quadrature(f: Callable[[np.ndarray], np.ndarray], times: np.ndarray,
                          nodes: int = 8) -> np.ndarray:
    """``int_{times[0]}^{times[k]} f(u) du`` for every ``k`` by Gauss-Legendre per cell."""
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    a, b = times[:-1], times[1:]
    half = 0.5 * (b - a)
    u = (0.5 * (a + b))[:, None] + half[:, None] * xg[None, :]
    vals = f(u.ravel())
    vals = vals.reshape(u.shape + vals.shape[1:])
    cell = np.einsum("cg...,g->c...", vals, wg) * half.reshape((-1,) + (1,) * (vals.ndim - 2))
    out = np.zeros((len(times),) + cell.shape[1:])
    out[1:] = np.cumsum(cell, axis=0)
    return out


def dde_reference(sigma: SigmaField, delays: Sequence[float], xi: Callable, horizon: float,
                  step: float = 2.0 ** -12,
                  driver_derivative: Callable = smooth_driver_derivative):
    """RK4 solution of ``y' = sigma(y_t, y_{t-r_1}, ...) x'_t`` with ``y = xi`` on ``[-r_k, 0]``.

    Every delay and the horizon must be multiples of ``step``.  Returns
    ``(times, values)`` on ``[0, horizon]`` with spacing ``step``.
    """
    n_steps = int(round(horizon / step))
    shifts = [int(round(r / step)) for r in delays]
    if any(abs(s * step - r) > 1e-12 for s, r in zip(shifts, delays)) or min(shifts, default=1) < 1:
        raise ValueError("delays must be positive multiples of the step")
    n = sigma.n
    y = np.zeros((n_steps + 1, n))
    f = np.zeros((n_steps + 1, n))
    y[0] = np.asarray(xi(0.0), dtype=float)

    def rhs(t, state, delayed):
        u = np.column_stack([state] + delayed)
        return sigma.eval(u) @ driver_derivative(t)

    def delayed_at(k, frac):
        """Delayed states at time ``(k + frac) * step - r`` for each delay."""
        out = []
        for s in shifts:
            j = k - s
            t = (j + frac) * step
            if j < 0:
                out.append(np.asarray(xi(t), dtype=float))
            elif frac == 0.0:
                out.append(y[j])
            elif frac == 1.0:
                out.append(y[j + 1])
            else:
                out.append(0.5 * (y[j] + y[j + 1]) + step / 8 * (f[j] - f[j + 1]))
        return out

    for k in range(n_steps):
        t = k * step
        k1 = rhs(t, y[k], delayed_at(k, 0.0))
        f[k] = k1
        dh, d1 = delayed_at(k, 0.5), delayed_at(k, 1.0)
        k2 = rhs(t + step / 2, y[k] + step / 2 * k1, dh)
        k3 = rhs(t + step / 2, y[k] + step / 2 * k2, dh)
        k4 = rhs(t + step, y[k] + step * k3, d1)
        y[k + 1] = y[k] + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    f[n_steps] = rhs(n_steps * step, y[n_steps], delayed_at(n_steps, 0.0))
    return step * np.arange(n_steps + 1), y
