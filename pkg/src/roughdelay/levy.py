"""Delayed Lévy areas built on the grid.

For a delay ``v = -shift * mesh`` the one-cell area is the trapezoid product

    A_v[k][a, b] = 1/2 (x^a_{k+1-shift} - x^a_{k-shift}) (x^b_{k+1} - x^b_k),

first index the delayed inner component, second the outer integrator.
Multi-cell values are assembled by Chen's relation, which turns into a
prefix sum:

    area(i, j) = P[j] - P[i] - x^v_i (x_j - x_i)^T,
    P[m]       = sum_{k < m} (A_v[k] + x^v_k (x_{k+1} - x_k)^T),

so ``area(s,t) - area(s,u) - area(u,t) = (x^v_u - x^v_s)(x_t - x_u)^T`` holds
up to rounding at every grid triple.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .increments import Grid, GridPath, Increment2

CONVENTION = "inner-first: area[a][b] ~ int (dx^a)_{s+v,u+v} dx^b_u"


def _cell_and_prefix(values: np.ndarray, shift: int):
    """Per-cell areas and Chen prefix sums for a batch of paths.

    ``values`` has shape ``(..., n_points, d)``.  Cells ``k < shift`` are not
    covered by the delayed path and are set to NaN.
    """
    n = values.shape[-2]
    dx = np.diff(values, axis=-2)
    lead = values.shape[:-2]
    d = values.shape[-1]
    cells = np.full(lead + (n - 1, d, d), np.nan)
    prefix = np.full(lead + (n, d, d), np.nan)
    if shift >= n - 1:
        return cells, prefix
    dxv = dx[..., : n - 1 - shift, :]
    xv = values[..., : n - 1 - shift, :]
    dxo = dx[..., shift:, :]
    cells[..., shift:, :, :] = 0.5 * dxv[..., :, None] * dxo[..., None, :]
    terms = cells[..., shift:, :, :] + xv[..., :, None] * dxo[..., None, :]
    prefix[..., shift, :, :] = 0.0
    prefix[..., shift + 1:, :, :] = np.cumsum(terms, axis=-3)
    return cells, prefix


def chen_area(values: np.ndarray, prefix: np.ndarray, shift: int, I, J) -> np.ndarray:
    """Chen-assembled areas over index pairs ``(I, J)``; batch dims lead."""
    I = np.asarray(I)
    J = np.asarray(J)
    xv_i = values[..., I - shift, :]
    dx = values[..., J, :] - values[..., I, :]
    return prefix[..., J, :, :] - prefix[..., I, :, :] - xv_i[..., :, None] * dx[..., None, :]


@dataclass(frozen=True)
class DelayedArea:
    """Areas ``x^2(v)`` of one path for a finite set of delays ``v <= 0``."""

    path: GridPath
    shifts: tuple
    cells: dict
    prefix: dict
    flipped: bool = False

    @property
    def grid(self) -> Grid:
        return self.path.grid

    @property
    def delays(self) -> tuple:
        return tuple(-s * self.grid.mesh for s in self.shifts)

    @property
    def dim(self) -> int:
        return self.path.values.shape[1]

    def shift_of(self, v: float) -> int:
        s = self.grid.steps(-v)
        if s not in self.cells:
            raise KeyError(f"no area stored for delay v = {v}")
        return s

    def cell(self, shift: int) -> np.ndarray:
        """Per-cell matrices ``(n_cells, d, d)`` for the given shift."""
        c = self.cells[shift]
        return np.swapaxes(c, -1, -2) if self.flipped else c

    def between(self, shift: int, I, J) -> np.ndarray:
        """Areas over grid index pairs ``(I, J)`` with ``I <= J``."""
        if shift not in self.prefix:
            raise KeyError(f"no area stored for shift {shift}")
        I = np.atleast_1d(np.asarray(I, dtype=np.int64))
        J = np.atleast_1d(np.asarray(J, dtype=np.int64))
        if np.any(I < shift) or np.any(J < shift) or np.any(J >= self.grid.n_points):
            raise ValueError("time outside the range covered by this delayed area")
        out = chen_area(self.path.values, self.prefix[shift], shift, I, J)
        return np.swapaxes(out, -1, -2) if self.flipped else out

    def increment(self, v: float) -> Increment2:
        shift = self.shift_of(v)
        d = self.dim
        return Increment2(self.grid, (d, d), lambda i, j: self.between(shift, i, j))

    def transposed(self) -> "DelayedArea":
        """The same data read with the index convention flipped (outer-first)."""
        return DelayedArea(self.path, self.shifts, self.cells, self.prefix, not self.flipped)

    def sidecar(self) -> str:
        return json.dumps({"convention": CONVENTION, "flipped": self.flipped,
                           "delays": list(self.delays), "mesh": self.grid.mesh}, indent=2)


def build_area(path: GridPath, delays) -> DelayedArea:
    """Delayed areas of ``path`` for every ``v`` in ``delays`` (each ``v <= 0``)."""
    if path.values.ndim != 2:
        raise ValueError("driver path must be vector valued")
    shifts = []
    for v in delays:
        if v > 0:
            raise ValueError(f"delays are non-positive shifts, got v = {v}")
        shifts.append(path.grid.steps(-float(v)))
    shifts = tuple(sorted(set(shifts)))
    cells, prefix = {}, {}
    for s in shifts:
        c, p = _cell_and_prefix(path.values, s)
        c.setflags(write=False)
        p.setflags(write=False)
        cells[s], prefix[s] = c, p
    return DelayedArea(path, shifts, cells, prefix)


def area_over(area: DelayedArea, v: float, s: float, t: float) -> np.ndarray:
    """The matrix ``x^2_{st}(v)`` for grid times ``s <= t``."""
    if t < s:
        raise ValueError("need s <= t")
    g = area.grid
    i, j = g.index(s), g.index(t)
    return area.between(area.shift_of(v), i, j)[0]


@dataclass(frozen=True)
class MomentReport:
    lags: np.ndarray
    second_moments: np.ndarray
    exponent: float
    exponent_stderr: float
    diagonal_constant: float


def area_moment_check(hurst: float, v: float, pair=(0, 0), trials: int = 1024,
                      mesh: float = 1 / 128, horizon: float = 1.0, seed: int = 0,
                      lags=None) -> MomentReport:
    """Monte-Carlo second moments of ``x^2_{st}(v)[pair]`` over a ladder of lags.

    Windows ``[s, s + lag]`` with ``s >= 0`` are pooled over the whole grid
    and over all trials.  The exponent is the least-squares slope of
    log-moment against log-lag; the constant is the mean of
    ``moment / lag^{4H}`` over the ladder.
    """
    from .fbm import FbmSpec, sample_fbm_ensemble

    if trials < 256:
        raise ValueError("need at least 256 trials")
    grid = Grid(v if v < 0 else 0.0, horizon, mesh)
    dim = max(pair) + 1
    spec = FbmSpec(hurst, dim, grid, seed)
    X = sample_fbm_ensemble(spec, trials)
    shift = grid.steps(-v) if v < 0 else 0
    _, prefix = _cell_and_prefix(X, shift)
    i0 = grid.index(0.0)
    n_cells = grid.n_points - 1 - i0
    if lags is None:
        # start at 4 cells: one-cell areas carry the trapezoid bias off the diagonal
        lags = [2 ** p for p in range(2, int(np.log2(n_cells)) - 1)]
    lags = np.asarray(lags, dtype=np.int64)
    a, b = pair
    moments = []
    for lag in lags:
        I = np.arange(i0, grid.n_points - lag, dtype=np.int64)
        vals = chen_area(X, prefix, shift, I, I + lag)[..., a, b]
        moments.append(float(np.mean(vals ** 2)))
    moments = np.asarray(moments)
    widths = lags * mesh
    fit = stats.linregress(np.log(widths), np.log(moments))
    const = float(np.mean(moments / widths ** (4 * hurst)))
    return MomentReport(lags, moments, float(fit.slope), float(fit.stderr), const)
