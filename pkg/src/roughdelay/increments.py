"""Uniform grids, grid paths and k-increments.

A 1-increment (``Increment2``) is a function of two grid times that vanishes
on the diagonal, a 2-increment (``Increment3``) a function of three grid times
vanishing when two consecutive arguments coincide.  Increments are stored as
evaluation rules over integer grid indices, never as dense tables; the only
global scans are the Hölder norms below.

All values use the entrywise max norm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

PAIR_CAP = 2_000_000
NEAR_DIAGONAL = 64
NEAR_DIAGONAL_TRIPLES = 16
_CHUNK = 200_000


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``t_min, t_min + mesh, ..., t_max``."""

    t_min: float
    t_max: float
    mesh: float

    def __post_init__(self):
        if not self.mesh > 0:
            raise ValueError(f"mesh must be positive, got {self.mesh}")
        if self.t_max < self.t_min:
            raise ValueError("t_max < t_min")
        cells = (self.t_max - self.t_min) / self.mesh
        if abs(cells - round(cells)) > 1e-9 * max(1.0, cells):
            raise ValueError(
                f"span [{self.t_min}, {self.t_max}] is not a multiple of mesh {self.mesh}")

    @classmethod
    def from_cells(cls, t_min: float, mesh: float, n_cells: int) -> "Grid":
        return cls(float(t_min), float(t_min + n_cells * mesh), float(mesh))

    @property
    def n_cells(self) -> int:
        return int(round((self.t_max - self.t_min) / self.mesh))

    @property
    def n_points(self) -> int:
        return self.n_cells + 1

    @property
    def times(self) -> np.ndarray:
        return self.t_min + self.mesh * np.arange(self.n_points)

    def steps(self, r: float) -> int:
        """Number of mesh steps in the duration ``r``; raises if ``r`` is off-grid."""
        q = r / self.mesh
        k = int(round(q))
        if abs(q - k) > 1e-9 * max(1.0, abs(q)):
            raise ValueError(f"{r} is not an integer multiple of mesh {self.mesh}")
        return k

    def index(self, t) -> np.ndarray | int:
        """Grid index of time(s) ``t``; raises on off-grid or out-of-range times."""
        q = (np.asarray(t, dtype=float) - self.t_min) / self.mesh
        k = np.rint(q).astype(np.int64)
        if np.any(np.abs(q - k) > 1e-9 * np.maximum(1.0, np.abs(q))):
            raise ValueError(f"time(s) {t} not on the grid")
        if np.any(k < 0) or np.any(k > self.n_cells):
            raise ValueError(f"time(s) {t} outside [{self.t_min}, {self.t_max}]")
        return int(k) if k.ndim == 0 else k

    def sub(self, lo: int, hi: int) -> "Grid":
        """Sub-grid between indices ``lo`` and ``hi`` inclusive."""
        if not 0 <= lo <= hi <= self.n_cells:
            raise ValueError(f"bad index range [{lo}, {hi}]")
        return Grid.from_cells(self.t_min + lo * self.mesh, self.mesh, hi - lo)


@dataclass(frozen=True)
class GridPath:
    """A path sampled on every point of ``grid``; ``values[k]`` has shape ``shape``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape[0] != self.grid.n_points:
            raise ValueError(
                f"values has {v.shape[0]} rows, grid has {self.grid.n_points} points")
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple:
        return self.values.shape[1:]

    @property
    def dim(self) -> int:
        return int(np.prod(self.shape)) if self.shape else 1

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def at(self, t):
        return self.values[self.grid.index(t)]

    def restrict(self, lo: int, hi: int) -> "GridPath":
        return GridPath(self.grid.sub(lo, hi), self.values[lo:hi + 1])

    def sup(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


def _as_index(grid: Grid, s):
    return grid.index(s)


@dataclass(frozen=True)
class Increment2:
    """A 1-increment ``(s, t) -> value`` evaluated on grid indices.

    ``rule(i, j)`` receives integer index arrays of equal length and returns
    an array of shape ``(len(i), *shape)``.
    """

    grid: Grid
    shape: tuple
    rule: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def at(self, i, j) -> np.ndarray:
        i = np.atleast_1d(np.asarray(i, dtype=np.int64))
        j = np.atleast_1d(np.asarray(j, dtype=np.int64))
        i, j = np.broadcast_arrays(i, j)
        return np.asarray(self.rule(i, j), dtype=float).reshape((len(i),) + tuple(self.shape))

    def __call__(self, s, t) -> np.ndarray:
        """Value at grid times ``(s, t)`` (scalars give a single value)."""
        scalar = np.ndim(s) == 0 and np.ndim(t) == 0
        out = self.at(_as_index(self.grid, s), _as_index(self.grid, t))
        return out[0] if scalar else out

    def _combine(self, other, op) -> "Increment2":
        if isinstance(other, Increment2):
            if other.shape != self.shape:
                raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
            return Increment2(self.grid, self.shape,
                              lambda i, j: op(self.at(i, j), other.at(i, j)))
        return NotImplemented

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __neg__(self):
        return Increment2(self.grid, self.shape, lambda i, j: -self.at(i, j))

    def __mul__(self, c):
        if not np.isscalar(c):
            return NotImplemented
        return Increment2(self.grid, self.shape, lambda i, j: c * self.at(i, j))

    __rmul__ = __mul__


@dataclass(frozen=True)
class Increment3:
    """A 2-increment ``(s, u, t) -> value`` evaluated on grid indices."""

    grid: Grid
    shape: tuple
    rule: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]

    def at(self, i, u, j) -> np.ndarray:
        arrs = [np.atleast_1d(np.asarray(a, dtype=np.int64)) for a in (i, u, j)]
        i, u, j = np.broadcast_arrays(*arrs)
        return np.asarray(self.rule(i, u, j), dtype=float).reshape((len(i),) + tuple(self.shape))

    def __call__(self, s, u, t) -> np.ndarray:
        scalar = all(np.ndim(a) == 0 for a in (s, u, t))
        g = self.grid
        out = self.at(g.index(s), g.index(u), g.index(t))
        return out[0] if scalar else out

    def __add__(self, other):
        if not isinstance(other, Increment3) or other.shape != self.shape:
            return NotImplemented
        return Increment3(self.grid, self.shape,
                          lambda i, u, j: self.at(i, u, j) + other.at(i, u, j))

    def __sub__(self, other):
        if not isinstance(other, Increment3) or other.shape != self.shape:
            return NotImplemented
        return Increment3(self.grid, self.shape,
                          lambda i, u, j: self.at(i, u, j) - other.at(i, u, j))

    def __mul__(self, c):
        if not np.isscalar(c):
            return NotImplemented
        return Increment3(self.grid, self.shape, lambda i, u, j: c * self.at(i, u, j))

    __rmul__ = __mul__


def increment_from_function(grid: Grid, fn, shape=()) -> Increment2:
    """Wrap a function of *times* ``fn(s, t)`` (vectorized) as an Increment2."""
    times = grid.times
    return Increment2(grid, tuple(shape), lambda i, j: fn(times[i], times[j]))


def delta1(g: GridPath) -> Increment2:
    """``(δg)_{st} = g_t - g_s``."""
    v = g.values
    return Increment2(g.grid, g.shape, lambda i, j: v[j] - v[i])


def delta2(h: Increment2) -> Increment3:
    """``(δh)_{sut} = h_{st} - h_{su} - h_{ut}``."""
    return Increment3(h.grid, h.shape,
                      lambda i, u, j: h.at(i, j) - h.at(i, u) - h.at(u, j))


def delta3(f: Increment3):
    """``(δf)_{suvt} = f_{uvt} - f_{svt} + f_{sut} - f_{suv}``, as a callable on index arrays."""
    def rule(s, u, v, t):
        return f.at(u, v, t) - f.at(s, v, t) + f.at(s, u, t) - f.at(s, u, v)
    return rule


# -- pair and triple enumeration ------------------------------------------------

def scan_pairs(n_points: int, pair_cap: int = PAIR_CAP):
    """Index pairs ``i < j`` scanned by the Hölder seminorm.

    Returns ``(I, J, exact)``.  All pairs are returned when there are at most
    ``pair_cap`` of them.  Otherwise the deterministic subsample is every pair
    with ``j - i <= 64`` plus all pairs among a strided set of coarse nodes
    (stride chosen so the total stays under ``pair_cap``; the last node is
    always included).
    """
    n = int(n_points)
    total = n * (n - 1) // 2
    if total <= pair_cap:
        I, J = np.triu_indices(n, k=1)
        return I.astype(np.int64), J.astype(np.int64), True
    near_i, near_j = [], []
    for lag in range(1, NEAR_DIAGONAL + 1):
        idx = np.arange(0, n - lag, dtype=np.int64)
        near_i.append(idx)
        near_j.append(idx + lag)
    near_i = np.concatenate(near_i)
    near_j = np.concatenate(near_j)
    budget = max(pair_cap - len(near_i), 1)
    m = int((1 + math.isqrt(1 + 8 * budget)) // 2)
    stride = max(1, math.ceil((n - 1) / max(m - 1, 1)))
    nodes = np.unique(np.append(np.arange(0, n, stride, dtype=np.int64), n - 1))
    ci, cj = np.triu_indices(len(nodes), k=1)
    ci, cj = nodes[ci], nodes[cj]
    far = (cj - ci) > NEAR_DIAGONAL
    return (np.concatenate([near_i, ci[far]]), np.concatenate([near_j, cj[far]]), False)


def scan_triples(n_points: int, pair_cap: int = PAIR_CAP):
    """Index triples ``s < u < t`` scanned by the split norm; same policy as ``scan_pairs``
    with a near-diagonal band of ``t - s <= 16``."""
    n = int(n_points)
    total = n * (n - 1) * (n - 2) // 6
    if total <= pair_cap:
        return _all_triples(np.arange(n, dtype=np.int64)) + (True,)
    si, ui, ti = [], [], []
    band = NEAR_DIAGONAL_TRIPLES
    for a in range(1, band):
        for b in range(1, band - a + 1):
            s = np.arange(0, n - a - b, dtype=np.int64)
            si.append(s)
            ui.append(s + a)
            ti.append(s + a + b)
    si, ui, ti = (np.concatenate(x) for x in (si, ui, ti))
    budget = max(pair_cap - len(si), 1)
    m = 3
    while (m + 1) * m * (m - 1) // 6 <= budget:
        m += 1
    stride = max(1, math.ceil((n - 1) / max(m - 1, 1)))
    nodes = np.unique(np.append(np.arange(0, n, stride, dtype=np.int64), n - 1))
    cs, cu, ct = _all_triples(nodes)
    far = (ct - cs) > band
    return (np.concatenate([si, cs[far]]), np.concatenate([ui, cu[far]]),
            np.concatenate([ti, ct[far]]), False)


def _all_triples(nodes: np.ndarray):
    m = len(nodes)
    if m < 3:
        e = np.zeros(0, dtype=np.int64)
        return e, e, e
    a, b = np.triu_indices(m, k=1)
    s_list, u_list, t_list = [], [], []
    for c in range(2, m):
        keep = b < c
        s_list.append(nodes[a[keep]])
        u_list.append(nodes[b[keep]])
        t_list.append(np.full(int(keep.sum()), nodes[c], dtype=np.int64))
    return np.concatenate(s_list), np.concatenate(u_list), np.concatenate(t_list)


def _rowmax(values: np.ndarray) -> np.ndarray:
    if values.ndim == 1:
        return np.abs(values)
    return np.max(np.abs(values.reshape(values.shape[0], -1)), axis=1)


def holder_seminorm2(h: Increment2, mu: float, pair_cap: int = PAIR_CAP) -> float:
    """``max_{s != t} |h_st| / |t - s|^mu`` over the pairs from ``scan_pairs``."""
    if not mu > 0:
        raise ValueError(f"Hölder exponent must be positive, got {mu}")
    I, J, _ = scan_pairs(h.grid.n_points, pair_cap)
    best = 0.0
    mesh = h.grid.mesh
    for start in range(0, len(I), _CHUNK):
        i, j = I[start:start + _CHUNK], J[start:start + _CHUNK]
        num = _rowmax(h.at(i, j))
        den = ((j - i) * mesh) ** mu
        if len(num):
            best = max(best, float(np.max(num / den)))
    return best


def holder_norm3_split(h: Increment3, gamma: float, rho: float,
                       pair_cap: int = PAIR_CAP) -> float:
    """``max_{s<u<t} |h_sut| / (|u - s|^gamma |t - u|^rho)``.

    This is the split norm; the infimum-over-decompositions norm dominated by
    it is not computed.
    """
    if not (gamma > 0 and rho > 0):
        raise ValueError("exponents must be positive")
    S, U, T, _ = scan_triples(h.grid.n_points, pair_cap)
    mesh = h.grid.mesh
    best = 0.0
    for start in range(0, len(S), _CHUNK):
        s, u, t = S[start:start + _CHUNK], U[start:start + _CHUNK], T[start:start + _CHUNK]
        num = _rowmax(h.at(s, u, t))
        den = ((u - s) * mesh) ** gamma * ((t - u) * mesh) ** rho
        if len(num):
            best = max(best, float(np.max(num / den)))
    return best


def sup_norm(values) -> float:
    values = np.asarray(values)
    return float(np.max(np.abs(values))) if values.size else 0.0


# -- products -------------------------------------------------------------------

def batched_product(a: np.ndarray, b: np.ndarray, a_shape: tuple, b_shape: tuple) -> np.ndarray:
    """Row-wise product of batched values: scalar scaling, or contraction of the
    last axis of ``a`` with the first axis of ``b``."""
    n = a.shape[0]
    if a_shape == () or b_shape == ():
        a2 = a.reshape((n,) + a_shape + (1,) * len(b_shape))
        return a2 * b.reshape((n,) + (1,) * len(a_shape) + b_shape) if a_shape else \
            a.reshape((n,) + (1,) * len(b_shape)) * b
    if a_shape[-1] != b_shape[0]:
        raise ValueError(f"cannot multiply shapes {a_shape} and {b_shape}")
    a2 = a.reshape(n, -1, a_shape[-1])
    b2 = b.reshape(n, b_shape[0], -1)
    out = np.matmul(a2, b2)
    return out.reshape((n,) + a_shape[:-1] + b_shape[1:])


def _product_shape(a_shape: tuple, b_shape: tuple) -> tuple:
    if a_shape == ():
        return b_shape
    if b_shape == ():
        return a_shape
    if a_shape[-1] != b_shape[0]:
        raise ValueError(f"cannot multiply shapes {a_shape} and {b_shape}")
    return a_shape[:-1] + b_shape[1:]


def product_increments(g, h):
    """Product ``(gh)_{t1..t_{m+n-1}} = g_{t1..tn} h_{tn..t_{m+n-1}}``.

    ``g`` and ``h`` are GridPaths (arity 1) or Increment2s (arity 2); the
    result is a GridPath, Increment2 or Increment3 accordingly.
    """
    if g.grid != h.grid:
        raise ValueError("operands live on different grids")
    out_shape = _product_shape(tuple(g.shape), tuple(h.shape))
    gs, hs = tuple(g.shape), tuple(h.shape)
    grid = g.grid
    if isinstance(g, GridPath) and isinstance(h, GridPath):
        vals = batched_product(g.values, h.values, gs, hs)
        return GridPath(grid, vals)
    if isinstance(g, GridPath) and isinstance(h, Increment2):
        gv = g.values
        return Increment2(grid, out_shape,
                          lambda i, j: batched_product(gv[i], h.at(i, j), gs, hs))
    if isinstance(g, Increment2) and isinstance(h, GridPath):
        hv = h.values
        return Increment2(grid, out_shape,
                          lambda i, j: batched_product(g.at(i, j), hv[j], gs, hs))
    if isinstance(g, Increment2) and isinstance(h, Increment2):
        return Increment3(grid, out_shape,
                          lambda i, u, j: batched_product(g.at(i, u), h.at(u, j), gs, hs))
    raise TypeError("product_increments takes GridPath or Increment2 operands")


def restrict(inc: Increment2, lo: int, hi: int) -> Increment2:
    """The increment seen on the sub-grid between indices ``lo`` and ``hi``."""
    g = inc.grid.sub(lo, hi)
    return Increment2(g, inc.shape, lambda i, j: inc.at(lo + i, lo + j))
