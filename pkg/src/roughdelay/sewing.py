"""Sewing: limits of Riemann sums of 1-increments and the inverse map Lambda.

``sew(g)_{st}`` is the sum of ``g`` over the grid cells of ``[s, t]``; since
the grid is the finest partition available this is the limit.  Alongside it,
sums over dyadic sub-partitions are computed on a few diagnostic pairs to
certify that the limit exists (successive levels must shrink).

``lambda_op(h)`` solves ``delta g = h`` with ``g_{st} = -h_{a s t}`` for a
base point ``a`` and returns ``g - sew(g)``, the unique solution that is
smoother than the grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .increments import Increment2, Increment3

DEFAULT_TOL = 1e-10


class SewingError(RuntimeError):
    pass


@dataclass(frozen=True)
class SewResult:
    value: Increment2
    refinement_levels: int
    last_delta: float
    ratio: float
    converged: bool
    deltas: tuple = ()


def _cell_cumsum(g: Increment2) -> np.ndarray:
    n = g.grid.n_points
    k = np.arange(n - 1, dtype=np.int64)
    cells = g.at(k, k + 1)
    S = np.zeros((n,) + tuple(g.shape))
    S[1:] = np.cumsum(cells, axis=0)
    return S


def dyadic_sums(g: Increment2, i: int, j: int, max_levels: int | None = None) -> np.ndarray:
    """Riemann sums of ``g`` over ``[i, j]`` on the dyadic partitions of levels 0..L.

    Level ``L`` uses the points ``i + floor(k (j - i) / 2^L)``; the last level
    reaches the grid itself.
    """
    span = j - i
    if span <= 0:
        return np.zeros((1,) + tuple(g.shape))
    top = math.ceil(math.log2(span)) if span > 1 else 0
    if max_levels is not None:
        top = min(top, max_levels)
    out = []
    for L in range(top + 1):
        pts = np.unique(i + (np.arange(2 ** L + 1, dtype=np.int64) * span) // 2 ** L)
        out.append(np.sum(g.at(pts[:-1], pts[1:]), axis=0))
    return np.asarray(out)


def sew(g: Increment2, tol_sew: float = DEFAULT_TOL, max_levels: int | None = None,
        pairs=None) -> SewResult:
    """Limit of Riemann sums of ``g``.

    ``value`` is exact on the grid partition for every pair.  The convergence
    certificate is computed on ``pairs`` (default: the whole grid and its two
    halves).  ``converged`` holds when the change between the two finest
    levels is below ``tol_sew * (1 + |value|)``, or when the level-to-level
    changes decay geometrically (log-linear fit over the last six levels has
    a per-level factor below 1), which
    is what a regular germ produces once the grid scale is reached.
    """
    n = g.grid.n_points
    S = _cell_cumsum(g)
    shape = tuple(g.shape)
    value = Increment2(g.grid, shape, lambda i, j: S[j] - S[i])
    if pairs is None:
        m = (n - 1) // 2
        pairs = [(0, n - 1), (0, m), (m, n - 1)]
    levels = 0
    last = 0.0
    scale = 0.0
    deltas_all = []
    for i, j in pairs:
        if j - i < 1:
            continue
        sums = dyadic_sums(g, int(i), int(j), max_levels)
        levels = max(levels, len(sums) - 1)
        d = np.max(np.abs(np.diff(sums, axis=0)).reshape(len(sums) - 1, -1), axis=1) \
            if len(sums) > 1 else np.zeros(0)
        deltas_all.append(d)
        if len(d):
            last = max(last, float(d[-1]))
        scale = max(scale, float(np.max(np.abs(sums[-1]))) if sums.size else 0.0)
    ratio = 0.0
    geometric = False
    if deltas_all:
        longest = max(deltas_all, key=len)
        tail = longest[-6:]
        tail = tail[tail > 0]
        if len(tail) >= 3:
            # per-level factor from a log-linear fit; robust to one cancelling level
            slope = np.polyfit(np.arange(len(tail)), np.log(tail), 1)[0]
            ratio = float(np.exp(slope))
            geometric = ratio < 1.0
    converged = last <= tol_sew * (1.0 + scale) or geometric
    deltas = tuple(float(x) for x in max(deltas_all, key=len)) if deltas_all else ()
    return SewResult(value, levels, last, ratio, converged, deltas)


def _random_tuples(n: int, k: int, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    if n < 1:
        return np.zeros((0, k), dtype=np.int64)
    return np.sort(rng.integers(0, n, size=(count, k)), axis=1)


def cocycle_defect(h: Increment3, count: int = 64, seed: int = 0) -> float:
    """Largest ``|delta h|`` over sampled 4-tuples, relative to the size of ``h`` there."""
    q = _random_tuples(h.grid.n_points, 4, count, seed)
    if len(q) == 0:
        return 0.0
    s, u, v, t = q.T
    terms = [h.at(u, v, t), h.at(s, v, t), h.at(s, u, t), h.at(s, u, v)]
    d = terms[0] - terms[1] + terms[2] - terms[3]
    size = max(float(np.max(np.abs(x))) for x in terms)
    return float(np.max(np.abs(d))) / (1.0 + size)


def lambda_op(h: Increment3, base_point: float | None = None, tol_sew: float = DEFAULT_TOL,
              max_levels: int | None = None, strict: bool = True) -> Increment2:
    """``Lambda h``: the increment with ``delta(Lambda h) = h`` built from a primitive.

    Raises ``ValueError("h is not a cocycle")`` when ``delta h`` is not zero on
    sampled 4-tuples, and ``SewingError`` when the sums do not converge and
    ``strict`` is set.
    """
    grid = h.grid
    if cocycle_defect(h) > 1e-10:
        raise ValueError("h is not a cocycle")
    a = 0 if base_point is None else grid.index(base_point)
    g = Increment2(grid, tuple(h.shape), lambda i, j: -h.at(np.full_like(i, a), i, j))
    if a != 0:
        # primitive check: delta g = h on sampled triples at or after the base point
        q = _random_tuples(grid.n_points, 3, 32, 1)
        q = q[q[:, 0] >= a]
        if len(q):
            s, u, t = q.T
            dg = g.at(s, t) - g.at(s, u) - g.at(u, t)
            if np.max(np.abs(dg - h.at(s, u, t))) > 1e-9 * (1 + np.max(np.abs(dg))):
                raise ValueError("h is not a cocycle")
    res = sew(g, tol_sew, max_levels)
    if strict and not res.converged:
        raise SewingError(f"Riemann sums do not converge (last delta {res.last_delta:.3e}, "
                          f"ratio {res.ratio:.3f})")
    v = res.value
    return Increment2(grid, tuple(h.shape), lambda i, j: g.at(i, j) - v.at(i, j))
