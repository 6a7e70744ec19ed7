"""Verification suites run by ``roughdelay verify``.

Each suite returns a list of ``Check`` rows; a suite passes when every row does.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .controlled import CCP, t_sigma
from .fbm import FbmSpec, cholesky_factor, covariance, covariance_matrix, fbm_driver, \
    sample_fbm_ensemble
from .fields import bilinear_noncommuting, jacobian_fd_defect, linear, sine
from .increments import (Grid, GridPath, delta1, delta2, holder_norm3_split,
                         holder_seminorm2, increment_from_function, product_increments)
from .sewing import lambda_op

SUITES = ("chen", "sewing", "covariance", "chainrule")


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    value: float
    threshold: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.threshold)


def _triples(n: int, count: int, seed: int, low: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.sort(rng.integers(low, n, size=(count, 3)), axis=1)


def chen_suite(hurst=0.4, mesh=1 / 256, horizon=1.0, delays=(0.25,), seed=42,
               count=1000) -> list:
    r_max = max(delays, default=0.0)
    grid = Grid(-r_max, horizon, mesh)
    drv = fbm_driver(FbmSpec(hurst, 2, grid, seed), delays)
    A = drv.areas
    x = drv.path.values
    out = []
    for sh in A.shifts:
        s, u, t = _triples(grid.n_points, count, seed + sh, low=sh).T
        lhs = A.between(sh, s, t) - A.between(sh, s, u) - A.between(sh, u, t)
        outer = (x[u - sh] - x[s - sh])[:, :, None] * (x[t] - x[u])[:, None, :]
        res = np.max(np.abs(lhs - outer) / (1 + np.abs(outer)))
        out.append(Check("chen", f"chen residual v={-sh * mesh:g}", float(res), 1e-12))
    s, _, t = _triples(grid.n_points, count, seed, low=0).T
    diag = np.diagonal(A.between(0, s, t), axis1=1, axis2=2)
    half = 0.5 * (x[t] - x[s]) ** 2
    out.append(Check("chen", "diagonal identity v=0",
                     float(np.max(np.abs(diag - half) / (1 + half))), 1e-12))
    return out


def sewing_suite(seed=42, n=129) -> list:
    grid = Grid(0.0, 1.0, 1.0 / (n - 1))
    rng = np.random.default_rng(seed)
    g = GridPath(grid, rng.normal(size=(n, 2)).cumsum(axis=0))
    s, u, t = _triples(n, 100, seed).T
    dd = delta2(delta1(g)).at(s, u, t)
    out = [Check("sewing", "delta delta = 0", float(np.max(np.abs(dd)) / (1 + g.sup())), 1e-12)]
    # product rule for two paths
    f = GridPath(grid, rng.normal(size=(n, 2, 2)))
    lhs = delta1(product_increments(f, g)).at(s, t)
    rhs = (product_increments(delta1(f), g).at(s, t)
           + product_increments(f, delta1(g)).at(s, t))
    out.append(Check("sewing", "product rule path.path",
                     float(np.max(np.abs(lhs - rhs)) / (1 + np.max(np.abs(lhs)))), 1e-10))
    # Lambda inverts delta on a smooth family
    G = increment_from_function(grid, lambda a, b: (b - a) ** 2 + np.sin(a) * (b - a) ** 1.5)
    h = delta2(G)
    L = lambda_op(h)
    back = delta2(L).at(s, u, t)
    ref = h.at(s, u, t)
    out.append(Check("sewing", "delta Lambda delta g = delta g",
                     float(np.max(np.abs(back - ref)) / (1 + np.max(np.abs(ref)))), 1e-8))
    mu = 1.5
    G = increment_from_function(grid, lambda a, b: np.abs(b - a) ** mu)
    h = delta2(G)
    lhs = holder_seminorm2(lambda_op(h), mu)
    bound = 2.0 * holder_norm3_split(h, mu / 2, mu / 2) / (2 ** mu - 2)
    out.append(Check("sewing", "Lambda bound / (slack 2 * bound)", lhs / bound, 1.0))
    return out


def covariance_suite(hurst=0.4, mesh=1 / 256, seed=42, trials=4096) -> list:
    n = int(round(1 / mesh))
    L = cholesky_factor(hurst, mesh, n)
    R = covariance_matrix(hurst, mesh * np.arange(1, n + 1))
    out = [Check("covariance", "|L L^T - R|_max", float(np.max(np.abs(L @ L.T - R))), 1e-9)]
    grid = Grid(0.0, 1.0, mesh)
    X = sample_fbm_ensemble(FbmSpec(hurst, 1, grid, seed), trials)[:, :, 0]
    i, j = grid.index(0.25), grid.index(0.75)
    prod = X[:, i] * X[:, j]
    se = prod.std(ddof=1) / np.sqrt(trials)
    z = abs(prod.mean() - covariance(hurst, 0.25, 0.75)) / se
    out.append(Check("covariance", "Monte-Carlo E[B_s B_t] (standard errors)", float(z), 3.0))
    return out


def chainrule_suite(seed=42) -> list:
    rng = np.random.default_rng(seed)
    fields = [sine(2, 2, 1, seed=seed), bilinear_noncommuting(1),
              linear(rng.uniform(-1, 1, size=(2, 3, 2, 3)))]
    out = [Check("chainrule", f"jacobian vs finite differences ({f.name})",
                 jacobian_fd_defect(f, seed=seed), 1e-6) for f in fields]
    # densities of T_sigma against a finite-difference chain rule
    sig = fields[0]
    grid = Grid(-0.25, 0.5, 1 / 64)
    drv = GridPath(grid, rng.normal(size=(grid.n_points, 2)))
    Z = rng.normal(size=(2, 2))
    base = rng.normal(size=2)
    h = 1e-6
    worst = 0.0
    # z = base + h Z[:, a] x^a has density h Z[:, a] in column a and no remainder
    for a in range(2):
        vals = base + h * Z[None, :, a] * drv.values[:, a:a + 1]
        dens = np.zeros((grid.n_points, 2, 2))
        dens[:, :, a] = h * Z[:, a]
        zt = CCP(drv, 0, vals, dens)
        lo = grid.index(0.0)
        z = CCP(drv, lo, vals[lo:], dens[lo:])
        out_dcp = t_sigma(z, zt, sig, (0, 16))
        t = np.arange(z.value.shape[0] - 1)
        dz = out_dcp.value[t + 1] - out_dcp.value[t]
        pred = sum(np.einsum("tlba,ta->tlb", out_dcp.densities[q][t],
                             drv.values[lo + t + 1 - s] - drv.values[lo + t - s])
                   for q, s in enumerate(out_dcp.shifts))
        worst = max(worst, float(np.max(np.abs(dz - pred)) / np.max(np.abs(dz))))
    out.append(Check("chainrule", "T_sigma densities vs increments (relative)", worst, 1e-4))
    return out


def run_suite(name: str, hurst=0.4, mesh=1 / 256, seed=42, trials=4096, delays=(0.25,),
              horizon=1.0) -> list:
    if name == "all":
        return [c for s in SUITES for c in run_suite(s, hurst, mesh, seed, trials, delays, horizon)]
    if name == "chen":
        return chen_suite(hurst, mesh, horizon, delays, seed)
    if name == "sewing":
        return sewing_suite(seed)
    if name == "covariance":
        return covariance_suite(hurst, mesh, seed, trials)
    if name == "chainrule":
        return chainrule_suite(seed)
    raise ValueError(f"unknown suite {name!r}")
