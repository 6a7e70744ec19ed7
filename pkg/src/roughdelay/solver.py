"""Solver for ``dy = sigma(y_t, y_{t-r_1}, ..., y_{t-r_k}) dx_t`` with ``y = xi`` before 0.

Two constructions of the same grid solution:

* ``solve_onestep`` marches cell by cell with the corrected Euler step
  ``y_{k+1} = y_k + sigma(Y_k) dx_k + sum_j <J_j(Y_k) zeta(t_k - r_j), A_j[k]>``
  where ``zeta(s) = sigma(Y(s))`` for ``s >= 0`` and 0 before (the initial
  path carries no density).
* ``solve_picard`` iterates ``z -> y_p + J(T_sigma(z, past) dx)`` on windows
  of length at most ``r_1`` until the controlled-path norm of the update
  falls below the tolerance; its fixed point is the one-step solution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .controlled import CCP, CPNorm, ccp_norm
from .fbm import DriverBundle
from .fields import SigmaField
from .increments import Grid, GridPath, delta1, holder_seminorm2, restrict, sup_norm
from .levy import build_area

MAX_RETRIES = 6
RATIO_LIMIT = 0.9
# both constructions share one fixed point; Picard stops within its tolerance of it
AGREEMENT_TOL = 1e-8


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class DelayRDEProblem:
    sigma: SigmaField
    delays: tuple
    xi: GridPath
    driver: DriverBundle
    horizon: float
    kappa: float
    gamma: Optional[float] = None

    def __post_init__(self):
        delays = tuple(float(r) for r in self.delays)
        object.__setattr__(self, "delays", delays)
        if len(delays) != self.sigma.k:
            raise ValueError(f"sigma expects {self.sigma.k} delays, got {len(delays)}")
        if any(r <= 0 for r in delays) or list(delays) != sorted(set(delays)):
            raise ValueError("delays must be positive and strictly increasing")
        grid = self.grid
        r_max = delays[-1] if delays else 0.0
        if grid.t_min > -r_max + 1e-12 or grid.t_max < self.horizon - 1e-12:
            raise ValueError("driver grid must cover [-r_k, T]")
        grid.steps(self.horizon)
        for r in delays:
            grid.steps(r)
        if self.xi.grid.mesh != grid.mesh or abs(self.xi.grid.t_max) > 1e-12 \
                or abs(self.xi.grid.t_min + r_max) > 1e-9:
            raise ValueError("xi must live on [-r_k, 0] with the driver's mesh")
        if self.xi.values.shape[1:] != (self.sigma.n,):
            raise ValueError(f"xi must be R^{self.sigma.n}-valued")
        if self.sigma.d != self.driver.path.values.shape[1]:
            raise ValueError("driver dimension does not match sigma")
        if self.gamma is not None and not self.kappa < self.gamma:
            raise ValueError("need kappa < gamma")
        if not 1 / 3 < self.kappa < 1:
            raise ValueError("kappa must lie in (1/3, 1)")
        missing = [s for s in self.shifts if s not in self.driver.areas.cells]
        if missing:
            raise ValueError(f"driver has no area for shifts {missing}")

    @property
    def grid(self) -> Grid:
        return self.driver.path.grid

    @property
    def shifts(self) -> tuple:
        return (0,) + tuple(self.grid.steps(r) for r in self.delays)

    @property
    def zero(self) -> int:
        return self.grid.index(0.0)

    @property
    def end(self) -> int:
        return self.grid.index(self.horizon)

    def with_driver(self, driver: DriverBundle) -> "DelayRDEProblem":
        return replace(self, driver=driver)


@dataclass(frozen=True)
class WindowInfo:
    start: float
    stop: float
    tau: float
    iterations: int
    ratios: tuple
    final_ratio: float
    retries: int = 0
    apriori_tau: Optional[float] = None
    c_estimate: Optional[float] = None

    def as_dict(self) -> dict:
        return {"start": self.start, "stop": self.stop, "tau": self.tau,
                "iterations": self.iterations, "ratios": list(self.ratios),
                "final_ratio": self.final_ratio, "retries": self.retries,
                "apriori_tau": self.apriori_tau, "c_estimate": self.c_estimate}


@dataclass(frozen=True)
class Solution:
    path: CCP
    full: GridPath
    windows: list
    norms: Optional[CPNorm]

    @property
    def times(self) -> np.ndarray:
        return self.path.grid.times


@dataclass(frozen=True)
class StepPolicy:
    c: float
    alpha: float
    tau_raw: float
    tau_star: float
    M: float


def lemma41_policy(c: float, alpha: float, r1: float, mesh: Optional[float] = None) -> StepPolicy:
    """Window length ``(8 c^2)^{-1/alpha}`` clipped to ``r1`` and the ball radius ``M``.

    ``M`` is the smallest positive root of ``c tau^alpha u^2 - u + c = 0``.  With a
    mesh the window is rounded down to a multiple of it.
    """
    if not (c > 0 and alpha > 0):
        raise ValueError("need c > 0 and alpha > 0")
    tau_raw = (8.0 * c * c) ** (-1.0 / alpha)
    tau = min(tau_raw, r1)
    if mesh is not None:
        cells = math.floor(tau / mesh + 1e-9)
        if cells < 1:
            raise ValueError("grid too coarse for contraction window")
        tau = cells * mesh
    a = c * tau ** alpha
    M = 2.0 * c / (1.0 + math.sqrt(1.0 - 4.0 * a * c))
    return StepPolicy(c, alpha, tau_raw, tau, M)


def _march(problem: DelayRDEProblem, y: np.ndarray, zeta: np.ndarray, start: int, stop: int):
    """One-step scheme on global cells ``start..stop-1``, writing ``y`` and ``zeta`` in place."""
    sigma = problem.sigma
    shifts = np.asarray(problem.shifts)
    i0 = problem.zero
    x = problem.driver.path.values
    areas = problem.driver.areas
    cells = [areas.cell(s) for s in shifts]
    for g in range(start, stop):
        U = y[g - shifts].T
        s = sigma.eval(U)
        zeta[g] = s
        step = s @ (x[g + 1] - x[g])
        for j, sh in enumerate(shifts):
            src = g - sh
            if src < i0:
                continue
            dens = np.einsum("lbm,ma->lba", sigma.jac(U, j), zeta[src])
            step = step + np.einsum("lba,ab->l", dens, cells[j][g])
        y[g + 1] = y[g] + step
        if not np.all(np.isfinite(y[g + 1])):
            raise SolverError(f"non-finite state at t = {problem.grid.times[g + 1]:.6g}")
    U = y[stop - shifts].T
    zeta[stop] = sigma.eval(U)


def _init_arrays(problem: DelayRDEProblem):
    grid = problem.grid
    n = problem.sigma.n
    d = problem.sigma.d
    y = np.zeros((grid.n_points, n))
    zeta = np.zeros((grid.n_points, n, d))
    i0 = problem.zero
    lo = i0 - problem.xi.grid.n_cells
    y[lo:i0 + 1] = problem.xi.values
    return y, zeta


def _finish(problem: DelayRDEProblem, y, zeta, windows, norms: bool) -> Solution:
    i0, iT = problem.zero, problem.end
    lo = i0 - problem.xi.grid.n_cells
    path = CCP(problem.driver.path, i0, y[i0:iT + 1].copy(), zeta[i0:iT + 1].copy())
    full = GridPath(problem.grid.sub(lo, iT), y[lo:iT + 1].copy())
    nrm = ccp_norm(path, problem.kappa) if norms else None
    return Solution(path, full, windows, nrm)


def past_path(sol: Solution, problem: DelayRDEProblem) -> CCP:
    """The solution on ``[-r_k, T]`` as a controlled path, with zero density before 0."""
    lo = problem.zero - problem.xi.grid.n_cells
    n_pre = problem.xi.grid.n_cells
    dens = np.concatenate([np.zeros((n_pre,) + sol.path.density.shape[1:]), sol.path.density])
    return CCP(problem.driver.path, lo, sol.full.values, dens)


def solve_onestep(problem: DelayRDEProblem, until: Optional[float] = None,
                  resume: Optional[Solution] = None, norms: bool = True) -> Solution:
    """Corrected one-step march on ``[0, until]`` (default the horizon).

    ``resume`` continues an earlier solution from its last time.
    """
    y, zeta = _init_arrays(problem)
    i0 = problem.zero
    stop = problem.end if until is None else problem.grid.index(until)
    start = i0
    if resume is not None:
        m = resume.path.n_points
        y[i0:i0 + m] = resume.path.value
        zeta[i0:i0 + m] = resume.path.density
        start = i0 + m - 1
    _march(problem, y, zeta, start, stop)
    sol = _finish(replace(problem, horizon=problem.grid.times[stop]), y, zeta, [], norms)
    return sol


def _diff_norm(dz, ddens, driver, lo, kappa) -> float:
    return ccp_norm(CCP(driver, lo, dz, ddens), kappa).total


def _past_norm(problem, y, zeta, a, b) -> float:
    """Norm of the solved path on ``[a, b]`` (global indices); the initial path
    counts through its remainder only."""
    i0 = problem.zero
    lo = max(a, i0 - problem.xi.grid.n_cells)
    if b <= lo:
        return 0.0
    return ccp_norm(CCP(problem.driver.path, lo, y[lo:b + 1], zeta[lo:b + 1]), problem.kappa).total


def solve_picard(problem: DelayRDEProblem, initial_guess: str = "constant",
                 tol: Optional[float] = None, max_iter: int = 400,
                 max_retries: int = MAX_RETRIES, norms: bool = True) -> Solution:
    """Windowed fixed-point construction.

    Outer windows have length ``r_1`` (the horizon when there is no delay).
    Each is cut into subwindows of length ``tau``; the a-priori length from
    ``lemma41_policy`` is used when it is at least one cell, otherwise the
    whole outer window.  ``tau`` is halved (up to ``max_retries`` times) when
    three consecutive contraction ratios exceed 0.9 or when an accepted
    subwindow saw any ratio above 0.9.  Ratios are only measured while the
    previous update is larger than ``100 * tol``.
    """
    if initial_guess not in ("constant", "zero", "euler"):
        raise ValueError(f"unknown initial guess {initial_guess!r}")
    sigma = problem.sigma
    grid = problem.grid
    shifts = np.asarray(problem.shifts)
    i0, iT = problem.zero, problem.end
    x = problem.driver.path.values
    areas = problem.driver.areas
    cells = [areas.cell(s) for s in shifts]
    y, zeta = _init_arrays(problem)
    if tol is None:
        tol = 1e-9 * (1.0 + sup_norm(problem.xi.values))
    outer = int(shifts[1]) if len(shifts) > 1 else iT - i0
    c_growth = 2.0 * max(sigma.sup, 1.0)
    alpha = (problem.gamma - problem.kappa) if problem.gamma is not None else None
    windows = []
    w0 = i0
    while w0 < iT:
        w1 = min(w0 + outer, iT)
        apriori, c_est = None, None
        tau_cells = w1 - w0
        if alpha is not None and np.isfinite(c_growth):
            if w0 == i0:
                xi_inc = delta1(problem.xi)
                past = holder_seminorm2(xi_inc, 2 * problem.kappa) if problem.xi.grid.n_cells else 0.0
            else:
                past = _past_norm(problem, y, zeta, w0 - outer, w0)
            c_est = c_growth * (1.0 + past ** 2)
            try:
                apriori = lemma41_policy(c_est, alpha, (w1 - w0) * grid.mesh, grid.mesh).tau_star
                tau_cells = max(1, int(round(apriori / grid.mesh)))
            except ValueError:
                apriori = None
        p = w0
        while p < w1:
            retries = 0
            while True:
                q = min(p + tau_cells, w1)
                result = _picard_subwindow(problem, y, zeta, cells, p, q, initial_guess, tol, max_iter)
                iters, ratios, ok = result
                if ok:
                    break
                retries += 1
                if retries > max_retries or tau_cells == 1:
                    raise SolverError(f"no contraction on [{grid.times[p]:.6g}, {grid.times[q]:.6g}] "
                                      f"after {retries - 1} halvings; ratios {ratios[-5:]}")
                tau_cells = max(1, tau_cells // 2)
            windows.append(WindowInfo(float(grid.times[p]), float(grid.times[q]),
                                      (q - p) * grid.mesh, iters, tuple(ratios),
                                      ratios[-1] if ratios else 0.0, retries, apriori, c_est))
            p = q
        w0 = w1
    return _finish(problem, y, zeta, windows, norms)


def _picard_subwindow(problem, y, zeta, cells, p, q, initial_guess, tol, max_iter):
    """Iterate on global indices ``p..q``; on success write ``y`` and ``zeta`` there."""
    sigma = problem.sigma
    shifts = np.asarray(problem.shifts)
    i0 = problem.zero
    x = problem.driver.path.values
    m = q - p + 1
    idx = np.arange(p, q + 1)
    dx = x[p + 1:q + 1] - x[p:q]

    def tuples(z):
        U = np.empty((m, sigma.n, len(shifts)))
        U[:, :, 0] = z
        for j in range(1, len(shifts)):
            U[:, :, j] = y[idx - shifts[j]]
        return U

    def gamma_map(z, dens):
        U = tuples(z)
        S = sigma.eval(U)
        inc = np.einsum("tlb,tb->tl", S[:-1], dx)
        for j, sh in enumerate(shifts):
            if j == 0:
                src = dens[:-1]
            else:
                k = idx[:-1] - sh
                src = np.where((k >= i0)[:, None, None], zeta[k], 0.0)
            J = sigma.jac(U[:-1], j)
            inc = inc + np.einsum("tlbm,tma,tab->tl", J, src, cells[j][p:q])
        z_new = np.empty_like(z)
        z_new[0] = y[p]
        z_new[1:] = y[p] + np.cumsum(inc, axis=0)
        return z_new, S

    z = np.repeat(y[p][None], m, axis=0)
    frozen = sigma.eval(tuples(z)[:1])[0]
    if initial_guess == "constant":
        dens = np.repeat(frozen[None], m, axis=0)
    elif initial_guess == "zero":
        dens = np.zeros((m, sigma.n, sigma.d))
    else:
        z = z.copy()
        dens = np.empty((m, sigma.n, sigma.d))
        for t in range(m - 1):
            U = tuples(z)[t]
            dens[t] = sigma.eval(U)
            z[t + 1] = z[t] + dens[t] @ dx[t]
        dens[m - 1] = sigma.eval(tuples(z)[m - 1])
    driver = problem.driver.path
    ratios, prev, above = [], None, 0
    for it in range(1, max_iter + 1):
        z_new, dens_new = gamma_map(z, dens)
        diff = _diff_norm(z_new - z, dens_new - dens, driver, p, problem.kappa)
        if not np.isfinite(diff):
            return it, ratios, False
        if prev is not None and prev > 100 * tol:
            r = diff / prev
            ratios.append(float(r))
            above = above + 1 if r > RATIO_LIMIT else 0
            if above >= 3:
                return it, ratios, False
        z, dens, prev = z_new, dens_new, diff
        if diff <= tol:
            if any(r > RATIO_LIMIT for r in ratios):
                return it, ratios, False
            # density of the accepted path is sigma at its own tuples
            y[p:q + 1] = z
            zeta[p:q + 1] = sigma.eval(tuples(z))
            return it, ratios, True
    return max_iter, ratios, False


# -- continuity of the solution map ---------------------------------------------

def _holder_inf(values: np.ndarray, grid: Grid, mu: float) -> float:
    g = GridPath(grid, values)
    return sup_norm(values) + (holder_seminorm2(delta1(g), mu) if grid.n_cells else 0.0)


def default_bumps(problem: DelayRDEProblem):
    """Smooth perturbation directions for the driver and the initial path."""
    grid = problem.grid
    t = grid.times
    L = grid.t_max - grid.t_min
    d = problem.sigma.d
    base = np.sin(np.pi * (t - grid.t_min) / L) ** 2
    bx = np.stack([(1 + 0.5 * a) * (-1) ** a * base for a in range(d)], axis=1)
    ts = problem.xi.times
    bxi = np.stack([np.cos(ts + l) for l in range(problem.sigma.n)], axis=1)
    return bx, bxi


@dataclass(frozen=True)
class ItoRow:
    eps: float
    response: float
    rhs: float
    ratio: float


def ito_map_experiment(problem: DelayRDEProblem, sizes=(1e-1, 1e-2, 1e-3),
                       perturb: str = "both", solver: str = "onestep",
                       gamma: Optional[float] = None):
    """Response of the solution to scaled smooth perturbations of ``(xi, x)``.

    For each size ``eps`` reports ``|y - y~|_{kappa,inf}`` on ``[0, T]`` and the
    right-hand side ``|x - x~|_{gamma,inf} + sum_j |x^2(-r_j) - x~^2(-r_j)|_{2 gamma}
    + |xi - xi~|_{2 gamma, inf}``, with their ratio.  A zero perturbation gives
    ``nan`` ratio (skipped).  Returns ``(rows, spread)`` where ``spread`` is the
    max over min of the finite ratios.
    """
    if perturb not in ("both", "driver", "xi"):
        raise ValueError("perturb must be 'both', 'driver' or 'xi'")
    solve = {"onestep": solve_onestep, "picard": solve_picard}[solver]
    gamma = gamma if gamma is not None else (problem.gamma or problem.kappa)
    base = solve(problem, norms=False)
    bx, bxi = default_bumps(problem)
    grid = problem.grid
    i0, iT = problem.zero, problem.end
    vs = [0.0] + [-r for r in problem.delays]
    rows = []
    for eps in sizes:
        ex = eps if perturb in ("both", "driver") else 0.0
        exi = eps if perturb in ("both", "xi") else 0.0
        xpath = GridPath(grid, problem.driver.path.values + ex * bx)
        xi = GridPath(problem.xi.grid, problem.xi.values + exi * bxi)
        drv = DriverBundle(xpath, None, build_area(xpath, vs))
        other = solve(replace(problem, driver=drv, xi=xi), norms=False)
        dy = base.path.value - other.path.value
        response = _holder_inf(dy, grid.sub(i0, iT), problem.kappa)
        rhs = _holder_inf(ex * bx, grid, gamma)
        for s in problem.shifts:
            a0 = problem.driver.areas
            v = -s * grid.mesh
            A, B = a0.increment(v), drv.areas.increment(v)
            diff = restrict(A - B, i0, iT)
            rhs += holder_seminorm2(diff, 2 * gamma)
        rhs += _holder_inf(exi * bxi, problem.xi.grid, 2 * gamma)
        ratio = response / rhs if rhs > 0 else float("nan")
        rows.append(ItoRow(eps, response, rhs, ratio))
    finite = [r.ratio for r in rows if np.isfinite(r.ratio) and r.ratio > 0]
    spread = max(finite) / min(finite) if finite else float("nan")
    return rows, spread

