"""Fractional Brownian motion on a grid that may start at a negative time.

A path on ``[t_min, T]`` with ``t_min <= 0`` is produced by sampling an fBm
``W`` on ``[0, T - t_min]`` and re-anchoring, ``B_t = W_{t - t_min} - W_{-t_min}``.
Stationarity of increments makes ``B`` an fBm indexed by the whole window with
``B_0 = 0``.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.linalg import lapack

from .increments import Grid, GridPath
from .rng import normals

METHODS = ("cholesky", "circulant")


class CovarianceError(ValueError):
    """Covariance matrix is not numerically positive definite."""


@dataclass(frozen=True)
class FbmSpec:
    hurst: float
    dim: int
    grid: Grid
    seed: int = 0
    method: str = "cholesky"

    def __post_init__(self):
        if not 1 / 3 < self.hurst < 1:
            raise ValueError(f"Hurst parameter must lie in (1/3, 1), got {self.hurst}")
        if self.dim < 1:
            raise ValueError("dimension must be at least 1")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.grid.t_min > 0 or self.grid.t_max < 0:
            raise ValueError("grid must contain t = 0")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def zero_index(self) -> int:
        return self.grid.index(0.0)

    def to_json(self) -> str:
        return json.dumps({"H": self.hurst, "d": self.dim, "mesh": self.grid.mesh,
                           "t_min": self.grid.t_min, "t_max": self.grid.t_max,
                           "seed": self.seed, "method": self.method}, indent=2)


def covariance(hurst: float, s, t):
    """``R_H(s, t) = (|s|^2H + |t|^2H - |t - s|^2H) / 2``."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    h2 = 2.0 * hurst
    return 0.5 * (np.abs(s) ** h2 + np.abs(t) ** h2 - np.abs(t - s) ** h2)


def covariance_matrix(hurst: float, times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    return covariance(hurst, times[:, None], times[None, :])


@lru_cache(maxsize=16)
def cholesky_factor(hurst: float, mesh: float, n_cells: int) -> np.ndarray:
    """Lower Cholesky factor of the covariance at times ``mesh * (1..n_cells)``.

    A diagonal jitter of ``1e-12 * max(diag)`` is tried once if the plain
    factorization fails; a second failure raises ``CovarianceError`` naming
    the leading minor that is not positive.
    """
    R = covariance_matrix(hurst, mesh * np.arange(1, n_cells + 1))
    L, info = lapack.dpotrf(R, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        jitter = 1e-12 * float(np.max(np.diag(R)))
        warnings.warn(f"covariance not positive definite at leading minor {info}; "
                      f"adding jitter {jitter:.3e}", RuntimeWarning, stacklevel=2)
        L, info = lapack.dpotrf(R + jitter * np.eye(n_cells), lower=1, clean=1)
        if info > 0:
            raise CovarianceError(
                f"covariance not positive definite after jitter: leading minor {info}")
    if info < 0:
        raise CovarianceError(f"dpotrf argument {-info} invalid")
    L.setflags(write=False)
    return L


@lru_cache(maxsize=16)
def _circulant_sqrt_eigs(hurst: float, n_cells: int) -> np.ndarray:
    k = np.arange(n_cells + 1, dtype=float)
    h2 = 2.0 * hurst
    gam = 0.5 * (np.abs(k + 1) ** h2 - 2 * k ** h2 + np.abs(k - 1) ** h2)
    row = np.concatenate([gam, gam[-2:0:-1]])
    eig = np.fft.fft(row).real
    if np.min(eig) < -1e-10 * np.max(eig):
        raise CovarianceError("circulant embedding has negative eigenvalues")
    out = np.sqrt(np.clip(eig, 0.0, None) / len(row))
    out.setflags(write=False)
    return out


def _unit_path(spec: FbmSpec, trial: int, component: int) -> np.ndarray:
    """fBm at ``mesh * (0..N)`` (starting at 0) for one component."""
    N = spec.grid.n_cells
    mesh = spec.grid.mesh
    out = np.zeros(N + 1)
    if N == 0:
        return out
    if spec.method == "cholesky":
        z = normals(spec.seed, trial, component, N)
        out[1:] = cholesky_factor(spec.hurst, mesh, N) @ z
    else:
        lam = _circulant_sqrt_eigs(spec.hurst, N)
        M = len(lam)
        z = normals(spec.seed, trial, component, 2 * M)
        w = np.fft.fft(lam * (z[:M] + 1j * z[M:]))
        fgn = w.real[:N] * mesh ** spec.hurst
        out[1:] = np.cumsum(fgn)
    return out


def sample_fbm(spec: FbmSpec, trial: int = 0) -> GridPath:
    """One fBm path on ``spec.grid`` (shape ``(n_points, dim)``), pinned to 0 at t = 0."""
    i0 = spec.zero_index
    cols = []
    for comp in range(spec.dim):
        w = _unit_path(spec, trial, comp)
        cols.append(w - w[i0])
    values = np.stack(cols, axis=1)
    values[i0] = 0.0
    return GridPath(spec.grid, values)


def sample_fbm_ensemble(spec: FbmSpec, trials: int, first_trial: int = 0) -> np.ndarray:
    """Array ``(trials, n_points, dim)``; row ``m`` equals ``sample_fbm(spec, first_trial + m)``."""
    N = spec.grid.n_cells
    i0 = spec.zero_index
    out = np.zeros((trials, N + 1, spec.dim))
    if N == 0:
        return out
    if spec.method == "cholesky":
        L = cholesky_factor(spec.hurst, spec.grid.mesh, N)
        for comp in range(spec.dim):
            Z = np.stack([normals(spec.seed, first_trial + m, comp, N) for m in range(trials)])
            out[:, 1:, comp] = Z @ L.T
    else:
        for m in range(trials):
            for comp in range(spec.dim):
                out[m, :, comp] = _unit_path(spec, first_trial + m, comp)
    out -= out[:, i0:i0 + 1, :]
    out[:, i0, :] = 0.0
    return out


@dataclass(frozen=True)
class RescaleReport:
    c: int
    max_discrepancy: float
    discrepancies: np.ndarray
    times: np.ndarray


def rescale_check(ensemble: np.ndarray, c: float, hurst: float, mesh: float,
                  reference: Optional[np.ndarray] = None) -> RescaleReport:
    """Compare the variance profile of ``c^H B_{./c}`` with a reference fBm ensemble.

    Both ensembles are ``(trials, n_points, dim)`` arrays on a grid starting at
    0 with step ``mesh``.  ``c`` must be a positive power of two; the rescaled
    path is read on the coarse times ``c * k * mesh`` (so ``B`` is evaluated at
    ``k * mesh``).  Returns the largest standardized difference of the two
    variance estimates over all compared times and components.  Without a
    reference the input ensemble is compared with itself.
    """
    if c <= 0 or not float(np.log2(c)).is_integer():
        raise ValueError(f"rescaling factor must be a power of 2, got {c}")
    c = int(round(c))
    if reference is None:
        reference = ensemble
    n = ensemble.shape[1]
    kmax = (n - 1) // c
    if kmax < 1:
        raise ValueError("grid too short for this rescaling factor")
    k = np.arange(1, kmax + 1)
    scaled = c ** hurst * ensemble[:, k, :]
    fresh = reference[:, c * k, :]

    def moments(x):
        m2 = np.mean(x ** 2, axis=0)
        m4 = np.mean(x ** 4, axis=0)
        return m2, (m4 - m2 ** 2) / x.shape[0]

    v1, e1 = moments(scaled)
    v2, e2 = moments(fresh)
    se = np.sqrt(e1 + e2)
    diff = v1 - v2
    disc = np.where(se > 0, np.abs(diff) / np.where(se > 0, se, 1.0), np.abs(diff))
    return RescaleReport(c, float(np.max(disc)), disc, c * k * mesh)


@dataclass(frozen=True)
class DriverBundle:
    """A driver path with its delayed areas."""

    path: GridPath
    spec: Optional[FbmSpec]
    areas: "object"

    def __post_init__(self):
        i0 = self.path.grid.index(0.0)
        if np.any(self.path.values[i0] != 0.0) and self.spec is not None:
            raise ValueError("fBm driver must vanish at t = 0")


def fbm_driver(spec: FbmSpec, delays=(), trial: int = 0) -> DriverBundle:
    """Sample a driver and build its areas for the delays ``r_1..r_k`` (and 0)."""
    from .levy import build_area

    path = sample_fbm(spec, trial)
    vs = [0.0] + [-float(r) for r in delays]
    return DriverBundle(path, spec, build_area(path, vs))
