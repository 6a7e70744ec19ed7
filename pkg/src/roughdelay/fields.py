"""Coefficient fields ``sigma: R^{n x (k+1)} -> R^{n x d}`` with Jacobians.

``eval(u)`` takes ``u`` of shape ``(..., n, k+1)`` (column ``i`` is the state
delayed by ``r_i``) and returns ``(..., n, d)``.  ``jac(u, i)`` returns
``(..., n, d, n)`` with entry ``[l, b, m] = d sigma_{l,b} / d u_{m,i}``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class SigmaField:
    name: str
    n: int
    d: int
    k: int
    eval: Callable[[np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray, int], np.ndarray]
    sup: float
    lip: float
    second: float

    def check_input(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape[-2:] != (self.n, self.k + 1):
            raise ValueError(f"sigma expects (..., {self.n}, {self.k + 1}), got {u.shape}")
        return u


def jacobian_fd_defect(sigma: SigmaField, points: int = 50, seed: int = 0,
                       step: float = 1e-6) -> float:
    """Largest ``|jac - central difference| / (1 + |jac|)`` over seeded random points."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(points):
        u = rng.normal(size=(sigma.n, sigma.k + 1))
        for i in range(sigma.k + 1):
            J = sigma.jac(u, i)
            fd = np.empty_like(J)
            for m in range(sigma.n):
                e = np.zeros_like(u)
                e[m, i] = step
                fd[:, :, m] = (sigma.eval(u + e) - sigma.eval(u - e)) / (2 * step)
            worst = max(worst, float(np.max(np.abs(J - fd)) / (1 + np.max(np.abs(J)))))
    return worst


def constant(matrix) -> "Callable[[int], SigmaField]":
    S = np.asarray(matrix, dtype=float)
    n, d = S.shape

    def build(k: int) -> SigmaField:
        return SigmaField(
            "constant", n, d, k,
            eval=lambda u: np.broadcast_to(S, np.shape(u)[:-2] + (n, d)).copy(),
            jac=lambda u, i: np.zeros(np.shape(u)[:-2] + (n, d, n)),
            sup=float(np.max(np.abs(S))), lip=0.0, second=0.0)
    return build


def linear(tensors) -> SigmaField:
    """``sigma_{l,b}(u) = sum_{i,m} A_i[l,b,m] u[m,i]`` from a list ``A_0..A_k``."""
    A = np.asarray(tensors, dtype=float)
    k1, n, d, n2 = A.shape
    if n2 != n:
        raise ValueError("each A_i must have shape (n, d, n)")
    return SigmaField(
        "linear", n, d, k1 - 1,
        eval=lambda u: np.einsum("ilbm,...mi->...lb", A, u),
        jac=lambda u, i: np.broadcast_to(A[i], np.shape(u)[:-2] + (n, d, n)).copy(),
        sup=np.inf, lip=float(np.sum(np.max(np.abs(A), axis=(1, 2, 3)))), second=0.0)


def sine(n: int, d: int, k: int, seed: int = 0, scale: float = 1.0,
         coupling: float = 0.5) -> SigmaField:
    """``sigma_{l,b}(u) = scale * sin(sum_{m,i} W[l,b,m,i] u[m,i] + phi[l,b])``."""
    rng = np.random.default_rng(seed)
    W = coupling * rng.uniform(-1, 1, size=(n, d, n, k + 1))
    phi = rng.uniform(0, 2 * np.pi, size=(n, d))

    def arg(u):
        return np.einsum("lbmi,...mi->...lb", W, u) + phi

    def ev(u):
        return scale * np.sin(arg(u))

    def jac(u, i):
        return scale * np.cos(arg(u))[..., None] * W[:, :, :, i]

    wsum = float(np.max(np.sum(np.abs(W), axis=(2, 3))))
    return SigmaField("sine", n, d, k, ev, jac, sup=scale, lip=scale * wsum,
                      second=scale * wsum ** 2)


def bilinear_noncommuting(k: int = 1, delay_weight: float = 0.5) -> SigmaField:
    """Linear field on ``n = d = 2`` with non-commuting column matrices.

    Column ``b`` is ``M_b u_0 + N_b u_1`` (``u_1`` only when ``k >= 1``) with
    ``M_0 = [[0, 1], [0, 0]]``, ``M_1 = [[0, 0], [1, 0]]`` and ``N_b = w M_b^T``.
    """
    M = np.zeros((2, 2, 2))  # [l, b, m]
    M[0, 0, 1] = 1.0
    M[1, 1, 0] = 1.0
    Nd = np.zeros((2, 2, 2))
    Nd[1, 0, 0] = delay_weight
    Nd[0, 1, 1] = delay_weight
    tensors = [M] + ([Nd] + [np.zeros_like(M)] * (k - 1) if k >= 1 else [])
    f = linear(tensors)
    return SigmaField("bilinear-noncommuting", 2, 2, k, f.eval, f.jac, f.sup, f.lip, 0.0)


MODELS = ("constant", "linear", "sine", "bilinear-noncommuting")


def make_sigma(name: str, n: int, d: int, k: int, seed: int = 0) -> SigmaField:
    """Registered fields by name, for the command line."""
    if name == "constant":
        S = 0.5 + 0.25 * np.arange(n * d).reshape(n, d) / max(n * d - 1, 1)
        return constant(S)(k)
    if name == "linear":
        rng = np.random.default_rng(seed)
        return linear(0.5 * rng.uniform(-1, 1, size=(k + 1, n, d, n)))
    if name == "sine":
        return sine(n, d, k, seed)
    if name == "bilinear-noncommuting":
        if (n, d) != (2, 2):
            raise ValueError("bilinear-noncommuting needs n = d = 2")
        return bilinear_noncommuting(k)
    raise ValueError(f"unknown sigma model {name!r}; choose from {MODELS}")
