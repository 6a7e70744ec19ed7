"""Shared builders for controlled paths, smooth oracles and solver problems."""
import numpy as np

from roughdelay.controlled import CCP, t_sigma
from roughdelay.fbm import DriverBundle, FbmSpec, fbm_driver
from roughdelay.increments import Grid, GridPath
from roughdelay.integral import rough_integral
from roughdelay.levy import build_area
from roughdelay.reference import cumulative_quadrature, smooth_driver, smooth_driver_derivative, smooth_path
from roughdelay.solver import DelayRDEProblem

R = 0.25
XI = np.array([0.5, 0.3])


def smooth_map(seed, n=2, d=2):
    """``phi(x) = z0 + B x + c sin(x^0)`` and its derivative, vectorized over points."""
    rng = np.random.default_rng(seed)
    B = rng.uniform(-1, 1, size=(n, d))
    c = rng.uniform(-0.5, 0.5, size=n)
    z0 = rng.uniform(-1, 1, size=n)

    def phi(x):
        value = z0 + x @ B.T + c * np.sin(x[:, :1])
        dens = np.broadcast_to(B, (len(x), n, d)).copy()
        dens[:, :, 0] += c * np.cos(x[:, :1])
        return value, dens
    return phi


def smooth_ccp(driver, lo, hi, seed, n=2):
    """The controlled path ``phi(x)`` on driver indices ``lo..hi`` with its exact density."""
    x = driver.values[lo:hi + 1]
    value, dens = smooth_map(seed, n, x.shape[1])(x)
    return CCP(driver, lo, value, dens)


def composed(driver, sigma, shift, lo, hi, seeds=(1, 2)):
    """``T_sigma(z, z~)`` for smooth ``z`` on ``[lo, hi]`` and ``z~`` on ``[lo - shift, hi]``."""
    z = smooth_ccp(driver, lo, hi, seeds[0])
    zt = smooth_ccp(driver, lo - shift, hi, seeds[1])
    return t_sigma(z, zt, sigma, (0, shift))


def smooth_setup(mesh):
    grid = Grid(-R, 1.0, mesh)
    x = smooth_path(grid)
    return grid, x, build_area(x, [0.0, -R])


def smooth_oracle(sigma, seeds=(1, 2)):
    """int_0^1 sigma(phi1(x_u), phi2(x_{u-r})) dx_u by Gauss-Legendre on a fine grid."""
    phi1, phi2 = smooth_map(seeds[0]), smooth_map(seeds[1])

    def integrand(u):
        a = phi1(smooth_driver(u))[0]
        b = phi2(smooth_driver(u - R))[0]
        S = sigma.eval(np.stack([a, b], axis=-1))
        return np.einsum("tlb,tb->tl", S, smooth_driver_derivative(u))
    return cumulative_quadrature(integrand, np.linspace(0, 1, 4097))[-1]


def smooth_errors(sigma, flip=False, meshes=(1 / 32, 1 / 64, 1 / 128, 1 / 256)):
    """Endpoint errors of the rough integral of ``T_sigma`` against the smooth oracle."""
    ref = smooth_oracle(sigma)
    errs = []
    for mesh in meshes:
        grid, x, A = smooth_setup(mesh)
        i0, s = grid.index(0.0), grid.steps(R)
        m = composed(x, sigma, s, i0, grid.n_cells)
        J = rough_integral(m, A, np.zeros(2), flip=flip)
        errs.append(np.max(np.abs(J.value[-1] - ref)))
    return np.asarray(meshes), np.asarray(errs)


def make_problem(sigma, seed=0, H=0.45, mesh=1 / 256, T=1.0, delays=(R,), driver=None, xi=None,
                 kappa=None):
    r_max = delays[-1] if delays else 0.0
    if driver is None:
        driver = fbm_driver(FbmSpec(H, sigma.d, Grid(-r_max, T, mesh), seed), list(delays))
    grid = driver.path.grid
    i0 = grid.index(0.0)
    if xi is None:
        xi = GridPath(grid.sub(0, i0), np.tile(XI[:sigma.n], (i0 + 1, 1)))
    kappa = min(0.4, H - 0.02) if kappa is None else kappa
    return DelayRDEProblem(sigma, tuple(delays), xi, driver, T, kappa, H)


def smooth_problem(sigma, mesh, xi=None, delays=(R,)):
    grid = Grid(-R, 1.0, mesh)
    x = smooth_path(grid)
    drv = DriverBundle(x, None, build_area(x, [0.0] + [-r for r in delays]))
    return make_problem(sigma, driver=drv, xi=xi, delays=delays)
