"""Counter-based random streams.

Every stream is a numpy ``Philox`` generator keyed by ``(seed, trial)`` with
the component index in the high word of the counter, so any trial or
component can be regenerated on its own, in any order, on any worker.

Normal deviates use a fixed Box-Muller transform on raw 64-bit words
(never numpy's ziggurat), which keeps the bytes stable across numpy versions:

    u = ((w >> 11) + 0.5) * 2**-53          # in (0, 1), never 0 or 1
    z1 = sqrt(-2 log u1) cos(2 pi u2),  z2 = sqrt(-2 log u1) sin(2 pi u2)
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def philox(seed: int, trial: int = 0, component: int = 0) -> np.random.Philox:
    """Bit generator for stream id ``(seed, trial, component)``."""
    if seed < 0 or trial < 0 or component < 0:
        raise ValueError("stream ids must be non-negative")
    key = (int(seed) & _MASK64) | ((int(trial) & _MASK64) << 64)
    counter = (int(component) & _MASK64) << 192
    return np.random.Philox(key=key, counter=counter)


def uniforms(seed: int, trial: int, component: int, count: int) -> np.ndarray:
    """``count`` uniforms in the open interval (0, 1)."""
    raw = philox(seed, trial, component).random_raw(count)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def normals(seed: int, trial: int, component: int, count: int) -> np.ndarray:
    """``count`` standard normal deviates from stream ``(seed, trial, component)``."""
    pairs = (count + 1) // 2
    u = uniforms(seed, trial, component, 2 * pairs)
    r = np.sqrt(-2.0 * np.log(u[0::2]))
    theta = 2.0 * np.pi * u[1::2]
    z = np.empty(2 * pairs)
    z[0::2] = r * np.cos(theta)
    z[1::2] = r * np.sin(theta)
    return z[:count]
