"""Rough delay equations driven by fractional Brownian motion.

Grid increments and Hölder norms, the sewing map, exact fBm sampling with
delayed Lévy areas, controlled paths, the rough integral and a delay
equation solver with one-step and Picard constructions.
"""
from .controlled import CCP, DCP, ccp_norm, dcp_norm, t_sigma
from .fbm import DriverBundle, FbmSpec, fbm_driver, sample_fbm
from .increments import Grid, GridPath, Increment2, Increment3, delta1, delta2
from .integral import rough_integral
from .levy import DelayedArea, build_area
from .sewing import lambda_op, sew
from .solver import DelayRDEProblem, Solution, solve_onestep, solve_picard

__all__ = [
    "CCP", "DCP", "ccp_norm", "dcp_norm", "t_sigma",
    "DriverBundle", "FbmSpec", "fbm_driver", "sample_fbm",
    "Grid", "GridPath", "Increment2", "Increment3", "delta1", "delta2",
    "rough_integral", "DelayedArea", "build_area", "lambda_op", "sew",
    "DelayRDEProblem", "Solution", "solve_onestep", "solve_picard",
]
__version__ = "0.1.0"
