"""Finite-time blow-up of damped semilinear waves on expanding backgrounds.

The equation is  u_tt - a(t) Δu + mu u_t = |u|^p  (or |∇u|^p)  with small
compactly supported data of size ε.  The package provides admissible
coefficients a(t), backward light cones, a radial/Cartesian solver with
lifespan estimation, an ODE oracle for the spatially flat problem, weighted
integral functionals, ε-sweeps and a command-line front end.
"""

from .scale_factor import Constant, DeSitter, PowerLaw, Tabulated, check_admissible
from .solver import (ConfigError, Grid, InitialData, Nonlinearity, ProblemSpec, Scheme,
                     Stepping, Verdict, estimate_lifespan, simulate)

__version__ = "0.1.0"

__all__ = [
    "Constant", "DeSitter", "PowerLaw", "Tabulated", "check_admissible",
    "ConfigError", "Grid", "InitialData", "Nonlinearity", "ProblemSpec", "Scheme",
    "Stepping", "Verdict", "estimate_lifespan", "simulate",
]
