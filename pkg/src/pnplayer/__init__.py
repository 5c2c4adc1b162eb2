"""Simulation and verification tools for 1D Poisson-Nernst-Planck boundary layers."""

from .core import (ConvergenceError, Grid, NegativeDensityError, Params,
                   UnresolvedLayerError, make_grid)

__version__ = "0.1.0"

__all__ = ["Params", "Grid", "make_grid", "ConvergenceError",
           "NegativeDensityError", "UnresolvedLayerError", "__version__"]
