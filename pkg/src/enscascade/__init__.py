"""Ensemble-averaged enstrophy cascade diagnostics for periodic-box flows."""

__version__ = "0.1.0"

from .grid import Grid3, ScalarField, VectorField3
from .localization import make_temporal_cutoff, make_test_function, refine, verify_bounds
from .ensemble import Ensemble, build_cover_ensemble, ensemble_average, refine_ensemble
from .solver import SolverConfig, Trajectory, run, step
