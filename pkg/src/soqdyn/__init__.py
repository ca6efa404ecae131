"""Quench dynamics of a trapped spin-orbit coupled gas.

Subpackages and modules: :mod:`~soqdyn.grid` (spectral grids),
:mod:`~soqdyn.model` (Hamiltonian pieces), :mod:`~soqdyn.qprop`
(split-operator propagation), :mod:`~soqdyn.classical` (trajectories,
sections, Lyapunov exponents), :mod:`~soqdyn.twa` (truncated Wigner
ensembles), :mod:`~soqdyn.observables` and :mod:`~soqdyn.quenchlab`
(experiment drivers and CLI).
"""
__version__ = "0.1.0"

from .errors import (ConfigError, ConvergenceError, IntegrationError, NumericalError,  # noqa: E402
                     SoqdynError, SpaceMismatchError)
from .grid import Direction, Grid2D, Space, grid_for_energy, make_grid  # noqa: E402
from .model import ModelParams, accessible_region  # noqa: E402
from .qprop import Minimum, Mode, PropagatorConfig, QuantumState, evolve, prepare_quasi_ground  # noqa: E402

__all__ = [
    "__version__",
    "SoqdynError", "ConfigError", "SpaceMismatchError", "NumericalError", "ConvergenceError",
    "IntegrationError",
    "Grid2D", "Space", "Direction", "make_grid", "grid_for_energy",
    "ModelParams", "accessible_region",
    "Mode", "Minimum", "PropagatorConfig", "QuantumState", "evolve", "prepare_quasi_ground",
]
