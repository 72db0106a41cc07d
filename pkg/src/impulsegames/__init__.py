"""Solver for symmetric two-player nonzero-sum stochastic impulse games."""
from .discretization import build_grid, discretize
from .game_driver import DriverParams, OutcomeKind, run
from .game_model import GameSpec, cash_management_game, linear_game
from .impulse_solver import SolverParams

__all__ = [
    "DriverParams",
    "GameSpec",
    "OutcomeKind",
    "SolverParams",
    "build_grid",
    "cash_management_game",
    "discretize",
    "linear_game",
    "run",
]
__version__ = "0.1.0"
