import numpy as np
import pytest

from impulsegames.discretization import CONSTRAINED, UNCONSTRAINED, Grid, discretize
from impulsegames.game_model import CostFamily, GainFamily, GameSpec, PayoffFamily

# criterion number -> (passed, detail); filled in by test_acceptance.py
ACCEPTANCE_RESULTS = {}


def random_spec(rng):
    return GameSpec(
        drift_kappa=rng.choice([0.0, rng.uniform(0.0, 1.0)]),
        sigma0=rng.uniform(0.3, 2.0),
        rho=rng.uniform(0.05, 1.0),
        running_payoff=PayoffFamily(tuple(rng.uniform(-2, 2, size=rng.integers(1, 4))), rng.uniform(-1, 1)),
        cost=CostFamily(rng.uniform(0.2, 3.0), rng.uniform(0.0, 2.0), rng.uniform(0.0, 0.5), rng.uniform(0.0, 0.5)),
        gain=GainFamily(rng.uniform(-1, 1), rng.uniform(0.0, 1.0)),
    )


def random_game(rng, N=None, mode=None):
    N = int(rng.integers(1, 4)) if N is None else N
    h = float(rng.choice([0.25, 0.5, 1.0]))
    mode = rng.choice([CONSTRAINED, UNCONSTRAINED]) if mode is None else mode
    return discretize(random_spec(rng), Grid(N, h), impulse_mode=str(mode))


def random_region(rng, game):
    """Solvency region: all nonpositive nodes plus a random part of the positive ones."""
    return game.grid.nonpositive | (rng.uniform(size=game.n) < 0.5)


def random_exterior(rng, game):
    return rng.uniform(-5, 5, size=game.n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
