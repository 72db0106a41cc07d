import warnings
from dataclasses import replace

import numpy as np
import pytest

from impulsegames.discretization import build_grid, discretize
from impulsegames.game_driver import (
    DriverParams,
    IterationState,
    OutcomeKind,
    detect_degenerate_equilibrium,
    fingerprint,
    init,
    ne_summary,
    run,
    step,
)
from impulsegames.game_model import CostFamily, GainFamily, GameSpec, PayoffFamily, linear_game
from impulsegames.impulse_solver import solve_impulse_control

EXACT_RUN = DriverParams(tol=0)


def linear(h, **kw):
    return discretize(linear_game(), build_grid(4, h), **kw)


def test_init_zero_guess():
    game = linear("1/2")
    state = init(game)
    assert state.k == 0 and not state.v.any()
    # Lv + f = f and Mv - v = -c(0) at v = 0
    np.testing.assert_array_equal(state.I, (game.f <= -100.0) & game.grid.negative)
    assert not state.I.any()


def test_init_cheap_cost_direct_evaluation():
    spec = replace(linear_game(), cost=CostFamily(0.5, 0.1))
    game = discretize(spec, build_grid(4, 1))
    state = init(game)
    mv = np.array([max(-spec.cost(k * game.h) for k in range(game.impulse_sets.size(p))) for p in range(game.n)])
    np.testing.assert_array_equal(state.I, (game.f <= mv) & game.grid.negative)
    assert state.I.any()


def test_init_huge_cost_and_sign_restriction(rng):
    game = discretize(replace(linear_game(), cost=CostFamily(1e12)), build_grid(2, 0.5))
    assert not init(game).I.any()
    game = discretize(GameSpec(cost=CostFamily(0.01)), build_grid(2, 0.5))
    for _ in range(10):
        I = init(game, DriverParams(v0=rng.normal(scale=5, size=game.n))).I
        assert not I[~game.grid.negative].any()


def test_init_rejects_bad_guess():
    with pytest.raises(ValueError):
        init(linear(1), DriverParams(v0=np.zeros(3)))


def test_step_without_interventions_is_plain_control_problem():
    game = linear("1/2")
    v = np.linspace(-50, 50, game.n)
    state = IterationState(0, v, np.zeros(game.n, dtype=bool), np.zeros(game.n))
    new, _ = step(game, state)
    ref = solve_impulse_control(game, v, np.ones(game.n, dtype=bool))
    np.testing.assert_array_equal(new.v, ref.v)
    np.testing.assert_array_equal(new.I, ref.I)
    assert new.k == 1


def test_fixed_point_step_is_stationary():
    game = linear(1)
    out = run(game, EXACT_RUN)
    assert out.kind is OutcomeKind.CONVERGED_EXACT
    state = IterationState(out.iters, out.v, out.I, out.delta)
    new, _ = step(game, state)
    np.testing.assert_array_equal(new.v, out.v)
    np.testing.assert_array_equal(new.I, out.I)


@pytest.mark.parametrize("h, iters", [("1", 17), ("1/2", 13)])
def test_coarse_linear_game_converges_exactly(h, iters):
    out = run(linear(h), EXACT_RUN)
    assert out.kind is OutcomeKind.CONVERGED_EXACT
    assert out.iters == out.final_iter == iters
    assert out.residual.max_res <= 1e-14
    assert out.diff == 0.0


def test_tolerance_stop():
    out = run(linear(1), DriverParams(tol=1e-3))
    assert out.kind is OutcomeKind.CONVERGED_TOL
    assert out.diff < 1e-3
    assert out.iters < 17


def test_cycle_detected_and_best_iterate_reported():
    out = run(linear("1/4"), EXACT_RUN)
    assert out.kind is OutcomeKind.CYCLED
    assert out.period == 2 and out.label == "Cycled(2)"
    assert out.final_iter >= out.iters
    best = min((e.max_res, e.diff) for e in out.history)
    assert out.residual.max_res == best[0]
    assert len(out.history) == out.final_iter


def test_iteration_cap():
    out = run(linear("1/4"), DriverParams(tol=0, max_outer_iters=3))
    assert out.kind is OutcomeKind.MAX_ITERS
    assert out.final_iter == 3


def test_callback_sees_every_step():
    seen = []
    out = run(linear(1), EXACT_RUN, on_step=lambda prev, new: seen.append((prev.k, new.k)))
    assert seen == [(k, k + 1) for k in range(out.final_iter)]


def test_run_is_deterministic():
    a = run(linear("1/8"), EXACT_RUN)
    b = run(linear("1/8"), EXACT_RUN)
    np.testing.assert_array_equal(a.v, b.v)
    assert [e.fingerprint for e in a.history] == [e.fingerprint for e in b.history]


def test_fingerprint_rounding():
    v = np.array([1.0, -2.5, 1e-3])
    I = np.array([True, False, False])
    assert fingerprint(v, I) == fingerprint(v * (1 + 1e-15), I)
    assert fingerprint(v, I) != fingerprint(v * (1 + 1e-9), I)
    assert fingerprint(v, I) != fingerprint(v, ~I)
    assert fingerprint(np.zeros(2), I[:2]) == fingerprint(-np.zeros(2), I[:2])


@pytest.mark.parametrize("kwargs", [{"tol": -1.0}, {"scale": 0.0}, {"cycle_window": 1}, {"max_outer_iters": 0}])
def test_driver_params_validation(kwargs):
    with pytest.raises(ValueError):
        DriverParams(**kwargs)


def test_ne_summary():
    game = discretize(GameSpec(symmetry_line=1.0), build_grid(2, 1))
    I = np.array([True, True, False, False, False])
    delta = np.array([3.0, 2.0, 0, 0, 0])
    ne = ne_summary(game, I, delta)
    assert (ne.boundary, ne.target, ne.uniform_target) == (0.0, 2.0, True)
    assert (ne.opponent_boundary, ne.opponent_target) == (2.0, 0.0)
    assert not ne_summary(game, I, np.array([2.0, 2.0, 0, 0, 0])).uniform_target
    assert ne_summary(game, np.zeros(5, dtype=bool), np.zeros(5)).boundary is None


def test_degenerate_patterns():
    game = discretize(GameSpec(), build_grid(3, 1))
    I = np.array([True, True, True, False, False, False, False])
    # -3 jumps into the mirrored region {1, 2, 3}; -2 moves one step to -1, still in I
    s = IterationState(0, np.zeros(7), I, np.array([5.0, 1.0, 0, 0, 0, 0, 0]))
    rep = detect_degenerate_equilibrium(game, s)
    assert rep.alternated == [-3.0] and rep.one_sided == [-2.0] and rep.flagged
    s = IterationState(0, np.zeros(7), I & [False, True, False, False, False, False, False], np.array([0, 2.0, 0, 0, 0, 0, 0]))
    assert not detect_degenerate_equilibrium(game, s).flagged


def test_healthy_equilibrium_not_flagged():
    out = run(linear("1/64"), EXACT_RUN)
    assert not out.degenerate.flagged
    assert out.ne.uniform_target


def test_free_interventions_alternate():
    spec = replace(linear_game(), cost=CostFamily(0.0, 15.0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        game = discretize(spec, build_grid(4, 1), allow_nonpositive_cost=True)
    out = run(game, EXACT_RUN)
    assert out.degenerate.alternated


def test_gain_above_cost_is_flagged_and_grows():
    spec = replace(linear_game(), gain=GainFamily(100.0, 20.0))
    norms = []
    for h in ("1", "1/2", "1/4"):
        out = run(discretize(spec, build_grid(4, h)), EXACT_RUN)
        assert out.degenerate.flagged or out.kind is OutcomeKind.CYCLED
        norms.append(np.max(np.abs(out.v)))
    assert norms[0] < norms[1] < norms[2]


def test_running_payoff_only_game_never_intervenes():
    spec = GameSpec(rho=0.5, running_payoff=PayoffFamily((1.0,)), cost=CostFamily(10.0))
    out = run(discretize(spec, build_grid(2, 0.5)), EXACT_RUN)
    assert out.kind is OutcomeKind.CONVERGED_EXACT
    assert not out.I.any()
    np.testing.assert_allclose(out.v, 2.0, rtol=1e-13)
