"""Outer iteration for symmetric impulse games.

Each step applies the opponent's mirrored intervention through the gain
operator on ``-I^k`` and then solves a single-player impulse control
problem on the remaining nodes, with the half-step payoff frozen on
``-I^k``.  The loop stops on exact or tolerance convergence, on a repeated
payoff fingerprint (cycle), on stagnation of the relative change, or at
the iteration cap.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .diagnostics import ResidualReport, diff_metric, qvi_residual
from .discretization import CONSTRAINED, DiscreteGame
from .impulse_solver import SolverParams, solve_impulse_control

FINGERPRINT_DIGITS = 12


class OutcomeKind(str, Enum):
    CONVERGED_EXACT = "ConvergedExact"
    CONVERGED_TOL = "ConvergedTol"
    CYCLED = "Cycled"
    STAGNATED = "Stagnated"
    MAX_ITERS = "MaxIters"

    @property
    def converged(self) -> bool:
        return self in (OutcomeKind.CONVERGED_EXACT, OutcomeKind.CONVERGED_TOL)


@dataclass(frozen=True)
class DriverParams:
    """``tol = 0`` disables the tolerance test and runs until stagnation."""

    tol: float = 1e-10
    scale: float = 1.0
    max_outer_iters: int = 500
    cycle_window: int = 8
    v0: np.ndarray | None = None

    def __post_init__(self):
        if self.tol < 0:
            raise ValueError("outer tolerance must be nonnegative")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if self.cycle_window < 2:
            raise ValueError("cycle_window must be at least 2")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be positive")


@dataclass
class HistoryEntry:
    k: int
    diff: float
    max_res: float
    fingerprint: str
    inner_iters: int


@dataclass
class IterationState:
    k: int
    v: np.ndarray
    I: np.ndarray
    delta: np.ndarray
    history: list = field(default_factory=list)


@dataclass
class NESummary:
    """Threshold-type equilibrium read off the intervention set.

    ``boundary`` is the largest node of ``I`` and ``target`` its impulse
    target ``x + delta(x)``; ``uniform_target`` tells whether all of ``I``
    jumps to that same point.  Opponent quantities are mirrored through the
    symmetry line.
    """

    boundary: float | None
    target: float | None
    uniform_target: bool
    opponent_boundary: float | None
    opponent_target: float | None


@dataclass
class DegenerateReport:
    alternated: list
    one_sided: list

    @property
    def flagged(self) -> bool:
        return bool(self.alternated or self.one_sided)


@dataclass
class Outcome:
    """Result of a run.

    ``v``, ``I``, ``delta``, ``diff``, ``residual`` and ``ne`` describe the
    reported iterate ``iters``: the last one on convergence, otherwise the
    most accurate one seen (smallest maxResQVIs, then smallest Diff).
    ``final_iter`` is the step at which the loop stopped.
    """

    kind: OutcomeKind
    v: np.ndarray
    I: np.ndarray
    delta: np.ndarray
    iters: int
    diff: float
    residual: ResidualReport
    ne: NESummary
    degenerate: DegenerateReport
    max_sup_norm: float
    final_iter: int = 0
    period: int | None = None
    history: list = field(default_factory=list)

    @property
    def label(self) -> str:
        if self.kind is OutcomeKind.CYCLED:
            return f"Cycled({self.period})"
        return self.kind.value


def fingerprint(v: np.ndarray, I: np.ndarray, digits: int = FINGERPRINT_DIGITS) -> str:
    """Hash of ``v`` rounded to ``digits`` significant digits, together with ``I``."""
    text = ",".join(f"{x:.{digits - 1}e}" for x in (np.asarray(v, dtype=float) + 0.0))
    h = hashlib.sha1(text.encode())
    h.update(np.packbits(np.asarray(I, dtype=bool)).tobytes())
    return h.hexdigest()


def init(game: DiscreteGame, params: DriverParams = DriverParams()) -> IterationState:
    v0 = np.zeros(game.n) if params.v0 is None else np.asarray(params.v0, dtype=float).copy()
    if v0.shape != (game.n,):
        raise ValueError("initial guess has the wrong length")
    mv, delta = game.loss_operator(v0)
    return IterationState(k=0, v=v0, I=game.intervention_set(v0, mv), delta=delta)


def step(game: DiscreteGame, state: IterationState, solver_params: SolverParams = SolverParams()) -> tuple[IterationState, int]:
    """One outer step; returns the new state and the inner iteration count."""
    mirror = state.I[::-1]
    v_half = np.where(mirror, game.gain_operator(state.v, state.delta), state.v)
    sol = solve_impulse_control(game, v_half, ~mirror, solver_params)
    new = IterationState(k=state.k + 1, v=sol.v, I=sol.I, delta=sol.delta, history=state.history)
    return new, sol.iters


def ne_summary(game: DiscreteGame, I: np.ndarray, delta: np.ndarray) -> NESummary:
    if not I.any():
        return NESummary(None, None, True, None, None)
    s = game.spec.symmetry_line
    p = int(np.flatnonzero(I).max())
    boundary = float(game.x[p])
    target = float(game.x[p] + delta[p])
    targets = game.x[I] + delta[I]
    return NESummary(
        boundary=boundary,
        target=target,
        uniform_target=bool(np.all(targets == target)),
        opponent_boundary=2 * s - boundary,
        opponent_target=2 * s - target,
    )


def detect_degenerate_equilibrium(game: DiscreteGame, state: IterationState) -> DegenerateReport:
    """Flag intervention patterns that cannot describe a genuine equilibrium.

    Alternated: the target lies in the opponent region ``-I`` (or, with
    constrained sets, on the node just before ``-x``), so the opponent
    answers at once.  One-sided: the impulse moves a single step and lands
    inside ``I`` again, producing a chain of interventions.
    """
    I = np.asarray(state.I, dtype=bool)
    mirror = I[::-1]
    steps = game.steps(state.delta)
    kmax = game.impulse_sets.max_steps
    alternated, one_sided = [], []
    for p in np.flatnonzero(I):
        t = p + int(steps[p])
        if mirror[t] or (game.impulse_mode == CONSTRAINED and steps[p] == kmax[p]):
            alternated.append(float(game.x[p]))
        elif steps[p] == 1 and I[t]:
            one_sided.append(float(game.x[p]))
    return DegenerateReport(alternated=alternated, one_sided=one_sided)


def _finish(game, kind, state, diff, max_norm, final_iter, period=None) -> Outcome:
    return Outcome(
        kind=kind,
        v=state.v,
        I=state.I,
        delta=state.delta,
        iters=state.k,
        diff=diff,
        residual=qvi_residual(game, state.v, diff),
        ne=ne_summary(game, state.I, state.delta),
        degenerate=detect_degenerate_equilibrium(game, state),
        max_sup_norm=max_norm,
        final_iter=final_iter,
        period=period,
        history=state.history,
    )


def run(
    game: DiscreteGame,
    params: DriverParams = DriverParams(),
    solver_params: SolverParams = SolverParams(),
    on_step: Callable[[IterationState, IterationState], None] | None = None,
) -> Outcome:
    """Iterate until convergence, cycling, stagnation or the iteration cap.

    Cycling means a rounded payoff fingerprint reappears after 2 to
    ``cycle_window`` steps; stagnation means Diff has not reached a new
    minimum for ``cycle_window`` steps.
    """
    state = init(game, params)
    window = params.cycle_window
    seen: dict[str, int] = {fingerprint(state.v, state.I): 0}
    best_diff, best_diff_k = math.inf, 0
    best, best_key = None, (math.inf, math.inf)
    max_norm = float(np.max(np.abs(state.v)))
    diff = math.inf

    def stop(kind, new, period=None):
        if kind.converged or best is None:
            return _finish(game, kind, new, diff, max_norm, new.k, period)
        b_state, b_diff = best
        return _finish(game, kind, b_state, b_diff, max_norm, new.k, period)

    for _ in range(params.max_outer_iters):
        new, inner = step(game, state, solver_params)
        diff = diff_metric(new.v, state.v, params.scale)
        exact = bool(np.array_equal(new.v, state.v))
        fp = fingerprint(new.v, new.I)
        max_norm = max(max_norm, float(np.max(np.abs(new.v))))
        res = qvi_residual(game, new.v).max_res
        new.history.append(HistoryEntry(new.k, diff, res, fp, inner))
        if (res, diff) < best_key:
            best_key, best = (res, diff), (new, diff)
        if on_step is not None:
            on_step(state, new)
        if exact:
            return stop(OutcomeKind.CONVERGED_EXACT, new)
        if diff < params.tol:
            return stop(OutcomeKind.CONVERGED_TOL, new)
        lag = new.k - seen[fp] if fp in seen else None
        if lag is not None and 2 <= lag <= window:
            return stop(OutcomeKind.CYCLED, new, period=lag)
        seen[fp] = new.k
        if diff < best_diff:
            best_diff, best_diff_k = diff, new.k
        elif new.k - best_diff_k >= window:
            return stop(OutcomeKind.STAGNATED, new)
        state = new
    return stop(OutcomeKind.MAX_ITERS, state)
