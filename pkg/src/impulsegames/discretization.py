"""Discrete problem on a symmetric equispaced grid.

Everything here works in coordinates shifted by the symmetry line, so the
grid is ``x_i = i h`` for ``i = -N..N`` and node ``x_i`` lives at array
position ``i + N``.  The reflection ``Sv(x) = v(-x)`` is simply ``v[::-1]``.

Impulses are stored as real vectors ``delta`` (one entry per node).  The
admissible sets are multiples of ``h``, so every impulse lands exactly on a
node and the interpolating impulse operator reduces to a shift; the general
interpolating form is kept in :func:`build_impulse_operator`.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from .game_model import DegenerateGameWarning, GameSpec, eval_drift, eval_f
from .matrix_analysis import classify_rows, is_l0_matrix

CONSTRAINED = "constrained"
UNCONSTRAINED = "unconstrained"


class NonPositiveCostError(ValueError):
    """Some admissible impulse has a nonpositive cost."""


@dataclass(frozen=True)
class Grid:
    """Symmetric grid ``x_i = i h``, ``i = -N..N``."""

    N: int
    h: float

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("grid needs N >= 1")
        if not self.h > 0:
            raise ValueError("grid step h must be positive")

    @property
    def n(self) -> int:
        return 2 * self.N + 1

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(-self.N, self.N + 1) * self.h

    @property
    def index(self) -> np.ndarray:
        """Signed node indices ``-N..N`` aligned with array positions."""
        return np.arange(-self.N, self.N + 1)

    @property
    def negative(self) -> np.ndarray:
        return self.index < 0

    @property
    def nonpositive(self) -> np.ndarray:
        return self.index <= 0

    def position(self, i: int) -> int:
        return i + self.N


def build_grid(x_max, h) -> Grid:
    """Symmetric grid with endpoint ``x_max`` and step ``h``.

    ``x_max / h`` must be an integer.  Strings such as ``"1/64"`` or
    ``"0.01"`` are read exactly, so decimal steps are accepted.
    """
    ratio = _exact(x_max) / _exact(h)
    if _exact(h) <= 0:
        raise ValueError("grid step h must be positive")
    if ratio.denominator != 1:
        # float inputs such as 0.1 are not exact; allow a rounding-level mismatch
        approx = float(ratio)
        if isinstance(h, float) and abs(approx - round(approx)) <= 1e-9 * max(1.0, approx):
            ratio = Fraction(round(approx))
        else:
            raise ValueError(f"x_max={x_max} is not an integer multiple of h={h}")
    return Grid(N=int(ratio), h=float(_exact(h)))


def _exact(value) -> Fraction:
    if isinstance(value, str):
        return Fraction(value.strip())
    return Fraction(value)


@dataclass(frozen=True)
class BoundaryData:
    """Neumann slopes used to eliminate the ghost nodes at both ends."""

    lbc: float = 0.0
    rbc: float = 0.0
    heuristic: bool = False


def default_boundary(spec: GameSpec) -> BoundaryData:
    """Slopes ``(c1, g1)`` for affine cost and gain; ``(0, 0)`` flagged heuristic otherwise."""
    if spec.cost.is_affine:
        return BoundaryData(lbc=spec.cost.c1, rbc=spec.gain.g1)
    return BoundaryData(0.0, 0.0, heuristic=True)


@dataclass(frozen=True)
class GeneratorMatrix:
    """Tridiagonal ``L`` stored as three bands plus the boundary-corrected ``f``.

    ``lower[p]`` multiplies ``v[p-1]`` and ``upper[p]`` multiplies ``v[p+1]``.
    """

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    f_adjusted: np.ndarray

    @property
    def n(self) -> int:
        return self.diag.size

    def to_scipy(self) -> sp.csr_matrix:
        return sp.diags(
            [self.lower[1:], self.diag, self.upper[:-1]], [-1, 0, 1], format="csr"
        )

    def apply(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        out[1:] += self.lower[1:] * v[:-1]
        out[:-1] += self.upper[:-1] * v[1:]
        return out


def build_generator(spec: GameSpec, grid: Grid, bc: BoundaryData | None = None) -> GeneratorMatrix:
    """Upwind discretization of ``1/2 sigma^2 V'' + mu V' - rho V``.

    Forward differences where ``mu >= 0`` and backward ones elsewhere, so all
    off-diagonal weights are nonnegative.  Ghost values
    ``v(x_-N - h) = v(x_-N) - lbc h`` and ``v(x_N + h) = v(x_N) + rbc h`` are
    folded into the diagonal and into ``f``.
    """
    bc = bc or default_boundary(spec)
    h = grid.h
    x = grid.nodes + spec.symmetry_line
    mu = np.asarray(eval_drift(spec, x), dtype=float)
    a = 0.5 * spec.sigma0**2 / h**2
    fwd = np.where(mu >= 0, mu / h, 0.0)
    bwd = np.where(mu < 0, -mu / h, 0.0)
    lower = a + bwd
    upper = a + fwd
    diag = -(2 * a + fwd + bwd) - spec.rho
    f = np.asarray(eval_f(spec, x), dtype=float).copy()

    # fold the ghost nodes
    diag[0] += lower[0]
    f[0] -= lower[0] * bc.lbc * h
    diag[-1] += upper[-1]
    f[-1] += upper[-1] * bc.rbc * h
    lower = lower.copy()
    upper = upper.copy()
    lower[0] = 0.0
    upper[-1] = 0.0

    gen = GeneratorMatrix(lower=lower, diag=diag, upper=upper, f_adjusted=f)
    minus_l = -gen.to_scipy()
    if not (is_l0_matrix(minus_l) and classify_rows(minus_l).is_sdd):
        raise RuntimeError("assembled -L is not an SDD L0-matrix")
    return gen


@dataclass(frozen=True)
class ImpulseSets:
    """Admissible impulses ``Z(x_i) = {0, h, ..., max_steps[i] h}``."""

    mode: str
    max_steps: np.ndarray
    h: float

    def values(self, p: int) -> np.ndarray:
        return np.arange(self.max_steps[p] + 1) * self.h

    def size(self, p: int) -> int:
        return int(self.max_steps[p]) + 1

    def steps_of(self, delta) -> np.ndarray:
        """Integer step counts of an impulse vector; raises if inadmissible."""
        delta = np.asarray(delta, dtype=float)
        if delta.shape != self.max_steps.shape:
            raise ValueError("impulse vector has the wrong length")
        steps = np.rint(delta / self.h).astype(np.int64)
        bad = (steps * self.h != delta) | (steps < 0) | (steps > self.max_steps)
        if np.any(bad):
            p = int(np.flatnonzero(bad)[0])
            raise ValueError(
                f"impulse {delta[p]!r} at position {p} is not in Z(x) "
                f"= {{0, h, ..., {int(self.max_steps[p])}h}}"
            )
        return steps


def build_impulse_sets(grid: Grid, mode: str = CONSTRAINED) -> ImpulseSets:
    """Constrained sets stop one node short of the mirror point ``-x``;
    unconstrained sets reach the right end of the grid."""
    i = grid.index
    if mode == CONSTRAINED:
        k = np.where(i < 0, 2 * np.abs(i) - 1, 0)
    elif mode == UNCONSTRAINED:
        k = np.where(i < 0, grid.N - i, 0)
    else:
        raise ValueError(f"unknown impulse mode {mode!r}")
    return ImpulseSets(mode=mode, max_steps=k.astype(np.int64), h=grid.h)


def build_impulse_operator(grid: Grid, delta, impulse_sets: ImpulseSets | None = None) -> sp.csr_matrix:
    """Row-stochastic matrix with ``(B v)(x) = v[[x + delta(x)]]``.

    Linear interpolation between the two closest nodes, clamped to the
    endpoint values beyond the grid.
    """
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (grid.n,):
        raise ValueError("impulse vector has the wrong length")
    if impulse_sets is not None:
        impulse_sets.steps_of(delta)
    elif np.any(delta < 0):
        raise ValueError("impulses must be nonnegative")
    t = (grid.nodes + delta) / grid.h + grid.N
    t = np.clip(t, 0, grid.n - 1)
    lo = np.floor(t).astype(np.int64)
    w = t - lo
    lo = np.minimum(lo, grid.n - 1)
    hi = np.minimum(lo + 1, grid.n - 1)
    rows = np.arange(grid.n)
    keep_lo = w < 1.0
    keep_hi = w > 0.0
    r = np.concatenate([rows[keep_lo], rows[keep_hi]])
    c = np.concatenate([lo[keep_lo], hi[keep_hi]])
    v = np.concatenate([(1.0 - w)[keep_lo], w[keep_hi]])
    return sp.csr_matrix((v, (r, c)), shape=(grid.n, grid.n))


class DiscreteGame:
    """A fully discretized symmetric game.

    Bundles the generator, the boundary-corrected running payoff, the
    admissible impulse sets and the intervention operators ``M`` (loss),
    ``H`` (gain) and ``delta*`` (largest maximizing impulse).
    """

    def __init__(
        self,
        spec: GameSpec,
        grid: Grid,
        bc: BoundaryData | None = None,
        impulse_mode: str = CONSTRAINED,
        allow_nonpositive_cost: bool = False,
    ):
        self.spec = spec
        self.grid = grid
        self.bc = bc or default_boundary(spec)
        self.generator = build_generator(spec, grid, self.bc)
        self.impulse_sets = build_impulse_sets(grid, impulse_mode)
        self.L = self.generator.to_scipy()
        self.f = self.generator.f_adjusted

        n, h = grid.n, grid.h
        kmax = self.impulse_sets.max_steps
        self._cost_table = np.asarray(spec.cost(np.arange(int(kmax.max()) + 1) * h), dtype=float)
        self._cost_table = np.atleast_1d(self._cost_table)
        if np.any(self._cost_table <= 0):
            msg = "intervention cost is nonpositive for some admissible impulse"
            if not allow_nonpositive_cost:
                raise NonPositiveCostError(msg)
            warnings.warn(msg, DegenerateGameWarning, stacklevel=2)

        # flat candidate table for the negative nodes, one segment per node
        neg = np.flatnonzero(grid.negative)
        lens = kmax[neg] + 1
        self._neg = neg
        self._seg_start = np.concatenate([[0], np.cumsum(lens)[:-1]]).astype(np.int64)
        self._seg_id = np.repeat(np.arange(neg.size), lens)
        self._cand_step = np.arange(lens.sum()) - np.repeat(self._seg_start, lens)
        self._cand_target = np.repeat(neg, lens) + self._cand_step
        self._cand_cost = self._cost_table[self._cand_step]
        self._n = n

    # -- small helpers -------------------------------------------------

    @property
    def n(self) -> int:
        return self._n

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def impulse_mode(self) -> str:
        return self.impulse_sets.mode

    @property
    def x(self) -> np.ndarray:
        """Nodes in the original (unshifted) coordinates."""
        return self.grid.nodes + self.spec.symmetry_line

    @staticmethod
    def reflect(v: np.ndarray) -> np.ndarray:
        return np.asarray(v)[::-1]

    def apply_L(self, v: np.ndarray) -> np.ndarray:
        return self.generator.apply(np.asarray(v, dtype=float))

    def steps(self, delta) -> np.ndarray:
        return self.impulse_sets.steps_of(delta)

    def impulse_operator(self, delta) -> sp.csr_matrix:
        return build_impulse_operator(self.grid, delta, self.impulse_sets)

    def cost_vector(self, delta) -> np.ndarray:
        """``c(x, delta(x))`` at every node."""
        return self._cost_table[self.steps(delta)]

    def gain_vector(self, delta) -> np.ndarray:
        """``g(x, delta(-x))``: gain from the mirrored opponent impulse."""
        d = self.reflect(np.asarray(delta, dtype=float))
        return np.asarray(self.spec.gain(d), dtype=float) * np.ones(self.n)

    # -- intervention operators ----------------------------------------

    def loss_operator(self, v) -> tuple[np.ndarray, np.ndarray]:
        """``Mv = max_delta {B(delta) v - c(delta)}`` and the largest maximizer.

        Ties are decided by exact equality, preferring the larger impulse.
        """
        v = np.asarray(v, dtype=float)
        mv = v - self._cost_table[0]
        steps = np.zeros(self.n, dtype=np.int64)
        if self._neg.size:
            vals = v[self._cand_target] - self._cand_cost
            segmax = np.maximum.reduceat(vals, self._seg_start)
            is_max = vals == segmax[self._seg_id]
            best = np.maximum.reduceat(np.where(is_max, self._cand_step, -1), self._seg_start)
            mv[self._neg] = segmax
            steps[self._neg] = best
        return mv, steps * self.h

    def loss_values(self, v, p: int) -> np.ndarray:
        """All candidate values ``v[[x_p + delta]] - c(delta)`` for ``delta`` in ``Z(x_p)``."""
        v = np.asarray(v, dtype=float)
        k = np.arange(self.impulse_sets.size(p))
        return v[p + k] - self._cost_table[k]

    def gain_operator(self, v, delta) -> np.ndarray:
        """``Hv(x) = v[[x - delta(-x)]] + g(x, delta(-x))``."""
        v = np.asarray(v, dtype=float)
        k_opp = self.reflect(self.steps(delta))
        src = np.arange(self.n) - k_opp
        return v[src] + self.gain_vector(delta)

    def intervention_set(self, v, mv=None) -> np.ndarray:
        """Boolean mask of ``{Lv + f <= Mv - v}`` restricted to negative nodes."""
        v = np.asarray(v, dtype=float)
        if mv is None:
            mv, _ = self.loss_operator(v)
        return (self.apply_L(v) + self.f <= mv - v) & self.grid.negative


def discretize(
    spec: GameSpec,
    grid: Grid,
    bc: BoundaryData | None = None,
    impulse_mode: str = CONSTRAINED,
    allow_nonpositive_cost: bool = False,
) -> DiscreteGame:
    return DiscreteGame(spec, grid, bc, impulse_mode, allow_nonpositive_cost)


def intervention_targets(game: DiscreteGame, I: np.ndarray, delta) -> np.ndarray:
    """Targets ``x + delta(x)`` (original coordinates) for nodes in ``I``; NaN elsewhere."""
    out = np.full(game.n, math.nan)
    d = np.asarray(delta, dtype=float)
    out[I] = game.x[I] + d[I]
    return out
