"""Parametric description of a symmetric two-player impulse game.

A game is symmetric with respect to a line ``s``: the drift is odd about
``s``, the volatility is constant, and both players share the same
discount rate, running payoff, intervention cost and gain, mirrored through
``s``.  Only player 1 (who intervenes below ``s`` with nonnegative impulses)
is described; the opponent is obtained by reflection.

Every family is a closed parametric form so that configurations stay
declarative.  All ``eval_*`` helpers accept scalars or numpy arrays.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


class DegenerateGameWarning(UserWarning):
    """Raised (as a warning) when a cost evaluates to a nonpositive value."""


@dataclass(frozen=True)
class PayoffFamily:
    """Running payoff ``f(x) = sum_k a_k (x-s)^k + abs_coeff * |x-s|``.

    ``poly_coeffs`` are in ascending order of powers.
    """

    poly_coeffs: tuple[float, ...] = (0.0,)
    abs_coeff: float = 0.0

    def __post_init__(self):
        coeffs = tuple(float(a) for a in self.poly_coeffs) or (0.0,)
        if not all(np.isfinite(coeffs)) or not np.isfinite(self.abs_coeff):
            raise ValueError("running payoff coefficients must be finite")
        object.__setattr__(self, "poly_coeffs", coeffs)
        object.__setattr__(self, "abs_coeff", float(self.abs_coeff))

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        # Horner, highest power first
        for a in reversed(self.poly_coeffs):
            out = out * y + a
        if self.abs_coeff != 0.0:
            out = out + self.abs_coeff * np.abs(y)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class CostFamily:
    """Intervention cost ``c(x, delta) = c0 + c1 delta + c2 delta^2 + c_sqrt sqrt(delta)``."""

    c0: float = 1.0
    c1: float = 0.0
    c2: float = 0.0
    c_sqrt: float = 0.0

    def __post_init__(self):
        for name in ("c0", "c1", "c2", "c_sqrt"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ValueError(f"cost coefficient {name} must be finite")
            object.__setattr__(self, name, value)

    def __call__(self, delta):
        d = np.asarray(delta, dtype=float)
        out = self.c0 + self.c1 * d + self.c2 * d * d
        if self.c_sqrt != 0.0:
            out = out + self.c_sqrt * np.sqrt(d)
        return out if np.ndim(out) else float(out)

    @property
    def is_affine(self) -> bool:
        return self.c2 == 0.0 and self.c_sqrt == 0.0


@dataclass(frozen=True)
class GainFamily:
    """Gain ``g(x, d) = g0 + g1 d`` when the opponent applies an impulse of magnitude ``d``."""

    g0: float = 0.0
    g1: float = 0.0

    def __post_init__(self):
        for name in ("g0", "g1"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ValueError(f"gain coefficient {name} must be finite")
            object.__setattr__(self, name, value)

    def __call__(self, d):
        d = np.asarray(d, dtype=float)
        out = self.g0 + self.g1 * d
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class GameSpec:
    """Symmetric impulse game.

    Drift is ``-drift_kappa * (x - s)`` (Brownian for ``kappa = 0``,
    Ornstein-Uhlenbeck otherwise) and volatility is the constant ``sigma0``.
    """

    drift_kappa: float = 0.0
    sigma0: float = 1.0
    rho: float = 0.1
    running_payoff: PayoffFamily = field(default_factory=PayoffFamily)
    cost: CostFamily = field(default_factory=CostFamily)
    gain: GainFamily = field(default_factory=GainFamily)
    symmetry_line: float = 0.0

    def __post_init__(self):
        for name in ("drift_kappa", "sigma0", "rho", "symmetry_line"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, value)
        if self.rho <= 0:
            raise ValueError("discount rate rho must be positive")
        if self.sigma0 <= 0:
            raise ValueError("volatility sigma0 must be positive")
        if self.drift_kappa < 0:
            raise ValueError("drift_kappa must be nonnegative")


def eval_drift(spec: GameSpec, x):
    """Drift ``mu(x) = -kappa (x - s)``."""
    y = np.asarray(x, dtype=float) - spec.symmetry_line
    out = -spec.drift_kappa * y
    # keep +0.0 rather than -0.0 for the zero-drift case
    out = out + 0.0
    return out if out.ndim else float(out)


def eval_f(spec: GameSpec, x):
    """Running payoff at ``x`` (evaluated at ``x - s``)."""
    return spec.running_payoff(np.asarray(x, dtype=float) - spec.symmetry_line)


def eval_cost(spec: GameSpec, x, delta):
    """Cost of an impulse of size ``delta >= 0`` applied at ``x``.

    The cost family does not depend on the state; ``x`` is accepted to keep
    the signature of the general model.  Nonpositive values trigger a
    :class:`DegenerateGameWarning`.
    """
    d = np.asarray(delta, dtype=float)
    if np.any(d < 0):
        raise ValueError("impulse sizes must be nonnegative")
    out = spec.cost(d)
    if np.any(np.asarray(out) <= 0):
        warnings.warn(
            "intervention cost is nonpositive; the game may be degenerate",
            DegenerateGameWarning,
            stacklevel=2,
        )
    return out


def eval_gain(spec: GameSpec, x, d):
    """Gain received at ``x`` when the opponent applies an impulse of magnitude ``d``."""
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("opponent impulse magnitudes must be nonnegative")
    return spec.gain(d)


def linear_game() -> GameSpec:
    """Linear game: mu=0, sigma=0.15, rho=0.02, f=x+3, c=100+15 delta, g=15 delta."""
    return GameSpec(
        drift_kappa=0.0,
        sigma0=0.15,
        rho=0.02,
        running_payoff=PayoffFamily((3.0, 1.0)),
        cost=CostFamily(c0=100.0, c1=15.0),
        gain=GainFamily(g0=0.0, g1=15.0),
    )


def cash_management_game() -> GameSpec:
    """Cash management game: mu=0, sigma=1, rho=0.5, f=-|x|, c=3+delta, g=-1."""
    return GameSpec(
        drift_kappa=0.0,
        sigma0=1.0,
        rho=0.5,
        running_payoff=PayoffFamily((0.0,), abs_coeff=-1.0),
        cost=CostFamily(c0=3.0, c1=1.0),
        gain=GainFamily(g0=-1.0, g1=0.0),
    )
