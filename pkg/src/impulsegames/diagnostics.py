"""Coefficient matrices of the outer iteration, residual metrics and a-posteriori checks.

For a pair of strategies ``phi = (I, delta)`` (current) and
``phi_bar = (I_bar, delta_bar)`` (next) the outer step can be written as

    A(phi, phi_bar) v_next = B(phi) v + C(phi, phi_bar)

with ``Psi = diag(1_I)`` and ``S`` the reflection ``Sv(x) = v(-x)``:

    A = Id - (Id - Psi_bar - S Psi S)(Id + L) - Psi_bar B(delta_bar)
    B = diag(S psi) S B(delta) S
    C = (Id - Psi_bar - S Psi S) f - Psi_bar c(delta_bar) + S Psi S g(S delta)

``A`` is assembled as ``Psi_bar (Id - B(delta_bar)) + S Psi S - K L`` with
``K = Id - Psi_bar - S Psi S``, which is the same matrix but avoids the
rounding in ``Id - (Id + L)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretization import DiscreteGame
from .matrix_analysis import (
    index_of_connectivity,
    index_of_contraction,
    is_l0_matrix,
    is_substochastic,
    is_wcdd,
)

SPIKE_RADIUS = 2


def diff_metric(v_new, v_old, scale: float = 1.0) -> float:
    """``|| (v_new - v_old) / max(|v_new|, scale) ||_inf``."""
    v_new = np.asarray(v_new, dtype=float)
    v_old = np.asarray(v_old, dtype=float)
    if v_new.shape != v_old.shape:
        raise ValueError("vectors must have the same length")
    if v_new.size == 0:
        return 0.0
    return float(np.max(np.abs(v_new - v_old) / np.maximum(np.abs(v_new), scale)))


@dataclass(frozen=True)
class Policy:
    """Strategy ``(I, delta)``: boolean mask over the grid and an impulse vector."""

    I: np.ndarray
    delta: np.ndarray

    @classmethod
    def never(cls, game: DiscreteGame) -> "Policy":
        return cls(np.zeros(game.n, dtype=bool), np.zeros(game.n))

    @classmethod
    def from_payoff(cls, game: DiscreteGame, v) -> "Policy":
        mv, delta = game.loss_operator(v)
        return cls(game.intervention_set(v, mv), delta)


def reflection_matrix(n: int) -> sp.csr_matrix:
    idx = np.arange(n)
    return sp.csr_matrix((np.ones(n), (idx, idx[::-1])), shape=(n, n))


@dataclass
class CoefficientTriple:
    A_mat: sp.csr_matrix
    B_mat: sp.csr_matrix
    C_vec: np.ndarray

    def relation_residual(self, v_next, v) -> float:
        """``|| A v_next - B v - C ||_inf``."""
        r = self.A_mat @ v_next - self.B_mat @ v - self.C_vec
        return float(np.max(np.abs(r))) if r.size else 0.0


def assemble_coefficients(game: DiscreteGame, phi: Policy, phi_bar: Policy) -> CoefficientTriple:
    n = game.n
    psi = np.asarray(phi.I, dtype=float)
    psi_bar = np.asarray(phi_bar.I, dtype=float)
    s_psi = psi[::-1]
    if np.any((psi_bar > 0) & (s_psi > 0)):
        raise ValueError("intervention set overlaps the mirrored opponent set")
    K = 1.0 - psi_bar - s_psi
    Id = sp.identity(n, format="csr")
    S = reflection_matrix(n)
    B_bar = game.impulse_operator(phi_bar.delta)
    B_cur = game.impulse_operator(phi.delta)
    A = sp.diags(psi_bar) @ (Id - B_bar) + sp.diags(s_psi) - sp.diags(K) @ game.L
    Bm = sp.diags(s_psi) @ S @ B_cur @ S
    C = K * game.f - psi_bar * game.cost_vector(phi_bar.delta) + s_psi * game.gain_vector(phi.delta)
    A = A.tocsr()
    A.eliminate_zeros()
    Bm = Bm.tocsr()
    Bm.eliminate_zeros()
    return CoefficientTriple(A_mat=A, B_mat=Bm, C_vec=C)


@dataclass
class ResidualReport:
    residual: np.ndarray
    max_res: float
    spike_nodes: np.ndarray
    max_res_excluding_spikes: float
    I: np.ndarray
    diff: float | None = None


def opponent_border_nodes(mirror_I: np.ndarray, radius: int = SPIKE_RADIUS) -> np.ndarray:
    """Nodes within ``radius`` indices of a border node of the opponent region ``-I``."""
    n = mirror_I.size
    border = np.zeros(n, dtype=bool)
    border[1:] |= mirror_I[1:] & ~mirror_I[:-1]
    border[:-1] |= mirror_I[:-1] & ~mirror_I[1:]
    out = np.zeros(n, dtype=bool)
    for p in np.flatnonzero(border):
        out[max(0, p - radius): p + radius + 1] = True
    return out


def qvi_residual(game: DiscreteGame, v, diff: float | None = None, radius: int = SPIKE_RADIUS) -> ResidualReport:
    """Pointwise residual ``max{Lv+f, Mv-v} 1_{-C} + (Hv-v) 1_{-I}``."""
    v = np.asarray(v, dtype=float)
    mv, delta = game.loss_operator(v)
    I = game.intervention_set(v, mv)
    mirror_I = I[::-1]
    cont = np.maximum(game.apply_L(v) + game.f, mv - v)
    gain = game.gain_operator(v, delta) - v
    res = np.abs(np.where(mirror_I, gain, cont))
    spikes = opponent_border_nodes(mirror_I, radius)
    kept = res[~spikes]
    return ResidualReport(
        residual=res,
        max_res=float(res.max()),
        spike_nodes=np.flatnonzero(spikes),
        max_res_excluding_spikes=float(kept.max()) if kept.size else 0.0,
        I=I,
        diff=diff,
    )


@dataclass
class UIPReport:
    holds: bool
    maximizer_counts: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)


def uip_check(game: DiscreteGame, v, rel_tol: float = 1e-9) -> UIPReport:
    """Count near-maximizing impulses at every intervention node.

    An impulse counts when its value is within ``rel_tol * max(|m|, 1)`` of
    the maximum ``m``.
    """
    v = np.asarray(v, dtype=float)
    I = game.intervention_set(v)
    counts = {}
    for p in np.flatnonzero(I):
        vals = game.loss_values(v, int(p))
        m = vals.max()
        counts[float(game.x[p])] = int(np.sum(vals >= m - rel_tol * max(abs(m), 1.0)))
    bad = [x for x, c in counts.items() if c != 1]
    return UIPReport(holds=not bad, maximizer_counts=counts, violations=bad)


@dataclass
class CharacterizationReport:
    gap: float
    u: np.ndarray
    policy: Policy


def verify_solution_characterization(game: DiscreteGame, v) -> CharacterizationReport:
    """Solve ``(A - B) u = C`` at ``(phi*, phi*)`` with ``phi*`` read off ``v``."""
    v = np.asarray(v, dtype=float)
    phi = Policy.from_payoff(game, v)
    coef = assemble_coefficients(game, phi, phi)
    M = (coef.A_mat - coef.B_mat).tocsc()
    try:
        u = spla.splu(M).solve(coef.C_vec)
    except RuntimeError as exc:
        raise np.linalg.LinAlgError(f"A - B is singular: {exc}") from exc
    return CharacterizationReport(gap=float(np.max(np.abs(u - v))), u=u, policy=phi)


@dataclass
class SymmetryReport:
    opponent_v: np.ndarray
    opponent_delta: np.ndarray
    opponent_I: np.ndarray
    consistent: bool


def symmetry_report(game: DiscreteGame, v, delta) -> SymmetryReport:
    """Opponent payoff ``Sv`` and strategy ``delta_2(x) = -delta(-x)``.

    ``consistent`` checks that the gain operator equals the payoff shifted
    by the opponent's own impulse, plus the gain on its magnitude.
    """
    v = np.asarray(v, dtype=float)
    delta = np.asarray(delta, dtype=float)
    opp_delta = -delta[::-1] + 0.0
    I = game.intervention_set(v)
    steps = np.rint(opp_delta / game.h).astype(np.int64)
    shifted = v[np.arange(game.n) + steps] + game.spec.gain(np.abs(opp_delta))
    consistent = bool(np.array_equal(shifted, game.gain_operator(v, delta)))
    return SymmetryReport(opponent_v=v[::-1].copy(), opponent_delta=opp_delta, opponent_I=I[::-1].copy(), consistent=consistent)


@dataclass
class StepCheck:
    k: int
    relation_residual: float
    B_substochastic: bool
    A_wcdd: bool
    sup_norm: float

    def ok(self, tol: float = 1e-10) -> bool:
        return self.relation_residual <= tol and self.B_substochastic and self.A_wcdd


class StructuralMonitor:
    """Outer-loop callback recording the fixed-point relation and matrix properties per step."""

    def __init__(self, game: DiscreteGame, tol: float = 1e-10):
        self.game = game
        self.tol = tol
        self.records: list[StepCheck] = []

    def __call__(self, prev, new) -> None:
        phi = Policy(prev.I, prev.delta)
        phi_bar = Policy(new.I, new.delta)
        coef = assemble_coefficients(self.game, phi, phi_bar)
        self.records.append(
            StepCheck(
                k=new.k,
                relation_residual=coef.relation_residual(new.v, prev.v),
                B_substochastic=is_substochastic(coef.B_mat),
                A_wcdd=is_l0_matrix(coef.A_mat) and is_wcdd(coef.A_mat),
                sup_norm=float(np.max(np.abs(new.v))),
            )
        )

    @property
    def violations(self) -> list[StepCheck]:
        return [r for r in self.records if not r.ok(self.tol)]

    @property
    def max_relation_residual(self) -> float:
        return max((r.relation_residual for r in self.records), default=0.0)


def inverse_contraction_bound(game: DiscreteGame, phi: Policy, phi_bar: Policy) -> tuple[float, float]:
    """``(con-hat[A^-1 B], con[A - B])`` with a dense inverse; small grids only."""
    coef = assemble_coefficients(game, phi, phi_bar)
    T = np.linalg.solve(coef.A_mat.toarray(), coef.B_mat.toarray())
    T[np.abs(T) < 1e-14] = 0.0
    T = np.maximum(T, 0.0)
    rc = index_of_contraction(T, tol=1e-12).con
    c = index_of_connectivity(coef.A_mat - coef.B_mat).con
    return rc, c

