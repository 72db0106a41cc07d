"""Graph-walk validators for the structural assumptions behind the solvers.

* ``check_A0``: every intervention node walks, along impulse edges, to a
  node where no intervention happens.
* ``check_A0_prime``: every node in ``I_bar`` or in the mirrored opponent set
  ``-I`` walks, in the graph of ``Psi_bar B(delta_bar) + S Psi S B(delta) S``
  (both strategies combined), to a node outside both sets.
* ``check_A0_doubleprime_sampled``: random strategy pairs, checking that the
  index of connectivity of ``A - B`` stays within ``N``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .diagnostics import Policy, assemble_coefficients
from .discretization import DiscreteGame
from .matrix_analysis import SparseMatrix, _distance_to_targets, index_of_connectivity


def _walks_out(graph, sources: np.ndarray, targets: np.ndarray) -> bool:
    dist = _distance_to_targets(SparseMatrix.from_scipy(graph), targets)
    return bool(np.all(np.isfinite(dist[sources])))


def check_A0(B, I) -> bool:
    """Every row in ``I`` reaches a row outside ``I`` in ``graph(B)``."""
    I = np.asarray(I, dtype=bool)
    return _walks_out(sp.csr_matrix(B), I, ~I)


def check_A0_prime(game: DiscreteGame, phi: Policy, phi_bar: Policy) -> bool:
    """Walks from ``I_bar`` and ``-I`` to the common continuation set."""
    psi_bar = np.asarray(phi_bar.I, dtype=float)
    mirror = np.asarray(phi.I, dtype=bool)[::-1]
    coef = assemble_coefficients(game, phi, phi_bar)
    graph = sp.diags(psi_bar) @ game.impulse_operator(phi_bar.delta) + coef.B_mat
    sources = np.asarray(phi_bar.I, dtype=bool) | mirror
    return _walks_out(graph.tocsr(), sources, ~sources)


def random_policy(game: DiscreteGame, rng: np.random.Generator, p_intervene: float | None = None) -> Policy:
    """Random strategy: each negative node intervenes with probability ``p``
    and then uses a uniformly drawn positive admissible impulse."""
    p = rng.uniform() if p_intervene is None else p_intervene
    I = game.grid.negative & (rng.uniform(size=game.n) < p)
    steps = np.zeros(game.n, dtype=np.int64)
    kmax = game.impulse_sets.max_steps
    for q in np.flatnonzero(I):
        steps[q] = rng.integers(1, kmax[q] + 1)
    return Policy(I, steps * game.h)


@dataclass
class SampledCheck:
    ok: bool
    max_con: float
    trials: int
    counterexample: tuple[Policy, Policy] | None = None


def check_A0_doubleprime_sampled(game: DiscreteGame, trials: int = 100, seed: int = 0) -> SampledCheck:
    """Sample strategy pairs and check ``con[A - B] <= N``."""
    rng = np.random.default_rng(seed)
    N = game.grid.N
    worst = 0
    for _ in range(trials):
        phi = random_policy(game, rng)
        phi_bar = random_policy(game, rng)
        coef = assemble_coefficients(game, phi, phi_bar)
        con = index_of_connectivity(coef.A_mat - coef.B_mat).con
        worst = max(worst, con)
        if con > N:
            return SampledCheck(False, worst, trials, (phi, phi_bar))
    return SampledCheck(True, worst, trials)


def swap_counterexample(game: DiscreteGame) -> tuple[Policy, Policy]:
    """Both players intervene everywhere with ``delta(x) = -2x``, the mirror swap.

    Needs unconstrained impulse sets; the mirrored impulses send ``x`` to
    ``-x`` and back, so no walk leaves the intervention sets.
    """
    I = game.grid.negative.copy()
    delta = np.where(I, -2.0 * game.grid.nodes, 0.0) + 0.0
    game.impulse_sets.steps_of(delta)
    phi = Policy(I, delta)
    return phi, phi
