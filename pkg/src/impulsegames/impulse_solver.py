"""Single-player impulse control on a solvency region ``D``.

Solves ``max{Lv + f, Mv - v} = 0`` on ``D`` subject to ``v = w`` outside
``D``, where ``D`` contains every nonpositive node.  The problem is first
restricted to ``D`` (frozen exterior values move into the right-hand side
and into the impulse costs), then solved by one of

* fixed-point policy iteration (``solve_fppi``): the obstacle ``M v^k`` is
  frozen at each step so the linear system keeps the tridiagonal structure
  of ``L`` and is solved by Thomas elimination;
* Howard's policy iteration (``solve_howard``): exact policy evaluation with
  a sparse LU solve;
* exhaustive enumeration (``solve_brute_force``), a small-grid oracle.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .diagnostics import diff_metric
from .discretization import DiscreteGame

FPPI = "fppi"
HOWARD = "howard"


class SingularPolicyError(RuntimeError):
    """A policy matrix turned out singular (an admissibility assumption failed)."""


@dataclass(frozen=True)
class SolverParams:
    lambda_: float = 1.0
    inner_tol: float = 1e-15
    max_inner_iters: int = 10_000
    variant: str = FPPI
    scale: float = 1.0
    # False reproduces the literal stopping test without |.| in the denominator
    abs_denominator: bool = True

    def __post_init__(self):
        if not self.lambda_ > 0:
            raise ValueError("scaling factor lambda must be positive")
        if self.variant not in (FPPI, HOWARD):
            raise ValueError(f"unknown inner solver {self.variant!r}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")


@dataclass
class RestrictedProblem:
    """The constrained problem restricted to ``D``.

    ``lower/diag/upper`` are the bands of ``L_DD`` in the compressed
    ordering of ``D`` (entries between non-adjacent nodes are zero).
    """

    game: DiscreteGame
    D: np.ndarray
    w: np.ndarray
    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    f_tilde: np.ndarray
    negative: np.ndarray
    pos_in_D: np.ndarray

    @property
    def m(self) -> int:
        return self.D.size

    def extend(self, v_tilde) -> np.ndarray:
        v = self.w.copy()
        v[self.D] = v_tilde
        return v

    def apply_L(self, v_tilde) -> np.ndarray:
        out = self.diag * v_tilde
        out[1:] += self.lower[1:] * v_tilde[:-1]
        out[:-1] += self.upper[:-1] * v_tilde[1:]
        return out

    def L_tilde(self) -> sp.csr_matrix:
        return sp.diags([self.lower[1:], self.diag, self.upper[:-1]], [-1, 0, 1], format="csr")

    def M_tilde(self, v_tilde) -> tuple[np.ndarray, np.ndarray]:
        """Restricted loss operator on ``D`` and the full-grid maximizing impulse."""
        mv, delta = self.game.loss_operator(self.extend(v_tilde))
        return mv[self.D], delta

    def B_tilde(self, delta) -> sp.csr_matrix:
        B = self.game.impulse_operator(delta)
        return B[self.D][:, self.D].tocsr()

    def c_tilde(self, delta) -> np.ndarray:
        """``c(delta) - B(delta)_{D,D^c} w_{D^c}``."""
        B = self.game.impulse_operator(delta)
        out_mask = np.ones(self.game.n, dtype=bool)
        out_mask[self.D] = False
        w_out = np.where(out_mask, self.w, 0.0)
        return self.game.cost_vector(delta)[self.D] - (B @ w_out)[self.D]


def restrict(game: DiscreteGame, w, D) -> RestrictedProblem:
    """Restrict the constrained problem to ``D`` (mask or position array)."""
    n = game.n
    w = np.asarray(w, dtype=float).copy()
    if w.shape != (n,):
        raise ValueError("exterior payoff w has the wrong length")
    D = np.asarray(D)
    mask = D.copy() if D.dtype == bool else np.isin(np.arange(n), D)
    if mask.shape != (n,):
        raise ValueError("solvency region mask has the wrong length")
    if not np.all(mask[game.grid.nonpositive]):
        missing = np.flatnonzero(game.grid.nonpositive & ~mask)
        raise ValueError(f"solvency region must contain every nonpositive node; missing {missing.tolist()}")
    idx = np.flatnonzero(mask)
    gen = game.generator
    pos_in_D = np.full(n, -1)
    pos_in_D[idx] = np.arange(idx.size)

    left_in = np.zeros(idx.size, dtype=bool)
    right_in = np.zeros(idx.size, dtype=bool)
    left_in[1:] = idx[:-1] == idx[1:] - 1
    right_in[:-1] = idx[1:] == idx[:-1] + 1
    lower = np.where(left_in, gen.lower[idx], 0.0)
    upper = np.where(right_in, gen.upper[idx], 0.0)
    f_tilde = gen.f_adjusted[idx].copy()
    # neighbours outside D contribute L_{D,D^c} w_{D^c}
    left_out = ~left_in & (idx > 0)
    right_out = ~right_in & (idx < n - 1)
    f_tilde[left_out] += gen.lower[idx[left_out]] * w[idx[left_out] - 1]
    f_tilde[right_out] += gen.upper[idx[right_out]] * w[idx[right_out] + 1]
    return RestrictedProblem(
        game=game,
        D=idx,
        w=w,
        lower=lower,
        diag=gen.diag[idx].copy(),
        upper=upper,
        f_tilde=f_tilde,
        negative=game.grid.negative[idx],
        pos_in_D=pos_in_D,
    )


@dataclass
class ImpulseSolution:
    """Solution of a constrained problem on the full grid.

    ``I`` is a boolean mask over the grid, ``delta`` the largest maximizing
    impulse of the returned payoff, ``exact`` tells whether the last two
    iterates coincided bitwise, and ``converged`` whether a stopping
    criterion was met before the iteration cap.
    """

    v: np.ndarray
    I: np.ndarray
    delta: np.ndarray
    iters: int
    exact: bool
    converged: bool = True
    history: list = field(default_factory=list)


def tridiagonal_solve(lower, diag, upper, rhs) -> np.ndarray:
    """Thomas elimination for ``lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]``.

    No pivoting; meant for diagonally dominant systems.  ``lower[0]`` and
    ``upper[-1]`` are ignored.
    """
    a = np.asarray(lower, dtype=float).tolist()
    b = np.asarray(diag, dtype=float).tolist()
    c = np.asarray(upper, dtype=float).tolist()
    d = np.asarray(rhs, dtype=float).tolist()
    n = len(b)
    if n == 0:
        return np.zeros(0)
    cp = [0.0] * n
    dp = [0.0] * n
    piv = b[0]
    if piv == 0.0:
        raise ZeroDivisionError("zero pivot in tridiagonal solve at row 0")
    cp[0] = c[0] / piv
    dp[0] = d[0] / piv
    for i in range(1, n):
        piv = b[i] - a[i] * cp[i - 1]
        if piv == 0.0:
            raise ZeroDivisionError(f"zero pivot in tridiagonal solve at row {i}")
        cp[i] = c[i] / piv if i < n - 1 else 0.0
        dp[i] = (d[i] - a[i] * dp[i - 1]) / piv
    x = [0.0] * n
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return np.array(x)


def _diff(new, old, params: SolverParams) -> float:
    if params.abs_denominator:
        return diff_metric(new, old, params.scale)
    denom = np.maximum(new, params.scale)
    return float(np.max(np.abs(new - old) / denom)) if new.size else 0.0


def solve_fppi(p: RestrictedProblem, params: SolverParams = SolverParams(), record: bool = False) -> ImpulseSolution:
    """Fixed-point policy iteration from ``I^0 = {}``.

    Step ``k`` solves ``L^k v + f^k = 0`` where rows in ``I^k`` read
    ``-v + M v^k = 0`` and the other rows keep ``L_DD`` and ``f~``.  The
    iterates increase monotonically from ``k = 1`` on.  With ``record`` the
    per-step ``(v~, I, obstacle)`` triples are kept in ``history``.
    """
    lam = params.lambda_
    v_old = p.w[p.D].copy()
    I = np.zeros(p.m, dtype=bool)
    obstacle = np.zeros(p.m)
    history = []
    exact = converged = False
    k = 0
    for k in range(1, params.max_inner_iters + 1):
        lo = np.where(I, 0.0, p.lower)
        di = np.where(I, -1.0, p.diag)
        up = np.where(I, 0.0, p.upper)
        rhs = -np.where(I, obstacle, p.f_tilde)
        v_new = tridiagonal_solve(lo, di, up, rhs)
        mv, _ = p.M_tilde(v_new)
        I_new = (p.apply_L(v_new) + p.f_tilde <= lam * (mv - v_new)) & p.negative
        if record:
            history.append((v_new.copy(), I.copy(), obstacle.copy()))
        if k >= 2:
            exact = bool(np.array_equal(v_new, v_old))
            if exact or _diff(v_new, v_old, params) < params.inner_tol:
                converged = True
                I = I_new
                break
        v_old, I, obstacle = v_new, I_new, mv
    else:
        v_new = v_old
    v = p.extend(v_new)
    _, delta = p.game.loss_operator(v)
    I_full = np.zeros(p.game.n, dtype=bool)
    I_full[p.D] = I
    return ImpulseSolution(v=v, I=I_full, delta=delta, iters=k, exact=exact, converged=converged, history=history)


def policy_system(p: RestrictedProblem, I: np.ndarray, steps: np.ndarray, lam: float = 1.0):
    """Sparse ``A(phi)`` and ``b(phi)`` for the Bellman form of the restricted QVI.

    ``I`` is a mask over ``D`` and ``steps`` the impulse step counts over
    ``D``.  Intervention rows are ``lam (v - B~ v) = -lam c~``.
    """
    m = p.m
    rows, cols, vals = [], [], []
    b = p.f_tilde.copy()
    cont = ~I
    j = np.arange(m)
    # continuation rows: -L~
    for off, band in ((-1, p.lower), (0, p.diag), (1, p.upper)):
        sel = cont & (band != 0)
        if off == -1:
            sel &= j > 0
        if off == 1:
            sel &= j < m - 1
        rows.append(j[sel])
        cols.append(j[sel] + off)
        vals.append(-band[sel])
    # intervention rows: lam (e_x - e_target) with the target possibly outside D
    ii = j[I]
    target = p.D[ii] + steps[ii]
    t_in = p.pos_in_D[target]
    cost = p.game._cost_table[steps[ii]]
    inside = t_in >= 0
    rows += [ii, ii[inside]]
    cols += [ii, t_in[inside]]
    vals += [np.full(ii.size, lam), np.full(int(inside.sum()), -lam)]
    b[ii] = -lam * (cost - np.where(inside, 0.0, p.w[target]))
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m)
    ).tocsc()
    A.sum_duplicates()
    return A, b


def solve_howard(p: RestrictedProblem, params: SolverParams = SolverParams()) -> ImpulseSolution:
    """Howard's policy iteration starting from the never-intervene policy."""
    lam = params.lambda_
    I = np.zeros(p.m, dtype=bool)
    steps = np.zeros(p.m, dtype=np.int64)
    v_old = None
    exact = converged = False
    k = 0
    for k in range(1, params.max_inner_iters + 1):
        A, b = policy_system(p, I, steps, lam)
        try:
            v_new = spla.splu(A).solve(b)
        except RuntimeError as exc:
            raise SingularPolicyError(str(exc)) from exc
        mv, delta = p.M_tilde(v_new)
        I_new = (p.apply_L(v_new) + p.f_tilde <= lam * (mv - v_new)) & p.negative
        steps_new = np.rint(delta[p.D] / p.game.h).astype(np.int64)
        same_policy = np.array_equal(I_new, I) and np.array_equal(steps_new[I], steps[I])
        if v_old is not None:
            exact = bool(np.array_equal(v_new, v_old))
        if same_policy or exact or (v_old is not None and _diff(v_new, v_old, params) < params.inner_tol):
            converged = True
            I = I_new
            v_old = v_new
            break
        v_old, I, steps = v_new, I_new, steps_new
    v = p.extend(v_old)
    _, delta = p.game.loss_operator(v)
    I_full = np.zeros(p.game.n, dtype=bool)
    I_full[p.D] = I
    return ImpulseSolution(v=v, I=I_full, delta=delta, iters=k, exact=exact or converged, converged=converged)


@dataclass
class BruteForceResult:
    v: np.ndarray
    I: np.ndarray
    delta: np.ndarray
    n_policies: int
    n_solutions: int


def policy_count(p: RestrictedProblem) -> int:
    """Number of restricted strategies ``prod (1 + |Z(x)|)`` over negative nodes of ``D``."""
    sizes = [p.game.impulse_sets.size(int(q)) for q in p.D[p.negative]]
    return math.prod(1 + s for s in sizes)


def solve_brute_force(p: RestrictedProblem, budget: int = 10**6, residual_tol: float = 1e-10) -> BruteForceResult:
    """Enumerate every restricted strategy and keep the one solving the QVI.

    Each candidate policy system is solved densely and accepted when the QVI
    residual, evaluated by a direct scan of the impulse sets, is below
    ``residual_tol``.  Zero-impulse interventions give a singular row and are
    skipped: with positive costs they can never satisfy ``Mv = v``.
    """
    total = policy_count(p)
    if total > budget:
        raise ValueError(f"enumeration budget exceeded: {total} policies > {budget}")
    game = p.game
    m = p.m
    Ldense = p.L_tilde().toarray()
    neg_local = np.flatnonzero(p.negative)
    cost_of = lambda k: float(game.spec.cost(k * game.h))
    options = [[None] + list(range(1, game.impulse_sets.size(int(p.D[j])))) for j in neg_local]

    def residual(v_t):
        v = p.extend(v_t)
        cont = Ldense @ v_t + p.f_tilde
        worst = 0.0
        for j in range(m):
            q = int(p.D[j])
            best = max(v[q + k] - cost_of(k) for k in range(game.impulse_sets.size(q)))
            worst = max(worst, abs(max(cont[j], best - v_t[j])))
        return worst

    found = []
    for choice in itertools.product(*options):
        A = -Ldense.copy()
        b = p.f_tilde.copy()
        I = np.zeros(m, dtype=bool)
        steps = np.zeros(m, dtype=np.int64)
        for j, k in zip(neg_local, choice):
            if k is None:
                continue
            I[j], steps[j] = True, k
            A[j, :] = 0.0
            A[j, j] = 1.0
            t = int(p.D[j]) + k
            tj = p.pos_in_D[t]
            if tj >= 0:
                A[j, tj] -= 1.0
                b[j] = -cost_of(k)
            else:
                b[j] = -(cost_of(k) - p.w[t])
        try:
            v_t = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(v_t)):
            continue
        if residual(v_t) <= residual_tol:
            found.append((v_t, I))
    if not found:
        raise RuntimeError("no enumerated policy solves the restricted QVI")
    v_t, I = found[0]
    v = p.extend(v_t)
    _, delta = game.loss_operator(v)
    I_full = np.zeros(game.n, dtype=bool)
    I_full[p.D] = I
    return BruteForceResult(v=v, I=I_full, delta=delta, n_policies=total, n_solutions=len(found))


def solve_impulse_control(game: DiscreteGame, w, D, params: SolverParams = SolverParams()) -> ImpulseSolution:
    """Restrict and solve with the configured inner variant."""
    p = restrict(game, w, D)
    if params.variant == HOWARD:
        return solve_howard(p, params)
    return solve_fppi(p, params)
