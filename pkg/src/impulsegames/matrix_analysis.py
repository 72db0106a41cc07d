"""Row-dominance classification and walk-length indices for sparse matrices.

Graph conventions follow the usual directed graph of a matrix: there is an
edge ``i -> j`` iff ``A[i, j] != 0``.  A weakly diagonally dominant (WDD)
matrix is weakly chained (WCDD) iff every non-strict row can walk to a
strictly dominant (SDD) row; the *index of connectivity* is the worst such
shortest walk.  For a substochastic matrix the *index of contraction* is the
same quantity with "row sums below one" playing the role of SDD rows, and it
counts how many extra powers are needed before ``||A^n||_inf < 1``.

All BFS routines run in time linear in the number of nonzeros.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

# row-sum slack that absorbs a few roundings in assembled floating point rows
FLOAT_ROWSUM_TOL = 4 * np.finfo(float).eps


@dataclass(frozen=True)
class SparseMatrix:
    """Square row-oriented sparse matrix (CSR arrays, sorted unique columns)."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    @classmethod
    def from_scipy(cls, A) -> "SparseMatrix":
        A = sp.csr_matrix(A, dtype=float)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got shape {A.shape}")
        A = A.copy()
        A.sum_duplicates()
        A.eliminate_zeros()
        A.sort_indices()
        return cls(A.shape[0], A.indptr.copy(), A.indices.copy(), A.data.copy())

    @classmethod
    def from_dense(cls, A) -> "SparseMatrix":
        return cls.from_scipy(sp.csr_matrix(np.asarray(A, dtype=float)))

    @classmethod
    def from_rows(cls, n: int, rows: Sequence[Iterable[tuple[int, float]]]) -> "SparseMatrix":
        r, c, v = [], [], []
        for i, row in enumerate(rows):
            for j, val in row:
                r.append(i)
                c.append(j)
                v.append(val)
        return cls.from_scipy(sp.coo_matrix((v, (r, c)), shape=(n, n)))

    @property
    def rows(self) -> list[list[tuple[int, float]]]:
        return [
            list(zip(self.indices[a:b].tolist(), self.data[a:b].tolist()))
            for a, b in zip(self.indptr[:-1], self.indptr[1:])
        ]

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=(self.n, self.n))

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def diagonal(self) -> np.ndarray:
        return self.to_scipy().diagonal()


def as_sparse(A) -> SparseMatrix:
    """Coerce a SparseMatrix, scipy sparse matrix or array-like."""
    if isinstance(A, SparseMatrix):
        return A
    if sp.issparse(A):
        return SparseMatrix.from_scipy(A)
    return SparseMatrix.from_dense(A)


class RowDominance(Enum):
    SDD = "SDD"
    WDD_ONLY = "WDD_only"
    NOT_WDD = "not_WDD"


@dataclass(frozen=True)
class RowClass:
    """Per-row dominance flags.  ``sdd`` implies ``wdd``."""

    wdd: np.ndarray
    sdd: np.ndarray

    @property
    def flags(self) -> list[RowDominance]:
        out = []
        for w, s in zip(self.wdd, self.sdd):
            if s:
                out.append(RowDominance.SDD)
            elif w:
                out.append(RowDominance.WDD_ONLY)
            else:
                out.append(RowDominance.NOT_WDD)
        return out

    @property
    def is_wdd(self) -> bool:
        return bool(self.wdd.all())

    @property
    def is_sdd(self) -> bool:
        return bool(self.sdd.all())


@dataclass(frozen=True)
class ConnectivityReport:
    """Result of a walk-length index computation.

    ``con`` is an int or ``math.inf``; ``distance[i]`` is the shortest walk
    from row ``i`` to a non-trouble row (0 for non-trouble rows, ``inf`` if
    unreachable).  ``not_wdd_rows`` is nonempty only when the input violated
    the precondition, in which case no walk was computed.
    """

    con: float
    distance: np.ndarray
    not_wdd_rows: tuple[int, ...] = ()

    @property
    def finite(self) -> bool:
        return self.con != math.inf


def _split_diagonal(A: SparseMatrix):
    """Return (diagonal, absolute off-diagonal row sums, row ids per nonzero)."""
    row_of = np.repeat(np.arange(A.n), np.diff(A.indptr))
    on_diag = A.indices == row_of
    diag = np.zeros(A.n)
    diag[row_of[on_diag]] = A.data[on_diag]
    off = np.zeros(A.n)
    np.add.at(off, row_of[~on_diag], np.abs(A.data[~on_diag]))
    return diag, off, row_of


def classify_rows(A, tol: float = 0.0) -> RowClass:
    """Classify each row as SDD, WDD only, or not WDD.

    Comparisons are exact by default; ``tol`` widens the WDD test and narrows
    the SDD test symmetrically.
    """
    A = as_sparse(A)
    diag, off, _ = _split_diagonal(A)
    d = np.abs(diag)
    return RowClass(wdd=d >= off - tol, sdd=d > off + tol)


def is_z_matrix(A) -> bool:
    A = as_sparse(A)
    _, _, row_of = _split_diagonal(A)
    off = A.indices != row_of
    return bool(np.all(A.data[off] <= 0))


def is_l0_matrix(A) -> bool:
    """Z-matrix with nonnegative diagonal."""
    A = as_sparse(A)
    return is_z_matrix(A) and bool(np.all(A.diagonal() >= 0))


def _distance_to_targets(A: SparseMatrix, targets: np.ndarray) -> np.ndarray:
    """Shortest walk length from every row to a target row in graph(A).

    Multi-source BFS from the targets along reversed edges.  Self-loops are
    skipped: they never shorten a walk.
    """
    n = A.n
    dist = np.full(n, np.inf)
    csc = A.to_scipy().tocsc()
    queue = deque()
    for t in np.flatnonzero(targets):
        dist[t] = 0
        queue.append(t)
    indptr, rows = csc.indptr, csc.indices
    while queue:
        j = queue.popleft()
        nd = dist[j] + 1
        for i in rows[indptr[j]:indptr[j + 1]]:
            if dist[i] == np.inf:
                dist[i] = nd
                queue.append(i)
    return dist


def _report(dist: np.ndarray, trouble: np.ndarray) -> ConnectivityReport:
    worst = dist[trouble]
    if worst.size == 0:
        con = 0
    else:
        m = worst.max()
        con = math.inf if m == np.inf else int(m)
    return ConnectivityReport(con=con, distance=dist)


def index_of_connectivity(A, tol: float = 0.0) -> ConnectivityReport:
    """Index of connectivity of a WDD matrix.

    If some row is not WDD the walk search is skipped and the offending rows
    are reported with ``con = inf``.
    """
    A = as_sparse(A)
    rc = classify_rows(A, tol)
    if not rc.is_wdd:
        bad = tuple(int(i) for i in np.flatnonzero(~rc.wdd))
        return ConnectivityReport(con=math.inf, distance=np.full(A.n, np.inf), not_wdd_rows=bad)
    dist = _distance_to_targets(A, rc.sdd)
    return _report(dist, ~rc.sdd)


def is_wcdd(A, tol: float = 0.0) -> bool:
    """WDD and every weak row walks to a strict one."""
    return index_of_connectivity(A, tol).finite


def _row_sums(A: SparseMatrix) -> np.ndarray:
    sums = np.zeros(A.n)
    row_of = np.repeat(np.arange(A.n), np.diff(A.indptr))
    np.add.at(sums, row_of, A.data)
    return sums


def is_substochastic(A, tol: float = 0.0) -> bool:
    """Nonnegative entries and row sums at most ``1 + tol``."""
    A = as_sparse(A)
    return bool(np.all(A.data >= 0) and np.all(_row_sums(A) <= 1.0 + tol))


def is_stochastic(A, tol: float = 0.0) -> bool:
    A = as_sparse(A)
    return bool(np.all(A.data >= 0) and np.all(np.abs(_row_sums(A) - 1.0) <= tol))


def index_of_contraction(A, tol: float = 0.0) -> ConnectivityReport:
    """Index of contraction of a substochastic matrix.

    Non-trouble rows are those summing to less than one.  Equals the index
    of connectivity of ``Id - A``.
    """
    A = as_sparse(A)
    if np.any(A.data < 0):
        raise ValueError("index of contraction needs a nonnegative matrix")
    sums = _row_sums(A)
    if np.any(sums > 1.0 + tol):
        raise ValueError("index of contraction needs row sums at most one")
    deficient = sums < 1.0 - tol
    dist = _distance_to_targets(A, deficient)
    return _report(dist, ~deficient)


def _layered_index(adjacency: list[sp.csr_matrix], good: list[np.ndarray]) -> float:
    """Sequential walk index over a finite sequence.

    Row ``i`` is covered with horizon ``m`` when some walk
    ``i = i_1 -> ... -> i_m`` uses an edge of ``adjacency[k]`` at step ``k``
    and ends in ``good[m-1]``.  Returns the least ``m - 1`` covering all rows,
    or ``inf`` if the supplied sequence is too short to cover them.
    """
    n = good[0].size
    first = np.full(n, np.inf)
    for m in range(1, len(good) + 1):
        covered = good[m - 1].copy()
        for k in range(m - 2, -1, -1):
            # predecessors of covered rows through an edge of the k-th matrix
            pred = adjacency[k] @ covered.astype(np.int8)
            covered = good[k] | (pred > 0)
        newly = covered & (first == np.inf)
        first[newly] = m - 1
        if np.all(first < np.inf):
            break
    worst = first.max() if n else 0
    return math.inf if worst == np.inf else int(worst)


def sequential_index_of_connectivity(As: Sequence, tol: float = 0.0) -> float:
    """Sequential index of connectivity of a finite sequence of WDD matrices.

    Self-loops count here: staying on a row can reach a later matrix in which
    that row is strictly dominant.  ``inf`` means the sequence supplied is not
    long enough to connect every row.
    """
    mats = [as_sparse(A) for A in As]
    if not mats:
        raise ValueError("empty matrix sequence")
    n = mats[0].n
    if any(M.n != n for M in mats):
        raise ValueError("matrices must share a common dimension")
    good, adjacency = [], []
    for M in mats:
        rc = classify_rows(M, tol)
        if not rc.is_wdd:
            raise ValueError("sequential index of connectivity needs WDD matrices")
        good.append(rc.sdd)
        adjacency.append((M.to_scipy() != 0).astype(np.int8).tocsr())
    return _layered_index(adjacency, good)


def sequential_index_of_contraction(As: Sequence, tol: float = 0.0) -> float:
    """Sequential index of contraction of a finite sequence of substochastic matrices.

    For products ``B_k = A_1 ... A_k`` this is ``inf{k : ||B_{k+1}||_inf < 1}``
    (``inf`` when not attained within the supplied sequence).
    """
    mats = [as_sparse(A) for A in As]
    if not mats:
        raise ValueError("empty matrix sequence")
    n = mats[0].n
    good, adjacency = [], []
    for M in mats:
        if M.n != n:
            raise ValueError("matrices must share a common dimension")
        if not is_substochastic(M, tol):
            raise ValueError("sequential index of contraction needs substochastic matrices")
        good.append(_row_sums(M) < 1.0 - tol)
        adjacency.append((M.to_scipy() != 0).astype(np.int8).tocsr())
    return _layered_index(adjacency, good)
