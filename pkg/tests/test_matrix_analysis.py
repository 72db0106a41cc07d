import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from impulsegames.discretization import UNCONSTRAINED, build_grid, build_impulse_operator, build_impulse_sets, build_generator
from impulsegames.game_model import linear_game
from impulsegames.matrix_analysis import (
    RowDominance,
    SparseMatrix,
    classify_rows,
    index_of_connectivity,
    index_of_contraction,
    is_l0_matrix,
    is_stochastic,
    is_substochastic,
    is_wcdd,
    is_z_matrix,
    sequential_index_of_connectivity,
    sequential_index_of_contraction,
)

DEN = 8


def dyadic_substochastic(rng, n, p_full=0.7):
    """Integer numerators ``K`` of a substochastic ``K / DEN``."""
    K = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        budget = DEN if rng.uniform() < p_full else int(rng.integers(0, DEN))
        cols = rng.choice(n, size=int(rng.integers(1, min(n, 3) + 1)), replace=False)
        for j in cols[:-1]:
            take = int(rng.integers(0, budget + 1))
            K[i, j] += take
            budget -= take
        K[i, cols[-1]] += budget
    return K


def test_sparse_matrix_round_trip():
    A = np.array([[2.0, 0, -1], [0, 0, 0], [1, 3, 0]])
    S = SparseMatrix.from_dense(A)
    np.testing.assert_array_equal(S.to_dense(), A)
    assert S.rows[1] == []
    assert SparseMatrix.from_rows(3, S.rows).rows == S.rows
    np.testing.assert_array_equal(S.diagonal(), [2.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        SparseMatrix.from_dense(np.ones((2, 3)))


def test_classify_rows_examples():
    assert classify_rows(np.eye(3)).flags == [RowDominance.SDD] * 3
    A = np.array([[1.0, -1.0], [-3.0, 2.0]])
    assert classify_rows(A).flags == [RowDominance.WDD_ONLY, RowDominance.NOT_WDD]


def test_z_and_l0():
    assert is_z_matrix(np.array([[-1.0, 0], [-2, 3]]))
    assert not is_l0_matrix(np.array([[-1.0, 0], [-2, 3]]))
    assert not is_z_matrix(np.array([[1.0, 0.5], [0, 1]]))


def test_connectivity_examples():
    assert index_of_connectivity(np.diag([1.0, 2.0, 3.0])).con == 0
    rep = index_of_connectivity(np.array([[1.0, -1.0], [0.0, 2.0]]))
    assert rep.con == 1
    np.testing.assert_array_equal(rep.distance, [1, 0])
    isolated = np.array([[1.0, 0, 0], [0, 2.0, -1.0], [0, 0, 1.0]])
    isolated[0, 0] = 0.0  # zero row: WDD but never reaches anything
    assert index_of_connectivity(isolated).con == math.inf
    assert not is_wcdd(isolated)
    chain = np.array([[1.0, -1, 0, 0], [0, 1, -1, 0], [0, 0, 1, -1], [0, 0, 0, 1]])
    assert index_of_connectivity(chain).con == 3


def test_connectivity_not_wdd():
    rep = index_of_connectivity(np.array([[1.0, -2.0], [0.0, 1.0]]))
    assert rep.con == math.inf and rep.not_wdd_rows == (0,)
    assert not is_wcdd(np.array([[1.0, -2.0], [0.0, 1.0]]))


def test_wcdd_examples():
    assert is_wcdd(-build_generator(linear_game(), build_grid(4, 0.5)).to_scipy())
    cycle = np.array([[1.0, -1.0], [-1.0, 1.0]])
    assert abs(np.linalg.det(cycle)) == 0.0
    assert not is_wcdd(cycle)
    grid = build_grid(1, 1)
    delta = np.array([2.0, 0.0, 0.0])
    B = build_impulse_operator(grid, delta, build_impulse_sets(grid, UNCONSTRAINED))
    assert not is_wcdd(sp.identity(3) - B)


def test_wcdd_matrices_are_nonsingular_m_matrices(rng):
    seen = 0
    while seen < 50:
        n = int(rng.integers(1, 9))
        off = -rng.integers(0, 5, size=(n, n)) * (rng.uniform(size=(n, n)) < 0.5) / 4
        np.fill_diagonal(off, 0.0)
        A = off + np.diag(-off.sum(axis=1) + (rng.uniform(size=n) < 0.25) / 4)
        if is_wcdd(A):
            seen += 1
            assert np.linalg.matrix_rank(A) == n
            assert np.linalg.inv(A).min() >= -1e-14


def test_substochastic_predicates():
    assert is_substochastic(0.5 * np.eye(2))
    assert not is_substochastic(np.array([[0.6, 0.6], [0, 0]]))
    assert not is_substochastic(np.array([[-0.1, 0.5], [0, 0]]))
    assert is_stochastic(np.array([[0.25, 0.75], [1.0, 0.0]]))
    assert not is_stochastic(0.5 * np.eye(2))


def test_contraction_examples():
    assert index_of_contraction(np.eye(4)).con == math.inf
    assert index_of_contraction(0.5 * np.eye(4)).con == 0
    # stochastic chain 0 -> 1 -> 2 with a leaking last row
    A = np.array([[0, 1.0, 0], [0, 0, 1.0], [0, 0, 0.5]])
    assert index_of_contraction(A).con == 2
    with pytest.raises(ValueError):
        index_of_contraction(np.array([[1.5]]))
    with pytest.raises(ValueError):
        index_of_contraction(np.array([[-0.5]]))


def _contraction_by_powers(K):
    P, scale = K.copy(), DEN
    for m in range(K.shape[0] + 1):
        if P.sum(axis=1).max() < scale:
            return m
        P, scale = P @ K, scale * DEN
    return math.inf


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12))
def test_contraction_matches_powers(seed, n):
    K = dyadic_substochastic(np.random.default_rng(seed), n)
    assert index_of_contraction(K / DEN).con == _contraction_by_powers(K)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 10))
def test_contraction_equals_connectivity_of_complement(seed, n):
    A = dyadic_substochastic(np.random.default_rng(seed), n) / DEN
    assert index_of_contraction(A).con == index_of_connectivity(np.eye(n) - A).con


def test_sequential_examples(rng):
    for _ in range(20):
        n = int(rng.integers(1, 9))
        A = dyadic_substochastic(rng, n) / DEN
        expected = index_of_contraction(A).con
        got = sequential_index_of_contraction([A] * (n + 1))
        assert got == expected
    contracting = 0.5 * np.eye(3)
    assert sequential_index_of_contraction([contracting, np.eye(3)]) == 0
    assert sequential_index_of_connectivity([np.eye(3) - contracting, np.eye(3)]) == 0


def test_sequential_contraction_matches_product_norms(rng):
    for _ in range(100):
        n = int(rng.integers(1, 9))
        Ks = [dyadic_substochastic(rng, n, p_full=0.85) for _ in range(3)]
        P, scale, expected = np.eye(n, dtype=np.int64), 1, math.inf
        for k, K in enumerate(Ks):
            P, scale = P @ K, scale * DEN
            if P.sum(axis=1).max() < scale:
                expected = k
                break
        assert sequential_index_of_contraction([K / DEN for K in Ks]) == expected


def test_sequential_connectivity_counts_self_loops():
    # row 0 is weak in A1 and only its self-loop leads to a row strict in A2
    A1 = np.array([[1.0, -1.0], [0.0, 1.0]])
    A2 = np.array([[2.0, -1.0], [-1.0, 1.0]])
    assert sequential_index_of_connectivity([A1, A2]) == 1
    assert sequential_index_of_connectivity([A1, A1]) == 1
    assert sequential_index_of_connectivity([np.array([[1.0, -1.0], [-1.0, 1.0]])]) == math.inf


def test_sequential_rejects_bad_input():
    with pytest.raises(ValueError):
        sequential_index_of_contraction([])
    with pytest.raises(ValueError):
        sequential_index_of_contraction([np.eye(2), np.eye(3)])
    with pytest.raises(ValueError):
        sequential_index_of_connectivity([np.array([[1.0, -2.0], [0, 1.0]])])
