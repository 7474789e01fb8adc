import numpy as np
import pytest

from mewls_tools.errors import RankDeficientError, SingularMatrixError
from mewls_tools.numerics import (
    min_singular_value,
    solve_linear,
    sym_eig_min,
    weighted_least_squares,
)


@pytest.mark.parametrize("seed", range(5))
def test_solve_linear_residual(seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(5, 5)) + 5 * np.eye(5)
    rhs = rng.normal(size=5)
    v = solve_linear(M, rhs)
    assert np.max(np.abs(M @ v - rhs)) <= 1e-12 * (1 + np.max(np.abs(rhs)))


def test_solve_linear_identity():
    assert np.array_equal(solve_linear(np.eye(3), np.array([1.0, 2.0, 3.0])), [1, 2, 3])


@pytest.mark.parametrize(
    "M",
    [
        np.array([[1.0, 2.0], [2.0, 4.0]]),
        np.zeros((3, 3)),
        np.array([[1.0, 0.0], [0.0, 1e-20]]),
    ],
)
def test_solve_linear_singular(M):
    with pytest.raises(SingularMatrixError):
        solve_linear(M, np.ones(M.shape[0]))


def test_solve_linear_shape_mismatch():
    with pytest.raises(ValueError, match="square"):
        solve_linear(np.ones((2, 3)), np.ones(2))


@pytest.mark.parametrize("seed", range(5))
def test_weighted_least_squares_stationarity(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(8, 3))
    b = rng.normal(size=8)
    w = rng.uniform(0.1, 1.0, size=8)
    x = weighted_least_squares(A, b, w)
    gradient = A.T @ (w * (A @ x - b))
    bound = 1e-10 * np.linalg.norm(A, np.inf) * np.linalg.norm(b, np.inf)
    assert np.max(np.abs(gradient)) <= bound


def test_weighted_least_squares_uniform_matches_lstsq():
    rng = np.random.default_rng(11)
    A = rng.normal(size=(10, 2))
    b = rng.normal(size=10)
    expected = np.linalg.lstsq(A, b, rcond=None)[0]
    assert np.allclose(weighted_least_squares(A, b, np.full(10, 0.1)), expected)


def test_weighted_least_squares_zero_weight_rows_drop_out():
    # The third row only counts through its weight
    A = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    b = np.array([1.0, 2.0, 100.0])
    x = weighted_least_squares(A, b, np.array([1.0, 1.0, 0.0]))
    assert np.allclose(x, [1.0, 2.0])


def test_weighted_least_squares_rank_deficient():
    A = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    with pytest.raises(RankDeficientError):
        weighted_least_squares(A, np.ones(3), np.ones(3))


def test_weighted_least_squares_rank_lost_through_weights():
    A = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(RankDeficientError):
        weighted_least_squares(A, np.ones(3), np.array([0.5, 0.0, 0.5]))


@pytest.mark.parametrize("w", [[1.0, -1.0, 1.0], [0.0, 0.0, 0.0]])
def test_weighted_least_squares_bad_weights(w):
    with pytest.raises(ValueError, match="non-negative"):
        weighted_least_squares(np.eye(3), np.ones(3), np.array(w))


@pytest.mark.parametrize("seed", range(3))
def test_sym_eig_min_matches_full_spectrum(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(6, 6))
    S = X + X.T
    assert sym_eig_min(S) == pytest.approx(np.min(np.linalg.eigvalsh(S)), abs=1e-10)


def test_sym_eig_min_diagonal():
    assert sym_eig_min(np.diag([3.0, -2.0, 5.0])) == pytest.approx(-2.0)


def test_sym_eig_min_rejects_asymmetric():
    with pytest.raises(ValueError, match="symmetric"):
        sym_eig_min(np.array([[1.0, 1.0], [0.0, 1.0]]))


@pytest.mark.parametrize("seed", range(3))
def test_min_singular_value_squared_is_gram_eigenvalue(seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(7, 3))
    s = min_singular_value(M)
    assert s**2 == pytest.approx(sym_eig_min(M.T @ M), rel=1e-9)


def test_min_singular_value_rejects_wide():
    with pytest.raises(ValueError, match="tall"):
        min_singular_value(np.ones((2, 3)))
