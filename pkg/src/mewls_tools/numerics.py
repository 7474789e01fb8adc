"""
Dense linear-algebra kernels shared by the other modules

All functions are pure; inputs are never modified.
"""

from typing import TypeAlias

import numpy as np
from numpy.typing import NDArray
from scipy import linalg

from mewls_tools.errors import RankDeficientError, SingularMatrixError

Vector: TypeAlias = NDArray[np.float64]
Matrix: TypeAlias = NDArray[np.float64]

# Relative pivot magnitude below which an LU factorization is declared singular
PIVOT_FLOOR_REL = 1e-14

# Relative singular-value threshold for rank decisions
RANK_TOL = 1e-12

# Relative tolerance on the asymmetry accepted by `sym_eig_min`
SYM_TOL = 1e-8


def solve_linear(M: Matrix, rhs: Vector) -> Vector:
    """
    Solve a square linear system by LU factorization with row pivoting

    :param M: The square coefficient matrix
    :param rhs: The right-hand side, of length `M.shape[0]`
    :return: The solution `v` of `M v = rhs`

    :raises SingularMatrixError: If a pivot magnitude falls below
        `PIVOT_FLOOR_REL * ‖M‖∞`
    :raises ValueError: If the shapes do not match or the input is not finite
    """
    M = np.asarray(M, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        msg = f"Expected a square matrix, got shape {M.shape}"
        raise ValueError(msg)
    if rhs.shape != (M.shape[0],):
        msg = f"Right-hand side of shape {rhs.shape} does not match {M.shape}"
        raise ValueError(msg)

    pivot_floor = PIVOT_FLOOR_REL * np.linalg.norm(M, np.inf)
    lu, piv = linalg.lu_factor(M, check_finite=True)
    min_pivot = np.min(np.abs(np.diag(lu)))
    if not min_pivot > pivot_floor:
        msg = f"Pivot {min_pivot:.3e} below floor {pivot_floor:.3e}"
        raise SingularMatrixError(msg)

    return linalg.lu_solve((lu, piv), rhs, check_finite=False)


def weighted_least_squares(A: Matrix, b: Vector, w: Vector) -> Vector:
    """
    Minimize `Σ w_i (a_iᵀx − b_i)²` through a QR factorization of the row-scaled
    matrix `diag(√w) A` (the normal matrix `AᵀWA` is never formed)

    :param A: The m×n design matrix
    :param b: The m observations
    :param w: The m non-negative weights, not all zero
    :return: The minimizer `x`

    :raises RankDeficientError: If the scaled matrix is rank deficient relative to
        `RANK_TOL`
    :raises ValueError: If the weights are negative or all zero
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(w < 0) or not np.sum(w) > 0:
        msg = "Weights must be non-negative with a positive sum"
        raise ValueError(msg)

    sqrt_w = np.sqrt(w)
    q, r = linalg.qr(sqrt_w[:, None] * A, mode="economic", check_finite=True)

    svals = linalg.svdvals(r)
    if not svals[-1] > RANK_TOL * svals[0]:
        msg = (
            f"Weighted design matrix is rank deficient "
            f"(σ_min={svals[-1]:.3e}, σ_max={svals[0]:.3e})"
        )
        raise RankDeficientError(msg)

    return linalg.solve_triangular(r, q.T @ (sqrt_w * b), check_finite=False)


def sym_eig_min(S: Matrix) -> float:
    """
    Get the algebraically smallest eigenvalue of the symmetric part `(S + Sᵀ)/2`

    :param S: A square matrix that is symmetric up to round-off
    :return: The smallest eigenvalue

    :raises ValueError: If `S` is not square, not finite, or asymmetric beyond
        `SYM_TOL` relative to its norm
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        msg = f"Expected a square matrix, got shape {S.shape}"
        raise ValueError(msg)
    scale = 1.0 + np.linalg.norm(S, np.inf)
    if np.linalg.norm(S - S.T, np.inf) > SYM_TOL * scale:
        msg = "Matrix is not symmetric within tolerance"
        raise ValueError(msg)

    sym = 0.5 * (S + S.T)
    return float(
        linalg.eigh(sym, eigvals_only=True, subset_by_index=[0, 0], check_finite=True)[
            0
        ]
    )


def min_singular_value(M: Matrix) -> float:
    """
    Get the smallest singular value of a tall (or square) matrix

    :param M: A matrix with at least as many rows as columns
    :return: `σ_min(M) ≥ 0`
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] < M.shape[1]:
        msg = f"Expected a tall matrix, got shape {M.shape}"
        raise ValueError(msg)
    return float(linalg.svdvals(M, check_finite=True)[-1])
