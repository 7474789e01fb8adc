"""
The MEWLS problem and its formulas evaluated pointwise.

A stationary point of the entropy program at MSE level `E` is a state
`y = (λ, μ, w, x)` with `F(y; E) = 0`, where

    F₁ = uᵀw − 1
    F₂ = wᵀ(Ax − b)² − E
    F₃ = log w + (1 + λ)u + μ(Ax − b)²
    F₄ = AᵀW(Ax − b)

(`u` the all-ones vector, `W = diag(w)`, squares taken elementwise).
"""

import hashlib
import logging
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy import special

from mewls_tools.errors import (
    DimensionMismatchError,
    NonPositiveWeightError,
    RankDeficientError,
    ZeroResidualError,
)
from mewls_tools.numerics import (
    RANK_TOL,
    Matrix,
    Vector,
    min_singular_value,
    weighted_least_squares,
)

logger = logging.getLogger(__name__)

# Relative spread of the OLS squared residuals below which they count as constant
R2_SPREAD_TOL = 1e-12

# Default feasibility tolerance of branch certification
FEAS_TOL = 1e-8


class Problem:
    """
    An overdetermined linear system `Ax ≈ b` with full column rank

    Instances are treated as immutable; the arrays are stored read-only.
    """

    def __init__(self, A: Matrix, b: Vector):
        """
        :param A: The m×n design matrix, m ≥ n ≥ 1
        :param b: The m observations

        :raises DimensionMismatchError: If the shapes are inconsistent
        :raises RankDeficientError: If `A` does not have full column rank
        :raises ValueError: If an entry is not finite
        """
        A = np.array(A, dtype=float, ndmin=2)
        b = np.array(b, dtype=float).reshape(-1)
        if A.ndim != 2:
            msg = f"Design matrix must be 2-dimensional, got shape {A.shape}"
            raise DimensionMismatchError(msg)
        m, n = A.shape
        if not m >= n >= 1:
            msg = f"Expected m >= n >= 1, got a {m}x{n} design matrix"
            raise DimensionMismatchError(msg)
        if b.shape != (m,):
            msg = f"Observation vector of length {b.size} does not match m={m}"
            raise DimensionMismatchError(msg)
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            msg = "Design matrix and observations must be finite"
            raise ValueError(msg)

        A.setflags(write=False)
        b.setflags(write=False)
        self.A = A
        self.b = b
        self.m = m
        self.n = n

        if not min_singular_value(A) > RANK_TOL * self.norm2_A:
            msg = "Design matrix does not have full column rank"
            raise RankDeficientError(msg)

    def __repr__(self) -> str:
        return f"Problem(m={self.m}, n={self.n}, fingerprint={self.fingerprint[:12]})"

    @cached_property
    def norm_inf_A(self) -> float:
        return float(np.linalg.norm(self.A, np.inf))

    @cached_property
    def norm2_A(self) -> float:
        return float(np.linalg.norm(self.A, 2))

    @cached_property
    def norm_inf_b(self) -> float:
        return float(np.linalg.norm(self.b, np.inf))

    @cached_property
    def E_floor(self) -> float:
        """
        Uniform-weight MSE at or below which the system counts as consistent
        """
        return 1e-14 * (1.0 + float(self.b @ self.b) / self.m)

    @cached_property
    def fingerprint(self) -> str:
        """
        SHA-256 digest of the shape and the raw bytes of `A` and `b`
        """
        h = hashlib.sha256()
        h.update(f"{self.m}x{self.n}".encode())
        h.update(np.ascontiguousarray(self.A).tobytes())
        h.update(np.ascontiguousarray(self.b).tobytes())
        return h.hexdigest()

    def rows(self, indices: list[int] | Vector) -> "Problem":
        """
        Get the subproblem formed by a subset of the rows

        :param indices: The row indices to keep
        :return: The subproblem
        """
        idx = np.asarray(indices, dtype=int)
        return Problem(self.A[idx], self.b[idx])


class BranchState(NamedTuple):
    """
    A point `y = (λ, μ, w, x)` of the extended state space at MSE level `E`
    """

    lam: float
    mu: float
    w: Vector
    x: Vector
    E: float

    def as_vector(self) -> Vector:
        """
        :return: The concatenation `(λ, μ, w, x)`
        """
        return np.concatenate(([self.lam, self.mu], self.w, self.x))

    @classmethod
    def from_vector(cls, v: Vector, m: int, E: float) -> "BranchState":
        """
        Split a concatenated vector `(λ, μ, w, x)` back into a state

        :param v: The vector of length `2 + m + n`
        :param m: The number of weights
        :param E: The MSE level the state is attached to
        """
        v = np.asarray(v, dtype=float)
        return cls(
            lam=float(v[0]),
            mu=float(v[1]),
            w=v[2 : 2 + m].copy(),
            x=v[2 + m :].copy(),
            E=float(E),
        )

    def at(self, E: float) -> "BranchState":
        """
        :return: The same point attached to another MSE level
        """
        return self._replace(E=float(E))


class OlsSummary(NamedTuple):
    """
    The uniform-weight least-squares solution and derived quantities
    """

    x_star: Vector
    r_star: Vector
    E_uw: float
    r2_spread: float


class Feasibility(NamedTuple):
    """
    Violations of the three constraints that define a point of the branch
    """

    normalization: float  # |uᵀw − 1|
    mse: float  # |wᵀr² − E|
    normal_equations: float  # ‖AᵀWr‖∞

    def holds(self, p: Problem, E: float, tol: float = FEAS_TOL) -> bool:
        """
        Check the feasibility bundle against a tolerance

        :param p: The problem the violations were computed for
        :param E: The MSE level
        :param tol: The feasibility tolerance
        """
        return (
            self.normalization <= tol
            and self.mse <= tol * (1.0 + E)
            and self.normal_equations <= tol * p.norm_inf_A * max(p.norm_inf_b, 1.0)
        )


def residuals(p: Problem, x: Vector) -> Vector:
    """
    :return: `r = Ax − b`
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (p.n,):
        msg = f"Parameter vector of length {x.size} does not match n={p.n}"
        raise DimensionMismatchError(msg)
    return p.A @ x - p.b


def entropy(w: Vector) -> float:
    """
    Shannon entropy `−Σ w_i log w_i` with the convention `0 log 0 = 0`
    """
    return float(np.sum(special.entr(np.asarray(w, dtype=float))))


def weighted_mse(w: Vector, r: Vector) -> float:
    """
    :return: `Σ w_i r_i²`
    """
    w = np.asarray(w, dtype=float)
    r = np.asarray(r, dtype=float)
    if w.shape != r.shape:
        msg = f"Weights of shape {w.shape} do not match residuals of shape {r.shape}"
        raise DimensionMismatchError(msg)
    return float(w @ (r * r))


def is_degenerate_start(ols: OlsSummary) -> bool:
    """
    Check whether the OLS squared residuals are constant, in which case the Jacobian
    is singular at the uniform-weight start
    """
    r2_max = float(np.max(ols.r_star**2))
    return ols.r2_spread <= R2_SPREAD_TOL * (1.0 + r2_max)


def ols_initial(p: Problem) -> tuple[OlsSummary, BranchState]:
    """
    Compute the uniform-weight least-squares solution and the stationary point it
    defines at `E = E_uw`

    :param p: The problem
    :return: The OLS summary and the starting state `(λ, μ, w, x) =
        (−(1 + log(1/m)), 0, u/m, x*)`

    :raises RankDeficientError: From the least-squares solve
    :raises ZeroResidualError: If `E_uw` is at or below the consistency floor
    """
    w0 = np.full(p.m, 1.0 / p.m)
    x_star = weighted_least_squares(p.A, p.b, w0)
    r_star = residuals(p, x_star)
    r2 = r_star**2
    E_uw = float(np.mean(r2))
    if E_uw <= p.E_floor:
        msg = (
            f"The system is consistent (E_uw={E_uw:.3e} <= {p.E_floor:.3e}); "
            f"there is no branch to trace"
        )
        raise ZeroResidualError(msg)

    ols = OlsSummary(
        x_star=x_star,
        r_star=r_star,
        E_uw=E_uw,
        r2_spread=float(np.max(r2) - np.min(r2)),
    )
    y0 = BranchState(
        lam=-(1.0 + np.log(1.0 / p.m)), mu=0.0, w=w0, x=x_star.copy(), E=E_uw
    )
    logger.info("OLS start: E_uw=%.6e, x*=%s", E_uw, x_star)
    return ols, y0


def _check_weights(w: Vector) -> None:
    if not np.all(w > 0):
        msg = f"All weights must be positive (min weight {np.min(w):.3e})"
        raise NonPositiveWeightError(msg)


def eval_F(p: Problem, y: BranchState) -> Vector:
    """
    Evaluate the stationarity map

    :param p: The problem
    :param y: The state, including the MSE level `E`
    :return: `(F₁, F₂, F₃ᵀ, F₄ᵀ)ᵀ`, of length `2 + m + n`

    :raises NonPositiveWeightError: If a weight is not positive
    """
    w = np.asarray(y.w, dtype=float)
    _check_weights(w)
    r = residuals(p, y.x)
    r2 = r * r

    F1 = np.sum(w) - 1.0
    F2 = w @ r2 - y.E
    F3 = np.log(w) + (1.0 + y.lam) + y.mu * r2
    F4 = p.A.T @ (w * r)
    return np.concatenate(([F1, F2], F3, F4))


def jacobian(p: Problem, y: BranchState, *, on_branch: bool = False) -> Matrix:
    """
    The analytic Jacobian of `eval_F` with respect to `(λ, μ, w, x)`

    :param p: The problem
    :param y: The state
    :param on_branch: If true, return the simplified form valid where `F₄ = 0`, in
        which the `x`-block of the second row, `2(AᵀWr)ᵀ`, vanishes. Only meaningful
        at branch-certified states.
    :return: The `(2+m+n)` square Jacobian

    :raises NonPositiveWeightError: If a weight is not positive
    """
    m, n = p.m, p.n
    w = np.asarray(y.w, dtype=float)
    _check_weights(w)
    r = residuals(p, y.x)
    r2 = r * r
    A = p.A

    iw, ix = 2, 2 + m  # column offsets of the w and x blocks
    J = np.zeros((2 + m + n, 2 + m + n))

    # F₁ = uᵀw − 1
    J[0, iw:ix] = 1.0

    # F₂ = wᵀr² − E
    J[1, iw:ix] = r2
    if not on_branch:
        J[1, ix:] = 2.0 * (A.T @ (w * r))

    # F₃ = log w + (1 + λ)u + μr²
    J[2:ix, 0] = 1.0
    J[2:ix, 1] = r2
    J[2:ix, iw:ix] = np.diag(1.0 / w)
    J[2:ix, ix:] = 2.0 * y.mu * (r[:, None] * A)

    # F₄ = AᵀW(Ax − b)
    J[ix:, iw:ix] = A.T * r
    J[ix:, ix:] = A.T @ (w[:, None] * A)

    return J


def gibbs_weights(mu: float, r: Vector) -> Vector:
    """
    The Gibbs weights `exp(−μ r_i²) / Σ_j exp(−μ r_j²)`, evaluated with the exponent
    shifted by its extreme value

    :param mu: The MSE multiplier
    :param r: The residuals
    """
    r = np.asarray(r, dtype=float)
    return special.softmax(-mu * (r * r))


def gibbs_consistency(p: Problem, y: BranchState) -> float:
    """
    Drift of the weights from the Gibbs form implied by stationarity

    :return: `‖w − gibbs_weights(μ, Ax − b)‖∞`
    """
    return float(np.max(np.abs(y.w - gibbs_weights(y.mu, residuals(p, y.x)))))


def feasibility(p: Problem, y: BranchState) -> Feasibility:
    """
    Compute the feasibility bundle of a state: normalization, MSE constraint and
    weighted normal equations
    """
    r = residuals(p, y.x)
    return Feasibility(
        normalization=abs(float(np.sum(y.w)) - 1.0),
        mse=abs(weighted_mse(y.w, r) - y.E),
        normal_equations=float(np.max(np.abs(p.A.T @ (y.w * r)))),
    )
