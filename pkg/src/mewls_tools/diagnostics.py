"""
Certificates and asymptotic analyses of a traced branch, and a brute-force oracle
for tiny instances
"""

import logging
from collections.abc import Iterator, Sequence
from typing import TYPE_CHECKING, NamedTuple

import numpy as np
from scipy import special, stats

from mewls_tools.errors import (
    CoreSetRankDeficientError,
    DimensionMismatchError,
    InsufficientSamplesError,
    NoFeasibleGridPointError,
    RankDeficientError,
)
from mewls_tools.models import (
    CoreSetReport,
    EnvelopeReport,
    LimitInterpolant,
    LinearFit,
    OracleComparison,
    OracleResult,
    RateReport,
    ValueCurve,
    ValuePoint,
)
from mewls_tools.numerics import (
    RANK_TOL,
    Matrix,
    Vector,
    min_singular_value,
    sym_eig_min,
    weighted_least_squares,
)
from mewls_tools.problem import BranchState, Problem, entropy, ols_initial, residuals

if TYPE_CHECKING:
    from mewls_tools.continuation import Trajectory

logger = logging.getLogger(__name__)

# Minimum number of samples in a rate fit
MIN_FIT_SAMPLES = 10

# Largest problem the oracle enumerates
ORACLE_MAX_M = 5
ORACLE_MAX_N = 2

# The refinement grid is this many times finer than the coarse grid
REFINE_FACTOR = 10

# Half-width, in coarse grid cells, of the refinement window around the winner
REFINE_HALF_WIDTH = 2

# Number of grid points evaluated at once by the oracle
ORACLE_CHUNK_SIZE = 65536


def schur_hat(p: Problem, y: BranchState, *, sandwich: bool = False) -> Matrix:
    """
    The n×n matrix `Ŝ = AᵀWA − 2μ Aᵀdiag(r)W diag(r)A`

    Its positive definiteness at a certified state certifies both the invertibility
    of the Jacobian and second-order optimality.

    :param p: The problem
    :param y: A branch-certified state
    :param sandwich: If true, assemble the equivalent form `(W^{1/2}A)ᵀ B (W^{1/2}A)`
        with `B = I − 2μ diag(r²)`
    """
    r = residuals(p, y.x)
    w = np.asarray(y.w, dtype=float)
    if sandwich:
        wa = np.sqrt(w)[:, None] * p.A
        B = 1.0 - 2.0 * y.mu * r * r
        return wa.T @ (B[:, None] * wa)

    ra = r[:, None] * p.A
    return p.A.T @ (w[:, None] * p.A) - 2.0 * y.mu * ra.T @ (w[:, None] * ra)


def eig_min_schur(p: Problem, y: BranchState) -> float:
    """
    :return: The smallest eigenvalue of `schur_hat(p, y)`
    """
    return sym_eig_min(schur_hat(p, y))


def coercivity_ratio(p: Problem, y: BranchState, s0: float) -> float:
    """
    The quantity `2μ·max_i(w_i r_i²)·‖A‖₂²/s₀²`; a value below 1 is sufficient for
    `Ŝ` to be positive definite whenever `s₀ ≤ σ_min(W^{1/2}A)`

    :param p: The problem
    :param y: A branch-certified state
    :param s0: A lower bound of `σ_min(W^{1/2}A)`
    """
    r = residuals(p, y.x)
    return float(2.0 * y.mu * np.max(y.w * r * r) * p.norm2_A**2 / s0**2)


def value_curve(traj: "Trajectory") -> ValueCurve:
    """
    Extract `(E, H(w(E)), μ(E))` for every sample of a trajectory
    """
    return ValueCurve(
        points=[
            ValuePoint(E=s.E, H=entropy(s.state.w), mu=s.state.mu)
            for s in traj.samples
        ]
    )


def envelope_check(
    p: Problem, traj: "Trajectory", delta_rel: float = 1e-4
) -> EnvelopeReport:
    """
    Compare the central difference of `H(w(E))` with `μ(E)` at every interior sample

    :param p: The problem
    :param traj: The trajectory
    :param delta_rel: The difference step relative to `E`
    :return: The largest `|dH/dE − μ| / (1 + μ)` and the number of samples checked
    """
    # Deferred import since the continuation module depends on this one
    from mewls_tools.continuation import sample_at

    max_err = 0.0
    checked = 0
    for s in traj.samples[1:-1]:
        delta = delta_rel * s.E
        if not (traj.E_min <= s.E - delta and s.E + delta <= traj.E_uw):
            continue
        H_plus = entropy(sample_at(p, traj, s.E + delta).w)
        H_minus = entropy(sample_at(p, traj, s.E - delta).w)
        dH_dE = (H_plus - H_minus) / (2.0 * delta)
        max_err = max(max_err, abs(dH_dE - s.state.mu) / (1.0 + s.state.mu))
        checked += 1

    if checked == 0:
        logger.info("Envelope check is vacuous: no interior samples")
    return EnvelopeReport(
        max_rel_error=max_err, samples_checked=checked, delta_rel=delta_rel
    )


def core_set(
    p: Problem, traj: "Trajectory", override_threshold: float | None = None
) -> CoreSetReport:
    """
    Classify the indices whose final weights stay bounded away from zero

    `s₀` is the running minimum of `σ_min(W^{1/2}A)` along the trajectory and the
    default threshold is `ε₀ = s₀²/‖A‖₂²`.

    :param p: The problem
    :param traj: A trajectory that reached a small MSE level
    :param override_threshold: A weight threshold to use instead of `ε₀`
    :return: The core-set report

    :raises CoreSetRankDeficientError: If the rows in the core set lose full column
        rank
    """
    s0 = min(s.sigma_min_weighted for s in traj.samples)
    epsilon0 = s0**2 / p.norm2_A**2
    threshold = epsilon0 if override_threshold is None else override_threshold

    w_final = traj.samples[-1].state.w
    indices = [int(i) for i in np.flatnonzero(w_final >= threshold)]

    if len(indices) < p.n:
        msg = f"Core set has {len(indices)} rows, fewer than n={p.n}"
        raise CoreSetRankDeficientError(msg)
    A_S = p.A[indices]
    if not min_singular_value(A_S) > RANK_TOL * np.linalg.norm(A_S, 2):
        msg = f"Rows {indices} of the design matrix are rank deficient"
        raise CoreSetRankDeficientError(msg)

    return CoreSetReport(
        indices=indices,
        s=len(indices),
        s0=s0,
        epsilon0=epsilon0,
        threshold_used=threshold,
        weights_final=w_final.tolist(),
    )


def limit_interpolant(p: Problem, S: Sequence[int]) -> LimitInterpolant:
    """
    Least-squares solution of the subsystem formed by the rows in `S`

    :raises RankDeficientError: If those rows do not have full column rank
    """
    idx = np.asarray(S, dtype=int)
    if idx.size < p.n:
        msg = f"{idx.size} rows cannot determine {p.n} parameters"
        raise RankDeficientError(msg)
    A_S, b_S = p.A[idx], p.b[idx]
    x = weighted_least_squares(A_S, b_S, np.ones(idx.size))
    return LimitInterpolant(x_star=x.tolist(), residuals_on_S=(A_S @ x - b_S).tolist())


def _fit(t: Vector, v: Vector) -> LinearFit:
    res = stats.linregress(t, v)
    return LinearFit(
        slope=float(res.slope),
        intercept=float(res.intercept),
        correlation=float(res.rvalue),
        n_samples=int(t.size),
    )


def rate_report(
    p: Problem,
    traj: "Trajectory",
    S: Sequence[int],
    fit_range: tuple[float, float],
) -> RateReport:
    """
    Fit the asymptotic rates of the branch over `E_lo ≤ E ≤ E_hi`: outlier weights
    and inlier residuals against `E` in log–log coordinates, `μ` against `log(1/E)`

    :param p: The problem
    :param traj: The trajectory, typically its dense output
    :param S: The core (inlier) indices; the others are treated as outliers
    :param fit_range: `(E_lo, E_hi)` with `E_lo > 0`

    :raises InsufficientSamplesError: If fewer than 10 samples fall in the range
    """
    E_lo, E_hi = fit_range
    if not 0 < E_lo < E_hi:
        msg = f"Invalid fit range {fit_range}"
        raise ValueError(msg)

    chosen = [s for s in traj.samples if E_lo <= s.E <= E_hi]
    if len(chosen) < MIN_FIT_SAMPLES:
        msg = (
            f"Only {len(chosen)} samples in [{E_lo:.3e}, {E_hi:.3e}]; "
            f"at least {MIN_FIT_SAMPLES} are required"
        )
        raise InsufficientSamplesError(msg)

    log_E = np.log([s.E for s in chosen])
    W = np.array([s.state.w for s in chosen])
    R = np.array([residuals(p, s.state.x) for s in chosen])
    mu = np.array([s.state.mu for s in chosen])
    tiny = np.finfo(float).tiny

    inliers = sorted(set(S))
    outliers = [j for j in range(p.m) if j not in set(inliers)]

    return RateReport(
        fit_range=(E_lo, E_hi),
        slope_w_outlier={
            j: _fit(log_E, np.log(np.maximum(W[:, j], tiny))) for j in outliers
        },
        slope_r_inlier={
            i: _fit(log_E, np.log(np.maximum(np.abs(R[:, i]), tiny))) for i in inliers
        },
        mu_log_coeff=_fit(-log_E, mu),
    )


def _iter_compositions(
    total: int, lower: Sequence[int], upper: Sequence[int]
) -> Iterator[np.ndarray]:
    """
    Enumerate, in lexicographic order and in blocks, the integer vectors `c` with
    `lower ≤ c ≤ upper` componentwise and `Σ c = total`
    """
    m = len(lower)
    if m == 1:
        if lower[0] <= total <= upper[0]:
            yield np.array([[total]])
        return

    # Suffix sums bounding what the remaining coordinates can absorb
    lo_tail = np.concatenate((np.cumsum(lower[::-1])[::-1], [0]))
    hi_tail = np.concatenate((np.cumsum(upper[::-1])[::-1], [0]))

    def rec(prefix: list[int], remaining: int) -> Iterator[np.ndarray]:
        k = len(prefix)
        if k == m - 2:
            lo = max(lower[k], remaining - upper[k + 1])
            hi = min(upper[k], remaining - lower[k + 1])
            if lo > hi:
                return
            a = np.arange(lo, hi + 1)
            block = np.empty((a.size, m), dtype=int)
            block[:, :k] = prefix
            block[:, k] = a
            block[:, k + 1] = remaining - a
            yield block
            return
        lo = max(lower[k], remaining - hi_tail[k + 1])
        hi = min(upper[k], remaining - lo_tail[k + 1])
        for c in range(lo, hi + 1):
            yield from rec([*prefix, c], remaining - c)

    yield from rec([], total)


def _iter_chunks(blocks: Iterator[np.ndarray], size: int) -> Iterator[np.ndarray]:
    buffer: list[np.ndarray] = []
    count = 0
    for block in blocks:
        buffer.append(block)
        count += block.shape[0]
        if count >= size:
            yield np.vstack(buffer)
            buffer, count = [], 0
    if buffer:
        yield np.vstack(buffer)


class _GridWinner(NamedTuple):
    c: np.ndarray
    H: float
    mse: float


def _better(
    current: _GridWinner | None, C: np.ndarray, H: Vector, mse: Vector
) -> _GridWinner | None:
    """
    Keep the larger-entropy of `current` and the best row of a chunk; `H` is `-inf`
    on rows that do not take part
    """
    H_max = H.max()
    if not np.isfinite(H_max):
        return current
    ties = np.flatnonzero(H == H_max)
    pick = ties[np.lexsort(C[ties].T[::-1])[0]]
    if (
        current is None
        or H_max > current.H
        or (H_max == current.H and tuple(C[pick]) < tuple(current.c))
    ):
        return _GridWinner(C[pick].copy(), float(H_max), float(mse[pick]))
    return current


def _grid_search(
    p: Problem,
    E: float,
    resolution: int,
    lower: Sequence[int],
    upper: Sequence[int],
) -> tuple[_GridWinner | None, _GridWinner | None, int]:
    """
    Evaluate every grid point `w = c / resolution` of a (sub)simplex and return the
    entropy maximizers among the points whose MSE is within half a grid cell of MSE
    variation below and above `E`, with the number of points in that band

    Entropy grows with the MSE along the branch, so a single maximizer over the
    whole band sits at its upper edge; the two sides are kept apart for
    interpolation. Ties in entropy go to the lexicographically smallest weight
    vector, so the result does not depend on how the grid is chunked.
    """
    A, b = p.A, p.b
    below: _GridWinner | None = None
    above: _GridWinner | None = None
    n_feasible = 0

    for C in _iter_chunks(
        _iter_compositions(resolution, lower, upper), ORACLE_CHUNK_SIZE
    ):
        W = C / resolution

        # Weighted normal equations of the tiny n ≤ 2 systems, solved in closed form
        G = np.einsum("km,mi,mj->kij", W, A, A)
        g = np.einsum("km,mi,m->ki", W, A, b)
        if p.n == 1:
            det = G[:, 0, 0]
            X = g / np.where(det > 0, det, 1.0)[:, None]
            valid = det > RANK_TOL * np.einsum("ii->", A.T @ A)
        else:
            det = G[:, 0, 0] * G[:, 1, 1] - G[:, 0, 1] ** 2
            scale = (G[:, 0, 0] + G[:, 1, 1]) ** 2
            valid = det > RANK_TOL * scale
            safe = np.where(valid, det, 1.0)
            X = np.column_stack(
                (
                    (G[:, 1, 1] * g[:, 0] - G[:, 0, 1] * g[:, 1]) / safe,
                    (G[:, 0, 0] * g[:, 1] - G[:, 0, 1] * g[:, 0]) / safe,
                )
            )

        R2 = (X @ A.T - b) ** 2
        mse = np.einsum("km,km->k", W, R2)
        band = 0.5 * (R2.max(axis=1) - R2.min(axis=1)) / resolution
        feasible = valid & (np.abs(mse - E) <= band)
        n_feasible += int(np.count_nonzero(feasible))
        if not np.any(feasible):
            continue

        H = special.entr(W).sum(axis=1)
        below = _better(below, C, np.where(feasible & (mse <= E), H, -np.inf), mse)
        above = _better(above, C, np.where(feasible & (mse > E), H, -np.inf), mse)

    return below, above, n_feasible


def _interpolate(
    below: _GridWinner | None, above: _GridWinner | None, E: float, resolution: int
) -> Vector:
    """
    Weights at `E` on the segment between the two side winners, by their MSE
    """
    if below is None or above is None:
        only = below if above is None else above
        assert only is not None
        return only.c / resolution
    t = (E - below.mse) / (above.mse - below.mse)
    return ((1 - t) * below.c + t * above.c) / resolution


def brute_force_oracle(
    p: Problem, E: float, grid_resolution: int = 200, *, refine: bool = True
) -> OracleResult:
    """
    Maximize the entropy over a grid of the probability simplex subject to the MSE
    constraint, as an independent check of the branch on tiny instances

    For every grid point `w` the parameters `x(w)` solve the weighted least-squares
    problem. Among the points whose MSE is within half a grid cell of MSE variation
    of `E`, the entropy maximizers just below and just above `E` are found, and the
    result lies on the segment between them where their MSEs interpolate to `E`
    (a single side is used as is when the other is empty). One refinement pass
    repeats the search on a grid `REFINE_FACTOR` times finer in a window around that
    point.

    :param p: A problem with m ≤ 5 and n ≤ 2
    :param E: The MSE level, in `(0, E_uw]`
    :param grid_resolution: Number of grid cells along each simplex edge
    :param refine: Whether to run the refinement pass
    :return: The oracle result

    :raises DimensionMismatchError: If the problem is too large to enumerate
    :raises NoFeasibleGridPointError: If no grid point meets the MSE band, or `E` is
        outside the admissible range
    """
    if p.m > ORACLE_MAX_M or p.n > ORACLE_MAX_N:
        msg = (
            f"Simplex enumeration is limited to m <= {ORACLE_MAX_M} and "
            f"n <= {ORACLE_MAX_N}; got m={p.m}, n={p.n}"
        )
        raise DimensionMismatchError(msg)

    ols, _ = ols_initial(p)
    if not 0 < E <= ols.E_uw * (1 + 1e-12):
        msg = (
            f"E={E:.6e} is outside the admissible range "
            f"(0, E_uw] = (0, {ols.E_uw:.6e}]"
        )
        raise NoFeasibleGridPointError(msg)

    res = grid_resolution
    below, above, n_feasible = _grid_search(p, E, res, [0] * p.m, [res] * p.m)
    if below is None and above is None:
        msg = f"No grid point at resolution {res} attains E={E:.6e}"
        raise NoFeasibleGridPointError(msg)
    w = _interpolate(below, above, E, res)

    refined_res = None
    if refine:
        fine = res * REFINE_FACTOR
        half = REFINE_HALF_WIDTH * REFINE_FACTOR
        center = np.rint(w * fine).astype(int)
        lower = [int(max(0, c - half)) for c in center]
        upper = [int(min(fine, c + half)) for c in center]
        below, above, n_refined = _grid_search(p, E, fine, lower, upper)
        if below is not None or above is not None:
            w = _interpolate(below, above, E, fine)
            refined_res = fine
            n_feasible = n_refined

    x = weighted_least_squares(p.A, p.b, w)
    r = residuals(p, x)
    logger.info("Oracle at E=%.6e: %d feasible grid points", E, n_feasible)
    return OracleResult(
        E=E,
        w=w.tolist(),
        x=x.tolist(),
        H=entropy(w),
        mse=float(w @ (r * r)),
        grid_resolution=grid_resolution,
        refined_resolution=refined_res,
        n_feasible=n_feasible,
    )


def compare_with_branch(
    p: Problem, traj: "Trajectory", oracle: OracleResult
) -> OracleComparison:
    """
    Compare an oracle result with the branch state at the same MSE level
    """
    from mewls_tools.continuation import sample_at

    y = sample_at(p, traj, oracle.E)
    deltas = np.asarray(oracle.w) - y.w
    H_branch = entropy(y.w)
    return OracleComparison(
        w_branch=y.w.tolist(),
        H_branch=H_branch,
        weight_deltas=deltas.tolist(),
        max_weight_delta=float(np.max(np.abs(deltas))),
        entropy_delta=oracle.H - H_branch,
    )
