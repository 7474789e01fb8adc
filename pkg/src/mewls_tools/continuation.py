"""
Tracing the branch `E ↦ y(E)` of stationary points from the uniform-weight start
down to a target MSE level.

Differentiating `F(y(E); E) = 0` gives the mass-matrix ODE `J(y) y' = e₂`. Instead of
integrating it with a stiff solver, each step takes an Euler predictor along the exact
tangent and projects back onto `F = 0` with a damped Newton corrector, so accepted
states carry no integration drift.
"""

import logging
from collections.abc import Sequence
from typing import NamedTuple

import numpy as np

from mewls_tools.diagnostics import eig_min_schur, schur_hat
from mewls_tools.errors import (
    NewtonDivergedError,
    OutOfRangeError,
    SingularMatrixError,
)
from mewls_tools.models import (
    ContinuationConfig,
    TerminationReason,
    TerminationReport,
)
from mewls_tools.numerics import Vector, min_singular_value, solve_linear
from mewls_tools.problem import (
    BranchState,
    OlsSummary,
    Problem,
    entropy,
    eval_F,
    feasibility,
    gibbs_consistency,
    is_degenerate_start,
    jacobian,
    ols_initial,
)

logger = logging.getLogger(__name__)

# Newton steps whose norm grows by more than this factor count as divergence
STEP_GROWTH_LIMIT = 2.0

# Accepted Newton iteration counts at or below which the step size grows
FAST_CONVERGENCE_ITERS = 3

# Interval halvings allowed when dense output corrects between stored samples
MAX_SUBDIVISIONS = 8

# `eig_min_schur` at or below this fraction of `‖Ŝ‖₂` counts as vanished
EIG_ZERO_REL = 1e-6

# Regula falsi steps that follow the bisection of a singular point
MAX_REFINEMENTS = 20

# Gibbs drift above this multiple of `newton_tol` is reported
GIBBS_DRIFT_FACTOR = 10.0


class BranchSample(NamedTuple):
    """
    A branch-certified state with the diagnostics monitored along the trace
    """

    state: BranchState
    eig_min_schur: float
    sigma_min_weighted: float  # σ_min(W^{1/2}A)
    entropy: float
    gibbs_drift: float
    newton_iters: int
    step_size: float

    @property
    def E(self) -> float:
        return self.state.E


class Trajectory(NamedTuple):
    """
    Accepted branch samples ordered by strictly decreasing `E`, starting at `E_uw`
    """

    problem_fingerprint: str
    ols: OlsSummary
    samples: tuple[BranchSample, ...]
    config: ContinuationConfig

    @property
    def E_values(self) -> Vector:
        return np.array([s.E for s in self.samples])

    @property
    def E_uw(self) -> float:
        return self.ols.E_uw

    @property
    def E_min(self) -> float:
        """
        The smallest MSE level covered by a certified sample
        """
        return self.samples[-1].E


class NewtonResult(NamedTuple):
    state: BranchState
    iterations: int
    damped_steps: int  # steps shortened by the fraction-to-boundary rule


def certification_tol(p: Problem, cfg: ContinuationConfig) -> float:
    """
    :return: The bound on `‖F‖∞` a corrected state must satisfy
    """
    return cfg.newton_tol * (1.0 + p.norm_inf_b)


def make_sample(
    p: Problem, state: BranchState, *, newton_iters: int = 0, step_size: float = 0.0
) -> BranchSample:
    """
    Attach the monitored diagnostics to a certified state
    """
    sqrt_w = np.sqrt(state.w)
    return BranchSample(
        state=state,
        eig_min_schur=eig_min_schur(p, state),
        sigma_min_weighted=min_singular_value(sqrt_w[:, None] * p.A),
        entropy=entropy(state.w),
        gibbs_drift=gibbs_consistency(p, state),
        newton_iters=newton_iters,
        step_size=step_size,
    )


def eig_vanishes(p: Problem, sample: BranchSample) -> bool:
    """
    Whether the smallest eigenvalue of `Ŝ` at a sample is zero to within
    `EIG_ZERO_REL · ‖Ŝ‖₂`
    """
    scale = float(np.linalg.norm(schur_hat(p, sample.state), 2))
    return sample.eig_min_schur <= EIG_ZERO_REL * scale


def solve_jacobian(p: Problem, y: BranchState, rhs: Vector) -> Vector:
    """
    Solve `J(y) v = rhs` with the rows of the `F₃` block scaled by `w`

    The scaling turns the `diag(1/w)` block into the identity, so the pivot test of
    the factorization measures the coupling blocks rather than `1/min w`.

    :raises SingularMatrixError: If the equilibrated Jacobian cannot be factored
    """
    scale = np.ones(2 + p.m + p.n)
    scale[2 : 2 + p.m] = y.w
    return solve_linear(scale[:, None] * jacobian(p, y), scale * rhs)


def tangent(p: Problem, y: BranchState) -> Vector:
    """
    The derivative `dy/dE = J(y)⁻¹ e₂` of the branch at a certified state

    :raises SingularMatrixError: If the Jacobian cannot be factored
    """
    e2 = np.zeros(2 + p.m + p.n)
    e2[1] = 1.0
    return solve_jacobian(p, y, e2)


def boundary_step_length(w: Vector, dw: Vector, boundary_fraction: float) -> float:
    """
    Fraction-to-boundary rule: the largest `α ≤ 1` with
    `w + α dw ≥ (1 − boundary_fraction) w`

    :param w: The current, strictly positive weights
    :param dw: The proposed step in the weights
    :param boundary_fraction: The admissible fractional decrease of each weight
    """
    shrinking = dw < 0
    if not np.any(shrinking):
        return 1.0
    return float(min(1.0, np.min(boundary_fraction * w[shrinking] / -dw[shrinking])))


def newton_correct(
    p: Problem, guess: BranchState, E: float, cfg: ContinuationConfig
) -> NewtonResult:
    """
    Solve `F(y; E) = 0` by Newton's method with the full Jacobian, starting from a
    guess with positive weights

    :param p: The problem
    :param guess: The starting state (its own `E` is ignored)
    :param E: The MSE level to correct at
    :param cfg: Supplies `newton_tol`, `newton_max_iter` and `boundary_fraction`
    :return: The corrected state with iteration statistics

    :raises NewtonDivergedError: On reaching the iteration cap, on growing undamped
        steps, or on non-finite iterates
    :raises SingularMatrixError: If the Jacobian cannot be factored mid-iteration
    """
    tol = certification_tol(p, cfg)
    y = guess.at(E)
    damped_steps = 0
    prev_step_norm: float | None = None

    for k in range(cfg.newton_max_iter + 1):
        F = eval_F(p, y)
        F_norm = float(np.max(np.abs(F)))
        if not np.isfinite(F_norm):
            msg = f"Non-finite residual at Newton iteration {k} (E={E:.6e})"
            raise NewtonDivergedError(msg)
        if F_norm <= tol:
            return NewtonResult(y, k, damped_steps)
        if k == cfg.newton_max_iter:
            break

        dy = solve_jacobian(p, y, -F)
        alpha = boundary_step_length(y.w, dy[2 : 2 + p.m], cfg.boundary_fraction)
        step_norm = float(np.max(np.abs(dy)))
        if alpha < 1.0:
            damped_steps += 1
            prev_step_norm = None
        else:
            if (
                prev_step_norm is not None
                and step_norm > STEP_GROWTH_LIMIT * prev_step_norm
            ):
                msg = (
                    f"Newton step norm grew from {prev_step_norm:.3e} to "
                    f"{step_norm:.3e} (E={E:.6e})"
                )
                raise NewtonDivergedError(msg)
            prev_step_norm = step_norm

        y = BranchState.from_vector(y.as_vector() + alpha * dy, p.m, E)

    msg = (
        f"Newton corrector did not converge in {cfg.newton_max_iter} iterations "
        f"(E={E:.6e}, ‖F‖∞={F_norm:.3e})"
    )
    raise NewtonDivergedError(msg)


def _predict(
    p: Problem, y: BranchState, dy_dE: Vector, h: float, boundary_fraction: float
) -> BranchState:
    """
    Euler predictor from `E` to `E − h`, with the predicted weights kept above
    `(1 − boundary_fraction)` times the current ones
    """
    pred = BranchState.from_vector(y.as_vector() - h * dy_dE, p.m, y.E - h)
    w_floor = (1.0 - boundary_fraction) * y.w
    return pred._replace(w=np.maximum(pred.w, w_floor))


def _correct_from(
    p: Problem, y: BranchState, E: float, cfg: ContinuationConfig
) -> NewtonResult:
    """
    Predict from a certified state to `E` along the tangent and correct there.
    Falls back to a zeroth-order predictor when the tangent is unavailable.
    """
    try:
        guess = _predict(p, y, tangent(p, y), y.E - E, cfg.boundary_fraction)
    except SingularMatrixError:
        guess = y
    return newton_correct(p, guess, E, cfg)


def _localize_singularity(
    p: Problem,
    positive: BranchSample,
    negative: BranchSample,
    cfg: ContinuationConfig,
) -> tuple[BranchSample, float, dict]:
    """
    Bisect in `E` between a sample with `eig_min_schur > 0` and one with
    `eig_min_schur ≤ 0` until the bracket is narrower than `eig_event_tol`
    relative to its upper end, then continue by regula falsi (Illinois variant)
    until the eigenvalue at the positive end vanishes

    The eigenvalue may fail to vanish at the positive end when it does not cross
    zero continuously, as at a fold of the branch; `eig_min_vanishes` in the
    evidence records the outcome.

    :return: The certified sample at the upper (positive) end of the final bracket,
        the localized singular `E`, and the bracket evidence
    """
    E_hi, E_lo = positive.E, negative.E
    eig_hi, eig_lo = positive.eig_min_schur, negative.eig_min_schur
    bisections = 0
    refinements = 0

    def correct_at(E: float) -> BranchSample | None:
        try:
            res = _correct_from(p, positive.state, E, cfg)
        except (NewtonDivergedError, SingularMatrixError) as e:
            logger.debug("Corrector failed next to the singular point %.6e: %s", E, e)
            return None
        return make_sample(p, res.state, newton_iters=res.iterations)

    while E_hi - E_lo > cfg.eig_event_tol * E_hi:
        E_mid = 0.5 * (E_hi + E_lo)
        bisections += 1
        mid = correct_at(E_mid)
        if mid is None:
            # No certified state next to the singular point; shrink toward it
            E_lo, eig_lo = E_mid, float("nan")
        elif mid.eig_min_schur > 0:
            positive, E_hi, eig_hi = mid, E_mid, mid.eig_min_schur
        else:
            E_lo, eig_lo = E_mid, mid.eig_min_schur

    # Illinois weights on the bracket ends, halved on the end that is kept twice
    f_hi, f_lo, kept = eig_hi, eig_lo, 0
    while (
        refinements < MAX_REFINEMENTS
        and np.isfinite(f_lo)
        and not eig_vanishes(p, positive)
    ):
        E_s = E_lo + (E_hi - E_lo) * (-f_lo) / (f_hi - f_lo)
        if not E_lo < E_s < E_hi:
            break
        refinements += 1
        s = correct_at(E_s)
        if s is None:
            E_lo, eig_lo = E_s, float("nan")
            break
        if s.eig_min_schur > 0:
            positive, E_hi, eig_hi, f_hi = s, E_s, s.eig_min_schur, s.eig_min_schur
            if kept == 1:
                f_lo *= 0.5
            kept = 1
        else:
            E_lo, eig_lo, f_lo = E_s, s.eig_min_schur, s.eig_min_schur
            if kept == -1:
                f_hi *= 0.5
            kept = -1

    if np.isfinite(eig_lo) and eig_hi != eig_lo:
        # Linear interpolation of the eigenvalue across the final bracket
        E_star = E_lo + (E_hi - E_lo) * (0 - eig_lo) / (eig_hi - eig_lo)
    else:
        E_star = 0.5 * (E_hi + E_lo)

    vanishes = eig_vanishes(p, positive)
    if not vanishes:
        logger.warning(
            "eig_min_schur stays at %.3e on the positive side of [%.6e, %.6e]; "
            "it does not cross zero continuously",
            eig_hi,
            E_lo,
            E_hi,
        )
    evidence = {
        "bracket": [E_lo, E_hi],
        "eig_min_hi": eig_hi,
        "eig_min_lo": eig_lo,
        "eig_min_vanishes": vanishes,
        "bisections": bisections,
        "refinements": refinements,
    }
    return positive, float(E_star), evidence


def trace_branch(
    p: Problem, cfg: ContinuationConfig
) -> tuple[Trajectory | None, TerminationReport]:
    """
    Trace the branch of stationary points from `E_uw` toward `cfg.E_target`

    Each accepted step is an Euler predictor along the tangent followed by
    `newton_correct`. The step grows after fast Newton convergence and shrinks on
    corrector failure. A sign change of `eig_min_schur` between consecutive samples
    is localized by bisection and ends the trace with
    `BreakdownJacobianSingular`.

    :param p: The problem
    :param cfg: The continuation configuration
    :return: The trajectory (`None` when the start is degenerate) and the
        termination report

    :raises OutOfRangeError: If `cfg.E_target` is not in `(0, E_uw]`
    :raises ZeroResidualError: If the system is consistent
    """
    ols, y0 = ols_initial(p)
    E_uw = ols.E_uw

    if is_degenerate_start(ols):
        logger.info("Squared OLS residuals are constant; the start is singular")
        return None, TerminationReport(
            reason=TerminationReason.DEGENERATE_START,
            E_final=E_uw,
            evidence={"r2_spread": ols.r2_spread},
        )

    if not 0 < cfg.E_target <= E_uw:
        msg = (
            f"Target MSE {cfg.E_target:.6e} is outside the admissible range "
            f"(0, E_uw] = (0, {E_uw:.6e}]"
        )
        raise OutOfRangeError(msg)

    logger.info(
        "Tracing from E_uw=%.6e to E_target=%.6e%s",
        E_uw,
        cfg.E_target,
        f" ({cfg.seed_metadata})" if cfg.seed_metadata else "",
    )
    h = cfg.h0_rel * E_uw
    h_max = cfg.h_max_rel * E_uw
    h_min = cfg.h_min_rel * E_uw

    samples = [make_sample(p, y0)]
    current = samples[0]

    def finish(
        reason: TerminationReason, E_final: float, evidence: dict
    ) -> tuple[Trajectory, TerminationReport]:
        traj = Trajectory(
            problem_fingerprint=p.fingerprint,
            ols=ols,
            samples=tuple(samples),
            config=cfg,
        )
        report = TerminationReport(reason=reason, E_final=E_final, evidence=evidence)
        logger.info(
            "Trace stopped: %s at E=%.6e after %d samples",
            reason.value,
            E_final,
            len(samples),
        )
        return traj, report

    while current.E > cfg.E_target:
        y = current.state
        h_try = min(h, y.E - cfg.E_target)
        E_new = cfg.E_target if h_try >= y.E - cfg.E_target else y.E - h_try

        try:
            dy_dE = tangent(p, y)
        except SingularMatrixError as e:
            if eig_vanishes(p, current):
                return finish(
                    TerminationReason.BREAKDOWN_JACOBIAN_SINGULAR,
                    y.E,
                    {"eig_min_schur": current.eig_min_schur, "detail": str(e)},
                )
            logger.warning(
                "No tangent at E=%.6e although eig_min_schur=%.3e (%s); "
                "predicting with the current state",
                y.E,
                current.eig_min_schur,
                e,
            )
            dy_dE = np.zeros(2 + p.m + p.n)

        rejection: str | None = None
        try:
            guess = _predict(p, y, dy_dE, y.E - E_new, cfg.boundary_fraction)
            res = newton_correct(p, guess, E_new, cfg)
        except (NewtonDivergedError, SingularMatrixError) as e:
            rejection = str(e)
        else:
            bundle = feasibility(p, res.state)
            if not bundle.holds(p, E_new, cfg.feas_tol):
                rejection = f"corrected state violates feasibility: {bundle}"
        if rejection is not None:
            h = h_try * cfg.shrink_factor
            logger.warning(
                "Step to E=%.6e rejected (%s); shrinking step to %.3e",
                E_new,
                rejection,
                h,
            )
            if h < h_min:
                return finish(
                    TerminationReason.BREAKDOWN_NEWTON_STALL,
                    y.E,
                    {"step_size": h, "h_min": h_min, "detail": rejection},
                )
            continue

        state = res.state
        y_norm = float(np.max(np.abs(state.as_vector())))
        if y_norm > cfg.escape_threshold:
            return finish(
                TerminationReason.ESCAPE_DETECTED,
                state.E,
                {"norm_y": y_norm, "step_size": h_try},
            )
        w_min = float(np.min(state.w))
        if w_min < cfg.weight_floor:
            return finish(
                TerminationReason.BREAKDOWN_WEIGHT_VANISHING,
                state.E,
                {"min_weight": w_min, "step_size": h_try},
            )

        sample = make_sample(
            p, state, newton_iters=res.iterations, step_size=y.E - E_new
        )
        logger.debug(
            "Accepted E=%.6e (h=%.3e, %d Newton iterations, eig_min=%.3e)",
            E_new,
            y.E - E_new,
            res.iterations,
            sample.eig_min_schur,
        )
        if sample.gibbs_drift > GIBBS_DRIFT_FACTOR * cfg.newton_tol:
            logger.warning(
                "Weights at E=%.6e drift %.3e from the Gibbs form",
                E_new,
                sample.gibbs_drift,
            )

        if sample.eig_min_schur <= 0:
            last, E_star, evidence = _localize_singularity(p, current, sample, cfg)
            if last is not current:
                samples.append(last)
            evidence["min_weight"] = float(np.min(last.state.w))
            return finish(
                TerminationReason.BREAKDOWN_JACOBIAN_SINGULAR, E_star, evidence
            )

        samples.append(sample)
        current = sample
        if res.iterations <= FAST_CONVERGENCE_ITERS:
            h = min(h * cfg.grow_factor, h_max)

    return finish(
        TerminationReason.REACHED_TARGET,
        current.E,
        {
            "eig_min_schur": current.eig_min_schur,
            "min_weight": float(np.min(current.state.w)),
            "steps": len(samples) - 1,
        },
    )


def sample_at(p: Problem, traj: Trajectory, E: float) -> BranchState:
    """
    Dense output: a certified state exactly at `E`, corrected from the stored sample
    with the nearest MSE level

    :raises OutOfRangeError: If `E` is outside `[traj.E_min, traj.E_uw]`
    :raises NewtonDivergedError: Should not occur between accepted samples
    """
    if not traj.E_min <= E <= traj.E_uw:
        msg = (
            f"E={E:.6e} is outside the traced range "
            f"[{traj.E_min:.6e}, {traj.E_uw:.6e}]"
        )
        raise OutOfRangeError(msg)

    E_values = traj.E_values
    nearest = traj.samples[int(np.argmin(np.abs(E_values - E)))]
    return _march(p, nearest.state, E, traj.config)


def _march(
    p: Problem, y: BranchState, E: float, cfg: ContinuationConfig, depth: int = 0
) -> BranchState:
    """
    Correct from a certified state to `E`, halving the interval and correcting in
    two hops whenever a direct correction fails
    """
    try:
        return _correct_from(p, y, E, cfg).state
    except (NewtonDivergedError, SingularMatrixError):
        if depth >= MAX_SUBDIVISIONS:
            raise
    mid = _march(p, y, 0.5 * (y.E + E), cfg, depth + 1)
    return _march(p, mid, E, cfg, depth + 1)


def log_grid(E_hi: float, E_lo: float, n: int) -> Vector:
    """
    :return: `n` log-spaced MSE levels from `E_hi` down to `E_lo`, endpoints included
    """
    return np.geomspace(E_hi, E_lo, n)


def dense_output(
    p: Problem, traj: Trajectory, grid: int | Sequence[float] | None = None
) -> Trajectory:
    """
    Realize a sample grid through `sample_at`

    :param p: The problem
    :param traj: The traced trajectory
    :param grid: A number of log-spaced levels between `E_uw` and the configured
        target, or explicit levels. Defaults to `traj.config.sample_grid`. Levels
        outside the traced range are dropped.
    :return: A trajectory whose samples sit exactly on the retained grid levels
    """
    if grid is None:
        grid = traj.config.sample_grid
    if isinstance(grid, int):
        levels = log_grid(traj.E_uw, traj.config.E_target, grid)
    else:
        levels = np.asarray(grid, dtype=float)

    levels = np.unique(levels[(levels >= traj.E_min) & (levels <= traj.E_uw)])[::-1]
    samples = tuple(make_sample(p, sample_at(p, traj, float(E))) for E in levels)
    logger.info("Dense output at %d MSE levels", len(samples))
    return traj._replace(samples=samples)
