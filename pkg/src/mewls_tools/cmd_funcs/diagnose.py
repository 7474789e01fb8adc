import logging
from pathlib import Path

from mewls_tools.cmd_funcs import (
    EXIT_OK,
    EXIT_TERMINATION,
    CommandError,
    new_manifest,
    read_manifest,
    write_manifest,
)
from mewls_tools.cmd_funcs.trace import (
    PROBLEM_FILE_NAME,
    TRAJECTORY_FILE_NAME,
    load_problem,
)
from mewls_tools.continuation import Trajectory
from mewls_tools.datagen import load_trajectory_csv
from mewls_tools.diagnostics import (
    core_set,
    envelope_check,
    limit_interpolant,
    rate_report,
    value_curve,
)
from mewls_tools.errors import (
    CoreSetRankDeficientError,
    InsufficientSamplesError,
    MewlsError,
    RankDeficientError,
)
from mewls_tools.models import (
    DIAGNOSTICS_REPORT_ADAPTER,
    ContinuationConfig,
    CoreSetReport,
    DiagnosticsReport,
    LimitInterpolant,
    RateReport,
)
from mewls_tools.problem import Problem
from mewls_tools.tools import create_or_replace_dir, write_data

logger = logging.getLogger(__name__)

DIAGNOSTICS_SUBDIR = "diagnostics"
DIAGNOSTICS_BASE_FILE_NAME = "diagnostics"

# Upper end of the default rate-fit range, as a multiple of the smallest sampled MSE
DEFAULT_FIT_SPAN = 100.0


def default_fit_range(traj: Trajectory) -> tuple[float, float]:
    return traj.E_min, min(traj.E_uw, DEFAULT_FIT_SPAN * traj.E_min)


def diagnose(
    run_dir: Path,
    core_threshold: float | None,
    fit_lo: float | None,
    fit_hi: float | None,
) -> int:
    """
    Compute the diagnostics of a traced run and write them to the `diagnostics`
    subdirectory of the run

    The value curve and the envelope check are always reported. A core set that
    cannot be identified, or a rate fit with too few samples, is recorded as an error
    string in the report rather than failing the command.

    :raises CommandError: If the run directory lacks its manifest, problem or
        trajectory
    """
    manifest = read_manifest(run_dir)
    problem_path = run_dir / PROBLEM_FILE_NAME
    trajectory_path = run_dir / TRAJECTORY_FILE_NAME
    for path in (problem_path, trajectory_path):
        if not path.is_file():
            msg = f"The run directory {run_dir} has no {path.name}"
            raise CommandError(msg)
    cfg = manifest.continuation_config
    if cfg is None:
        msg = f"The run at {run_dir} is not a trace run"
        raise CommandError(msg)

    p = load_problem(problem_path)
    if manifest.problem_fingerprint not in (None, p.fingerprint):
        msg = f"{problem_path} does not match the problem recorded in the manifest"
        raise CommandError(msg)
    try:
        traj = load_trajectory_csv(p, trajectory_path, cfg)
    except MewlsError as e:
        msg = f"Cannot load trajectory from {trajectory_path}: {e}"
        raise CommandError(msg) from e

    report = compile_diagnostics(p, traj, cfg, core_threshold, fit_lo, fit_hi)

    output_dir = run_dir / DIAGNOSTICS_SUBDIR
    create_or_replace_dir(output_dir)
    write_data(
        report, output_dir, DIAGNOSTICS_BASE_FILE_NAME, DIAGNOSTICS_REPORT_ADAPTER
    )
    write_manifest(
        new_manifest(
            continuation_config=cfg,
            problem_fingerprint=p.fingerprint,
            termination=manifest.termination,
            extra={
                "run": str(run_dir),
                "core_threshold": core_threshold,
                "fit_range": [fit_lo, fit_hi],
            },
        ),
        output_dir,
    )
    return EXIT_OK


def compile_diagnostics(
    p: Problem,
    traj: Trajectory,
    cfg: ContinuationConfig,
    core_threshold: float | None = None,
    fit_lo: float | None = None,
    fit_hi: float | None = None,
) -> DiagnosticsReport:
    """
    Assemble the diagnostics report of a trajectory

    :raises CommandError: With exit code 3 if the envelope check cannot re-correct
        the samples
    """
    lo, hi = default_fit_range(traj)
    fit_range = (lo if fit_lo is None else fit_lo, hi if fit_hi is None else fit_hi)
    if not 0 < fit_range[0] < fit_range[1]:
        msg = f"Invalid fit range {fit_range}"
        raise CommandError(msg)

    core: CoreSetReport | None = None
    core_error: str | None = None
    interpolant: LimitInterpolant | None = None
    rates: RateReport | None = None
    rates_error: str | None = None

    try:
        core = core_set(p, traj, core_threshold)
    except CoreSetRankDeficientError as e:
        core_error = str(e)
        logger.warning("No core set: %s", e)

    if core is not None:
        try:
            interpolant = limit_interpolant(p, core.indices)
        except RankDeficientError as e:
            core_error = str(e)
        try:
            rates = rate_report(p, traj, core.indices, fit_range)
        except InsufficientSamplesError as e:
            rates_error = str(e)
            logger.warning("No rate report: %s", e)
    else:
        rates_error = "No core set to split inliers from outliers"

    if cfg.E_target < traj.E_min:
        logger.info(
            "Trajectory stops at E=%.6e above the target %.6e", traj.E_min, cfg.E_target
        )

    try:
        curve = value_curve(traj)
        envelope = envelope_check(p, traj)
    except MewlsError as e:
        msg = f"Cannot evaluate the value curve of the trajectory: {e}"
        raise CommandError(msg, EXIT_TERMINATION) from e

    return DiagnosticsReport(
        value_curve=curve,
        envelope=envelope,
        core_set=core,
        core_set_error=core_error,
        limit_interpolant=interpolant,
        rate_report=rates,
        rate_report_error=rates_error,
    )
