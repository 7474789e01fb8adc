import logging
import shutil
from pathlib import Path

import numpy as np
import yaml
from pydantic import ValidationError

from mewls_tools.cmd_funcs import (
    EXIT_OK,
    EXIT_TERMINATION,
    CommandError,
    new_manifest,
    write_manifest,
)
from mewls_tools.continuation import Trajectory, dense_output, trace_branch
from mewls_tools.datagen import load_csv, save_trajectory_csv
from mewls_tools.errors import MewlsError
from mewls_tools.models import (
    TERMINATION_REPORT_ADAPTER,
    ContinuationConfig,
    TerminationReport,
)
from mewls_tools.problem import Problem, ols_initial
from mewls_tools.tools import create_or_replace_dir, load_mapping, write_data
from mewls_tools.tools.md import escape, samples_table, termination_table

logger = logging.getLogger(__name__)

PROBLEM_FILE_NAME = "problem.csv"
TRAJECTORY_FILE_NAME = "trajectory.csv"
TERMINATION_BASE_FILE_NAME = "termination"
SUMMARY_FILE_NAME = "summary.md"


def load_problem(data_path: Path) -> Problem:
    """
    Load a problem file, converting input failures into usage errors
    """
    try:
        return load_csv(data_path)
    except (MewlsError, OSError) as e:
        msg = f"Cannot load problem from {data_path}: {e}"
        raise CommandError(msg) from e


def load_config(
    config_path: Path | None, target_mse: float, grid: int | None
) -> ContinuationConfig:
    """
    Build the continuation configuration from an optional YAML/JSON file, with
    `E_target` and, if given, the sample grid taken from the command line
    """
    settings: dict = {}
    if config_path is not None:
        try:
            settings = load_mapping(config_path)
        except (OSError, ValueError, yaml.YAMLError) as e:
            msg = f"Cannot read configuration file {config_path}: {e}"
            raise CommandError(msg) from e

    settings["E_target"] = target_mse
    if grid is not None:
        settings["sample_grid"] = grid
    try:
        return ContinuationConfig.model_validate(settings)
    except ValidationError as e:
        msg = f"Invalid continuation configuration: {e}"
        raise CommandError(msg) from e


def write_summary(
    output_dir: Path,
    cfg: ContinuationConfig,
    report: TerminationReport,
    traj: Trajectory | None,
) -> None:
    """
    Write a Markdown summary of a trace: the termination report and a thinned table of
    the samples
    """
    text = "# Branch trace summary\n\n"
    if cfg.seed_metadata:
        text += f"{escape(cfg.seed_metadata)}\n\n"
    text += "## Termination\n\n" + termination_table(report)
    if traj is not None:
        text += "\n## Samples\n\n" + samples_table(
            ["E", "mu", "H", "eig_min_schur", "min w"],
            (
                [s.E, s.state.mu, s.entropy, s.eig_min_schur, float(np.min(s.state.w))]
                for s in traj.samples
            ),
        )
    (output_dir / SUMMARY_FILE_NAME).write_text(text)


def trace(
    data_path: Path,
    target_mse: float,
    grid: int | None,
    config_path: Path | None,
    output_dir: Path,
) -> int:
    """
    Trace the branch of a problem file down to a target MSE and write the dense-output
    trajectory, the termination report, a summary and the run manifest

    :return: 0 when the target is reached, 3 on any breakdown

    :raises CommandError: On unreadable input or a target outside `(0, E_uw)`
    """
    p = load_problem(data_path)
    cfg = load_config(config_path, target_mse, grid)

    try:
        ols, _ = ols_initial(p)
    except MewlsError as e:
        msg = f"No branch can be traced for {data_path}: {e}"
        raise CommandError(msg) from e
    if not 0 < target_mse < ols.E_uw:
        msg = (
            f"--target-mse {target_mse:.6e} is outside the admissible range "
            f"(0, E_uw) = (0, {ols.E_uw:.17g})"
        )
        raise CommandError(msg)

    try:
        traj, report = trace_branch(p, cfg)
        if traj is not None:
            traj = dense_output(p, traj)
    except MewlsError as e:
        msg = f"Tracing the branch of {data_path} failed: {e}"
        raise CommandError(msg, EXIT_TERMINATION) from e

    create_or_replace_dir(output_dir)
    shutil.copyfile(data_path, output_dir / PROBLEM_FILE_NAME)
    if traj is not None:
        save_trajectory_csv(p, traj, output_dir / TRAJECTORY_FILE_NAME)
    write_data(
        report, output_dir, TERMINATION_BASE_FILE_NAME, TERMINATION_REPORT_ADAPTER
    )
    write_summary(output_dir, cfg, report, traj)
    write_manifest(
        new_manifest(
            continuation_config=cfg,
            problem_fingerprint=p.fingerprint,
            termination=report,
            extra={"data": str(data_path), "E_uw": ols.E_uw},
        ),
        output_dir,
    )

    if report.reason.is_breakdown:
        logger.warning(
            "Trace ended early: %s at E=%.6e", report.reason.value, report.E_final
        )
        return EXIT_TERMINATION
    return EXIT_OK
