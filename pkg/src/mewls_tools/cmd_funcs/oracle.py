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
from mewls_tools.cmd_funcs.trace import TRAJECTORY_FILE_NAME, load_problem
from mewls_tools.datagen import load_trajectory_csv
from mewls_tools.diagnostics import (
    ORACLE_MAX_M,
    ORACLE_MAX_N,
    brute_force_oracle,
    compare_with_branch,
)
from mewls_tools.errors import MewlsError, NoFeasibleGridPointError, OutOfRangeError
from mewls_tools.models import ORACLE_RESULT_ADAPTER, OracleComparison, OracleResult
from mewls_tools.problem import Problem
from mewls_tools.tools import create_or_replace_dir, write_data

logger = logging.getLogger(__name__)

ORACLE_BASE_FILE_NAME = "oracle"
COMPARISON_BASE_FILE_NAME = "comparison"


def oracle(
    data_path: Path,
    mse: float,
    resolution: int,
    run_dir: Path | None,
    output_dir: Path,
) -> int:
    """
    Find the maximum-entropy weights on a simplex grid at one MSE level and, if a
    traced run of the same problem is given, compare them with the branch

    :return: 0 on success, 3 if no grid point meets the MSE level

    :raises CommandError: If the problem is too large to enumerate, has no branch
        (e.g. an exactly consistent system) or the input is unreadable
    """
    p = load_problem(data_path)
    if p.m > ORACLE_MAX_M or p.n > ORACLE_MAX_N:
        msg = (
            f"The oracle enumerates a simplex grid whose size grows combinatorially "
            f"with m; it is limited to m ≤ {ORACLE_MAX_M} and n ≤ {ORACLE_MAX_N}, "
            f"got m={p.m}, n={p.n}"
        )
        raise CommandError(msg)

    try:
        result = brute_force_oracle(p, mse, resolution)
    except NoFeasibleGridPointError as e:
        logger.warning("Oracle found nothing: %s", e)
        raise CommandError(str(e), EXIT_TERMINATION) from e
    except MewlsError as e:
        msg = f"No oracle can be evaluated for {data_path}: {e}"
        raise CommandError(msg) from e

    create_or_replace_dir(output_dir)
    write_data(result, output_dir, ORACLE_BASE_FILE_NAME, ORACLE_RESULT_ADAPTER)

    extra: dict = {"data": str(data_path), "resolution": resolution}
    if run_dir is not None:
        extra["run"] = str(run_dir)
        comparison = compare_run(p, run_dir, result)
        if comparison is not None:
            write_data(
                comparison.model_dump(mode="json"),
                output_dir,
                COMPARISON_BASE_FILE_NAME,
            )
            extra["max_weight_delta"] = comparison.max_weight_delta

    write_manifest(
        new_manifest(problem_fingerprint=p.fingerprint, extra=extra), output_dir
    )
    return EXIT_OK


def compare_run(
    p: Problem, run_dir: Path, result: OracleResult
) -> OracleComparison | None:
    """
    Compare an oracle result with the branch of a traced run

    :return: The comparison, or `None` if the run does not reach the oracle's level
    :raises CommandError: If the run traced a different problem
    """
    manifest = read_manifest(run_dir)
    if manifest.problem_fingerprint != p.fingerprint:
        msg = f"The run at {run_dir} traced a different problem"
        raise CommandError(msg)
    if manifest.continuation_config is None:
        msg = f"The run at {run_dir} is not a trace run"
        raise CommandError(msg)
    try:
        traj = load_trajectory_csv(
            p, run_dir / TRAJECTORY_FILE_NAME, manifest.continuation_config
        )
        return compare_with_branch(p, traj, result)
    except OutOfRangeError as e:
        logger.warning("Skipping the branch comparison: %s", e)
        return None
    except (MewlsError, OSError) as e:
        msg = f"Cannot load the trajectory of {run_dir}: {e}"
        raise CommandError(msg) from e
