from typing import NamedTuple

import numpy as np
import pytest

from mewls_tools.continuation import Trajectory, dense_output, log_grid, trace_branch
from mewls_tools.datagen import example1, example2
from mewls_tools.models import (
    ContinuationConfig,
    DatasetConfig,
    LabeledDataset,
    TerminationReport,
)
from mewls_tools.problem import Problem


class TracedExample(NamedTuple):
    dataset: LabeledDataset | None
    problem: Problem
    trajectory: Trajectory
    report: TerminationReport
    dense: Trajectory  # 200 log-spaced samples over the traced range


def _trace(
    dataset: LabeledDataset | None, p: Problem, E_target: float
) -> TracedExample:
    traj, report = trace_branch(p, ContinuationConfig(E_target=E_target))
    assert traj is not None
    dense = dense_output(p, traj, log_grid(traj.E_uw, traj.E_min, 200))
    return TracedExample(dataset, p, traj, report, dense)


@pytest.fixture(scope="session")
def eight_point() -> TracedExample:
    dataset, p = example2("eight")
    return _trace(dataset, p, 1e-4)


@pytest.fixture(scope="session")
def example1_exact() -> TracedExample:
    dataset, p = example1(DatasetConfig(seed=0))
    return _trace(dataset, p, 1e-4)


@pytest.fixture(scope="session")
def toy_problem() -> Problem:
    """
    An intercept-only problem with four observations, small enough for the oracle
    """
    return Problem(np.ones((4, 1)), np.array([0.0, 0.1, 0.2, 1.0]))
