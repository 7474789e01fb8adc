"""
Generators of the line-plus-outliers and symmetric benchmark datasets, and CSV
ingestion/serialization of problems, datasets and trajectories
"""

import csv
import logging
from collections.abc import Iterable, Iterator
from pathlib import Path
from typing import Literal

import numpy as np

from mewls_tools.continuation import Trajectory, make_sample
from mewls_tools.errors import DimensionMismatchError, ParseError
from mewls_tools.models import (
    ContinuationConfig,
    DatasetConfig,
    LabeledDataset,
    PointLabel,
)
from mewls_tools.numerics import weighted_least_squares
from mewls_tools.problem import BranchState, Problem, ols_initial

logger = logging.getLogger(__name__)

# Identifier of the pseudo-random generator recorded in generated datasets
RNG_ALGORITHM = (
    "numpy.random.PCG64; inlier noise from SeedSequence(seed).spawn(1)[0]; "
    "normal variates by numpy's ziggurat transform"
)

# Redraws of an outlier ordinate before falling back to a deterministic value
MAX_OUTLIER_REDRAWS = 100

# Format of every number written to CSV; round-trips any finite double
FLOAT_FORMAT = ".17g"

EXAMPLE2_NEAR_POINTS = [(0.3, 0.4), (0.3, 0.6), (0.7, 0.4), (0.7, 0.6)]
EXAMPLE2_FAR_POINTS = [(0.1, 0.2), (0.1, 0.8), (0.9, 0.2), (0.9, 0.8)]

DATASET_HEADERS = (["x", "y"], ["x", "y", "label"])


def dataset_problem(dataset: LabeledDataset) -> Problem:
    """
    Build the regression problem of a dataset with the affine design `[1, x]`
    """
    pts = np.asarray(dataset.points, dtype=float).reshape(-1, 2)
    A = np.column_stack((np.ones(pts.shape[0]), pts[:, 0]))
    return Problem(A, pts[:, 1])


def example1(cfg: DatasetConfig) -> tuple[LabeledDataset, Problem]:
    """
    Inliers on a line at equispaced abscissae in [0, 1], plus outliers at the same
    abscissae with ordinates drawn uniformly from the outlier band, at least the
    outlier margin above the line

    The inlier noise comes from a stream spawned off the seed, so the outliers of a
    noisy dataset are those of the exact dataset with the same seed.

    :param cfg: The generator parameters, including the seed
    :return: The labeled dataset and its regression problem
    """
    rng = np.random.default_rng(cfg.seed)
    (noise_seed,) = np.random.SeedSequence(cfg.seed).spawn(1)
    intercept, slope = cfg.line
    lo, hi = cfg.outlier_band

    xs = np.linspace(0.0, 1.0, cfg.n_inliers)
    ys = intercept + slope * xs
    if cfg.noise_sigma2 > 0:
        noise = np.random.default_rng(noise_seed)
        ys = ys + noise.normal(0.0, np.sqrt(cfg.noise_sigma2), cfg.n_inliers)

    outliers = []
    for k in range(cfg.n_outliers):
        x = float(xs[k % cfg.n_inliers])
        floor = intercept + slope * x + cfg.outlier_margin
        for _ in range(MAX_OUTLIER_REDRAWS):
            y = float(rng.uniform(lo, hi))
            if y >= floor:
                break
        else:
            y = max(0.5 * (lo + hi), floor - cfg.outlier_margin) + cfg.outlier_margin
            logger.warning("Outlier %d fell back to the deterministic ordinate", k)
        outliers.append((x, y))

    dataset = LabeledDataset(
        points=[(float(x), float(y)) for x, y in zip(xs, ys, strict=True)] + outliers,
        labels=[PointLabel.INLIER] * cfg.n_inliers
        + [PointLabel.OUTLIER] * cfg.n_outliers,
        seed=cfg.seed,
        noise_sigma2=cfg.noise_sigma2,
        rng_algorithm=RNG_ALGORITHM,
    )
    return dataset, dataset_problem(dataset)


def example2(variant: Literal["four", "eight"]) -> tuple[LabeledDataset, Problem]:
    """
    Points placed symmetrically about the horizontal line `y = 1/2`

    :param variant: `"four"` for the near points only (constant squared OLS
        residuals), `"eight"` to add the far points
    """
    if variant == "four":
        points = EXAMPLE2_NEAR_POINTS
    elif variant == "eight":
        points = EXAMPLE2_NEAR_POINTS + EXAMPLE2_FAR_POINTS
    else:
        msg = f"Unknown variant {variant!r}; expected 'four' or 'eight'"
        raise ValueError(msg)

    dataset = LabeledDataset(points=points, labels=[PointLabel.INLIER] * len(points))
    return dataset, dataset_problem(dataset)


def outlier_free_line(dataset: LabeledDataset) -> np.ndarray:
    """
    :return: The uniform-weight least-squares line `(intercept, slope)` of the inliers
    """
    p = dataset_problem(dataset).rows(dataset.inlier_indices)
    return weighted_least_squares(p.A, p.b, np.ones(p.m))


def inlier_ols_mse(dataset: LabeledDataset) -> float:
    """
    :return: The uniform-weight MSE of the least-squares line of the inliers alone
    """
    p = dataset_problem(dataset).rows(dataset.inlier_indices)
    x = weighted_least_squares(p.A, p.b, np.ones(p.m))
    return float(np.mean((p.A @ x - p.b) ** 2))


def _fmt(v: float) -> str:
    return format(float(v), FLOAT_FORMAT)


def _write_rows(path: Path, header: list[str], rows: Iterable[list[str]]) -> None:
    with path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def save_dataset_csv(dataset: LabeledDataset, path: Path) -> None:
    """
    Write a dataset as `x,y,label` rows
    """
    _write_rows(
        path,
        ["x", "y", "label"],
        ([_fmt(x), _fmt(y), lab.value] for (x, y), lab in zip(
            dataset.points, dataset.labels, strict=True
        )),
    )
    logger.info("Wrote %d points to %s", len(dataset.points), path)


def save_problem_csv(p: Problem, path: Path) -> None:
    """
    Write a general problem as `a_1,...,a_n,b` rows
    """
    header = [f"a_{j + 1}" for j in range(p.n)] + ["b"]
    _write_rows(
        path,
        header,
        ([*map(_fmt, p.A[i]), _fmt(p.b[i])] for i in range(p.m)),
    )
    logger.info("Wrote %dx%d problem to %s", p.m, p.n, path)


def _iter_records(path: Path) -> Iterator[tuple[int, list[str]]]:
    """
    Yield the non-blank rows of a CSV file with their 1-based line numbers
    """
    with path.open(newline="") as f:
        for line_no, row in enumerate(csv.reader(f), start=1):
            if row and any(field.strip() for field in row):
                yield line_no, [field.strip() for field in row]


def _parse_float(field: str, line: int, column: int) -> float:
    try:
        v = float(field)
    except ValueError:
        msg = f"Cannot parse {field!r} as a number"
        raise ParseError(msg, line=line, column=column) from None
    if not np.isfinite(v):
        msg = f"Non-finite value {field!r}"
        raise ParseError(msg, line=line, column=column)
    return v


def _is_problem_header(header: list[str]) -> bool:
    n = len(header) - 1
    return n >= 1 and header == [f"a_{j + 1}" for j in range(n)] + ["b"]


def _read_table(path: Path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    records = _iter_records(path)
    try:
        _, header = next(records)
    except StopIteration:
        msg = f"{path} is empty"
        raise DimensionMismatchError(msg) from None
    header = [h.lower() for h in header]
    if header not in DATASET_HEADERS and not _is_problem_header(header):
        msg = f"Unrecognized header {','.join(header)!r}"
        raise ParseError(msg, line=1)

    rows = list(records)
    for line_no, row in rows:
        if len(row) != len(header):
            msg = f"Expected {len(header)} fields, found {len(row)}"
            raise ParseError(msg, line=line_no)
    if not rows:
        msg = f"{path} has a header but no data rows (m = 0)"
        raise DimensionMismatchError(msg)
    return header, rows


def load_dataset_csv(path: Path) -> LabeledDataset:
    """
    Read an `x,y[,label]` file; rows without a label column are inliers

    :raises ParseError: On malformed rows, with line and column
    :raises DimensionMismatchError: If there are no data rows or the file holds a
        general problem
    """
    header, rows = _read_table(path)
    if header not in DATASET_HEADERS:
        msg = f"{path} holds a general problem, not an x,y dataset"
        raise DimensionMismatchError(msg)

    points = []
    labels = []
    for line_no, row in rows:
        points.append(
            (_parse_float(row[0], line_no, 1), _parse_float(row[1], line_no, 2))
        )
        if len(row) == 3:
            try:
                labels.append(PointLabel(row[2].lower()))
            except ValueError:
                msg = f"Unknown label {row[2]!r}; expected 'inlier' or 'outlier'"
                raise ParseError(msg, line=line_no, column=3) from None
        else:
            labels.append(PointLabel.INLIER)
    return LabeledDataset(points=points, labels=labels)


def load_csv(path: Path) -> Problem:
    """
    Read a problem from either CSV format: `x,y[,label]` (affine design `[1, x]`) or
    `a_1,...,a_n,b` (one row per equation)

    :raises ParseError: On malformed rows, with line and column
    :raises DimensionMismatchError: If there are no data rows or fewer rows than
        unknowns
    """
    header, rows = _read_table(path)
    if header in DATASET_HEADERS:
        return dataset_problem(load_dataset_csv(path))

    n = len(header) - 1
    data = np.array(
        [
            [_parse_float(field, line_no, col) for col, field in enumerate(row, 1)]
            for line_no, row in rows
        ]
    )
    if data.shape[0] < n:
        msg = f"{data.shape[0]} equations cannot determine {n} unknowns"
        raise DimensionMismatchError(msg)
    return Problem(data[:, :n], data[:, n])


def trajectory_header(p: Problem) -> list[str]:
    return (
        ["E", "lambda", "mu", "H", "eig_min_schur", "sigma_min_weighted"]
        + [f"w_{i + 1}" for i in range(p.m)]
        + [f"x_{j + 1}" for j in range(p.n)]
    )


def save_trajectory_csv(p: Problem, traj: Trajectory, path: Path) -> None:
    """
    Write one row per sample: `E, λ, μ, H, eig_min_schur, σ_min(W^{1/2}A), w, x`
    """
    _write_rows(
        path,
        trajectory_header(p),
        (
            [
                _fmt(s.E),
                _fmt(s.state.lam),
                _fmt(s.state.mu),
                _fmt(s.entropy),
                _fmt(s.eig_min_schur),
                _fmt(s.sigma_min_weighted),
                *map(_fmt, s.state.w),
                *map(_fmt, s.state.x),
            ]
            for s in traj.samples
        ),
    )
    logger.info("Wrote %d trajectory samples to %s", len(traj.samples), path)


def load_trajectory_csv(p: Problem, path: Path, cfg: ContinuationConfig) -> Trajectory:
    """
    Rebuild a trajectory from its CSV export; the monitored diagnostics are recomputed
    from the stored states

    :raises ParseError: On malformed rows
    :raises DimensionMismatchError: If the columns do not match the problem
    """
    expected = trajectory_header(p)
    records = _iter_records(path)
    try:
        _, header = next(records)
    except StopIteration:
        msg = f"{path} is empty"
        raise DimensionMismatchError(msg) from None
    if header != expected:
        msg = f"Trajectory columns do not match a {p.m}x{p.n} problem"
        raise DimensionMismatchError(msg)

    samples = []
    for line_no, row in records:
        if len(row) != len(expected):
            msg = f"Expected {len(expected)} fields, found {len(row)}"
            raise ParseError(msg, line=line_no)
        v = [_parse_float(field, line_no, col) for col, field in enumerate(row, 1)]
        state = BranchState(
            lam=v[1],
            mu=v[2],
            w=np.array(v[6 : 6 + p.m]),
            x=np.array(v[6 + p.m :]),
            E=v[0],
        )
        samples.append(make_sample(p, state))
    if not samples:
        msg = f"{path} has no samples"
        raise DimensionMismatchError(msg)

    ols, _ = ols_initial(p)
    return Trajectory(
        problem_fingerprint=p.fingerprint,
        ols=ols,
        samples=tuple(samples),
        config=cfg,
    )
