from datetime import datetime
from enum import Enum
from typing import Annotated, Any, TypeAlias

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    PositiveFloat,
    PositiveInt,
    TypeAdapter,
    model_validator,
)

# Free-form diagnostics attached to a termination report
Evidence: TypeAlias = dict[str, bool | float | int | str | list[float]]


class LogLevel(str, Enum):
    """
    Log levels accepted by the CLI
    """

    DEBUG = "DEBUG"
    INFO = "INFO"
    WARNING = "WARNING"
    ERROR = "ERROR"
    CRITICAL = "CRITICAL"


class ContinuationConfig(BaseModel):
    """
    Tolerances, step-control constants and event thresholds of a branch trace.

    Step sizes are relative to the uniform-weight MSE `E_uw` of the problem being
    traced. `sample_grid` is either the number of log-spaced MSE levels between
    `E_uw` and `E_target` at which dense output is produced, or an explicit list of
    MSE levels.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    E_target: PositiveFloat
    h0_rel: PositiveFloat = 1e-3
    h_max_rel: PositiveFloat = 0.1
    h_min_rel: PositiveFloat = 1e-12
    newton_tol: PositiveFloat = 1e-11
    newton_max_iter: PositiveInt = 10
    grow_factor: Annotated[float, Field(gt=1)] = 1.5
    shrink_factor: Annotated[float, Field(gt=0, lt=1)] = 0.5
    boundary_fraction: Annotated[float, Field(gt=0, lt=1)] = 0.9
    eig_event_tol: PositiveFloat = 1e-3
    sample_grid: Annotated[int, Field(ge=2)] | list[PositiveFloat] = 200
    seed_metadata: str = ""

    # Feasibility tolerance of branch certification
    feas_tol: PositiveFloat = 1e-8

    # `‖y‖∞` above which the branch is declared to escape to infinity
    escape_threshold: PositiveFloat = 1e12

    # Minimum weight below which the branch is declared to reach the simplex boundary
    weight_floor: PositiveFloat = 1e-300

    @model_validator(mode="after")
    def _check_step_ordering(self) -> "ContinuationConfig":
        if not self.h_min_rel < self.h0_rel <= self.h_max_rel:
            msg = (
                f"Expected h_min_rel < h0_rel <= h_max_rel, got "
                f"{self.h_min_rel} / {self.h0_rel} / {self.h_max_rel}"
            )
            raise ValueError(msg)
        return self


class DatasetConfig(BaseModel):
    """
    Parameters of the line-plus-outliers generator.

    Inliers lie on `line` (intercept, slope) at equispaced abscissae in [0, 1], with
    Gaussian noise of variance `noise_sigma2` on the ordinates. Outliers reuse the
    inlier abscissae with ordinates drawn uniformly from `outlier_band`, at least
    `outlier_margin` above the line.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    n_inliers: Annotated[int, Field(ge=2)] = 10
    n_outliers: Annotated[int, Field(ge=0)] = 10
    line: tuple[float, float] = (0.0, 0.5)
    noise_sigma2: NonNegativeFloat = 0.0
    outlier_band: tuple[float, float] = (0.55, 1.0)
    outlier_margin: PositiveFloat = 0.1
    seed: int = 0

    @model_validator(mode="after")
    def _check_band(self) -> "DatasetConfig":
        lo, hi = self.outlier_band
        if not 0.0 <= lo <= hi <= 1.0:
            msg = (
                f"Outlier band must satisfy 0 <= lo <= hi <= 1, "
                f"got {self.outlier_band}"
            )
            raise ValueError(msg)
        return self


class PointLabel(str, Enum):
    INLIER = "inlier"
    OUTLIER = "outlier"


class LabeledDataset(BaseModel):
    """
    A cloud of 2D points with inlier/outlier ground truth, fitted with the affine
    design `[1, x]`
    """

    model_config = ConfigDict(frozen=True)

    points: list[tuple[float, float]]
    labels: list[PointLabel]
    model: str = "affine"
    seed: int | None = None
    noise_sigma2: float = 0.0

    # Identifier of the pseudo-random generator (and Gaussian transform) used
    rng_algorithm: str | None = None

    @model_validator(mode="after")
    def _check_counts(self) -> "LabeledDataset":
        if len(self.points) != len(self.labels):
            msg = (
                f"{len(self.points)} points but {len(self.labels)} labels were given"
            )
            raise ValueError(msg)
        if self.model != "affine":
            msg = f"Unsupported design rule: {self.model!r}"
            raise ValueError(msg)
        return self

    @property
    def inlier_indices(self) -> list[int]:
        return [i for i, lab in enumerate(self.labels) if lab is PointLabel.INLIER]

    @property
    def outlier_indices(self) -> list[int]:
        return [i for i, lab in enumerate(self.labels) if lab is PointLabel.OUTLIER]


class TerminationReason(str, Enum):
    """
    Why a branch trace stopped
    """

    REACHED_TARGET = "ReachedTarget"
    BREAKDOWN_JACOBIAN_SINGULAR = "BreakdownJacobianSingular"
    BREAKDOWN_WEIGHT_VANISHING = "BreakdownWeightVanishing"
    BREAKDOWN_NEWTON_STALL = "BreakdownNewtonStall"
    DEGENERATE_START = "DegenerateStart"
    ESCAPE_DETECTED = "EscapeDetected"

    @property
    def is_breakdown(self) -> bool:
        return self is not TerminationReason.REACHED_TARGET


class TerminationReport(BaseModel):
    """
    The outcome of a branch trace together with the evidence behind the classification
    """

    reason: TerminationReason
    E_final: float
    evidence: Annotated[Evidence, Field(default_factory=dict)]


class ValuePoint(BaseModel):
    E: float
    H: float
    mu: float


class ValueCurve(BaseModel):
    """
    The value function `V(E)` (maximal entropy at MSE level `E`) and its derivative
    `μ(E)` sampled along a trajectory, in trajectory order (decreasing `E`)
    """

    points: list[ValuePoint]


class EnvelopeReport(BaseModel):
    """
    Largest relative mismatch between a central difference of `H(w(E))` and `μ(E)`
    """

    max_rel_error: float
    samples_checked: int
    delta_rel: float


class CoreSetReport(BaseModel):
    """
    The indices whose weights stay bounded away from zero as `E` shrinks
    """

    indices: list[int]
    s: int
    s0: float
    epsilon0: float
    threshold_used: float
    weights_final: list[float]


class LimitInterpolant(BaseModel):
    """
    The least-squares solution restricted to the rows of a core set
    """

    x_star: list[float]
    residuals_on_S: list[float]


class LinearFit(BaseModel):
    slope: float
    intercept: float
    correlation: float
    n_samples: int


class RateReport(BaseModel):
    """
    Asymptotic rate fits over a range of MSE levels.

    Outlier weights and inlier residuals are fitted in log–log coordinates against
    `E`; `μ` is fitted against `log(1/E)`.
    """

    fit_range: tuple[float, float]
    slope_w_outlier: dict[int, LinearFit]
    slope_r_inlier: dict[int, LinearFit]
    mu_log_coeff: LinearFit


class DiagnosticsReport(BaseModel):
    """
    Everything `diagnose` computes for a completed trace
    """

    value_curve: ValueCurve
    envelope: EnvelopeReport
    core_set: CoreSetReport | None
    core_set_error: str | None = None
    limit_interpolant: LimitInterpolant | None
    rate_report: RateReport | None
    rate_report_error: str | None = None


class OracleResult(BaseModel):
    """
    The entropy maximizer found by simplex-grid enumeration at a fixed MSE level
    """

    E: float
    w: list[float]
    x: list[float]
    H: float
    mse: float
    grid_resolution: int
    refined_resolution: int | None
    n_feasible: int


class OracleComparison(BaseModel):
    """
    Per-weight deltas between an oracle result and the traced branch at the same MSE
    """

    w_branch: list[float]
    H_branch: float
    weight_deltas: list[float]
    max_weight_delta: float
    entropy_delta: float


class RunManifest(BaseModel):
    """
    A record sufficient to reproduce one CLI run
    """

    command_line: list[str]
    tool_version: str
    started: datetime
    finished: datetime | None = None
    continuation_config: ContinuationConfig | None = None
    dataset_config: DatasetConfig | None = None
    problem_fingerprint: str | None = None
    termination: TerminationReport | None = None
    extra: Annotated[dict[str, Any], Field(default_factory=dict)]


# Type adapters for various types (this section should be at the end of this file)
TERMINATION_REPORT_ADAPTER = TypeAdapter(TerminationReport)
DIAGNOSTICS_REPORT_ADAPTER = TypeAdapter(DiagnosticsReport)
RUN_MANIFEST_ADAPTER = TypeAdapter(RunManifest)
ORACLE_RESULT_ADAPTER = TypeAdapter(OracleResult)
