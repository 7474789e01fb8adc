from datetime import datetime, timezone

import pytest
from pydantic import ValidationError

from mewls_tools.models import (
    RUN_MANIFEST_ADAPTER,
    TERMINATION_REPORT_ADAPTER,
    ContinuationConfig,
    DatasetConfig,
    LabeledDataset,
    PointLabel,
    RunManifest,
    TerminationReason,
    TerminationReport,
)


class TestContinuationConfig:
    def test_defaults(self):
        cfg = ContinuationConfig(E_target=1e-4)
        assert cfg.h0_rel == 1e-3
        assert cfg.h_max_rel == 0.1
        assert cfg.h_min_rel == 1e-12
        assert cfg.newton_max_iter == 10
        assert cfg.grow_factor == 1.5
        assert cfg.shrink_factor == 0.5
        assert cfg.eig_event_tol == 1e-3
        assert cfg.sample_grid == 200
        assert cfg.feas_tol == 1e-8

    @pytest.mark.parametrize(
        "settings",
        [
            {"E_target": 0.0},
            {"E_target": -1.0},
            {"E_target": 1e-4, "grow_factor": 1.0},
            {"E_target": 1e-4, "shrink_factor": 1.0},
            {"E_target": 1e-4, "boundary_fraction": 0.0},
            {"E_target": 1e-4, "sample_grid": 1},
            {"E_target": 1e-4, "h0_rel": 0.5, "h_max_rel": 0.1},
            {"E_target": 1e-4, "h_min_rel": 1e-2, "h0_rel": 1e-3},
            {"E_target": 1e-4, "unknown_field": 1},
        ],
    )
    def test_invalid(self, settings):
        with pytest.raises(ValidationError):
            ContinuationConfig.model_validate(settings)

    def test_explicit_sample_grid(self):
        cfg = ContinuationConfig(E_target=1e-4, sample_grid=[0.01, 0.001])
        assert cfg.sample_grid == [0.01, 0.001]

    def test_frozen(self):
        cfg = ContinuationConfig(E_target=1e-4)
        with pytest.raises(ValidationError):
            cfg.E_target = 1e-3  # type: ignore[misc]


class TestDatasetConfig:
    def test_defaults(self):
        cfg = DatasetConfig()
        assert (cfg.n_inliers, cfg.n_outliers) == (10, 10)
        assert cfg.line == (0.0, 0.5)

    @pytest.mark.parametrize(
        "settings",
        [
            {"outlier_band": (0.9, 0.5)},
            {"outlier_band": (0.5, 1.5)},
            {"noise_sigma2": -1.0},
            {"n_inliers": 1},
        ],
    )
    def test_invalid(self, settings):
        with pytest.raises(ValidationError):
            DatasetConfig(**settings)


def test_labeled_dataset_counts_must_match():
    with pytest.raises(ValidationError, match="labels"):
        LabeledDataset(points=[(0.0, 0.0), (1.0, 1.0)], labels=[PointLabel.INLIER])


@pytest.mark.parametrize(
    ("reason", "expected"),
    [
        (TerminationReason.REACHED_TARGET, False),
        (TerminationReason.BREAKDOWN_JACOBIAN_SINGULAR, True),
        (TerminationReason.BREAKDOWN_WEIGHT_VANISHING, True),
        (TerminationReason.BREAKDOWN_NEWTON_STALL, True),
        (TerminationReason.DEGENERATE_START, True),
        (TerminationReason.ESCAPE_DETECTED, True),
    ],
)
def test_is_breakdown(reason, expected):
    assert reason.is_breakdown is expected


def test_termination_report_serialization():
    report = TerminationReport(
        reason=TerminationReason.BREAKDOWN_JACOBIAN_SINGULAR,
        E_final=0.038,
        evidence={"bracket": [0.0379, 0.0381], "bisections": 7},
    )
    data = TERMINATION_REPORT_ADAPTER.dump_python(report, mode="json")
    assert data["reason"] == "BreakdownJacobianSingular"
    assert data["evidence"]["bisections"] == 7
    assert TERMINATION_REPORT_ADAPTER.validate_python(data) == report


def test_run_manifest_round_trip():
    manifest = RunManifest(
        command_line=["mewls", "trace"],
        tool_version="0.1.0",
        started=datetime(2024, 1, 1, tzinfo=timezone.utc),
        continuation_config=ContinuationConfig(E_target=1e-4),
        extra={"data": "dataset.csv"},
    )
    restored = RUN_MANIFEST_ADAPTER.validate_json(
        RUN_MANIFEST_ADAPTER.dump_json(manifest)
    )
    assert restored == manifest
