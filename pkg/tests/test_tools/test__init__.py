import json

import pytest
import yaml

from mewls_tools.models import (
    TERMINATION_REPORT_ADAPTER,
    TerminationReason,
    TerminationReport,
)
from mewls_tools.tools import (
    create_or_replace_dir,
    load_mapping,
    read_data,
    write_data,
)


class TestCreateOrReplaceDir:
    def test_creates(self, tmp_path):
        target = tmp_path / "a" / "b"
        create_or_replace_dir(target)
        assert target.is_dir()

    def test_replaces(self, tmp_path):
        target = tmp_path / "out"
        target.mkdir()
        (target / "stale.txt").write_text("old")
        create_or_replace_dir(target)
        assert target.is_dir()
        assert list(target.iterdir()) == []


@pytest.fixture
def report() -> TerminationReport:
    return TerminationReport(
        reason=TerminationReason.REACHED_TARGET,
        E_final=1e-4,
        evidence={"steps": 42, "min_weight": 1.5e-5},
    )


def test_write_data_with_adapter(tmp_path, report):
    write_data(report, tmp_path, "termination", TERMINATION_REPORT_ADAPTER)

    from_json = json.loads((tmp_path / "termination.json").read_text())
    from_yaml = yaml.safe_load((tmp_path / "termination.yaml").read_text())
    assert from_json == from_yaml
    assert from_json["reason"] == "ReachedTarget"
    assert from_json["E_final"] == 1e-4

    assert read_data(tmp_path / "termination.json", TERMINATION_REPORT_ADAPTER) == report


def test_write_data_plain(tmp_path):
    data = {"values": [1.0, 2.5], "label": "plain"}
    write_data(data, tmp_path, "plain")
    assert json.loads((tmp_path / "plain.json").read_text()) == data
    assert yaml.safe_load((tmp_path / "plain.yaml").read_text()) == data


class TestLoadMapping:
    def test_yaml_and_json(self, tmp_path):
        yaml_file = tmp_path / "cfg.yaml"
        yaml_file.write_text("h0_rel: 0.01\nsample_grid: [0.1, 0.01]\n")
        json_file = tmp_path / "cfg.json"
        json_file.write_text('{"h0_rel": 0.01, "sample_grid": [0.1, 0.01]}')
        assert load_mapping(yaml_file) == load_mapping(json_file)
        assert load_mapping(yaml_file) == {"h0_rel": 0.01, "sample_grid": [0.1, 0.01]}

    def test_empty(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        assert load_mapping(path) == {}

    def test_not_a_mapping(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ValueError, match="not a mapping"):
            load_mapping(path)
