"""
数据验证器测试
"""
import json

import pytest

from src.data_validator import DataValidator
from src.error_handler import ValidationError
from src.spectral_core import TORUS3, FourierField, field_to_dict


@pytest.fixture
def validator():
    return DataValidator()


class TestFieldData:
    def test_valid_field(self, validator):
        data = {"dim": 3, "cutoff": 2, "modes": [[0, 0, 0, 0.25, 0.0], [1, 0, -2, 0.0, 0.1]]}
        result = validator.validate_field_data(data)
        assert result.is_valid
        assert result.total_count == 2

    def test_serialized_field_is_valid(self, validator, rng):
        field = FourierField.random(rng, TORUS3, 2)
        assert validator.validate_field_data(field_to_dict(field)).is_valid

    def test_schema_error_names_field(self, validator):
        result = validator.validate_field_data({"dim": 4, "cutoff": 2, "modes": []})
        assert not result.is_valid
        assert "dim" in result.errors[0]

    def test_mode_outside_cutoff(self, validator):
        result = validator.validate_field_data({"dim": 3, "cutoff": 1, "modes": [[2, 0, 0, 1.0, 0.0]]})
        assert not result.is_valid
        assert "modes[0]" in result.errors[0]

    def test_wrong_arity(self, validator):
        result = validator.validate_field_data({"dim": 2, "cutoff": 1, "modes": [[0, 0, 1, 1.0, 0.0]]})
        assert not result.is_valid

    def test_fractional_index(self, validator):
        result = validator.validate_field_data({"dim": 3, "cutoff": 1, "modes": [[0.5, 0, 0, 1.0, 0.0]]})
        assert not result.is_valid

    def test_duplicate_modes_warn(self, validator):
        data = {"dim": 2, "cutoff": 1, "modes": [[1, 0, 1.0, 0.0], [1, 0, 0.5, 0.0]]}
        result = validator.validate_field_data(data)
        assert result.is_valid
        assert result.warning_count == 1

    def test_lattice_rows_must_match_dimension(self, validator):
        data = {"dim": 3, "cutoff": 1, "modes": [[1, 1.0, 0.0]], "lattice": [[1, 0]]}
        assert not validator.validate_field_data(data).is_valid


class TestFieldFiles:
    def test_load(self, validator, tmp_path):
        path = tmp_path / "mu.json"
        path.write_text(json.dumps({"dim": 3, "cutoff": 2, "modes": [[0, 1, 0, 0.2, 0.0]]}), encoding="utf-8")
        field = validator.load_field_file(str(path))
        assert field.cutoff == 2
        assert field.coefficient((0, 1, 0)) == pytest.approx(0.2)

    def test_missing_file(self, validator, tmp_path):
        with pytest.raises(ValidationError, match="missing.json"):
            validator.load_field_file(str(tmp_path / "missing.json"))

    def test_invalid_json(self, validator, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ValidationError, match="broken.json"):
            validator.load_field_file(str(path))

    def test_schema_violation_reports_path(self, validator, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"dim": 3, "cutoff": 0, "modes": []}), encoding="utf-8")
        with pytest.raises(ValidationError, match="cutoff"):
            validator.load_field_file(str(path))


class TestReports:
    def minimal(self, exit_code=0):
        return {
            "schema": "folitor.report/v1",
            "config": {"subcommand": "solve", "seed": 7, "cutoff": 4},
            "status": {"exit_code": exit_code, "ok": exit_code == 0},
            "results": {},
            "timing": {"total_seconds": 0.5},
        }

    def test_minimal_report(self, validator):
        assert validator.validate_report(self.minimal()).is_valid

    def test_inconsistent_status(self, validator):
        document = self.minimal()
        document["status"]["ok"] = False
        assert not validator.validate_report(document).is_valid

    def test_missing_error_section_warns(self, validator):
        result = validator.validate_report(self.minimal(3))
        assert result.is_valid
        assert result.warnings

    def test_unknown_subcommand(self, validator):
        document = self.minimal()
        document["config"]["subcommand"] = "upgrade"
        assert not validator.validate_report(document).is_valid
