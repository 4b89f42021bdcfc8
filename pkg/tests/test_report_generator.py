"""
报告生成、错误处理与耗时统计测试
"""
import csv
import json
import math
from fractions import Fraction

import numpy as np
import pytest

from src.config import ReportConfig
from src.data_validator import DataValidator
from src.error_handler import (
    EXIT_NUMERICAL, EXIT_VALIDATION, BeltramiBoundError, ConvergenceError, ErrorHandler, FieldMismatchError,
)
from src.models import CheckResult, RunConfig, VerificationSummary
from src.performance_metrics import PerformanceMetrics
from src.report_generator import ReportGenerator, to_jsonable
from src.spectral_core import TORUS3, FourierField, ModeIndex


class TestJsonable:
    def test_scalars(self):
        assert to_jsonable(1 + 2j) == [1.0, 2.0]
        assert to_jsonable(Fraction(1, 3)) == "1/3"
        assert to_jsonable(np.int64(4)) == 4
        assert to_jsonable(math.inf) == "inf"
        assert to_jsonable(float("nan")) == "nan"

    def test_structures(self):
        check = CheckResult("parseval", True, 1e-15, 1e-11)
        data = to_jsonable({"check": check, "mode": ModeIndex.of(1, 0, -2), "pair": (1, 2)})
        assert data == {"check": {"name": "parseval", "passed": True, "value": 1e-15, "threshold": 1e-11,
                                  "details": {}},
                        "mode": [1, 0, -2], "pair": [1, 2]}

    def test_field(self):
        field = FourierField.single_mode((0, 1, 0), 0.5, cutoff=2)
        assert to_jsonable(field) == {"dim": 3, "cutoff": 2, "modes": [[0, 1, 0, 0.5, 0.0]]}


class TestReportGenerator:
    def test_document_is_schema_valid(self, tmp_path):
        generator = ReportGenerator(ReportConfig(output_dir=str(tmp_path)))
        run_config = RunConfig(subcommand="solve")
        document = generator.build_document(run_config, {"summary": {"steps": 3}}, 0,
                                            warnings=["注意"], timing={"total_seconds": 1.5})
        path = generator.write_json(document, generator.default_path(run_config))
        assert path.endswith("solve_report.json")
        with open(path, encoding="utf-8") as f:
            loaded = json.load(f)
        assert DataValidator().validate_report(loaded).is_valid
        assert loaded["status"] == {"exit_code": 0, "ok": True, "warnings": ["注意"]}

    def test_failed_run_carries_error(self):
        generator = ReportGenerator()
        error = ErrorHandler().describe(BeltramiBoundError("Beltrami bound violated", {"delta_hat": 1.2}))
        document = generator.build_document(RunConfig(subcommand="solve"), {}, error["exit_code"], error=error)
        data = document.to_dict()
        assert data["status"]["exit_code"] == EXIT_VALIDATION
        assert data["status"]["error"]["type"] == "BeltramiBoundError"
        assert DataValidator().validate_report(data).is_valid

    def test_csv_output(self, tmp_path):
        generator = ReportGenerator()
        path = generator.write_csv(str(tmp_path / "out" / "d.csv"), ["t", "residual"], [(0.0, 1e-14), (1.0, 2e-13)])
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
        assert rows == [["t", "residual"], ["0.0", "1e-14"], ["1.0", "2e-13"]]

    def test_csv_can_be_disabled(self, tmp_path):
        generator = ReportGenerator(ReportConfig(write_csv=False))
        assert generator.write_csv(str(tmp_path / "d.csv"), ["t"], [(0.0,)]) is None
        assert not (tmp_path / "d.csv").exists()

    def test_summary_lists_checks(self):
        generator = ReportGenerator()
        summary = VerificationSummary([CheckResult("parseval", True, 1e-15, 1e-11),
                                       CheckResult("unitarity", False, 0.1, 1e-11)])
        document = generator.build_document(RunConfig(subcommand="verify"), {}, 1)
        text = generator.generate_summary_markdown(document, summary)
        assert "1/2" in text
        assert "unitarity" in text


class TestErrorHandler:
    @pytest.mark.parametrize("error, code", [
        (FieldMismatchError("x"), EXIT_VALIDATION),
        (ConvergenceError("x"), EXIT_NUMERICAL),
        (FileNotFoundError("x"), EXIT_VALIDATION),
        (RuntimeError("x"), EXIT_NUMERICAL),
    ])
    def test_exit_codes(self, error, code):
        handler = ErrorHandler()
        assert handler.exit_code_for(error) == code
        assert handler.handle(error, "solve") == code

    def test_describe_includes_details(self):
        summary = ErrorHandler().describe(ConvergenceError("stalled", {"t": 0.5}))
        assert summary == {"type": "ConvergenceError", "message": "stalled", "exit_code": EXIT_NUMERICAL,
                           "details": {"t": 0.5}}


class TestPerformanceMetrics:
    def test_phases_accumulate(self):
        metrics = PerformanceMetrics()
        with metrics.phase("solve"):
            pass
        with metrics.phase("solve"):
            pass
        report = metrics.generate_report()
        assert set(report) == {"solve_seconds", "total_seconds"}
        assert report["solve_seconds"] >= 0.0

    def test_phase_recorded_on_error(self):
        metrics = PerformanceMetrics()
        with pytest.raises(ZeroDivisionError):
            with metrics.phase("scan"):
                1 / 0
        assert "scan_seconds" in metrics.generate_report()

    def test_unstarted_phase_is_ignored(self):
        metrics = PerformanceMetrics()
        metrics.end_phase("never")
        assert metrics.generate_report() == {"total_seconds": 0.0}

    def test_counters(self):
        metrics = PerformanceMetrics()
        metrics.increment("resolvent_iterations", 5)
        metrics.increment("resolvent_iterations")
        assert metrics.counters() == {"resolvent_iterations": 6}
        assert "resolvent_iterations: 6" in metrics.get_summary_text()
