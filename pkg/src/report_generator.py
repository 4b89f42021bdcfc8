"""
报告生成器模块
"""
import csv
import dataclasses
import json
import math
import os
from datetime import datetime
from fractions import Fraction
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from src.config import ReportConfig
from src.logger import get_logger
from src.models import ReportDocument, RunConfig, VerificationSummary
from src.spectral_core import FourierField, ModeIndex, field_to_dict


SCHEMA_TAG = "folitor.report/v1"


def _float(value: float):
    """非有限浮点数写成字符串，保证输出是合法JSON"""
    if math.isfinite(value):
        return value
    if math.isnan(value):
        return "nan"
    return "inf" if value > 0 else "-inf"


def to_jsonable(obj: Any) -> Any:
    """将结果对象递归转换为可序列化的结构"""
    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _float(float(obj))
    if isinstance(obj, (complex, np.complexfloating)):
        return [_float(obj.real), _float(obj.imag)]
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, FourierField):
        return field_to_dict(obj)
    if isinstance(obj, ModeIndex):
        return obj.as_list()
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if dataclasses.is_dataclass(obj):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set)):
        return [to_jsonable(v) for v in obj]
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return str(obj)


class ReportGenerator:
    """ReportDocument 的组装与 JSON/CSV/Markdown 输出"""

    def __init__(self, config: Optional[ReportConfig] = None):
        self.config = config or ReportConfig()
        self.logger = get_logger("report_generator")

    def build_document(self, run_config: RunConfig, results: Dict[str, Any], exit_code: int,
                       error: Optional[Dict[str, Any]] = None, warnings: Optional[List[str]] = None,
                       timing: Optional[Dict[str, float]] = None) -> ReportDocument:
        status = {"exit_code": exit_code, "ok": exit_code == 0}
        if error:
            status["error"] = to_jsonable(error)
        if warnings:
            status["warnings"] = list(warnings)
        return ReportDocument(schema=SCHEMA_TAG, config=to_jsonable(run_config.echo()),
                              results=to_jsonable(results), status=status, timing=to_jsonable(timing or {}))

    def default_path(self, run_config: RunConfig, suffix: str = "json") -> str:
        return os.path.join(self.config.output_dir, f"{run_config.subcommand}_report.{suffix}")

    def write_json(self, document: ReportDocument, path: str) -> str:
        """写出报告；同一配置与种子下除 timing 外逐字节一致"""
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(document.to_dict(), f, indent=2, ensure_ascii=False, allow_nan=False)
            f.write("\n")
        self.logger.info(f"报告已写入: {path}")
        return path

    def write_csv(self, path: str, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Optional[str]:
        """写出供外部绘图用的CSV；配置关闭时跳过"""
        if not self.config.write_csv:
            return None
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        count = 0
        with open(path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(columns)
            for row in rows:
                writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
                count += 1
        self.logger.info(f"CSV已写入: {path} ({count}行)")
        return path

    def generate_summary_markdown(self, document: ReportDocument,
                                  verification: Optional[VerificationSummary] = None) -> str:
        """控制台打印的运行摘要"""
        data = document.to_dict()
        report = []
        report.append(f"# folitor {data['config'].get('subcommand', '')} 运行报告")
        report.append(f"\n**生成时间**: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
        report.append(f"**斜率**: ({data['config'].get('slope_a1')}, {data['config'].get('slope_a2')}), "
                      f"**维度**: {data['config'].get('dimension')}, **截断**: M={data['config'].get('cutoff')}, "
                      f"**种子**: {data['config'].get('seed')}")

        status = data["status"]
        report.append(f"\n## 状态")
        report.append(f"- 退出码: {status['exit_code']}")
        if "error" in status:
            report.append(f"- ❌ {status['error']['type']}: {status['error']['message']}")
        else:
            report.append("- ✅ 运行成功" if status["ok"] else "- ❌ 检查未全部通过")
        for warning in status.get("warnings", []):
            report.append(f"- ⚠️ {warning}")

        headline = data["results"].get("summary", {})
        if headline:
            report.append(f"\n## 结果摘要")
            for key, value in headline.items():
                report.append(f"- {key}: {value}")

        if verification is not None:
            report.append(f"\n## 性质检查 ({len(verification.checks) - len(verification.failures)}/"
                          f"{len(verification.checks)} 通过)")
            for check in verification.checks:
                mark = "✅" if check.passed else "❌"
                report.append(f"- {mark} {check.name}: {check.value:.3e} (阈值 {check.threshold:.1e})")

        if data["timing"]:
            report.append(f"\n## 耗时")
            for name, seconds in data["timing"].items():
                if isinstance(seconds, float):
                    report.append(f"- {name}: {seconds:.2f}秒")
        return "\n".join(report)
