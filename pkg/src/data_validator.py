"""
数据验证器模块
"""
import json
import os
from pathlib import Path
from typing import Any, Dict, Optional

import jsonschema

from src.error_handler import ValidationError
from src.logger import get_logger
from src.models import ValidationResult
from src.spectral_core import FourierField, field_from_dict


SCHEMA_DIR = Path(__file__).resolve().parent.parent / "schemas"
FIELD_SCHEMA = "field.schema.json"
REPORT_SCHEMA = "report.schema.json"
REPORT_SCHEMA_TAG = "folitor.report/v1"


def _pointer(error: jsonschema.ValidationError) -> str:
    """错误位置的 JSON 路径，如 modes[3][1]"""
    parts = []
    for item in error.absolute_path:
        parts.append(f"[{item}]" if isinstance(item, int) else (f".{item}" if parts else str(item)))
    return "".join(parts) or "<root>"


class DataValidator:
    """场文件与报告的模式校验及语义校验"""

    def __init__(self, schema_dir: Optional[Path] = None):
        self.logger = get_logger("data_validator")
        self.schema_dir = Path(schema_dir) if schema_dir else SCHEMA_DIR
        self._schemas: Dict[str, Dict[str, Any]] = {}

    def schema(self, name: str) -> Dict[str, Any]:
        if name not in self._schemas:
            with open(self.schema_dir / name, 'r', encoding='utf-8') as f:
                self._schemas[name] = json.load(f)
        return self._schemas[name]

    def _schema_errors(self, data: Any, name: str, result: ValidationResult):
        validator = jsonschema.Draft202012Validator(self.schema(name))
        for error in sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path)):
            result.add_error(f"字段 '{_pointer(error)}': {error.message}")

    def validate_field_data(self, data: Any) -> ValidationResult:
        """
        验证场数据

        先做模式校验，再检查模式下标不超过截断阶数、分量个数与秩一致。
        """
        result = ValidationResult(is_valid=True, errors=[], warnings=[])
        self._schema_errors(data, FIELD_SCHEMA, result)
        if not result.is_valid:
            return result

        lattice = data.get("lattice")
        dim = data["dim"]
        if lattice is not None and any(len(row) != dim for row in lattice):
            result.add_error(f"字段 'lattice': 每行必须有 {dim} 个整数")
            return result
        rank = dim if lattice is None else len(lattice)
        cutoff = data["cutoff"]
        seen = set()
        for i, row in enumerate(data["modes"]):
            if len(row) != rank + 2:
                result.add_error(f"字段 'modes[{i}]': 应有 {rank + 2} 个数，实际为 {len(row)}")
                continue
            index = row[:rank]
            if any(int(v) != v for v in index):
                result.add_error(f"字段 'modes[{i}]': 模式下标必须是整数")
                continue
            if max(abs(int(v)) for v in index) > cutoff:
                result.add_error(f"字段 'modes[{i}]': 模式 {index} 超出截断阶数 {cutoff}")
            key = tuple(int(v) for v in index)
            if key in seen:
                result.add_warning(f"字段 'modes[{i}]': 模式 {list(key)} 重复出现，系数将相加")
            seen.add(key)
        result.total_count = len(data["modes"])
        result.valid_count = result.total_count - result.error_count
        return result

    def load_field_file(self, path: str) -> FourierField:
        """
        读取场文件

        Raises:
            ValidationError: 文件不可读、不是 JSON 或不符合模式，消息中包含路径与字段
        """
        if not os.path.exists(path):
            raise ValidationError(f"无法读取输入文件 {path}: 文件不存在", {"path": path})
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except (OSError, UnicodeDecodeError) as e:
            raise ValidationError(f"无法读取输入文件 {path}: {e}", {"path": path})
        except json.JSONDecodeError as e:
            raise ValidationError(f"{path}: 不是合法的JSON (第{e.lineno}行第{e.colno}列)", {"path": path})

        result = self.validate_field_data(data)
        self.logger.log_validation(f"场文件 {path}", result)
        if not result.is_valid:
            raise ValidationError(f"{path}: {result.errors[0]}", {"path": path, "errors": result.errors})
        return field_from_dict(data)

    def validate_report(self, document: Dict[str, Any]) -> ValidationResult:
        """报告模式校验，并检查状态码与错误节一致"""
        result = ValidationResult(is_valid=True, errors=[], warnings=[])
        self._schema_errors(document, REPORT_SCHEMA, result)
        if not result.is_valid:
            return result
        status = document["status"]
        if status["ok"] != (status["exit_code"] == 0):
            result.add_error("字段 'status.ok' 与 'status.exit_code' 不一致")
        if status["exit_code"] in (2, 3) and "error" not in status:
            result.add_warning("失败的运行缺少 'status.error'")
        return result
