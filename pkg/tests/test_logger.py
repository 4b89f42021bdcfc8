"""
日志记录器测试
"""
import logging

from src.config import LoggingConfig
from src.logger import ROOT_LOGGER_NAME, get_logger, setup_logging
from src.models import ValidationResult


def test_get_logger_caches_by_name():
    assert get_logger("tests.cache") is get_logger("tests.cache")
    assert get_logger("tests.cache").logger.name == f"{ROOT_LOGGER_NAME}.tests.cache"


def test_records_point_at_caller(caplog):
    caplog.set_level(logging.DEBUG, logger=ROOT_LOGGER_NAME)
    get_logger("tests.caller").info("hello")
    record = caplog.records[-1]
    assert record.funcName == "test_records_point_at_caller"
    assert record.filename == "test_logger.py"


def test_failed_check_is_error(caplog):
    caplog.set_level(logging.DEBUG, logger=ROOT_LOGGER_NAME)
    logger = get_logger("tests.check")
    logger.log_check_result("unitarity", True, 1e-14, 1e-12)
    logger.log_check_result("intertwining", False, 1e-3, 1e-12)
    levels = [r.levelno for r in caplog.records]
    assert levels == [logging.INFO, logging.ERROR]
    assert "intertwining" in caplog.records[-1].getMessage()


def test_invalid_result_lists_every_error(caplog):
    caplog.set_level(logging.DEBUG, logger=ROOT_LOGGER_NAME)
    result = ValidationResult(is_valid=True, errors=[], warnings=["coefficient near cutoff"],
                              valid_count=5, total_count=7)
    for i in range(7):
        result.add_error(f"bad mode {i}")
    get_logger("tests.validation").log_validation("field", result)
    messages = [r.getMessage() for r in caplog.records]
    assert all(r.levelno == logging.WARNING for r in caplog.records)
    assert "5/7" in messages[0]
    assert sum("bad mode" in m for m in messages) == 7


def test_valid_result_is_info(caplog):
    caplog.set_level(logging.DEBUG, logger=ROOT_LOGGER_NAME)
    result = ValidationResult(is_valid=True, errors=[], warnings=[], valid_count=3, total_count=3)
    get_logger("tests.validation").log_validation("field", result)
    assert [r.levelno for r in caplog.records] == [logging.INFO]


def test_setup_logging_writes_file(tmp_path):
    log_file = tmp_path / "logs" / "run.log"
    setup_logging(LoggingConfig(level="DEBUG", file=str(log_file)), console_level=logging.WARNING)
    try:
        get_logger("tests.file").debug("solver step")
        for handler in logging.getLogger(ROOT_LOGGER_NAME).handlers:
            handler.flush()
        assert "solver step" in log_file.read_text(encoding="utf-8")
    finally:
        package_logger = logging.getLogger(ROOT_LOGGER_NAME)
        for handler in package_logger.handlers[:]:
            package_logger.removeHandler(handler)
            handler.close()
        package_logger.setLevel(logging.NOTSET)
