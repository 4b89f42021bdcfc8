"""
配置管理测试
"""
import yaml

from src.config import Config, ConfigManager


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return str(path)


class TestConfigManager:
    def test_defaults_without_file(self, tmp_path):
        manager = ConfigManager(str(tmp_path / "missing.yaml"))
        config = manager.get_config()
        assert config.spectral.cutoff == 4
        assert config.counterexample.s_targets == [2.0, 2.5, 3.0]
        assert config.counterexample.search_bound == 2 ** 40
        assert manager.validate_config().is_valid

    def test_file_overrides_sections(self, tmp_path):
        path = write_yaml(tmp_path / "c.yaml", {"solver": {"path": "sine", "residual_tol": 1e-8},
                                                 "diophantine": {"scan_cutoff": 500}})
        config = ConfigManager(path).get_config()
        assert config.solver.path == "sine"
        assert config.solver.residual_tol == 1e-8
        assert config.diophantine.scan_cutoff == 500
        assert config.solver.vanish_guard == 1e-3

    def test_unknown_keys_are_errors(self, tmp_path):
        path = write_yaml(tmp_path / "c.yaml", {"solver": {"bogus": 1}, "aws": {"region": "x"}})
        result = ConfigManager(path).validate_config()
        assert not result.is_valid
        assert any("solver.bogus" in e for e in result.errors)
        assert any("aws" in e for e in result.errors)

    def test_malformed_yaml(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("solver: [unclosed", encoding="utf-8")
        assert not ConfigManager(str(path)).validate_config().is_valid

    def test_semantic_checks(self, tmp_path):
        path = write_yaml(tmp_path / "c.yaml", {"counterexample": {"s_targets": [3.0, 2.0], "t": 1.5},
                                                 "solver": {"category": "complex"}})
        errors = ConfigManager(path).validate_config().errors
        assert len(errors) == 3

    def test_thread_cap_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("FOLITOR_THREADS", "2")
        manager = ConfigManager(str(tmp_path / "missing.yaml"))
        assert manager.get_config().performance.max_workers == 2
        assert manager.validate_config().is_valid

    def test_bad_thread_cap(self, tmp_path, monkeypatch):
        monkeypatch.setenv("FOLITOR_THREADS", "many")
        assert not ConfigManager(str(tmp_path / "missing.yaml")).validate_config().is_valid

    def test_log_level_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("FOLITOR_LOG_LEVEL", "DEBUG")
        assert ConfigManager(str(tmp_path / "missing.yaml")).get_config().logging.level == "DEBUG"

    def test_default_file_round_trip(self, tmp_path):
        manager = ConfigManager(str(tmp_path / "folitor.config.yaml"))
        path = manager.create_default_config_file()
        reloaded = ConfigManager(path)
        assert reloaded.validate_config().is_valid
        assert reloaded.get_config().to_dict() == Config().to_dict()
