"""
配置管理模块
"""
import os
import yaml
from typing import Dict, Any, Optional, List
from dataclasses import dataclass, asdict, fields


@dataclass
class SpectralConfig:
    """谱离散配置"""
    cutoff: int = 4  # 截断阶数M，保留 max|N_i| <= M 的模式
    dimension: str = "torus3"  # torus3 或 torus2
    oversample: int = 4  # 上确界估计的过采样倍数


@dataclass
class SolverConfig:
    """同伦求解器配置"""
    residual_tol: float = 1e-6  # 闭性残差容差
    vanish_guard: float = 1e-3  # min|f| 相对 ||f||_H0 的下限
    resolvent_tol: float = 1e-13  # 预解式迭代相对容差
    resolvent_margin: int = 20  # 预解式迭代次数的额外余量
    step_tol: float = 1e-9  # 每单位时间的局部误差容差
    initial_step: float = 0.125
    min_step: float = 1e-6
    max_steps: int = 2000
    path: str = "linear"  # linear 或 sine
    category: str = "smooth"  # smooth 或 analytic
    analytic_radius: float = 0.1  # 解析范数半径r
    sobolev_order: int = 2  # 步长控制所用的Sobolev阶数


@dataclass
class DiophantineConfig:
    """丢番图分析配置"""
    scan_cutoff: int = 2000
    s_grid: List[float] = None  # 缩放记录所用的指数网格
    weak_epsilon: float = 0.05
    liouville_exponent: float = 2.5
    diophantine_max_exponent: float = 2.0
    stability_tol: float = 0.5
    min_records: int = 3
    brute_force_box: int = 16  # 穷举扫描的盒子大小
    group_search_bound: int = 10  # 整数组合搜索 |c_i| 上界
    group_constant: float = 0.01
    group_exponent: float = 1.5
    group_denominator_bound: int = 100000

    def __post_init__(self):
        if self.s_grid is None:
            self.s_grid = [1.0, 1.5, 2.0, 3.0, 4.0, 6.0]


@dataclass
class MetricConfig:
    """度量构造配置"""
    amplification_bound: float = 1e8  # |k/lambda_N| 的警告阈值
    gram_grid: int = 33  # Gram矩阵采样网格每轴点数
    residual_tol: float = 1e-10


@dataclass
class CounterexampleConfig:
    """反例构造配置"""
    s_targets: List[float] = None
    t: float = 0.1
    modes: int = 3
    lift_cutoff: int = 4  # 子环面上的截断阶数
    time_steps: int = 20  # 求解ν的RK4步数
    search_bound: int = 2 ** 40  # 小分母模式搜索的 max|N_i| 上界
    min_mode_norm: int = 2

    def __post_init__(self):
        if self.s_targets is None:
            self.s_targets = [2.0, 2.5, 3.0]


@dataclass
class ChartConfig:
    """叶图配置"""
    radius: float = 6.283185307179586
    resolution: int = 33
    quadrature_order: int = 8
    n_loops: int = 16
    derivative_step: float = 1e-4
    residual_tol: float = 1e-6


@dataclass
class LoggingConfig:
    """日志配置"""
    level: str = "INFO"
    file: str = "logs/folitor.log"
    format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


@dataclass
class PerformanceConfig:
    """性能配置"""
    max_workers: int = 4  # 最大并发线程数
    max_workers_min: int = 1
    max_workers_max: int = 32


@dataclass
class ReportConfig:
    """报告输出配置"""
    output_dir: str = "reports"
    write_csv: bool = True
    print_summary: bool = True


SECTIONS = {
    'spectral': SpectralConfig,
    'solver': SolverConfig,
    'diophantine': DiophantineConfig,
    'metric': MetricConfig,
    'counterexample': CounterexampleConfig,
    'chart': ChartConfig,
    'logging': LoggingConfig,
    'performance': PerformanceConfig,
    'report': ReportConfig,
}


class Config:
    """主配置类"""
    spectral: SpectralConfig
    solver: SolverConfig
    diophantine: DiophantineConfig
    metric: MetricConfig
    counterexample: CounterexampleConfig
    chart: ChartConfig
    logging: LoggingConfig
    performance: PerformanceConfig
    report: ReportConfig

    def __init__(self):
        for name, section in SECTIONS.items():
            setattr(self, name, section())

    def to_dict(self) -> Dict[str, Any]:
        """导出为嵌套字典"""
        return {name: asdict(getattr(self, name)) for name in SECTIONS}


class ConfigManager:
    """配置管理器"""

    def __init__(self, config_file: Optional[str] = None):
        self.config_file = config_file or "folitor.config.yaml"
        self.config = Config()
        self.load_errors: List[str] = []
        self._load_config()
        self._apply_env_overrides()

    def _load_config(self):
        """加载配置文件"""
        if not os.path.exists(self.config_file):
            return
        try:
            with open(self.config_file, 'r', encoding='utf-8') as f:
                config_data = yaml.safe_load(f) or {}
            self._update_config_from_dict(config_data)
        except (OSError, yaml.YAMLError) as e:
            self.load_errors.append(f"无法加载配置文件 {self.config_file}: {e}")

    def _update_config_from_dict(self, config_data: Dict[str, Any]):
        """从字典更新配置，未知键记录为加载错误"""
        for section_name, values in config_data.items():
            if section_name not in SECTIONS:
                self.load_errors.append(f"未知配置节: {section_name}")
                continue
            if not isinstance(values, dict):
                self.load_errors.append(f"配置节 {section_name} 必须是映射")
                continue
            section = getattr(self.config, section_name)
            known = {f.name for f in fields(section)}
            for key, value in values.items():
                if key not in known:
                    self.load_errors.append(f"未知配置项: {section_name}.{key}")
                    continue
                setattr(section, key, value)

    def _apply_env_overrides(self):
        """应用环境变量覆盖"""
        threads = os.getenv('FOLITOR_THREADS')
        if threads:
            try:
                cap = int(threads)
                if cap >= 1:
                    self.config.performance.max_workers = min(self.config.performance.max_workers, cap)
                    self.config.performance.max_workers_max = cap
            except ValueError:
                self.load_errors.append(f"FOLITOR_THREADS 不是整数: {threads}")

        if os.getenv('FOLITOR_LOG_LEVEL'):
            self.config.logging.level = os.getenv('FOLITOR_LOG_LEVEL')

        if os.getenv('FOLITOR_LOG_FILE'):
            self.config.logging.file = os.getenv('FOLITOR_LOG_FILE')

    def get_config(self) -> Config:
        """获取配置对象"""
        return self.config

    def create_default_config_file(self) -> str:
        """创建默认配置文件"""
        default_config = Config().to_dict()
        with open(self.config_file, 'w', encoding='utf-8') as f:
            yaml.safe_dump(default_config, f, default_flow_style=False, allow_unicode=True, sort_keys=False)
        return self.config_file

    def validate_config(self):
        """
        验证配置有效性

        Returns:
            ValidationResult
        """
        from src.models import ValidationResult

        result = ValidationResult(is_valid=True, errors=[], warnings=[])
        for message in self.load_errors:
            result.add_error(message)

        c = self.config
        if c.spectral.cutoff < 2:
            result.add_error("截断阶数cutoff必须不小于2")
        if c.spectral.dimension not in ("torus3", "torus2"):
            result.add_error(f"未知维度: {c.spectral.dimension}")
        if c.spectral.oversample < 2:
            result.add_error("oversample必须不小于2")

        for name in ("residual_tol", "vanish_guard", "resolvent_tol", "step_tol", "initial_step", "min_step"):
            if getattr(c.solver, name) <= 0:
                result.add_error(f"solver.{name}必须为正数")
        if c.solver.path not in ("linear", "sine"):
            result.add_error(f"未知同伦路径: {c.solver.path}")
        if c.solver.category not in ("smooth", "analytic"):
            result.add_error(f"未知函数类别: {c.solver.category}")
        if c.solver.category == "analytic" and c.solver.analytic_radius <= 0:
            result.add_error("解析半径必须为正数")

        if c.diophantine.scan_cutoff < 2:
            result.add_error("扫描截断必须不小于2")
        if not 0 < c.diophantine.weak_epsilon < 1:
            result.add_error("weak_epsilon必须位于(0,1)")

        targets = list(c.counterexample.s_targets)
        if any(b <= a for a, b in zip(targets, targets[1:])):
            result.add_error("s_targets必须严格递增")
        if abs(c.counterexample.t) > 1:
            result.add_error("参数t必须满足|t|<=1")

        perf = c.performance
        if not perf.max_workers_min <= perf.max_workers <= perf.max_workers_max:
            result.add_warning(f"max_workers={perf.max_workers} 超出范围，将被截断")
            perf.max_workers = max(perf.max_workers_min, min(perf.max_workers, perf.max_workers_max))

        return result
