"""
核心数据模型定义
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from src.spectral_core import FourierField, ModeIndex


@dataclass
class ValidationResult:
    """数据验证结果"""
    is_valid: bool
    errors: List[str]
    warnings: List[str]
    valid_count: int = 0
    total_count: int = 0

    def __post_init__(self):
        if self.errors is None:
            self.errors = []
        if self.warnings is None:
            self.warnings = []

    def add_error(self, error: str):
        """添加错误"""
        self.errors.append(error)
        self.is_valid = False

    def add_warning(self, warning: str):
        """添加警告"""
        self.warnings.append(warning)

    @property
    def error_count(self) -> int:
        return len(self.errors)

    @property
    def warning_count(self) -> int:
        return len(self.warnings)


# 叶状结构算子


@dataclass
class DensityReport:
    """稠密性扫描结果"""
    cutoff: int
    min_abs_lambda: float
    argmin: ModeIndex
    no_exact_zero: bool
    zero_witness: Optional[ModeIndex]
    exact_input: bool


# 丢番图分析


@dataclass
class DiophantineRecord:
    """一条记录极小值"""
    mode: ModeIndex
    d: float
    local_exponent: Optional[float] = None

    @property
    def abs_n(self) -> int:
        return self.mode.norm


@dataclass
class ScaledRecord:
    """d(N)·|N|^s 的扫描下确界"""
    s: float
    infimum: float
    argmin: ModeIndex
    record_count: int


@dataclass
class DiophantineCheck:
    """|α - m/k| > C/|k|^{s+1} 的有限验证"""
    passed: bool
    worst_pair: Tuple[int, int]
    worst_ratio: float
    checked: int
    certified_denominator: Optional[int] = None
    warnings: List[str] = None

    def __post_init__(self):
        if self.warnings is None:
            self.warnings = []


@dataclass
class GroupSearchResult:
    """c1·a1 + c2·a2 中丢番图元素的启发式搜索"""
    bound: int
    best_combination: Optional[Tuple[int, int]]
    best_check: Optional[DiophantineCheck]
    tested: int
    heuristic: bool = True


@dataclass
class DiophantineReport:
    """丢番图扫描报告，结论均为有限扫描证据"""
    cutoff: int
    records: List[DiophantineRecord]
    scaled: List[ScaledRecord]
    fitted_exponent: Optional[float]
    prefix_exponents: Dict[int, Optional[float]]
    liminf_proxy: float
    tail_liminf_proxy: float
    max_local_exponent: Optional[float]
    candidates_scanned: int
    exact_zero: Optional[ModeIndex] = None
    classification: str = "inconclusive"
    group_search: Optional[GroupSearchResult] = None
    warnings: List[str] = None

    def __post_init__(self):
        if self.warnings is None:
            self.warnings = []


@dataclass
class ModeSearchResult:
    """小分母模式序列"""
    modes: List[ModeIndex]
    targets: List[float]
    matched_targets: List[float]
    achieved_exponents: List[float]
    inverse_lambdas: List[str]
    warnings: List[str] = None

    def __post_init__(self):
        if self.warnings is None:
            self.warnings = []


# 同伦求解器


@dataclass
class ResolventResult:
    """(Id - U∘ν)⁻¹ g 的不动点迭代结果"""
    solution: FourierField
    iterations: int
    residual: float
    history: List[float] = None

    def __post_init__(self):
        if self.history is None:
            self.history = []


@dataclass
class Prop1Report:
    """预解式范数界的随机探测"""
    order: int
    delta_hat: float
    estimate: float
    bound: float
    derivative_sup: float
    trials: int
    passed: bool


@dataclass
class StepDiagnostics:
    """同伦积分在某一接受时刻的诊断量"""
    t: float
    step: float
    residual: float
    residual_with_spill: float
    min_abs_f: float
    norms: Dict[str, float]
    resolvent_iterations: int


@dataclass
class HomotopySolution:
    """f(·,t) 族及诊断"""
    dimension: str
    path: str
    category: str
    times: List[float]
    fields: List[FourierField]
    diagnostics: List[StepDiagnostics]
    rejected_steps: int = 0
    unit_choice_exercised: bool = False
    warnings: List[str] = None

    def __post_init__(self):
        if self.warnings is None:
            self.warnings = []

    @property
    def final(self) -> FourierField:
        return self.fields[-1]


@dataclass
class KernelOracleResult:
    """截断线性算子 D_z̄ - D_z∘μ 的核"""
    field: FourierField
    smallest_singular_values: Tuple[float, float]
    largest_singular_value: float
    ambiguous: bool
    normalization: str
    warnings: List[str] = None

    def __post_init__(self):
        if self.warnings is None:
            self.warnings = []


# 度量构造


@dataclass
class ClosureSolution:
    """h 及方程组两式的残差"""
    h: FourierField
    residual1: float
    residual2: float
    max_amplification: float
    amplification_mode: Optional[ModeIndex]
    warnings: List[str] = None

    def __post_init__(self):
        if self.warnings is None:
            self.warnings = []


@dataclass
class ClosedForm:
    """Ω 在 (dx1, dx2, dx3) 基下的分量及外微分残差"""
    components: Tuple[FourierField, FourierField, FourierField]
    differential_norms: Dict[str, float]
    dform_residual: float


@dataclass
class MetricReport:
    """欧氏度量 Re(Ω⊗Ω̄) + dl⊗dl 的 Gram 系数"""
    gram: Dict[str, FourierField]
    min_eigenvalue: float
    min_location: List[float]
    grid_points: int
    positive_definite: bool
    flat: bool = True
    max_curvature: float = 0.0


@dataclass
class CounterexampleFamily:
    """f(x,t) = 1 + t·Σ (λ_j/k_j) e^{i(N_j,x)}"""
    field: FourierField
    direction: FourierField
    t: float
    modes: List[ModeIndex]
    coefficients: List[complex]
    smoothness_certificate: Dict[str, float]
    dropped: List[ModeIndex] = None
    warnings: List[str] = None

    def __post_init__(self):
        if self.dropped is None:
            self.dropped = []
        if self.warnings is None:
            self.warnings = []


@dataclass
class Lemma3Solution:
    """ν(·,t) 族"""
    times: List[float]
    nus: List[FourierField]
    sup_nu: List[float]
    residuals: List[float]
    min_abs_f: List[float]

    @property
    def final(self) -> FourierField:
        return self.nus[-1]


@dataclass
class ObstructionReport:
    """强制系数 h_{N_j} 与 L2 障碍判定"""
    modes: List[ModeIndex]
    forced: List[complex]
    magnitudes: List[float]
    partial_l2_mass: List[float]
    verdict: str
    t: Optional[float] = None


# 叶图


@dataclass
class ChartSample:
    """叶的万有覆盖上的展开映射 Ψ 采样"""
    z: Any
    psi: Any
    loop_residual: float
    dilatation: Any
    max_dilatation: float
    derivative_defect: float
    metric_defect: float
    min_jacobian: float
    translation_defect: Optional[float] = None
    warnings: List[str] = None

    def __post_init__(self):
        if self.warnings is None:
            self.warnings = []


# 校验与运行


@dataclass
class CheckResult:
    """单项性质检查"""
    name: str
    passed: bool
    value: float
    threshold: float
    details: Dict[str, Any] = None

    def __post_init__(self):
        if self.details is None:
            self.details = {}


@dataclass
class VerificationSummary:
    """性质检查汇总"""
    checks: List[CheckResult]

    @property
    def failures(self) -> List[str]:
        return [c.name for c in self.checks if not c.passed]

    @property
    def all_passed(self) -> bool:
        return not self.failures

    @property
    def pass_rate(self) -> float:
        if not self.checks:
            return 0.0
        return (len(self.checks) - len(self.failures)) / len(self.checks)


@dataclass
class RunConfig:
    """一次 CLI 调用的完整配置"""
    subcommand: str
    slope_a1: str = "sqrt2"
    slope_a2: str = "sqrt3"
    cutoff: int = 4
    residual_tol: float = 1e-6
    vanish_guard: float = 1e-3
    resolvent_tol: float = 1e-13
    category: str = "smooth"
    radius: float = 0.1
    dimension: str = "torus3"
    seed: int = 7
    t: float = 0.1
    modes: int = 3
    in_field: Optional[str] = None
    out: Optional[str] = None
    config_file: Optional[str] = None
    corrupt_u: bool = False
    extra: Dict[str, Any] = field(default_factory=dict)

    def validate(self) -> ValidationResult:
        """正容差、M >= 2、种子已记录"""
        result = ValidationResult(is_valid=True, errors=[], warnings=[])
        if self.cutoff < 2:
            result.add_error(f"--cutoff 必须不小于2，实际为 {self.cutoff}")
        for name in ("residual_tol", "vanish_guard", "resolvent_tol"):
            if not getattr(self, name) > 0:
                result.add_error(f"{name} 必须为正数")
        if self.category not in ("smooth", "analytic"):
            result.add_error(f"--category 必须是 smooth 或 analytic: {self.category}")
        if self.category == "analytic" and not self.radius > 0:
            result.add_error("--radius 必须为正数")
        if self.dimension not in ("torus3", "torus2"):
            result.add_error(f"--dimension 必须是 torus3 或 torus2: {self.dimension}")
        if self.seed is None:
            result.add_error("必须记录随机种子")
        if self.modes < 1:
            result.add_error("--modes 必须不小于1")
        if abs(self.t) > 1:
            result.add_error("--t 必须满足 |t| <= 1")
        return result

    def echo(self) -> Dict[str, Any]:
        """写入报告的配置回显"""
        return {
            "subcommand": self.subcommand,
            "slope_a1": self.slope_a1,
            "slope_a2": self.slope_a2,
            "cutoff": self.cutoff,
            "residual_tol": self.residual_tol,
            "vanish_guard": self.vanish_guard,
            "resolvent_tol": self.resolvent_tol,
            "category": self.category,
            "radius": self.radius,
            "dimension": self.dimension,
            "seed": self.seed,
            "t": self.t,
            "modes": self.modes,
            "in_field": self.in_field,
        }


@dataclass
class ReportDocument:
    """版本化的运行报告"""
    schema: str
    config: Dict[str, Any]
    results: Dict[str, Any]
    status: Dict[str, Any]
    timing: Dict[str, float] = None

    def __post_init__(self):
        if self.timing is None:
            self.timing = {}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema": self.schema,
            "config": self.config,
            "status": self.status,
            "results": self.results,
            "timing": self.timing,
        }
