"""
校验对比器模块

verify 子命令的性质检查组：算子恒等式、Parseval、预解式与稠密矩阵对比、
预解式范数界、常数 Beltrami 系数的闭式解、核对比以及反例的障碍对偶。
"""
from typing import Callable, List, Optional

import numpy as np

from src.config import Config
from src.error_handler import FolitorError
from src.foliation_ops import FoliationParams, MultiplierSymbol, apply_dz, apply_dzbar, apply_u, symbol_fault
from src.logger import get_logger
from src.models import CheckResult, VerificationSummary
from src.spectral_core import TORUS3, FourierField, NormSpec, norm, projective_distance, sup_estimate


def corrupt_u_transform(values: np.ndarray, field: FourierField) -> np.ndarray:
    """在所有非零模式上把 U 的符号乘以 e^{0.1i}"""
    return np.where(field.mode_norms != 0, values * np.exp(0.1j), values)


def random_beltrami(rng: np.random.Generator, dimension: str, cutoff: int, target: float,
                    decay: float = 1.0) -> FourierField:
    """实值随机光滑场，缩放到过采样上确界为 target"""
    raw = FourierField.random(rng, dimension, cutoff, decay=decay, real=True)
    return raw * (target / sup_estimate(raw, 4))


class VerificationEngine:
    """性质检查组"""

    def __init__(self, params: FoliationParams, config: Optional[Config] = None, cutoff: Optional[int] = None,
                 seed: int = 7, samples: int = 20):
        self.params = params
        self.config = config or Config()
        self.cutoff = cutoff or self.config.spectral.cutoff
        self.seed = seed
        self.samples = samples
        self.dimension = params.dimension
        self.logger = get_logger("verification_engine")

    # 检查框架

    def _run_check(self, name: str, threshold: float, compute: Callable[[], tuple]) -> CheckResult:
        """compute 返回 (值, 细节)；值不超过阈值即通过，异常记为失败"""
        try:
            value, details = compute()
            passed = bool(value <= threshold)
        except FolitorError as e:
            value, details, passed = float('inf'), {"error": type(e).__name__, "message": str(e)}, False
        result = CheckResult(name=name, passed=passed, value=float(value), threshold=threshold, details=details)
        self.logger.log_check_result(name, passed, result.value, threshold)
        return result

    def _fields(self, rng: np.random.Generator, count: int) -> List[FourierField]:
        return [FourierField.random(rng, self.dimension, self.cutoff, decay=0.5) for _ in range(count)]

    # 各项检查

    def check_unitarity(self, rng: np.random.Generator) -> CheckResult:
        def compute():
            worst = 0.0
            for g in self._fields(rng, self.samples):
                ug = apply_u(self.params, g)
                back = apply_u(self.params, ug, "inverse")
                for j in (0, 1, 2):
                    spec = NormSpec.sobolev(j)
                    worst = max(worst, abs(norm(ug, spec) - norm(g, spec)) / norm(g, spec))
                worst = max(worst, norm(back - g) / norm(g))
            return worst, {"samples": self.samples, "norms": ["H0", "H1", "H2"]}
        return self._run_check("unitarity", 1e-11, compute)

    def check_intertwining(self, rng: np.random.Generator) -> CheckResult:
        """U∘D_z̄ = D_z̄∘U = D_z"""
        def compute():
            worst = 0.0
            for g in self._fields(rng, self.samples):
                target = apply_dz(self.params, g)
                scale = max(1.0, norm(target))
                left = apply_u(self.params, apply_dzbar(self.params, g))
                right = apply_dzbar(self.params, apply_u(self.params, g))
                worst = max(worst, norm(left - target) / scale, norm(right - target) / scale)
            return worst, {"samples": self.samples}
        return self._run_check("intertwining_identity", 1e-11, compute)

    def check_parseval(self, rng: np.random.Generator) -> CheckResult:
        def compute():
            worst = 0.0
            n = 2 * (2 * self.cutoff + 1)
            for g in self._fields(rng, self.samples):
                grid_mean = float(np.mean(np.abs(g.grid_values(n)) ** 2))
                worst = max(worst, abs(grid_mean - norm(g) ** 2) / norm(g) ** 2)
            return worst, {"grid": n}
        return self._run_check("parseval", 1e-11, compute)

    def check_resolvent_oracle(self, rng: np.random.Generator) -> CheckResult:
        from src.homotopy_solver import resolvent_iterate, resolvent_matrix

        def compute():
            cutoff = min(self.cutoff, 4)
            nu = random_beltrami(rng, self.dimension, cutoff, 0.4)
            g = FourierField.random(rng, self.dimension, cutoff, decay=0.5)
            iterate = resolvent_iterate(self.params, nu, g, self.config.solver.resolvent_tol)
            dense = np.linalg.solve(resolvent_matrix(self.params, nu), g.coefficients.reshape(-1))
            error = norm(iterate.solution - g.like(dense.reshape(g.coefficients.shape))) / norm(g)
            return error, {"iterations": iterate.iterations, "cutoff": cutoff}
        return self._run_check("resolvent_dense_oracle", 1e-8, compute)

    def check_prop1(self, rng: np.random.Generator, order: int) -> CheckResult:
        from src.homotopy_solver import prop1_probe

        def compute():
            cutoff = min(self.cutoff, 4)
            worst, reports = 0.0, []
            for _ in range(max(1, self.samples // 4)):
                nu = random_beltrami(rng, self.dimension, cutoff, float(rng.uniform(0.1, 0.6)))
                report = prop1_probe(self.params, nu, order, trials=8, rng=rng)
                worst = max(worst, report.estimate / report.bound)
                reports.append(round(report.estimate / report.bound, 12))
            return worst, {"ratios": reports}
        return self._run_check(f"resolvent_bound_h{order}", 1.0, compute)

    def check_constant_beltrami(self) -> CheckResult:
        """μ ≡ 0.5 时 f(·,1) ≡ 2"""
        from src.homotopy_solver import BeltramiField, integrate_homotopy

        def compute():
            mu = FourierField.constant(0.5, self.dimension, self.cutoff)
            solution = integrate_homotopy(self.params, BeltramiField.from_field(mu), self.config.solver)
            error = norm(solution.final - 2.0)
            return error, {"steps": len(solution.times) - 1}
        return self._run_check("constant_beltrami_closed_form", 1e-8, compute)

    def check_kernel_oracle(self, rng: np.random.Generator) -> List[CheckResult]:
        from src.homotopy_solver import BeltramiField, closedness_residual, integrate_homotopy, kernel_oracle

        cutoff = min(self.cutoff, 4)
        state = {}

        def solve():
            mu = random_beltrami(rng, self.dimension, cutoff, 0.3)
            beltrami = BeltramiField.from_field(mu)
            solution = integrate_homotopy(self.params, beltrami, self.config.solver)
            state["solution"], state["mu"] = solution, mu
            oracle = kernel_oracle(self.params, beltrami)
            distance = projective_distance(solution.final, oracle.field)
            return distance, {"singular_values": list(oracle.smallest_singular_values),
                              "ambiguous": oracle.ambiguous}

        def residual():
            if "solution" not in state:
                return float('inf'), {"skipped": "同伦积分失败"}
            value = closedness_residual(self.params, state["mu"], state["solution"].final)
            return value, {"min_abs_f": state["solution"].diagnostics[-1].min_abs_f}

        return [self._run_check("kernel_oracle_agreement", 1e-6, solve),
                self._run_check("closedness_residual", self.config.solver.residual_tol, residual)]

    def check_counterexample_duality(self) -> List[CheckResult]:
        from src.diophantine_analyzer import find_liouville_modes
        from src.metric_builder import counterexample_family, obstruction_detect

        ce = self.config.counterexample
        state = {}

        def forced():
            params = FoliationParams.from_strings("liouville(5)", "0")
            search = find_liouville_modes(params, ce.s_targets, ce.search_bound, ce.min_mode_norm)
            family = counterexample_family(params, search.modes, 0.1, ce)
            report = obstruction_detect(params, family.field, family.modes, 0.1)
            state.update(params=params, modes=family.modes, report=report, direction=family.direction)
            deviation = max(abs(m - 0.1) for m in report.magnitudes)
            return deviation, {"modes": [m.as_list() for m in family.modes], "verdict": report.verdict}

        def duality():
            if "report" not in state:
                return float('inf'), {"skipped": "反例构造失败"}
            trivial = obstruction_detect(state["params"], FourierField.constant(
                1.0, TORUS3, state["direction"].cutoff, state["direction"].lattice), state["modes"], 0.0)
            ok = state["report"].verdict == "obstructed" and trivial.verdict == "unobstructed (trivial)"
            return 0.0 if ok else 1.0, {"t=0.1": state["report"].verdict, "t=0": trivial.verdict}

        return [self._run_check("forced_coefficient_magnitude", 1e-10, forced),
                self._run_check("counterexample_duality", 0.0, duality)]

    def run(self, corrupt_u: bool = False) -> VerificationSummary:
        """
        执行全部检查

        Args:
            corrupt_u: 故障注入自检，U 的符号在非零模式上乘以 e^{0.1i}
        """
        if corrupt_u:
            with symbol_fault("U", corrupt_u_transform):
                return self._run_all()
        return self._run_all()

    def _run_all(self) -> VerificationSummary:
        rng = np.random.default_rng(self.seed)
        self.logger.info(f"开始性质检查: {self.dimension}, M={self.cutoff}, 种子={self.seed}")
        checks = [
            self.check_unitarity(rng),
            self.check_intertwining(rng),
            self.check_parseval(rng),
            self.check_resolvent_oracle(rng),
            self.check_prop1(rng, 0),
            self.check_prop1(rng, 1),
            self.check_constant_beltrami(),
        ]
        checks.extend(self.check_kernel_oracle(rng))
        if self.dimension == TORUS3:
            checks.extend(self.check_counterexample_duality())
        summary = VerificationSummary(checks)
        self.logger.info(f"性质检查完成: {len(checks) - len(summary.failures)}/{len(checks)} 通过")
        if summary.failures:
            self.logger.error(f"未通过: {', '.join(summary.failures)}")
        return summary
