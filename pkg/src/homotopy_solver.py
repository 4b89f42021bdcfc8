"""
同伦求解器模块

沿路径 ν(·,t) 积分 ḟ = (Id - U∘ν)⁻¹(U∘ν̇)f，f(·,0) ≡ 1，
得到满足 D_z̄ f = D_z(νf) 的 f。预解式用不动点迭代 y <- g + U(ν·y) 计算。
另有稠密矩阵核（独立验证用）与预解式范数界的随机探测。
"""
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from src.config import SolverConfig
from src.error_handler import (
    BeltramiBoundError, ConvergenceError, DomainError, FieldMismatchError, ValidationError, VanishingError,
)
from src.foliation_ops import (
    FoliationParams, MultiplierSymbol, apply_dz, apply_dzbar, apply_u, density_check, frequency_table,
    lambda_table, unit_choice_exercised,
)
from src.logger import get_logger
from src.models import HomotopySolution, KernelOracleResult, Prop1Report, ResolventResult, StepDiagnostics
from src.spectral_core import (
    TORUS2, TORUS3, FourierField, NormSpec, extreme_modulus, mode_grid, multiply, norm, partial_derivative,
    sup_estimate,
)


Family = Callable[[float], Tuple[FourierField, FourierField]]


@dataclass(frozen=True)
class BeltramiField:
    """Beltrami系数 μ 及其过采样上确界估计 δ̂ < 1"""
    mu: FourierField
    delta_hat: float

    @classmethod
    def from_field(cls, mu: FourierField, oversample: int = 4) -> 'BeltramiField':
        if oversample < 4:
            raise ValidationError(f"δ̂ 的估计需要 oversample >= 4，实际为 {oversample}")
        delta_hat = sup_estimate(mu, oversample)
        if not delta_hat < 1.0:
            raise BeltramiBoundError(f"Beltrami bound violated: sup|μ| ≈ {delta_hat:.6g} >= 1",
                                     {"delta_hat": delta_hat})
        return cls(mu, delta_hat)

    @property
    def dimension(self) -> str:
        return self.mu.dimension


class HomotopyPath:
    """
    ν(·,t) 的路径规则

    linear: ν = tμ；sine: ν = sin(πt/2)μ；custom: 用户提供 t -> (ν, ν̇)，要求 ν(·,0) = 0。
    """

    RULES = ("linear", "sine", "custom")

    def __init__(self, mu: FourierField, rule: str = "linear", family: Optional[Family] = None):
        if rule not in self.RULES:
            raise ValidationError(f"未知同伦路径: {rule}")
        if rule == "custom":
            if family is None:
                raise ValidationError("custom 路径需要提供 family")
            start, _ = family(0.0)
            if np.any(start.coefficients != 0):
                raise ValidationError("custom 路径必须满足 ν(·,0) = 0")
        self.mu = mu
        self.rule = rule
        self.family = family

    def __call__(self, t: float) -> Tuple[FourierField, FourierField]:
        """返回 (ν(·,t), ν̇(·,t))"""
        if self.rule == "linear":
            return self.mu * t, self.mu
        if self.rule == "sine":
            return self.mu * math.sin(0.5 * math.pi * t), self.mu * (0.5 * math.pi * math.cos(0.5 * math.pi * t))
        return self.family(t)

    def nu(self, t: float) -> FourierField:
        return self(t)[0]


# 预解式


def resolvent_budget(delta_hat: float, tol: float, margin: int) -> int:
    """迭代次数上限 ceil(log tol / log δ̂) + margin"""
    if delta_hat <= 0.0:
        return margin + 1
    return int(math.ceil(math.log(tol) / math.log(delta_hat))) + margin


def resolvent_iterate(params: FoliationParams, nu: FourierField, g: FourierField, tol: float = 1e-13,
                      margin: int = 20, delta_hat: Optional[float] = None,
                      initial: Optional[FourierField] = None) -> ResolventResult:
    """
    (Id - U∘ν)⁻¹ g 的不动点迭代

    Args:
        delta_hat: ν 的上确界估计，缺省时按 oversample=4 计算
        initial: 迭代初值，缺省为 g

    Raises:
        BeltramiBoundError: δ̂ >= 1
        ConvergenceError: 迭代预算内未达到容差
    """
    nu.check_compatible(g)
    if delta_hat is None:
        delta_hat = sup_estimate(nu, 4)
    if not delta_hat < 1.0:
        raise BeltramiBoundError(f"拒绝计算预解式: δ̂ = {delta_hat:.6g} >= 1", {"delta_hat": delta_hat})

    scale = norm(g)
    if scale == 0.0:
        return ResolventResult(g, 0, 0.0)
    if not np.any(nu.coefficients):
        return ResolventResult(g, 0, 0.0)

    budget = resolvent_budget(delta_hat, tol, margin)
    u_symbol = MultiplierSymbol("U", params).table(g)
    y = g if initial is None else initial
    history = []
    for iteration in range(1, budget + 1):
        update = g + g.like(u_symbol * multiply(nu, y).coefficients)
        change = norm(update - y) / scale
        history.append(change)
        y = update
        if change <= tol:
            return ResolventResult(y, iteration, change, history)
    raise ConvergenceError(f"预解式迭代在 {budget} 步内未收敛，残差 {history[-1]:.3e}",
                           {"achieved_residual": history[-1], "iterations": budget})


def resolvent_apply(params: FoliationParams, nu: FourierField, g: FourierField, tol: float = 1e-13,
                    margin: int = 20) -> FourierField:
    """(Id - U∘ν)⁻¹ g"""
    return resolvent_iterate(params, nu, g, tol, margin).solution


def multiplication_matrix(nu: FourierField) -> np.ndarray:
    """截断乘法算子 P∘ν 在存储下标（字典序）上的稠密矩阵，元素为 ν_{N-K}"""
    M, rank = nu.cutoff, nu.rank
    grid = mode_grid(M, rank).reshape(rank, -1)
    diff = grid[:, :, None] - grid[:, None, :]
    inside = np.all(np.abs(diff) <= M, axis=0)
    index = tuple(np.clip(diff[axis], -M, M) + M for axis in range(rank))
    return np.where(inside, nu.coefficients[index], 0.0)


def resolvent_matrix(params: FoliationParams, nu: FourierField) -> np.ndarray:
    """Id - U∘P∘ν 的稠密矩阵"""
    u = MultiplierSymbol("U", params).table(nu).reshape(-1)
    return np.eye(u.size, dtype=complex) - u[:, None] * multiplication_matrix(nu)


def prop1_bound(delta_hat: float, order: int, derivative_sup: float) -> float:
    """j = 0 时为 1/(1-δ̂)；j = 1 时为 4/(1-δ̂)²·(1 + max_r sup|∂_r ν|)"""
    if order == 0:
        return 1.0 / (1.0 - delta_hat)
    return 4.0 / (1.0 - delta_hat) ** 2 * (1.0 + derivative_sup)


def prop1_probe(params: FoliationParams, nu: FourierField, order: int, trials: int,
                rng: Optional[np.random.Generator] = None, tol: float = 1e-13) -> Prop1Report:
    """
    用随机单位探针估计 ‖(Id - U∘ν)⁻¹‖_{H^j}

    探针包含常数模式和随机光滑场；估计值为比值 ‖Rg‖/‖g‖ 的最大值。
    """
    if order not in (0, 1):
        raise ValidationError(f"只支持 j ∈ {{0, 1}}，实际为 {order}")
    rng = rng or np.random.default_rng(0)
    delta_hat = sup_estimate(nu, 4)
    if not delta_hat < 1.0:
        raise BeltramiBoundError(f"Beltrami bound violated: δ̂ = {delta_hat:.6g}", {"delta_hat": delta_hat})
    spec = NormSpec.sobolev(order)
    derivative_sup = max(sup_estimate(partial_derivative(nu, axis), 4)
                         for axis in range(1, nu.physical_modes.shape[0] + 1))

    probes = [FourierField.constant(1.0, nu.dimension, nu.cutoff, nu.lattice)]
    for _ in range(max(0, trials - 1)):
        raw = FourierField.random(rng, nu.dimension, nu.cutoff, decay=float(rng.uniform(0.0, 1.0)))
        probes.append(nu.like(raw.coefficients))

    estimate = 0.0
    for g in probes:
        y = resolvent_apply(params, nu, g, tol)
        estimate = max(estimate, norm(y, spec) / norm(g, spec))

    bound = prop1_bound(delta_hat, order, derivative_sup)
    report = Prop1Report(order=order, delta_hat=delta_hat, estimate=estimate, bound=bound,
                         derivative_sup=derivative_sup, trials=len(probes), passed=estimate <= bound)
    get_logger("homotopy_solver").debug(
        f"Prop1探测 j={order}: 估计={estimate:.4f}, 上界={bound:.4f}, δ̂={delta_hat:.3f}")
    return report


# 闭性残差


def closedness_residual(params: FoliationParams, nu: FourierField, f: FourierField,
                        include_spill: bool = False) -> float:
    """
    ‖D_z̄ f - D_z(νf)‖_{H0} / max(1, ‖f‖_{H0})

    include_spill=True 时在 2M 上计算（乘积在 2M 内精确），
    把截断丢弃的高频部分也计入残差。
    """
    nu.check_compatible(f)
    if include_spill:
        doubled = 2 * f.cutoff
        nu, f = nu.with_cutoff(doubled), f.with_cutoff(doubled)
    defect = apply_dzbar(params, f) - apply_dz(params, multiply(nu, f))
    return norm(defect) / max(1.0, norm(f))


# 同伦积分


def rk4_step(rhs: Callable[[float, FourierField], FourierField], t: float, y: FourierField,
             h: float) -> FourierField:
    """经典四阶 Runge-Kutta 单步"""
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * h, y + k1 * (0.5 * h))
    k3 = rhs(t + 0.5 * h, y + k2 * (0.5 * h))
    k4 = rhs(t + h, y + k3 * h)
    return y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)


def _step_norm(config: SolverConfig) -> NormSpec:
    if config.category == "analytic":
        return NormSpec.analytic(config.analytic_radius)
    return NormSpec.sobolev(config.sobolev_order)


class HomotopySolver:
    """
    ḟ = (Id - U∘ν)⁻¹(U∘ν̇)f 的自适应 RK4 积分器

    步长由步长加倍误差估计控制（H^j 或解析范数），并要求接受的每一步
    闭性残差不超过 residual_tol。
    """

    def __init__(self, params: FoliationParams, config: Optional[SolverConfig] = None, oversample: int = 4):
        self.params = params
        self.config = config or SolverConfig()
        self.oversample = oversample
        self.norm_spec = _step_norm(self.config)
        self.logger = get_logger("homotopy_solver")
        self.resolvent_iterations = 0

    def _check_domain(self, mu: FourierField):
        if mu.dimension != self.params.dimension:
            raise FieldMismatchError(f"μ 的维度 {mu.dimension} 与参数维度 {self.params.dimension} 不符")
        if self.params.dimension == TORUS3:
            report = density_check(self.params, mu.cutoff)
            if not report.no_exact_zero:
                raise DomainError(f"leaves not dense: λ_N = 0 于 N={report.zero_witness.components}",
                                  {"mode": report.zero_witness.as_list()})

    def rhs(self, path: HomotopyPath) -> Callable[[float, FourierField], FourierField]:
        def _rhs(t: float, f: FourierField) -> FourierField:
            nu, nu_dot = path(t)
            forcing = apply_u(self.params, multiply(nu_dot, f))
            result = resolvent_iterate(self.params, nu, forcing, self.config.resolvent_tol,
                                       self.config.resolvent_margin)
            self.resolvent_iterations += result.iterations
            return result.solution
        return _rhs

    def _norms(self, f: FourierField) -> dict:
        values = {"H0": norm(f), "H2": norm(f, NormSpec.sobolev(2))}
        values[self.norm_spec.label] = norm(f, self.norm_spec)
        return values

    def integrate(self, beltrami: BeltramiField, path: Optional[HomotopyPath] = None) -> HomotopySolution:
        """
        在 t ∈ [0,1] 上积分

        Raises:
            VanishingError: min|f| < vanish_guard·‖f‖_{H0}
            ConvergenceError: 步长低于 min_step 或步数超过 max_steps
        """
        cfg = self.config
        mu = beltrami.mu
        self._check_domain(mu)
        path = path or HomotopyPath(mu, cfg.path)
        rhs = self.rhs(path)

        f = FourierField.constant(1.0, mu.dimension, mu.cutoff, mu.lattice)
        solution = HomotopySolution(
            dimension=mu.dimension, path=path.rule, category=cfg.category,
            times=[0.0], fields=[f], diagnostics=[],
            unit_choice_exercised=unit_choice_exercised(self.params, f),
        )
        solution.diagnostics.append(self._diagnose(0.0, 0.0, path.nu(0.0), f, 0))
        if solution.unit_choice_exercised:
            solution.warnings.append("截断范围内存在 λ_N = 0 的非零模式，使用了 u_N = 1 的约定")

        t, h, steps = 0.0, min(cfg.initial_step, 1.0), 0
        while t < 1.0:
            if steps >= cfg.max_steps:
                raise ConvergenceError(f"同伦积分超过最大步数 {cfg.max_steps}", {"t": t})
            steps += 1
            h = min(h, 1.0 - t)
            start_iterations = self.resolvent_iterations

            full = rk4_step(rhs, t, f, h)
            half = rk4_step(rhs, t + 0.5 * h, rk4_step(rhs, t, f, 0.5 * h), 0.5 * h)
            error = norm(half - full, self.norm_spec) / 15.0
            allowed = cfg.step_tol * h * max(1.0, norm(half, self.norm_spec))
            ratio = allowed / error if error > 0 else math.inf

            if error <= allowed:
                t_new = 1.0 if 1.0 - (t + h) < 1e-14 else t + h
                nu_new = path.nu(t_new)
                residual = closedness_residual(self.params, nu_new, half)
                if residual > cfg.residual_tol:
                    self.logger.log_solver_step(t_new, h, residual, False)
                    solution.rejected_steps += 1
                    h *= 0.5
                else:
                    diagnostics = self._diagnose(t_new, h, nu_new, half,
                                                 self.resolvent_iterations - start_iterations)
                    t, f = t_new, half
                    solution.times.append(t)
                    solution.fields.append(f)
                    solution.diagnostics.append(diagnostics)
                    self.logger.log_solver_step(t, h, residual, True)
                    h *= min(2.0, max(0.2, 0.9 * ratio ** 0.25)) if math.isfinite(ratio) else 2.0
            else:
                solution.rejected_steps += 1
                self.logger.log_solver_step(t + h, h, error, False)
                h *= min(1.0, max(0.2, 0.9 * ratio ** 0.25))

            if t < 1.0 and h < cfg.min_step:
                raise ConvergenceError(f"步长 {h:.3e} 低于下限 {cfg.min_step:.3e}", {"t": t})

        self.logger.info(f"同伦积分完成: 接受{len(solution.times) - 1}步, 拒绝{solution.rejected_steps}步, "
                         f"最终残差={solution.diagnostics[-1].residual:.3e}")
        return solution

    def _diagnose(self, t: float, h: float, nu: FourierField, f: FourierField, iterations: int) -> StepDiagnostics:
        (min_abs, location), _ = extreme_modulus(f, self.oversample)
        scale = norm(f)
        if min_abs < self.config.vanish_guard * scale:
            raise VanishingError(f"possible zero of f: min|f| = {min_abs:.3e} 于 t = {t:.6f}",
                                 {"x": location, "t": t, "min_abs_f": min_abs})
        return StepDiagnostics(
            t=t, step=h,
            residual=closedness_residual(self.params, nu, f),
            residual_with_spill=closedness_residual(self.params, nu, f, include_spill=True),
            min_abs_f=min_abs, norms=self._norms(f), resolvent_iterations=iterations,
        )


def integrate_homotopy(params: FoliationParams, beltrami: BeltramiField, config: Optional[SolverConfig] = None,
                       path: Optional[HomotopyPath] = None, oversample: int = 4) -> HomotopySolution:
    """沿路径 ν(·,t) 求解 f(·,t)，f(·,0) ≡ 1"""
    return HomotopySolver(params, config, oversample).integrate(beltrami, path)


def torus2_solve(beltrami: BeltramiField, config: Optional[SolverConfig] = None,
                 path: Optional[HomotopyPath] = None) -> HomotopySolution:
    """T² 情形：U 的特征值为 (n1 - i·n2)/(n1 + i·n2)，常数上取 1"""
    if beltrami.dimension != TORUS2:
        raise FieldMismatchError(f"torus2_solve 需要 T² 上的 μ，实际为 {beltrami.dimension}")
    return integrate_homotopy(FoliationParams.torus2(), beltrami, config, path)


# 独立验证


def kernel_oracle(params: FoliationParams, beltrami: BeltramiField, cutoff: Optional[int] = None) -> KernelOracleResult:
    """
    截断线性算子 A = D_z̄ - D_z∘P∘μ 的最小奇异向量

    归一化：平均值非零时令平均值为1，否则令最大系数为1。
    """
    logger = get_logger("homotopy_solver")
    mu = beltrami.mu if cutoff is None else beltrami.mu.with_cutoff(cutoff)
    if params.dimension == TORUS3:
        report = density_check(params, mu.cutoff)
        if not report.no_exact_zero:
            raise DomainError("leaves not dense", {"mode": report.zero_witness.as_list()})

    lam = lambda_table(params, mu).reshape(-1)
    _, _, zero = frequency_table(params, mu)
    lam_prime = -np.conj(lam)
    operator = np.diag(lam_prime) - lam[:, None] * multiplication_matrix(mu)
    _, singular, vh = scipy.linalg.svd(operator)
    vector = np.conj(vh[-1])

    center = int(np.flatnonzero(mu.mode_norms.reshape(-1) == 0)[0])
    peak = float(np.max(np.abs(vector)))
    if abs(vector[center]) > 1e-12 * peak:
        vector = vector / vector[center]
        normalization = "average"
    else:
        vector = vector / vector[int(np.argmax(np.abs(vector)))]
        normalization = "largest"

    s1, s2, smax = float(singular[-1]), float(singular[-2]), float(singular[0])
    result = KernelOracleResult(
        field=mu.like(vector.reshape(mu.coefficients.shape)),
        smallest_singular_values=(s1, s2),
        largest_singular_value=smax,
        ambiguous=s2 <= 10.0 * max(s1, 1e-10 * smax),
        normalization=normalization,
    )
    if result.ambiguous:
        message = "kernel dimension ambiguous at this cutoff"
        result.warnings.append(message)
        logger.warning(f"{message}: σ1={s1:.3e}, σ2={s2:.3e}")
    if np.any(zero & (mu.mode_norms != 0)):
        result.warnings.append("截断范围内存在 λ_N = 0 的非零模式")
    return result


def refinement_study(params: FoliationParams, mu: FourierField, cutoffs: Sequence[int],
                     config: Optional[SolverConfig] = None) -> List[Tuple[int, float]]:
    """在多个截断阶数上求解，返回含截断溢出的闭性残差"""
    config = config or SolverConfig()
    results = []
    for cutoff in cutoffs:
        beltrami = BeltramiField.from_field(mu.with_cutoff(cutoff))
        solution = integrate_homotopy(params, beltrami, config)
        nu = HomotopyPath(beltrami.mu, config.path).nu(1.0)
        results.append((cutoff, closedness_residual(params, nu, solution.final, include_spill=True)))
    get_logger("homotopy_solver").info(f"截断加密: {results}")
    return results
