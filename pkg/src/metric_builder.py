"""
度量构造模块

由叶上闭形式 ω = f(dz + μdz̄) 构造 T³ 上的闭形式 Ω = ω - h·dl 与欧氏度量 ΩΩ̄ + dl·dl，
并给出小分母斜率上的反例族及其 L2 障碍。
"""
import itertools
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import mpmath
import numpy as np

from src.config import CounterexampleConfig, MetricConfig
from src.error_handler import BeltramiBoundError, NumericalError, ValidationError, VanishingError
from src.foliation_ops import (
    FoliationParams, apply_dz, apply_dz_inverse, apply_dzbar, apply_u, lambda_mp, lambda_table,
)
from src.homotopy_solver import closedness_residual, rk4_step
from src.logger import get_logger
from src.models import (
    ClosedForm, ClosureSolution, CounterexampleFamily, Lemma3Solution, MetricReport, ObstructionReport,
)
from src.spectral_core import (
    TORUS3, FourierField, ModeIndex, extreme_modulus, multiply, norm, partial_derivative, reciprocal,
    sup_estimate,
)


DIOPHANTINE_EVIDENCE = "diophantine-evidence"
UNDERFLOW = 1e-300


@dataclass(frozen=True)
class LeafForm:
    """ω = f·(dz + μ dz̄)，z = x1 + i·x2"""
    f: FourierField
    mu: FourierField

    def __post_init__(self):
        self.f.check_compatible(self.mu)

    @property
    def g(self) -> FourierField:
        """dz̄ 的系数 μf"""
        return multiply(self.mu, self.f)

    def residual(self, params: FoliationParams) -> float:
        return closedness_residual(params, self.mu, self.f)


def _require_torus3(params: FoliationParams):
    if params.dimension != TORUS3:
        raise ValidationError("闭形式与欧氏度量只在 T³ 上定义")


def build_h(params: FoliationParams, leafform: LeafForm, config: Optional[MetricConfig] = None,
            classification: Optional[str] = None) -> ClosureSolution:
    """
    h = D_z⁻¹(∂f/∂x3)

    同时给出两式残差与放大系数 |k/λ_N|（只在 f 的支撑上取）。
    """
    _require_torus3(params)
    config = config or MetricConfig()
    logger = get_logger("metric_builder")
    f = leafform.f
    df3 = partial_derivative(f, 3)
    h = apply_dz_inverse(params, df3)

    residual1 = norm(df3 - apply_dz(params, h))
    residual2 = norm(partial_derivative(leafform.g, 3) - apply_dzbar(params, h))

    k = f.physical_modes[2]
    lam = np.abs(lambda_table(params, f))
    support = (f.coefficients != 0) & (k != 0) & (lam > 0)
    solution = ClosureSolution(h=h, residual1=residual1, residual2=residual2,
                               max_amplification=0.0, amplification_mode=None)
    if np.any(support):
        amplification = np.where(support, np.abs(k) / np.where(lam > 0, lam, 1.0), 0.0)
        position = np.unravel_index(np.argmax(amplification), amplification.shape)
        solution.max_amplification = float(amplification[position])
        solution.amplification_mode = ModeIndex(tuple(int(c) for c in f.physical_modes[(slice(None),) + position]))
        if solution.max_amplification > config.amplification_bound:
            message = (f"small denominators dominate: |k/λ_N| = {solution.max_amplification:.3e} "
                       f"于 N={solution.amplification_mode.components}")
            solution.warnings.append(message)
            logger.warning(message)

    if classification is not None and classification != DIOPHANTINE_EVIDENCE:
        message = f"斜率分类为 {classification}，D_z⁻¹ 可能不保持光滑性"
        solution.warnings.append(message)
        logger.warning(message)

    logger.debug(f"h 构造完成: 残差1={residual1:.3e}, 残差2={residual2:.3e}")
    return solution


def closed_form_components(params: FoliationParams, leafform: LeafForm,
                           h: FourierField) -> Tuple[FourierField, FourierField, FourierField]:
    """Ω = f dz + (μf) dz̄ - h dl 在 (dx1, dx2, dx3) 基下的分量"""
    a1, a2 = params.slopes
    f, g = leafform.f, leafform.g
    return (f + g - h * a1, (f - g) * 1j - h * a2, h)


def assemble_closed_form(params: FoliationParams, leafform: LeafForm, closure: ClosureSolution) -> ClosedForm:
    """组装 Ω 并谱计算 dΩ 的三个分量"""
    _require_torus3(params)
    components = closed_form_components(params, leafform, closure.h)
    differential = {}
    for i, j in itertools.combinations((1, 2, 3), 2):
        d_ij = partial_derivative(components[j - 1], i) - partial_derivative(components[i - 1], j)
        differential[f"{i}{j}"] = norm(d_ij)
    return ClosedForm(components=components, differential_norms=differential,
                      dform_residual=max(differential.values()))


def defect_image_identity(params: FoliationParams, leafform: LeafForm, closure: ClosureSolution) -> float:
    """
    D_z(∂3(μf) - D_z̄ h) 与 -∂3(D_z̄ f - D_z(μf)) 之差的 H0 范数

    当 h 满足第一式时两者恒等；f 满足叶上闭性时两者都为零。
    """
    g = leafform.g
    left = apply_dz(params, partial_derivative(g, 3) - apply_dzbar(params, closure.h))
    right = -partial_derivative(apply_dzbar(params, leafform.f) - apply_dz(params, g), 3)
    return norm(left - right)


def _grid_size(field: FourierField, requested: int) -> int:
    return max(requested, 2 * field.cutoff + 1)


def euclidean_metric(params: FoliationParams, leafform: LeafForm, closure: ClosureSolution,
                     config: Optional[MetricConfig] = None, flat_tol: float = 1e-6) -> MetricReport:
    """
    Re(Ω⊗Ω̄) + dl⊗dl 的 Gram 系数场及采样正定性

    Raises:
        NumericalError: 某个采样点的最小特征值不为正
    """
    _require_torus3(params)
    config = config or MetricConfig()
    logger = get_logger("metric_builder")
    a1, a2 = params.slopes
    a = np.array([a1, a2, -1.0])
    form = assemble_closed_form(params, leafform, closure)
    omega = form.components

    gram = {}
    for i, j in itertools.combinations_with_replacement(range(3), 2):
        product = multiply(omega[i], omega[j].conj())
        gram[f"g{i + 1}{j + 1}"] = (product + product.conj()) * 0.5 + float(a[i] * a[j])

    n = _grid_size(leafform.f, config.gram_grid)
    values = np.stack([c.grid_values(n) for c in omega], axis=-1)
    matrices = np.real(values[..., :, None] * np.conj(values[..., None, :])) + np.outer(a, a)
    eigenvalues = np.linalg.eigvalsh(matrices)[..., 0]
    position = np.unravel_index(np.argmin(eigenvalues), eigenvalues.shape)
    minimum = float(eigenvalues[position])
    location = [2 * np.pi * i / n for i in position]

    report = MetricReport(
        gram=gram, min_eigenvalue=minimum, min_location=location, grid_points=int(eigenvalues.size),
        positive_definite=minimum > 0.0, flat=form.dform_residual <= flat_tol,
        max_curvature=leafwise_curvature(params, leafform, n),
    )
    if not report.positive_definite:
        raise NumericalError(f"Gram 矩阵在 x={location} 处非正定 (最小特征值 {minimum:.3e})",
                             {"location": location, "min_eigenvalue": minimum})
    if not report.flat:
        logger.warning(f"dΩ 残差 {form.dform_residual:.3e} 超过 {flat_tol:.1e}，度量标记为非平坦")
    logger.info(f"欧氏度量: 最小特征值={minimum:.6f}, 采样点{report.grid_points}")
    return report


def leafwise_curvature(params: FoliationParams, leafform: LeafForm, n: Optional[int] = None) -> float:
    """
    叶上度量 |ω|² 的 Gauss 曲率上确界

    叶坐标 (u, v) 下 ω = A du + B dv，A = f(1+μ)，B = i·f(1-μ)；
    由 Cartan 结构方程 ω12 = P du + Q dv，P = -Re(Ā·D)/det，Q = -Re(B̄·D)/det，
    D = ∂uB - ∂vA，det = Im(Ā·B)，K = -(∂uQ - ∂vP)/det。
    """
    _require_torus3(params)
    a1, a2 = params.slopes
    f, g = leafform.f, leafform.g
    n = n or 4 * f.cutoff + 2

    def du(x):
        return partial_derivative(x, 1) + partial_derivative(x, 3) * a1

    def dv(x):
        return partial_derivative(x, 2) + partial_derivative(x, 3) * a2

    A = f + g
    B = (f - g) * 1j
    D = du(B) - dv(A)
    on_grid = lambda x: x.grid_values(n)
    A_, B_, D_ = on_grid(A), on_grid(B), on_grid(D)
    Au, Av, Bu, Bv = on_grid(du(A)), on_grid(dv(A)), on_grid(du(B)), on_grid(dv(B))
    Du, Dv = on_grid(du(D)), on_grid(dv(D))

    det = np.imag(np.conj(A_) * B_)
    if np.min(np.abs(det)) == 0.0:
        raise NumericalError("叶上度量退化 (Im(Ā·B) = 0)")
    det_u = np.imag(np.conj(Au) * B_ + np.conj(A_) * Bu)
    det_v = np.imag(np.conj(Av) * B_ + np.conj(A_) * Bv)
    p_num = -np.real(np.conj(A_) * D_)
    q_num = -np.real(np.conj(B_) * D_)
    p_v = (-np.real(np.conj(Av) * D_ + np.conj(A_) * Dv) * det - p_num * det_v) / det ** 2
    q_u = (-np.real(np.conj(Bu) * D_ + np.conj(B_) * Du) * det - q_num * det_u) / det ** 2
    curvature = -(q_u - p_v) / det
    return float(np.max(np.abs(curvature)))


# 反例族


def counterexample_family(params: FoliationParams, modes: Sequence[ModeIndex], t: float,
                          config: Optional[CounterexampleConfig] = None,
                          s_grid: Sequence[float] = (1.0, 2.0, 4.0, 6.0), prec: int = 256) -> CounterexampleFamily:
    """
    f(x,t) = 1 + t·Σ (λ_{N_j}/k_j) e^{i(N_j,x)}

    场以子环面格（各行为 N_j）表示；系数在扩展精度下计算后舍入，
    低于 1e-300 的模式丢弃并给出警告。
    """
    _require_torus3(params)
    config = config or CounterexampleConfig()
    logger = get_logger("metric_builder")
    if not modes:
        raise ValidationError("反例族需要至少一个模式")
    if abs(t) > 1:
        raise ValidationError(f"参数 t 必须满足 |t| <= 1，实际为 {t}")
    modes = [m if isinstance(m, ModeIndex) else ModeIndex(tuple(m)) for m in modes]
    for mode in modes:
        if mode.k == 0:
            raise ValidationError(f"模式 {mode.components} 的 k 分量为零")

    kept, coefficients, dropped, warnings = [], [], [], []
    with mpmath.workprec(prec):
        for mode in modes:
            value = lambda_mp(params, mode, prec) / mode.k
            if abs(value) < UNDERFLOW:
                dropped.append(mode)
                message = f"模式 {mode.components} 的系数 {mpmath.nstr(abs(value), 5)} 下溢，已丢弃"
                warnings.append(message)
                logger.warning(message)
                continue
            kept.append(mode)
            coefficients.append(complex(value))
    if not kept:
        raise ValidationError("所有模式的系数都下溢")

    lattice = np.array([m.components for m in kept], dtype=np.int64)
    cutoff = config.lift_cutoff
    units = [tuple(int(i == j) for i in range(len(kept))) for j in range(len(kept))]
    direction = FourierField.from_modes(TORUS3, cutoff, dict(zip(units, coefficients)), lattice)
    field = FourierField.constant(1.0, TORUS3, cutoff, lattice) + direction * t

    certificate = {
        f"s={s:g}": float(sum(float(m.norm) ** s * abs(t * c) for m, c in zip(kept, coefficients)))
        for s in s_grid
    }
    certificate["min_abs_lower_bound"] = 1.0 - abs(t) * sum(abs(c) for c in coefficients)

    family = CounterexampleFamily(field=field, direction=direction, t=t, modes=kept,
                                  coefficients=coefficients, smoothness_certificate=certificate,
                                  dropped=dropped, warnings=warnings)
    logger.info(f"反例族: {len(kept)}个模式, t={t}, min|f| >= {certificate['min_abs_lower_bound']:.6f}")
    return family


def linear_family(direction: FourierField) -> Callable[[float], Tuple[FourierField, FourierField]]:
    """t -> (1 + t·direction, direction)"""
    one = FourierField.constant(1.0, direction.dimension, direction.cutoff, direction.lattice)
    return lambda t: (one + direction * t, direction)


def lemma3_solve_nu(params: FoliationParams, family: Callable[[float], Tuple[FourierField, FourierField]],
                    t_final: float, steps: int = 20, vanish_guard: float = 1e-3) -> Lemma3Solution:
    """
    定步长 RK4 求解 ν̇ = (U⁻¹ḟ - νḟ)/f，ν(·,0) = 0

    除以 f 在过采样网格上逐点进行。

    Raises:
        VanishingError: min|f| 低于 vanish_guard
        BeltramiBoundError: sup|ν| >= 1
    """
    logger = get_logger("metric_builder")
    if steps < 1:
        raise ValidationError(f"步数必须为正: {steps}")
    f0, _ = family(0.0)
    if norm(f0 - 1.0) > 1e-14:
        raise ValidationError("族必须满足 f(·,0) ≡ 1")

    def guarded(t: float):
        f, f_dot = family(t)
        (min_abs, location), _ = extreme_modulus(f)
        if min_abs < vanish_guard:
            raise VanishingError(f"possible zero of f: min|f| = {min_abs:.3e} 于 t = {t:.6f}",
                                 {"x": location, "t": t, "min_abs_f": min_abs})
        return f, f_dot, min_abs

    def rhs(t: float, nu: FourierField) -> FourierField:
        f, f_dot, _ = guarded(t)
        numerator = apply_u(params, f_dot, "inverse") - multiply(nu, f_dot)
        return multiply(numerator, reciprocal(f))

    nu = FourierField.zeros(f0.dimension, f0.cutoff, f0.lattice)
    h = t_final / steps
    solution = Lemma3Solution(times=[0.0], nus=[nu], sup_nu=[0.0],
                              residuals=[closedness_residual(params, nu, f0)], min_abs_f=[guarded(0.0)[2]])
    for step in range(1, steps + 1):
        t = step * h
        nu = rk4_step(rhs, (step - 1) * h, nu, h)
        f, _, min_abs = guarded(t)
        sup_nu = sup_estimate(nu)
        if sup_nu >= 1.0:
            raise BeltramiBoundError(f"t too large for almost-complex structure: sup|ν| = {sup_nu:.6f} 于 t = {t:.6f}",
                                     {"t": t, "sup_nu": sup_nu})
        solution.times.append(t)
        solution.nus.append(nu)
        solution.sup_nu.append(sup_nu)
        solution.residuals.append(closedness_residual(params, nu, f))
        solution.min_abs_f.append(min_abs)
    logger.info(f"ν 求解完成: t={t_final}, sup|ν|={solution.sup_nu[-1]:.3e}, 残差={solution.residuals[-1]:.3e}")
    return solution


def obstruction_detect(params: FoliationParams, f: FourierField, modes: Sequence[ModeIndex],
                       t: Optional[float] = None, prec: int = 256) -> ObstructionReport:
    """
    强制系数 h_{N_j} = (i·k_j/λ_{N_j})·c_{N_j} 与部分 L2 质量

    模长全为零时判定为平凡；模长在 1e-10 内恒定时部分和线性发散，判定为有障碍。
    """
    _require_torus3(params)
    modes = [m if isinstance(m, ModeIndex) else ModeIndex(tuple(m)) for m in modes]
    forced = []
    with mpmath.workprec(prec):
        for mode in modes:
            c = f.physical_coefficient(mode)
            lam = lambda_mp(params, mode, prec)
            forced.append(complex(mpmath.mpc(0, mode.k) / lam * mpmath.mpc(c.real, c.imag)) if lam != 0 else 0j)
    magnitudes = [abs(value) for value in forced]
    partial = np.cumsum(np.square(magnitudes)).tolist()

    if all(value <= 1e-14 for value in magnitudes):
        verdict = "unobstructed (trivial)"
    elif max(magnitudes) - min(magnitudes) <= 1e-10:
        verdict = "obstructed"
    else:
        verdict = "unobstructed"
    get_logger("metric_builder").info(f"障碍判定: {verdict}, |h_N| = {[f'{m:.6g}' for m in magnitudes]}")
    return ObstructionReport(modes=modes, forced=forced, magnitudes=magnitudes, partial_l2_mass=partial,
                             verdict=verdict, t=t)
