"""
叶状结构微分算子模块

l(x) = a1·x1 + a2·x2 - x3 的水平集给出 T³ 上的线性叶状结构。
D_z, D_z̄ 以 e^{i(N,x)} 为公共特征函数，特征值
    λ_N = (β_N + iα_N)/2,  λ'_N = -conj(λ_N),
其中 α_N = p + k·a1, β_N = m + k·a2 为叶上频率。T² 模式取 α = n1, β = n2。
"""
import math
import re
from contextlib import contextmanager
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import mpmath
import numpy as np

from src.error_handler import DomainError, FieldMismatchError, ValidationError
from src.logger import get_logger
from src.models import DensityReport
from src.spectral_core import (
    TORUS2, TORUS3, FourierField, ModeIndex, average, canonical_order_key,
    dimension_of, mode_grid, norm,
)


Slope = Union[float, Fraction]

SYMBOL_TAGS = ("Dz", "Dzbar", "U", "Uinv", "Dzinv", "ddx3", "custom")

_LIOUVILLE = re.compile(r"^liouville\((\d+)\)$")
_RATIONAL = re.compile(r"^([+-]?\d+)\s*/\s*(\d+)$")
_INTEGER = re.compile(r"^[+-]?\d+$")

logger = get_logger("foliation_ops")


def liouville_sum(terms: int) -> Fraction:
    """截断刘维尔和 Σ_{j<=terms} 2^{-j!}，精确二进有理数"""
    if terms < 1:
        raise ValidationError(f"liouville(k) 需要 k >= 1，实际为 {terms}")
    return sum((Fraction(1, 2 ** math.factorial(j)) for j in range(1, terms + 1)), Fraction(0))


NAMED_SLOPES = {
    "sqrt2": math.sqrt(2.0),
    "sqrt3": math.sqrt(3.0),
    "golden": (1.0 + math.sqrt(5.0)) / 2.0,
}


def parse_slope(text: Union[str, int, float, Fraction]) -> Slope:
    """
    解析斜率输入

    支持十进制小数（64位浮点）、整数与 p/q（精确有理数）、
    命名常数 sqrt2, sqrt3, golden 以及 liouville(k)（精确二进有理数）。
    """
    if isinstance(text, Fraction):
        return text
    if isinstance(text, bool):
        raise ValidationError(f"无法解析斜率: {text!r}")
    if isinstance(text, int):
        return Fraction(text)
    if isinstance(text, float):
        if not math.isfinite(text):
            raise ValidationError(f"斜率必须是有限数: {text}")
        return text

    value = str(text).strip().lower()
    if value in NAMED_SLOPES:
        return NAMED_SLOPES[value]
    match = _LIOUVILLE.match(value)
    if match:
        return liouville_sum(int(match.group(1)))
    match = _RATIONAL.match(value)
    if match:
        denominator = int(match.group(2))
        if denominator == 0:
            raise ValidationError(f"斜率分母为零: {text}")
        return Fraction(int(match.group(1)), denominator)
    if _INTEGER.match(value):
        return Fraction(int(value))
    try:
        number = float(value)
    except ValueError:
        raise ValidationError(f"无法解析斜率: {text!r}")
    if not math.isfinite(number):
        raise ValidationError(f"斜率必须是有限数: {text}")
    return number


@dataclass(frozen=True)
class FoliationParams:
    """斜率对 (a1, a2)；torus2 模式下斜率不参与计算"""
    a1: Slope = 0.0
    a2: Slope = 0.0
    dimension: str = TORUS3
    label: str = ""

    def __post_init__(self):
        dimension_of(self.dimension)
        for name in ("a1", "a2"):
            object.__setattr__(self, name, parse_slope(getattr(self, name)))

    @classmethod
    def torus2(cls) -> 'FoliationParams':
        return cls(Fraction(0), Fraction(0), TORUS2, "torus2")

    @classmethod
    def from_strings(cls, a1: str, a2: str) -> 'FoliationParams':
        return cls(parse_slope(a1), parse_slope(a2), TORUS3, f"({a1}, {a2})")

    @property
    def is_exact(self) -> bool:
        return self.dimension == TORUS2 or (isinstance(self.a1, Fraction) and isinstance(self.a2, Fraction))

    @property
    def slopes(self) -> Tuple[float, float]:
        return float(self.a1), float(self.a2)

    def to_dict(self) -> dict:
        def _render(value):
            if isinstance(value, Fraction):
                return str(value) if value.denominator < 10 ** 12 else f"{float(value)!r} (exact dyadic)"
            return repr(value)
        return {
            "a1": _render(self.a1),
            "a2": _render(self.a2),
            "exact": self.is_exact,
            "dimension": self.dimension,
            "label": self.label,
        }


def leaf_frequencies_exact(params: FoliationParams, mode: Sequence[int]):
    """单个物理模式的叶上频率 (α, β)，精确斜率时为 Fraction"""
    mode = tuple(int(c) for c in mode)
    if params.dimension == TORUS2:
        if len(mode) != 2:
            raise FieldMismatchError(f"T² 模式需要2个分量: {mode}")
        return Fraction(mode[0]), Fraction(mode[1])
    if len(mode) != 3:
        raise FieldMismatchError(f"T³ 模式需要3个分量: {mode}")
    p, m, k = mode
    return p + k * params.a1, m + k * params.a2


@lru_cache(maxsize=128)
def _frequency_table(params: FoliationParams, exact: bool, cutoff: int, rank: int, lattice_key):
    d = dimension_of(params.dimension)
    rows = [tuple(int(i == j) for i in range(d)) for j in range(d)] if lattice_key is None else lattice_key
    if len(rows) != rank:
        raise FieldMismatchError("子环面格的行数与存储秩不符")
    basis = [leaf_frequencies_exact(params, row) for row in rows]
    grid = mode_grid(cutoff, rank)

    if exact:
        g = grid.astype(object)
        alpha = sum((g[j] * basis[j][0] for j in range(rank)), 0)
        beta = sum((g[j] * basis[j][1] for j in range(rank)), 0)
        zero = np.array((alpha == 0) & (beta == 0), dtype=bool)
        alpha, beta = alpha.astype(float), beta.astype(float)
    else:
        alpha = np.tensordot(np.array([float(b[0]) for b in basis]), grid, axes=(0, 0))
        beta = np.tensordot(np.array([float(b[1]) for b in basis]), grid, axes=(0, 0))
        zero = (alpha == 0.0) & (beta == 0.0)

    for array in (alpha, beta, zero):
        array.setflags(write=False)
    return alpha, beta, zero


def frequency_table(params: FoliationParams, field: FourierField):
    """与场存储布局一致的 (α, β, 精确零掩码)"""
    if params.dimension != field.dimension:
        raise FieldMismatchError(f"参数维度 {params.dimension} 与场维度 {field.dimension} 不符")
    return _frequency_table(params, params.is_exact, field.cutoff, field.rank, field.lattice_key)


def lambda_table(params: FoliationParams, field: FourierField) -> np.ndarray:
    alpha, beta, _ = frequency_table(params, field)
    return 0.5 * (beta + 1j * alpha)


def lambda_of(params: FoliationParams, mode: Union[ModeIndex, Sequence[int]]) -> complex:
    """λ_N = (i/2)(α - iβ) = (β + iα)/2"""
    components = mode.components if isinstance(mode, ModeIndex) else tuple(mode)
    alpha, beta = leaf_frequencies_exact(params, components)
    return complex(float(beta), float(alpha)) / 2


def lambda_prime_of(params: FoliationParams, mode: Union[ModeIndex, Sequence[int]]) -> complex:
    """D_z̄ 的特征值 λ'_N = -conj(λ_N)"""
    return -lambda_of(params, mode).conjugate()


def lambda_mp(params: FoliationParams, mode: Union[ModeIndex, Sequence[int]], prec: int = 256):
    """扩展精度下的 λ_N（mpmath.mpc）"""
    components = mode.components if isinstance(mode, ModeIndex) else tuple(mode)
    alpha, beta = leaf_frequencies_exact(params, components)
    with mpmath.workprec(prec):
        def _mp(value):
            if isinstance(value, Fraction):
                return mpmath.mpf(value.numerator) / mpmath.mpf(value.denominator)
            return mpmath.mpf(value)
        return mpmath.mpc(_mp(beta), _mp(alpha)) / 2


def is_exact_zero(params: FoliationParams, mode: Union[ModeIndex, Sequence[int]]) -> bool:
    components = mode.components if isinstance(mode, ModeIndex) else tuple(mode)
    alpha, beta = leaf_frequencies_exact(params, components)
    return alpha == 0 and beta == 0


_FAULTS: Dict[str, Callable[[np.ndarray, FourierField], np.ndarray]] = {}


@contextmanager
def symbol_fault(tag: str, transform: Callable[[np.ndarray, FourierField], np.ndarray]):
    """故障注入钩子：在上下文内替换某个符号表（仅供 verify 自检使用）"""
    if tag not in SYMBOL_TAGS:
        raise ValidationError(f"未知符号标签: {tag}")
    previous = _FAULTS.get(tag)
    _FAULTS[tag] = transform
    logger.warning(f"符号 {tag} 已注入故障")
    try:
        yield
    finally:
        if previous is None:
            _FAULTS.pop(tag, None)
        else:
            _FAULTS[tag] = previous


class MultiplierSymbol:
    """傅里叶基下的对角算子"""

    def __init__(self, tag: str, params: FoliationParams,
                 function: Optional[Callable[[Tuple[int, ...]], complex]] = None):
        if tag not in SYMBOL_TAGS:
            raise ValidationError(f"未知符号标签: {tag}")
        if tag == "custom" and function is None:
            raise ValidationError("custom 符号需要提供函数")
        self.tag = tag
        self.params = params
        self.function = function

    def table(self, field: FourierField) -> np.ndarray:
        """符号在场存储布局上的取值"""
        lam = lambda_table(self.params, field)
        _, _, zero = frequency_table(self.params, field)
        if self.tag == "Dz":
            values = lam
        elif self.tag == "Dzbar":
            values = -np.conj(lam)
        elif self.tag in ("U", "Uinv"):
            with np.errstate(divide='ignore', invalid='ignore'):
                u = np.where(zero, 1.0 + 0j, -lam / np.conj(lam))
            values = u if self.tag == "U" else np.conj(u)
        elif self.tag == "Dzinv":
            with np.errstate(divide='ignore', invalid='ignore'):
                values = np.where(zero, 0j, 1.0 / lam)
        elif self.tag == "ddx3":
            values = 1j * field.physical_modes[2]
        else:
            modes = field.physical_modes.reshape(field.physical_modes.shape[0], -1).T
            values = np.array([complex(self.function(tuple(int(c) for c in N))) for N in modes])
            values = values.reshape(field.coefficients.shape)
        if self.tag in _FAULTS:
            values = _FAULTS[self.tag](np.array(values), field)
        return values

    def __call__(self, mode: Union[ModeIndex, Sequence[int]]) -> complex:
        components = mode.components if isinstance(mode, ModeIndex) else tuple(mode)
        unit = FourierField.single_mode(components, 1.0)
        return complex(self.table(unit)[tuple(c + unit.cutoff for c in components)])

    def apply(self, field: FourierField) -> FourierField:
        return field.like(field.coefficients * self.table(field))

    def __repr__(self):
        return f"MultiplierSymbol({self.tag}, {self.params.label or self.params.slopes})"


def apply_dz(params: FoliationParams, a: FourierField) -> FourierField:
    """D_z：c_N -> λ_N c_N"""
    return MultiplierSymbol("Dz", params).apply(a)


def apply_dzbar(params: FoliationParams, a: FourierField) -> FourierField:
    """D_z̄：c_N -> λ'_N c_N"""
    return MultiplierSymbol("Dzbar", params).apply(a)


def apply_u(params: FoliationParams, a: FourierField, direction: str = "forward") -> FourierField:
    """
    酉算子 U，u_N = -λ_N/conj(λ_N)，λ_N = 0 时取 1

    Args:
        direction: forward 或 inverse
    """
    if direction not in ("forward", "inverse"):
        raise ValidationError(f"未知方向: {direction}")
    return MultiplierSymbol("U" if direction == "forward" else "Uinv", params).apply(a)


def unit_choice_exercised(params: FoliationParams, a: FourierField) -> bool:
    """截断范围内是否存在 N ≠ 0 且 λ_N = 0，从而用到了 u_N = 1 的任意约定"""
    _, _, zero = frequency_table(params, a)
    return bool(np.any(zero & (a.mode_norms != 0)))


def apply_dz_inverse(params: FoliationParams, a: FourierField, tol: float = 1e-12) -> FourierField:
    """零平均函数上的 D_z⁻¹：c_N -> c_N/λ_N"""
    mean = average(a)
    if abs(mean) > tol * max(1.0, norm(a)):
        raise DomainError("not in the domain of D_z⁻¹: 平均值非零", {"average": [mean.real, mean.imag]})
    _, _, zero = frequency_table(params, a)
    offending = zero & (a.mode_norms != 0) & (a.coefficients != 0)
    if np.any(offending):
        position = tuple(int(i) for i in np.argwhere(offending)[0])
        mode = a.physical_modes[(slice(None),) + position]
        raise DomainError("leaves not dense: λ_N = 0 出现在 N ≠ 0", {"mode": [int(c) for c in mode]})
    values = MultiplierSymbol("Dzinv", params).table(a)
    coeffs = a.coefficients * values
    coeffs[a.mode_norms == 0] = 0
    return a.like(coeffs)


def density_check(params: FoliationParams, cutoff: int) -> DensityReport:
    """
    在 0 < max|N_i| <= M 上扫描 |λ_N|

    精确零点与最小值的代表模式都按 (l1, 规范符号, 字典序) 选取。
    """
    if cutoff < 1:
        raise ValidationError(f"截断阶数必须不小于1: {cutoff}")
    layout = FourierField.zeros(params.dimension, cutoff)
    modulus = np.abs(lambda_table(params, layout))
    _, _, zero = frequency_table(params, layout)
    nonzero_mode = layout.mode_norms != 0
    modes = layout.physical_modes

    def _pick(mask: np.ndarray) -> ModeIndex:
        candidates = [tuple(int(c) for c in modes[(slice(None),) + tuple(pos)]) for pos in np.argwhere(mask)]
        return ModeIndex(min(candidates, key=canonical_order_key))

    exact_zero = zero & nonzero_mode
    if np.any(exact_zero):
        witness = _pick(exact_zero)
        report = DensityReport(
            cutoff=cutoff, min_abs_lambda=0.0, argmin=witness, no_exact_zero=False,
            zero_witness=witness, exact_input=params.is_exact,
        )
        logger.warning(f"叶不稠密: λ_N = 0 于 N={witness.components}")
        return report

    masked = np.where(nonzero_mode, modulus, np.inf)
    minimum = float(masked.min())
    report = DensityReport(
        cutoff=cutoff, min_abs_lambda=minimum, argmin=_pick(masked == minimum),
        no_exact_zero=True, zero_witness=None, exact_input=params.is_exact,
    )
    logger.debug(f"稠密性检查: M={cutoff}, min|λ|={minimum:.3e}, argmin={report.argmin.components}")
    return report
