"""
谱核心模块

T³ = R³/2πZ³（以及T²）上光滑复值函数的截断傅里叶表示。
系数稠密存放在 max|N_i| <= M 的立方体上，数组下标顺序即 (p,m,k) 的字典序。
范数与扫描中的 |N| 一律取 l1 范数；测度为归一化Haar测度，e^{i(N,x)} 为单位向量。

可选的整数矩阵 lattice（J×d）描述子环面上的函数：存储下标 n 对应物理模式 n·lattice，
即沿 x -> (N_j·x)_j 的拉回。乘积、导数、对角乘子都与拉回交换，
因此指标极大的模式（如 k = 2^24）也能以 J 维小数组精确表示。
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Dict, Iterator, Optional, Sequence, Tuple, Union

import numpy as np

from src.error_handler import FieldMismatchError, ValidationError


TORUS3 = "torus3"
TORUS2 = "torus2"
DIMENSIONS = {TORUS3: 3, TORUS2: 2}
EVAL_CHUNK = 4096

Number = Union[int, float, complex]


def dimension_of(tag: str) -> int:
    """维度标签对应的环面维数"""
    try:
        return DIMENSIONS[tag]
    except KeyError:
        raise ValidationError(f"未知维度标签: {tag}")


def tag_of(dim: int) -> str:
    for tag, value in DIMENSIONS.items():
        if value == dim:
            return tag
    raise ValidationError(f"不支持的维数: {dim}")


def canonical_sign(components: Sequence[int]) -> Tuple[int, ...]:
    """取 ±N 中第一个非零分量为正的代表元"""
    components = tuple(int(c) for c in components)
    for c in components:
        if c != 0:
            return components if c > 0 else tuple(-x for x in components)
    return components


def canonical_order_key(components: Sequence[int]) -> Tuple:
    """最小l1范数优先，其次规范符号，最后字典序"""
    components = tuple(int(c) for c in components)
    return (sum(abs(c) for c in components), components != canonical_sign(components), components)


@dataclass(frozen=True, order=True)
class ModeIndex:
    """傅里叶模式 N=(p,m,k)（T² 上为 (n1,n2)）"""
    components: Tuple[int, ...]

    def __post_init__(self):
        components = tuple(int(c) for c in self.components)
        if len(components) not in (2, 3):
            raise ValidationError(f"模式必须有2或3个分量: {self.components}")
        object.__setattr__(self, 'components', components)

    @classmethod
    def of(cls, *components: int) -> 'ModeIndex':
        return cls(tuple(components))

    @property
    def dimension(self) -> str:
        return tag_of(len(self.components))

    @property
    def norm(self) -> int:
        """l1 范数 |N| = |p| + |m| + |k|"""
        return sum(abs(c) for c in self.components)

    @property
    def p(self) -> int:
        return self.components[0]

    @property
    def m(self) -> int:
        return self.components[1]

    @property
    def k(self) -> int:
        return self.components[2] if len(self.components) == 3 else 0

    def canonical(self) -> 'ModeIndex':
        return ModeIndex(canonical_sign(self.components))

    def __neg__(self) -> 'ModeIndex':
        return ModeIndex(tuple(-c for c in self.components))

    def as_list(self):
        return list(self.components)


@dataclass(frozen=True)
class NormSpec:
    """范数规格：sobolev(j) 或 analytic(r)"""
    kind: str
    order: int = 0
    radius: float = 0.0

    def __post_init__(self):
        if self.kind == "sobolev":
            if int(self.order) != self.order or self.order < 0:
                raise ValidationError(f"Sobolev阶数必须为非负整数: {self.order}")
        elif self.kind == "analytic":
            if not self.radius > 0:
                raise ValidationError(f"解析半径必须为正数: {self.radius}")
        else:
            raise ValidationError(f"未知范数类型: {self.kind}")

    @classmethod
    def sobolev(cls, j: int) -> 'NormSpec':
        return cls("sobolev", order=int(j))

    @classmethod
    def analytic(cls, r: float) -> 'NormSpec':
        return cls("analytic", radius=float(r))

    def weights(self, l1: np.ndarray) -> np.ndarray:
        """每个模式的权重；l1 为 |N| 数组"""
        l1 = np.asarray(l1, dtype=float)
        with np.errstate(over='ignore'):
            if self.kind == "sobolev":
                return (1.0 + l1 ** 2) ** self.order
            return np.exp(l1 * self.radius)

    @property
    def label(self) -> str:
        if self.kind == "sobolev":
            return f"H{self.order}"
        return f"analytic(r={self.radius:g})"


@lru_cache(maxsize=64)
def mode_grid(cutoff: int, rank: int) -> np.ndarray:
    """形状为 (rank, 2M+1, ..., 2M+1) 的整数模式网格"""
    axis = np.arange(-cutoff, cutoff + 1)
    grid = np.stack(np.meshgrid(*([axis] * rank), indexing='ij'))
    grid.setflags(write=False)
    return grid


def _lattice_key(lattice: Optional[np.ndarray]):
    if lattice is None:
        return None
    return tuple(tuple(int(v) for v in row) for row in lattice)


@lru_cache(maxsize=64)
def _physical_modes(cutoff: int, rank: int, lattice_key) -> np.ndarray:
    grid = mode_grid(cutoff, rank)
    if lattice_key is None:
        return grid
    lattice = np.array(lattice_key, dtype=np.int64)
    modes = np.einsum('jd,j...->d...', lattice, grid.astype(np.int64))
    flat = modes.reshape(modes.shape[0], -1).T
    if len(np.unique(flat, axis=0)) != flat.shape[0]:
        raise FieldMismatchError("子环面格在截断范围内不是单射，物理模式发生重叠")
    modes.setflags(write=False)
    return modes


def _axis_positions(cutoff: int, n: int) -> np.ndarray:
    return np.arange(-cutoff, cutoff + 1) % n


@dataclass(frozen=True, eq=False)
class FourierField:
    """
    截断傅里叶级数 Σ c_N e^{i(N,x)}

    coefficients 的每个轴对应一个存储下标分量，偏移 M；
    dimension 为物理环面标签；lattice 为可选的子环面格。
    """
    dimension: str
    coefficients: np.ndarray
    lattice: Optional[np.ndarray] = None

    def __post_init__(self):
        d = dimension_of(self.dimension)
        coeffs = np.array(self.coefficients, dtype=complex)
        lattice = self.lattice
        if lattice is not None:
            lattice = np.array(lattice, dtype=np.int64)
            if lattice.ndim != 2 or lattice.shape[1] != d:
                raise FieldMismatchError(f"子环面格形状必须为 (J, {d})，实际为 {lattice.shape}")
            lattice.setflags(write=False)
        rank = d if lattice is None else lattice.shape[0]
        if coeffs.ndim != rank or len(set(coeffs.shape)) != 1 or coeffs.shape[0] % 2 == 0:
            raise FieldMismatchError(f"系数数组形状 {coeffs.shape} 与秩 {rank} 不符")
        coeffs.setflags(write=False)
        object.__setattr__(self, 'coefficients', coeffs)
        object.__setattr__(self, 'lattice', lattice)

    # 构造

    @classmethod
    def zeros(cls, dimension: str, cutoff: int, lattice=None) -> 'FourierField':
        rank = dimension_of(dimension) if lattice is None else np.asarray(lattice).shape[0]
        return cls(dimension, np.zeros((2 * cutoff + 1,) * rank, dtype=complex), lattice)

    @classmethod
    def constant(cls, value: Number, dimension: str, cutoff: int, lattice=None) -> 'FourierField':
        field = cls.zeros(dimension, cutoff, lattice)
        coeffs = np.array(field.coefficients)
        coeffs[(cutoff,) * coeffs.ndim] = value
        return cls(dimension, coeffs, lattice)

    @classmethod
    def from_modes(cls, dimension: str, cutoff: int, modes: Dict[Tuple[int, ...], Number],
                   lattice=None) -> 'FourierField':
        """由 {存储下标: 系数} 构造；超出截断的模式报错"""
        field = cls.zeros(dimension, cutoff, lattice)
        coeffs = np.array(field.coefficients)
        for index, value in modes.items():
            index = tuple(int(i) for i in index)
            if len(index) != coeffs.ndim:
                raise FieldMismatchError(f"模式 {index} 的分量个数与秩 {coeffs.ndim} 不符")
            if max(abs(i) for i in index) > cutoff:
                raise FieldMismatchError(f"模式 {index} 超出截断阶数 {cutoff}")
            coeffs[tuple(i + cutoff for i in index)] += value
        return cls(dimension, coeffs, lattice)

    @classmethod
    def single_mode(cls, mode: Union[ModeIndex, Sequence[int]], amplitude: Number = 1.0,
                    cutoff: Optional[int] = None) -> 'FourierField':
        components = mode.components if isinstance(mode, ModeIndex) else tuple(mode)
        if cutoff is None:
            cutoff = max(1, max(abs(c) for c in components))
        return cls.from_modes(tag_of(len(components)), cutoff, {components: amplitude})

    @classmethod
    def random(cls, rng: np.random.Generator, dimension: str, cutoff: int, scale: float = 1.0,
               decay: float = 1.0, real: bool = False) -> 'FourierField':
        """系数按 e^{-decay·|N|} 衰减的随机光滑场"""
        rank = dimension_of(dimension)
        shape = (2 * cutoff + 1,) * rank
        raw = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        l1 = np.abs(mode_grid(cutoff, rank)).sum(axis=0)
        field = cls(dimension, scale * raw * np.exp(-decay * l1))
        if real:
            field = (field + field.conj()) * 0.5
        return field

    # 基本属性

    @property
    def cutoff(self) -> int:
        return (self.coefficients.shape[0] - 1) // 2

    @property
    def rank(self) -> int:
        return self.coefficients.ndim

    @property
    def lattice_key(self):
        return _lattice_key(self.lattice)

    @cached_property
    def physical_modes(self) -> np.ndarray:
        """形状 (d, 2M+1, ...) 的物理模式数组"""
        return _physical_modes(self.cutoff, self.rank, self.lattice_key)

    @cached_property
    def mode_norms(self) -> np.ndarray:
        return np.abs(self.physical_modes).sum(axis=0)

    def like(self, coefficients: np.ndarray) -> 'FourierField':
        """同维度、同子环面格的新场"""
        return FourierField(self.dimension, coefficients, self.lattice)

    def is_compatible(self, other: 'FourierField') -> bool:
        return (self.dimension == other.dimension and self.cutoff == other.cutoff
                and self.rank == other.rank and self.lattice_key == other.lattice_key)

    def check_compatible(self, other: 'FourierField'):
        if not isinstance(other, FourierField):
            raise FieldMismatchError(f"期望FourierField，实际为 {type(other).__name__}")
        if self.dimension != other.dimension:
            raise FieldMismatchError(f"维度不一致: {self.dimension} vs {other.dimension}")
        if self.cutoff != other.cutoff:
            raise FieldMismatchError(f"截断阶数不一致: {self.cutoff} vs {other.cutoff}")
        if self.lattice_key != other.lattice_key:
            raise FieldMismatchError("子环面格不一致")

    def coefficient(self, index: Union[ModeIndex, Sequence[int]]) -> complex:
        """存储下标处的系数，截断外为0"""
        index = index.components if isinstance(index, ModeIndex) else tuple(index)
        if len(index) != self.rank or max(abs(i) for i in index) > self.cutoff:
            return 0j
        return complex(self.coefficients[tuple(i + self.cutoff for i in index)])

    def physical_coefficient(self, mode: Union[ModeIndex, Sequence[int]]) -> complex:
        """物理模式 N 处的系数"""
        target = np.array(mode.components if isinstance(mode, ModeIndex) else mode, dtype=np.int64)
        if self.lattice is None:
            return self.coefficient(tuple(target))
        flat = self.physical_modes.reshape(len(target), -1).T
        hits = np.flatnonzero(np.all(flat == target, axis=1))
        if hits.size == 0:
            return 0j
        return complex(self.coefficients.reshape(-1)[hits[0]])

    def nonzero_modes(self) -> Iterator[Tuple[Tuple[int, ...], complex]]:
        """按字典序遍历非零系数（存储下标）"""
        M = self.cutoff
        for position in zip(*np.nonzero(self.coefficients)):
            yield tuple(int(i) - M for i in position), complex(self.coefficients[position])

    # 代数运算

    def conj(self) -> 'FourierField':
        """共轭场，系数为 conj(c(-N))"""
        flipped = self.coefficients[(slice(None, None, -1),) * self.rank]
        return self.like(np.conj(flipped))

    def __add__(self, other):
        if isinstance(other, FourierField):
            self.check_compatible(other)
            return self.like(self.coefficients + other.coefficients)
        if np.isscalar(other):
            return self + FourierField.constant(other, self.dimension, self.cutoff, self.lattice)
        return NotImplemented

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, FourierField) or np.isscalar(other):
            return self + (-other)
        return NotImplemented

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return self.like(-self.coefficients)

    def __mul__(self, other):
        if np.isscalar(other):
            return self.like(self.coefficients * other)
        if isinstance(other, FourierField):
            raise TypeError("场与场的乘积请使用 multiply()")
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if np.isscalar(other):
            return self.like(self.coefficients / other)
        return NotImplemented

    def with_cutoff(self, cutoff: int) -> 'FourierField':
        """截断或补零到新的阶数"""
        M = self.cutoff
        if cutoff == M:
            return self
        target = FourierField.zeros(self.dimension, cutoff, self.lattice)
        coeffs = np.array(target.coefficients)
        low = min(M, cutoff)
        src = tuple(slice(M - low, M + low + 1) for _ in range(self.rank))
        dst = tuple(slice(cutoff - low, cutoff + low + 1) for _ in range(self.rank))
        coeffs[dst] = self.coefficients[src]
        return self.like(coeffs)

    def is_real(self, tol: float = 1e-12) -> bool:
        return float(np.max(np.abs(self.coefficients - self.conj().coefficients), initial=0.0)) <= tol

    # 求值

    def grid_values(self, n: int) -> np.ndarray:
        """在每轴 n 个等距点 x_j = 2πj/n 上求值（存储环面坐标）"""
        M = self.cutoff
        if n < 2 * M + 1:
            raise ValidationError(f"网格点数 {n} 小于 2M+1={2 * M + 1}")
        spectrum = np.zeros((n,) * self.rank, dtype=complex)
        spectrum[np.ix_(*[_axis_positions(M, n)] * self.rank)] = self.coefficients
        return np.fft.ifftn(spectrum) * n ** self.rank

    def from_grid(self, values: np.ndarray, cutoff: Optional[int] = None) -> 'FourierField':
        """网格值的正变换，截断到 cutoff（默认为本场阶数）"""
        cutoff = self.cutoff if cutoff is None else cutoff
        return grid_to_field(values, self.dimension, cutoff, self.lattice)

    def evaluate(self, points: np.ndarray, max_workers: int = 1) -> np.ndarray:
        """
        在任意物理点上按字典序求和

        Args:
            points: 形状 (P, d) 的物理坐标
            max_workers: 分块并行的线程数，分块结果按块顺序合并

        Returns:
            形状 (P,) 的复数值
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        angles = points if self.lattice is None else points @ self.lattice.T.astype(float)
        entries = list(self.nonzero_modes())
        if not entries:
            return np.zeros(len(points), dtype=complex)
        modes = np.array([index for index, _ in entries], dtype=float)
        amplitudes = np.array([value for _, value in entries], dtype=complex)

        def _chunk(start: int) -> np.ndarray:
            block = angles[start:start + EVAL_CHUNK]
            return np.exp(1j * (block @ modes.T)) @ amplitudes

        starts = range(0, len(angles), EVAL_CHUNK)
        if max_workers > 1 and len(angles) > EVAL_CHUNK:
            with ThreadPoolExecutor(max_workers=max_workers) as executor:
                blocks = list(executor.map(_chunk, starts))
        else:
            blocks = [_chunk(s) for s in starts]
        return np.concatenate(blocks)


def grid_to_field(values: np.ndarray, dimension: str, cutoff: int, lattice=None) -> FourierField:
    """网格值的正变换 c_N = fftn(values)/n^d，截断到 cutoff"""
    values = np.asarray(values)
    n = values.shape[0]
    if n < 2 * cutoff + 1:
        raise ValidationError(f"网格点数 {n} 不足以表示截断阶数 {cutoff}")
    spectrum = np.fft.fftn(values) / n ** values.ndim
    coeffs = spectrum[np.ix_(*[_axis_positions(cutoff, n)] * values.ndim)]
    return FourierField(dimension, coeffs, lattice)


def multiply_with_spill(a: FourierField, b: FourierField) -> Tuple[FourierField, float]:
    """
    去混叠乘积及截断损失

    在每轴 4M+2 个点上做逐点乘积，精确得到 |N_i| <= 2M 的卷积，
    再截断回 M；返回被截掉部分的 H0 范数。
    """
    a.check_compatible(b)
    M = a.cutoff
    n = 4 * M + 2
    product = a.grid_values(n) * b.grid_values(n)
    full = grid_to_field(product, a.dimension, 2 * M, a.lattice)
    inner = full.coefficients[(slice(M, 3 * M + 1),) * a.rank]
    spill_sq = float(np.sum(np.abs(full.coefficients) ** 2) - np.sum(np.abs(inner) ** 2))
    return a.like(inner), float(np.sqrt(max(spill_sq, 0.0)))


def multiply(a: FourierField, b: FourierField) -> FourierField:
    """逐点乘积的系数（去混叠后截断到 M）"""
    return multiply_with_spill(a, b)[0]


def reciprocal(a: FourierField, oversample: int = 4) -> FourierField:
    """在过采样网格上逐点取倒数再截断；调用方负责保证 a 远离零"""
    n = max(4 * a.cutoff + 2, oversample * (2 * a.cutoff + 1))
    values = a.grid_values(n)
    return a.from_grid(1.0 / values)


def partial_derivative(a: FourierField, axis: int) -> FourierField:
    """∂/∂x_axis，模式 N 的系数乘以 i·N_axis"""
    d = dimension_of(a.dimension)
    if axis not in range(1, d + 1):
        raise ValidationError(f"坐标轴 {axis} 对 {a.dimension} 无效")
    return a.like(a.coefficients * (1j * a.physical_modes[axis - 1]))


def average(a: FourierField) -> complex:
    """N = 0 处的系数（归一化测度下的平均值）"""
    return complex(np.sum(a.coefficients[a.mode_norms == 0]))


def inner(a: FourierField, b: FourierField) -> complex:
    """H0 内积 Σ a_N conj(b_N)"""
    a.check_compatible(b)
    return complex(np.vdot(b.coefficients, a.coefficients))


def norm(a: FourierField, spec: Optional[NormSpec] = None) -> float:
    """sobolev(j) 或 analytic(r) 范数，|N| 取 l1"""
    spec = spec or NormSpec.sobolev(0)
    weights = spec.weights(a.mode_norms)
    power = np.abs(a.coefficients) ** 2
    with np.errstate(invalid='ignore', over='ignore'):
        total = np.sum(np.where(power > 0, weights * power, 0.0))
    return float(np.sqrt(total))


def sup_estimate(a: FourierField, oversample: int = 4) -> float:
    """
    过采样网格上 |a| 的最大值，为真上确界的下界

    子环面上的场在整个 T^J 上取样，T^J 包含其像集。
    """
    return extreme_modulus(a, oversample)[1][0]


def extreme_modulus(a: FourierField, oversample: int = 4):
    """
    返回 ((min|a|, 位置), (max|a|, 位置))，位置为存储环面坐标
    """
    if oversample < 2:
        raise ValidationError(f"oversample 必须不小于2，实际为 {oversample}")
    n = oversample * (2 * a.cutoff + 1)
    modulus = np.abs(a.grid_values(n))
    lo = np.unravel_index(np.argmin(modulus), modulus.shape)
    hi = np.unravel_index(np.argmax(modulus), modulus.shape)
    to_point = lambda idx: [2 * np.pi * i / n for i in idx]
    return (float(modulus[lo]), to_point(lo)), (float(modulus[hi]), to_point(hi))


def projective_distance(a: FourierField, b: FourierField) -> float:
    """min_c ||a - c b|| / ||a||"""
    a.check_compatible(b)
    na = norm(a)
    nb_sq = float(np.sum(np.abs(b.coefficients) ** 2))
    if na == 0.0:
        return 0.0 if nb_sq == 0.0 else 1.0
    if nb_sq == 0.0:
        return 1.0
    c = inner(a, b) / nb_sq
    return norm(a - b * c) / na


def field_to_dict(a: FourierField) -> dict:
    """序列化为 {"dim", "cutoff", "modes"}；子环面场额外带 "lattice" """
    data = {
        "dim": dimension_of(a.dimension),
        "cutoff": a.cutoff,
        "modes": [[*index, value.real, value.imag] for index, value in a.nonzero_modes()],
    }
    if a.lattice is not None:
        data["lattice"] = [[int(v) for v in row] for row in a.lattice]
    return data


def field_from_dict(data: dict) -> FourierField:
    """由交换格式构造场；格式错误时抛出 ValidationError 并指出字段"""
    for key in ("dim", "cutoff", "modes"):
        if key not in data:
            raise ValidationError(f"场数据缺少字段 '{key}'")
    dimension = tag_of(int(data["dim"]))
    cutoff = int(data["cutoff"])
    if cutoff < 1:
        raise ValidationError(f"字段 'cutoff' 必须为正整数: {data['cutoff']}")
    lattice = data.get("lattice")
    rank = dimension_of(dimension) if lattice is None else len(lattice)
    modes = {}
    for i, row in enumerate(data["modes"]):
        if len(row) != rank + 2:
            raise ValidationError(f"字段 'modes[{i}]' 应有 {rank + 2} 个数")
        index = tuple(int(v) for v in row[:rank])
        modes[index] = modes.get(index, 0) + complex(row[rank], row[rank + 1])
    return FourierField.from_modes(dimension, cutoff, modes, lattice)
