"""
叶图模块

在叶的万有覆盖上对 ω = f(dz + μdz̄) 做路径积分，得到展开映射 Ψ，Ψ(x⁰) = 0、dΨ = ω。
叶上点为 x = x⁰ + (u, v, a1·u + a2·v)，z = u + iv；场在叶上的限制可分离：
    f|leaf(u, v) = Σ c_N e^{i(N,x⁰)} e^{i(α_N u + β_N v)}。
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from src.config import ChartConfig
from src.error_handler import BeltramiBoundError, QuadratureError, ValidationError
from src.foliation_ops import FoliationParams, frequency_table
from src.homotopy_solver import closedness_residual
from src.logger import get_logger
from src.models import ChartSample
from src.spectral_core import TORUS3, FourierField, multiply, sup_estimate

COLUMN_BLOCK = 16


@dataclass(frozen=True)
class LeafPatch:
    """叶上以 x⁰ 为中心、半径 R 的正方形区域 [-R, R]²，每轴 resolution 个点"""
    base_point: Tuple[float, float, float]
    radius: float = 2 * np.pi
    resolution: int = 33

    def __post_init__(self):
        point = tuple(float(c) for c in self.base_point)
        if len(point) != 3:
            raise ValidationError(f"基点必须是 T³ 上的点: {self.base_point}")
        if not self.radius > 0:
            raise ValidationError(f"区域半径必须为正数: {self.radius}")
        if self.resolution < 2:
            raise ValidationError(f"网格分辨率必须不小于2: {self.resolution}")
        object.__setattr__(self, 'base_point', point)

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.radius, self.radius, self.resolution)

    def leaf_point(self, params: FoliationParams, u: float, v: float) -> np.ndarray:
        """叶坐标 (u, v) 对应的 R³ 中的点"""
        a1, a2 = params.slopes
        x0 = np.array(self.base_point)
        return x0 + np.array([u, v, a1 * u + a2 * v])

    def shifted(self, params: FoliationParams, u: float, v: float) -> 'LeafPatch':
        """同一片叶上以 x⁰ + (u, v, a1u + a2v) 为基点的区域"""
        point = self.leaf_point(params, u, v)
        return LeafPatch(tuple(point), self.radius, self.resolution)


class LeafRestriction:
    """场在叶上的限制，支持张量网格与散点求值"""

    def __init__(self, params: FoliationParams, field: FourierField, base_point: Sequence[float]):
        if params.dimension != TORUS3:
            raise ValidationError("叶图只在 T³ 上定义")
        alpha, beta, _ = frequency_table(params, field)
        mask = field.coefficients != 0
        modes = field.physical_modes[:, mask].T.astype(float)
        phases = np.exp(1j * (modes @ np.asarray(base_point, dtype=float)))
        self.alpha = alpha[mask]
        self.beta = beta[mask]
        self.coefficients = field.coefficients[mask] * phases

    def tensor(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """形状 (len(u), len(v)) 的值"""
        u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
        if self.coefficients.size == 0:
            return np.zeros((u.size, v.size), dtype=complex)
        eu = np.exp(1j * np.outer(u, self.alpha))
        ev = np.exp(1j * np.outer(v, self.beta))
        return eu @ (self.coefficients[:, None] * ev.T)

    def points(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
        if self.coefficients.size == 0:
            return np.zeros(u.shape, dtype=complex)
        phase = np.exp(1j * (u[..., None] * self.alpha + v[..., None] * self.beta))
        return phase @ self.coefficients


class LeafChart:
    """
    展开映射 Ψ 的构造与诊断

    Ψ 沿 L 形路径积分：先沿 u 轴从 0 到 u，再沿 v 方向到 (u, v)。
    闭形式下路径无关，非闭时差异由 loop_residual 度量。
    """

    def __init__(self, params: FoliationParams, f: FourierField, mu: FourierField,
                 config: Optional[ChartConfig] = None, max_workers: int = 1):
        f.check_compatible(mu)
        self.params = params
        self.f = f
        self.mu = mu
        self.g = multiply(mu, f)
        self.config = config or ChartConfig()
        self.max_workers = max(1, int(max_workers))
        self.segment = 2 * np.pi / (4 * max(1, f.cutoff))
        self.nodes, self.weights = np.polynomial.legendre.leggauss(self.config.quadrature_order)
        self.logger = get_logger("leaf_chart")

    def restrictions(self, base_point: Sequence[float]) -> Tuple[LeafRestriction, LeafRestriction]:
        """(f, μf) 在叶上的限制"""
        return LeafRestriction(self.params, self.f, base_point), LeafRestriction(self.params, self.g, base_point)

    def _pieces(self, coordinates: np.ndarray):
        """含 0 的断点，每段长度不超过 segment，返回 (断点, 节点, 权重)"""
        breaks = np.unique(np.concatenate([coordinates, [0.0]]))
        edges = [breaks[0]]
        for left, right in zip(breaks[:-1], breaks[1:]):
            count = max(1, int(np.ceil((right - left) / self.segment)))
            edges.extend(np.linspace(left, right, count + 1)[1:])
        edges = np.array(edges)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        nodes = (mid[:, None] + half[:, None] * self.nodes[None, :]).reshape(-1)
        weights = (half[:, None] * self.weights[None, :]).reshape(-1)
        return edges, nodes, weights

    @staticmethod
    def _cumulative(edges: np.ndarray, integrand: np.ndarray, weights: np.ndarray, order: int,
                    targets: np.ndarray) -> np.ndarray:
        """沿最后一轴的累积积分，在 targets 处取值并以 0 处为起点"""
        pieces = (integrand * weights).reshape(integrand.shape[:-1] + (-1, order)).sum(axis=-1)
        running = np.concatenate([np.zeros(integrand.shape[:-1] + (1,), dtype=complex),
                                  np.cumsum(pieces, axis=-1)], axis=-1)
        origin = np.searchsorted(edges, 0.0)
        index = np.searchsorted(edges, targets)
        return running[..., index] - running[..., origin][..., None]

    def psi_on(self, base_point: Sequence[float], u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """
        Ψ 在张量网格 u × v 上的值

        Raises:
            QuadratureError: 积分结果含非有限值
        """
        u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
        f_leaf, g_leaf = self.restrictions(base_point)
        order = self.config.quadrature_order

        edges_u, nodes_u, weights_u = self._pieces(u)
        along_u = f_leaf.tensor(nodes_u, [0.0])[:, 0] + g_leaf.tensor(nodes_u, [0.0])[:, 0]
        first_leg = self._cumulative(edges_u, along_u, weights_u, order, u)

        edges_v, nodes_v, weights_v = self._pieces(v)

        def _columns(block: np.ndarray) -> np.ndarray:
            b_values = 1j * (f_leaf.tensor(block, nodes_v) - g_leaf.tensor(block, nodes_v))
            return self._cumulative(edges_v, b_values, weights_v, order, v)

        blocks = [u[i:i + COLUMN_BLOCK] for i in range(0, u.size, COLUMN_BLOCK)]
        if self.max_workers > 1 and len(blocks) > 1:
            with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
                second_leg = np.concatenate(list(executor.map(_columns, blocks)), axis=0)
        else:
            second_leg = np.concatenate([_columns(b) for b in blocks], axis=0)

        psi = first_leg[:, None] + second_leg
        if not np.all(np.isfinite(psi)):
            raise QuadratureError("叶图积分出现非有限值")
        return psi

    def form_on(self, base_point: Sequence[float], u: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """ω(∂u) = f + μf 与 ω(∂v) = i(f - μf) 的张量网格值"""
        f_leaf, g_leaf = self.restrictions(base_point)
        f_values, g_values = f_leaf.tensor(u, v), g_leaf.tensor(u, v)
        return f_values + g_values, 1j * (f_values - g_values)

    def develop(self, patch: LeafPatch, n_loops: Optional[int] = None,
                rng: Optional[np.random.Generator] = None) -> ChartSample:
        """
        在区域网格上构造 Ψ 并给出导数、度量、Jacobian 与伸缩诊断

        Raises:
            QuadratureError: 叶上闭性残差超过 residual_tol，路径积分无意义
        """
        cfg = self.config
        residual = closedness_residual(self.params, self.mu, self.f)
        if residual > cfg.residual_tol:
            raise QuadratureError(f"闭性残差 {residual:.3e} 超过 {cfg.residual_tol:.1e}，拒绝做路径积分",
                                  {"closedness_residual": residual})

        axis = patch.axis
        eta = cfg.derivative_step
        u_all = np.unique(np.concatenate([axis, axis - eta, axis + eta]))
        v_all = np.unique(np.concatenate([axis, axis - eta, axis + eta]))
        psi_all = self.psi_on(patch.base_point, u_all, v_all)
        pick = lambda values, coords: np.searchsorted(coords, values)
        iu, iv = pick(axis, u_all), pick(axis, v_all)
        iu_lo, iu_hi = pick(axis - eta, u_all), pick(axis + eta, u_all)
        iv_lo, iv_hi = pick(axis - eta, v_all), pick(axis + eta, v_all)

        psi = psi_all[np.ix_(iu, iv)]
        psi_u = (psi_all[np.ix_(iu_hi, iv)] - psi_all[np.ix_(iu_lo, iv)]) / (2 * eta)
        psi_v = (psi_all[np.ix_(iu, iv_hi)] - psi_all[np.ix_(iu, iv_lo)]) / (2 * eta)
        form_u, form_v = self.form_on(patch.base_point, axis, axis)

        derivative_defect = float(max(np.max(np.abs(psi_u - form_u)), np.max(np.abs(psi_v - form_v))))
        pulled = np.stack([np.abs(psi_u) ** 2, np.real(np.conj(psi_u) * psi_v), np.abs(psi_v) ** 2])
        expected = np.stack([np.abs(form_u) ** 2, np.real(np.conj(form_u) * form_v), np.abs(form_v) ** 2])
        metric_defect = float(np.max(np.abs(pulled - expected)))
        jacobian = np.imag(np.conj(psi_u) * psi_v)

        dilatation = self.dilatation_on(patch.base_point, axis, axis)
        loops = self.loop_residual(patch, n_loops if n_loops is not None else cfg.n_loops, rng)
        zz = axis[:, None] + 1j * axis[None, :]
        sample = ChartSample(
            z=zz, psi=psi, loop_residual=loops, dilatation=dilatation, max_dilatation=float(dilatation.max()),
            derivative_defect=derivative_defect, metric_defect=metric_defect,
            min_jacobian=float(jacobian.min()),
        )

        delta_hat = sup_estimate(self.mu, 4)
        bound = (1 + delta_hat) / (1 - delta_hat)
        if sample.max_dilatation > bound + 1e-6:
            sample.warnings.append(f"最大伸缩 {sample.max_dilatation:.6f} 超过 (1+δ̂)/(1-δ̂) = {bound:.6f}")
        if sample.min_jacobian <= 0:
            sample.warnings.append(f"Jacobian 在网格上不全为正 (最小值 {sample.min_jacobian:.3e})")
        for message in sample.warnings:
            self.logger.warning(message)
        self.logger.info(f"叶图构造完成: 网格{patch.resolution}², 导数偏差={derivative_defect:.3e}, "
                         f"回路残差={loops:.3e}, 最大伸缩={sample.max_dilatation:.4f}")
        return sample

    def _edge(self, base_point, start: Tuple[float, float], end: Tuple[float, float]) -> complex:
        """沿直线段 start -> end 的 ∫ ω"""
        f_leaf, g_leaf = self.restrictions(base_point)
        length = float(np.hypot(end[0] - start[0], end[1] - start[1]))
        count = max(1, int(np.ceil(length / self.segment)))
        s_edges = np.linspace(0.0, 1.0, count + 1)
        half = 0.5 * np.diff(s_edges)
        mid = 0.5 * (s_edges[:-1] + s_edges[1:])
        s = (mid[:, None] + half[:, None] * self.nodes[None, :]).reshape(-1)
        w = (half[:, None] * self.weights[None, :]).reshape(-1)
        du, dv = end[0] - start[0], end[1] - start[1]
        u, v = start[0] + s * du, start[1] + s * dv
        f_values, g_values = f_leaf.points(u, v), g_leaf.points(u, v)
        integrand = (f_values + g_values) * du + 1j * (f_values - g_values) * dv
        return complex(np.sum(integrand * w))

    def loop_residual(self, patch: LeafPatch, n_loops: int, rng: Optional[np.random.Generator] = None) -> float:
        """区域内随机矩形回路上 |∮ ω| / 周长 的最大值"""
        rng = rng or np.random.default_rng(0)
        worst = 0.0
        radius = patch.radius
        for _ in range(n_loops):
            width, height = rng.uniform(0.5, 1.5, size=2)
            width, height = min(width, 2 * radius), min(height, 2 * radius)
            u0 = rng.uniform(-radius, radius - width)
            v0 = rng.uniform(-radius, radius - height)
            corners = [(u0, v0), (u0 + width, v0), (u0 + width, v0 + height), (u0, v0 + height)]
            total = sum(self._edge(patch.base_point, corners[i], corners[(i + 1) % 4]) for i in range(4))
            worst = max(worst, abs(total) / (2 * (width + height)))
        return worst

    def dilatation_on(self, base_point, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """
        K = (1 + |μ|)/(1 - |μ|)

        Raises:
            BeltramiBoundError: 某个采样点 |μ| >= 1
        """
        modulus = np.abs(LeafRestriction(self.params, self.mu, base_point).tensor(u, v))
        if np.any(modulus >= 1.0):
            raise BeltramiBoundError(f"|μ| = {float(modulus.max()):.6f} >= 1，不是 Beltrami 系数")
        return (1.0 + modulus) / (1.0 - modulus)

    def translation_defect(self, patch: LeafPatch, shift: Tuple[float, float]) -> float:
        """
        Ψ_{x⁰}(z) 与 Ψ_{x⁰+s}(z - s) + Ψ_{x⁰}(s) 在网格上的最大差
        """
        axis = patch.axis
        su, sv = float(shift[0]), float(shift[1])
        u0 = np.unique(np.concatenate([axis, [su]]))
        v0 = np.unique(np.concatenate([axis, [sv]]))
        psi0 = self.psi_on(patch.base_point, u0, v0)
        at_shift = psi0[np.searchsorted(u0, su), np.searchsorted(v0, sv)]
        psi0 = psi0[np.ix_(np.searchsorted(u0, axis), np.searchsorted(v0, axis))]
        moved = patch.shifted(self.params, su, sv)
        psi1 = self.psi_on(moved.base_point, axis - su, axis - sv)
        return float(np.max(np.abs(psi0 - (psi1 + at_shift))))


def develop(params: FoliationParams, f: FourierField, mu: FourierField, patch: LeafPatch,
            config: Optional[ChartConfig] = None, max_workers: int = 1,
            rng: Optional[np.random.Generator] = None) -> ChartSample:
    """Ψ(z) = ∫ f·(dz + μdz̄)，Ψ(x⁰) = 0"""
    return LeafChart(params, f, mu, config, max_workers).develop(patch, rng=rng)


def loop_residual(params: FoliationParams, f: FourierField, mu: FourierField, patch: LeafPatch,
                  n_loops: int = 16, rng: Optional[np.random.Generator] = None) -> float:
    return LeafChart(params, f, mu).loop_residual(patch, n_loops, rng)


def dilatation_estimate(params: FoliationParams, mu: FourierField, patch: LeafPatch) -> np.ndarray:
    """区域网格上的伸缩场 K(z)"""
    chart = LeafChart(params, FourierField.constant(1.0, mu.dimension, mu.cutoff, mu.lattice), mu)
    return chart.dilatation_on(patch.base_point, patch.axis, patch.axis)
