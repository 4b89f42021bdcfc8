"""
丢番图分析模块

小分母 d(N) = |p + k·a1| + |m + k·a2| 的有限扫描、斜率分类、
连分数工具以及小分母模式序列的构造。所有分类结论都只是扫描范围内的证据。
"""
import math
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

import mpmath
import numpy as np

from src.config import DiophantineConfig
from src.error_handler import ValidationError
from src.foliation_ops import FoliationParams, Slope, is_exact_zero, lambda_mp
from src.logger import get_logger
from src.models import (
    DiophantineCheck, DiophantineRecord, DiophantineReport, GroupSearchResult,
    ModeSearchResult, ScaledRecord,
)
from src.spectral_core import TORUS3, ModeIndex, canonical_order_key, canonical_sign, mode_grid


DIOPHANTINE = "diophantine-evidence"
WEAKLY_DIOPHANTINE = "weakly-diophantine-evidence"
LIOUVILLE = "liouville-evidence"
RATIONAL = "rational-degenerate"
INCONCLUSIVE = "inconclusive"

K_BLOCK = 256


# 连分数


def continued_fraction(x: Fraction, max_terms: Optional[int] = None) -> List[int]:
    """有理数的（有限）连分数展开"""
    terms = []
    num, den = x.numerator, x.denominator
    while den and (max_terms is None or len(terms) < max_terms):
        q, r = divmod(num, den)
        terms.append(q)
        num, den = den, r
    return terms


def convergents(terms: Sequence[int]) -> List[Fraction]:
    """部分商序列对应的渐近分数"""
    result = []
    h_prev, h = 1, terms[0] if terms else 0
    k_prev, k = 0, 1
    if terms:
        result.append(Fraction(h, k))
    for a in terms[1:]:
        h_prev, h = h, a * h + h_prev
        k_prev, k = k, a * k + k_prev
        result.append(Fraction(h, k))
    return result


def certified_terms(x: float) -> List[int]:
    """
    浮点数的可信部分商

    展开区间 [x - ulp/2, x + ulp/2] 两端点，只保留共同前缀，
    该前缀对区间内任意实数都成立。
    """
    exact = Fraction(x)
    half_ulp = Fraction(math.ulp(x)) / 2
    lo = continued_fraction(exact - half_ulp)
    hi = continued_fraction(exact + half_ulp)
    prefix = []
    for a, b in zip(lo[:-1], hi[:-1]):
        if a != b:
            break
        prefix.append(a)
    return prefix


def convergent_list(value: Slope, max_denominator: int) -> Tuple[List[Fraction], Optional[int]]:
    """
    分母不超过 max_denominator 的渐近分数

    Returns:
        (渐近分数列表, 可信分母上界；精确输入时为 None)
    """
    if isinstance(value, Fraction):
        terms = continued_fraction(value)
        certified = None
    else:
        terms = certified_terms(float(value))
        certified = convergents(terms)[-1].denominator if terms else 1
    result = [c for c in convergents(terms) if c.denominator <= max_denominator] if terms else []
    return result, certified


def _as_fraction(value: Slope) -> Fraction:
    return value if isinstance(value, Fraction) else Fraction(float(value))


def _nearest(value: Slope) -> List[int]:
    low = math.floor(value)
    return [low] if low == value else [low, low + 1]


# 小分母扫描


def denominator_value(params: FoliationParams, mode: Sequence[int]) -> Union[Fraction, float]:
    """d(N) = |p + k·a1| + |m + k·a2|，精确斜率时返回 Fraction"""
    p, m, k = (int(c) for c in mode)
    return abs(p + k * params.a1) + abs(m + k * params.a2)


class _Evaluator:
    """批量计算 d(N)；精确斜率用公分母整数运算"""

    def __init__(self, params: FoliationParams):
        self.params = params
        self.exact = params.is_exact
        if self.exact:
            a1, a2 = Fraction(params.a1), Fraction(params.a2)
            self.Q = a1.denominator * a2.denominator // math.gcd(a1.denominator, a2.denominator)
            self.A1 = int(a1 * self.Q)
            self.A2 = int(a2 * self.Q)
        else:
            self.a1, self.a2 = params.slopes

    def __call__(self, modes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """返回 (d 的浮点值, 精确零掩码)"""
        if len(modes) == 0:
            return np.zeros(0), np.zeros(0, dtype=bool)
        if self.exact:
            obj = modes.astype(object)
            scaled = np.abs(obj[:, 0] * self.Q + obj[:, 2] * self.A1) + np.abs(obj[:, 1] * self.Q + obj[:, 2] * self.A2)
            zero = np.array([v == 0 for v in scaled], dtype=bool)
            values = np.array([v / self.Q for v in scaled], dtype=float)
            return values, zero
        values = np.abs(modes[:, 0] + modes[:, 2] * self.a1) + np.abs(modes[:, 1] + modes[:, 2] * self.a2)
        return values, values == 0.0


def _canonical_rows(modes: np.ndarray) -> np.ndarray:
    """每行取第一个非零分量为正的代表元"""
    if len(modes) == 0:
        return modes
    first = np.argmax(modes != 0, axis=1)
    signs = np.sign(modes[np.arange(len(modes)), first])
    signs[signs == 0] = 1
    return modes * signs[:, None]


class DenominatorScanner:
    """
    d(N) 的确定性扫描器

    盒子 max|N_i| <= min(M, brute_force_box) 内穷举；盒外对每个 k 只取最接近的
    整数分子（其余分子给出 d >= 1/2，不可能成为记录）。
    """

    def __init__(self, params: FoliationParams, config: Optional[DiophantineConfig] = None,
                 max_workers: int = 1):
        if params.dimension != TORUS3:
            raise ValidationError("丢番图扫描只对 torus3 斜率有意义")
        self.params = params
        self.config = config or DiophantineConfig()
        self.max_workers = max(1, int(max_workers))
        self.evaluate = _Evaluator(params)
        self.logger = get_logger("diophantine_analyzer")

    def _box_modes(self, box: int) -> np.ndarray:
        flat = mode_grid(box, 3).reshape(3, -1).T.astype(np.int64)
        flat = flat[np.any(flat != 0, axis=1)]
        return flat[np.all(_canonical_rows(flat) == flat, axis=1)]

    def _block_modes(self, ks: range, cutoff: int, box: int) -> np.ndarray:
        rows = []
        a1, a2 = self.params.a1, self.params.a2
        for k in ks:
            for p in _nearest(-k * a1):
                for m in _nearest(-k * a2):
                    if max(abs(p), abs(m)) > cutoff:
                        continue
                    if max(abs(p), abs(m), k) <= box:
                        continue
                    rows.append(canonical_sign((p, m, k)))
        return np.array(rows, dtype=np.int64).reshape(-1, 3)

    def candidates(self, cutoff: int):
        """按 (|N|, 字典序) 排好的候选 (modes, d, zero, l1, maxabs)"""
        box = min(cutoff, self.config.brute_force_box)
        blocks = [range(start, min(start + K_BLOCK, cutoff + 1)) for start in range(1, cutoff + 1, K_BLOCK)]
        if self.max_workers > 1 and len(blocks) > 1:
            with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
                parts = list(executor.map(lambda ks: self._block_modes(ks, cutoff, box), blocks))
        else:
            parts = [self._block_modes(ks, cutoff, box) for ks in blocks]
        modes = np.concatenate([self._box_modes(box)] + parts)
        modes = np.unique(modes, axis=0)
        d, zero = self.evaluate(modes)
        l1 = np.abs(modes).sum(axis=1)
        order = np.lexsort((modes[:, 2], modes[:, 1], modes[:, 0], l1))
        modes, d, zero, l1 = modes[order], d[order], zero[order], l1[order]
        return modes, d, zero, l1, np.abs(modes).max(axis=1)


def _record_mask(values: np.ndarray) -> np.ndarray:
    """严格递减的前缀最小值位置"""
    if len(values) == 0:
        return np.zeros(0, dtype=bool)
    previous = np.concatenate([[np.inf], np.minimum.accumulate(values)[:-1]])
    return values < previous


def _local_exponents(d: np.ndarray, l1: np.ndarray) -> np.ndarray:
    with np.errstate(divide='ignore', invalid='ignore'):
        out = -np.log(d) / np.log(l1.astype(float))
    out[(l1 < 2) | (d <= 0)] = np.nan
    return out


def _upper_half(d: np.ndarray, l1: np.ndarray) -> np.ndarray:
    """对数尺度上半段的记录下标；不足两点时取后一半记录"""
    usable = np.flatnonzero((l1 >= 2) & (d > 0))
    if len(usable) == 0:
        return usable
    threshold = 0.5 * math.log(float(l1[usable].max()))
    upper = usable[np.log(l1[usable].astype(float)) >= threshold]
    if len(upper) < 2:
        upper = usable[-max(2, math.ceil(len(usable) / 2)):]
    return upper


def _fit_exponent(d: np.ndarray, l1: np.ndarray) -> Optional[float]:
    index = _upper_half(d, l1)
    if len(index) < 2 or len(set(l1[index].tolist())) < 2:
        return None
    slope = np.polyfit(np.log(l1[index].astype(float)), np.log(d[index]), 1)[0]
    return float(-slope)


def scan_denominators(params: FoliationParams, cutoff: int, config: Optional[DiophantineConfig] = None,
                      max_workers: int = 1) -> DiophantineReport:
    """
    扫描 0 < max|N_i| <= M 的小分母

    记录表为 (|N|, 字典序) 顺序下 d(N) 的严格前缀极小值；
    同时给出每个 s 的 d(N)·|N|^s 下确界，以及拟合指数与 liminf 代理量。
    """
    if cutoff < 2:
        raise ValidationError(f"扫描截断必须不小于2: {cutoff}")
    config = config or DiophantineConfig()
    logger = get_logger("diophantine_analyzer")
    scanner = DenominatorScanner(params, config, max_workers)
    modes, d, zero, l1, maxabs = scanner.candidates(cutoff)
    warnings: List[str] = []

    records_mask = _record_mask(d)
    rec_modes, rec_d, rec_l1 = modes[records_mask], d[records_mask], l1[records_mask]
    exponents = _local_exponents(rec_d, rec_l1)
    records = [
        DiophantineRecord(ModeIndex(tuple(int(c) for c in row)), float(value),
                          None if np.isnan(e) else float(e))
        for row, value, e in zip(rec_modes, rec_d, exponents)
    ]

    scaled = []
    for s in config.s_grid:
        values = d * l1.astype(float) ** s
        position = int(np.argmin(values))
        scaled.append(ScaledRecord(float(s), float(values[position]),
                                   ModeIndex(tuple(int(c) for c in modes[position])),
                                   int(_record_mask(values).sum())))

    prefix_exponents: Dict[int, Optional[float]] = {}
    for prefix in sorted({max(2, cutoff // 4), max(2, cutoff // 2), cutoff}):
        inside = maxabs <= prefix
        mask = _record_mask(d[inside])
        prefix_exponents[prefix] = _fit_exponent(d[inside][mask], l1[inside][mask])

    with np.errstate(divide='ignore'):
        roots = np.where(d > 0, np.exp(np.log(np.where(d > 0, d, 1.0)) / l1), 0.0)
    tail = l1 >= math.sqrt(float(l1.max()))
    upper = _upper_half(rec_d, rec_l1)
    upper_exponents = exponents[upper] if len(upper) else np.array([])
    upper_exponents = upper_exponents[~np.isnan(upper_exponents)]

    exact_zero = None
    if np.any(zero):
        exact_zero = ModeIndex(tuple(int(c) for c in modes[np.argmax(zero)]))
    elif params.is_exact:
        a1, a2 = Fraction(params.a1), Fraction(params.a2)
        L = a1.denominator * a2.denominator // math.gcd(a1.denominator, a2.denominator)
        outside = canonical_sign((-int(L * a1), -int(L * a2), L))
        warnings.append(f"输入为精确有理数，精确零点 {outside} 位于扫描盒子之外，分类只反映盒内证据")

    report = DiophantineReport(
        cutoff=cutoff,
        records=records,
        scaled=scaled,
        fitted_exponent=prefix_exponents[cutoff],
        prefix_exponents=prefix_exponents,
        liminf_proxy=float(roots.min()),
        tail_liminf_proxy=float(roots[tail].min()),
        max_local_exponent=float(upper_exponents.max()) if len(upper_exponents) else None,
        candidates_scanned=int(len(modes)),
        exact_zero=exact_zero,
        warnings=warnings,
    )
    logger.info(f"小分母扫描完成: M={cutoff}, 候选{len(modes)}, 记录{len(records)}, "
                f"拟合指数={report.fitted_exponent}")
    return report


def classify(report: DiophantineReport, thresholds: Optional[DiophantineConfig] = None) -> str:
    """
    按优先级给出分类证据：
    rational-degenerate > diophantine > liouville > weakly-diophantine > inconclusive
    """
    thresholds = thresholds or DiophantineConfig()
    if report.exact_zero is not None:
        return RATIONAL
    if len(report.records) < thresholds.min_records:
        return INCONCLUSIVE

    fitted = report.fitted_exponent
    prefix = [v for v in report.prefix_exponents.values() if v is not None]
    stable = len(prefix) >= 2 and max(prefix) - min(prefix) <= thresholds.stability_tol
    max_local = report.max_local_exponent if report.max_local_exponent is not None else 0.0

    if (fitted is not None and stable and fitted <= thresholds.diophantine_max_exponent
            and max_local < thresholds.liouville_exponent):
        return DIOPHANTINE
    diverging = (fitted is not None and len(prefix) >= 2
                 and fitted > thresholds.diophantine_max_exponent
                 and prefix[-1] - prefix[0] > thresholds.stability_tol)
    if max_local >= thresholds.liouville_exponent or diverging:
        return LIOUVILLE
    if report.tail_liminf_proxy >= 1.0 - thresholds.weak_epsilon:
        return WEAKLY_DIOPHANTINE
    return INCONCLUSIVE


# 单个数的丢番图检验


def _log_ratio(gap: Fraction, k: int, C: float, s: float) -> float:
    """ln(|α - m/k|·k^{s+1}/C)，gap 为 0 时返回 -inf"""
    if gap == 0:
        return -math.inf
    log_gap = math.log(gap.numerator) - math.log(gap.denominator)
    return log_gap + (s + 1) * math.log(k) - math.log(C)


def check_diophantine_number(alpha: Slope, C: float, s: float, K: int) -> DiophantineCheck:
    """
    对 |k| <= K 验证 |α - m/k| > C/|k|^{s+1}

    k 小于 (2C)^{1/(s-1)} 时逐个检查最近的分子；更大的 k 上只有渐近分数
    可能违反不等式，因为其余分数满足 |α - m/k| >= 1/(2k²) >= C/k^{s+1}。
    """
    if K < 1 or C <= 0 or s <= 1:
        raise ValidationError(f"需要 K >= 1, C > 0, s > 1，实际为 K={K}, C={C}, s={s}")
    exact = _as_fraction(alpha)
    warnings = []

    log_k0 = math.log(2 * C) / (s - 1)
    k0 = K if log_k0 >= math.log(K) else max(0, math.ceil(math.exp(log_k0)))
    pairs = set()
    for k in range(1, min(K, k0) + 1):
        for m in _nearest(exact * k):
            pairs.add((m, k))

    convs, certified = convergent_list(alpha, K)
    for c in convs:
        pairs.add((c.numerator, c.denominator))
    if certified is not None and certified < K:
        warnings.append(f"浮点输入的渐近分数只在分母 <= {certified} 内可信")

    worst_pair, worst = None, math.inf
    for m, k in sorted(pairs, key=lambda pair: (pair[1], pair[0])):
        value = _log_ratio(abs(exact - Fraction(m, k)), k, C, s)
        if value < worst:
            worst_pair, worst = (m, k), value

    ratio = 0.0 if worst == -math.inf else math.exp(min(worst, 700.0))
    return DiophantineCheck(
        passed=worst > 0.0,
        worst_pair=worst_pair,
        worst_ratio=ratio,
        checked=len(pairs),
        certified_denominator=certified,
        warnings=warnings,
    )


def search_group_elements(params: FoliationParams, config: Optional[DiophantineConfig] = None) -> GroupSearchResult:
    """
    在 c1·a1 + c2·a2（|c_i| <= bound）中寻找可验证的丢番图元素

    结果只是启发式的：通过检验只说明在给定分母范围内不等式成立。
    """
    config = config or DiophantineConfig()
    bound = config.group_search_bound
    best_combo, best_check, tested = None, None, 0
    for c1 in range(-bound, bound + 1):
        for c2 in range(-bound, bound + 1):
            if (c1, c2) == (0, 0) or canonical_sign((c1, c2)) != (c1, c2):
                continue
            if params.is_exact:
                gamma = c1 * Fraction(params.a1) + c2 * Fraction(params.a2)
            else:
                gamma = c1 * float(params.a1) + c2 * float(params.a2)
            check = check_diophantine_number(gamma, config.group_constant, config.group_exponent,
                                             config.group_denominator_bound)
            tested += 1
            better = (best_check is None
                      or (check.passed and not best_check.passed)
                      or (check.passed == best_check.passed and check.worst_ratio > best_check.worst_ratio))
            if better:
                best_combo, best_check = (c1, c2), check
    return GroupSearchResult(bound=bound, best_combination=best_combo, best_check=best_check, tested=tested)


def analyze(params: FoliationParams, cutoff: Optional[int] = None, config: Optional[DiophantineConfig] = None,
            max_workers: int = 1, group_search: bool = True) -> DiophantineReport:
    """扫描、分类并（可选）搜索整数组合，生成完整报告"""
    config = config or DiophantineConfig()
    report = scan_denominators(params, cutoff or config.scan_cutoff, config, max_workers)
    report.classification = classify(report, config)
    if group_search and report.classification != RATIONAL:
        report.group_search = search_group_elements(params, config)
    get_logger("diophantine_analyzer").info(f"斜率分类: {report.classification}")
    return report


# 小分母模式序列


def find_liouville_modes(params: FoliationParams, s_targets: Sequence[float], cutoff: int,
                         min_norm: int = 2, prec: int = 256) -> ModeSearchResult:
    """
    由 a1、a2 的渐近分数构造满足 |λ_N|⁻¹ > |N|^{s_j} 的模式 N_j

    候选为 (-p, -round(q·a2), q) 及其对称形式，排除精确零点，要求 |λ_N| < 1；
    第 j 个目标取 |N| 严格大于上一个选中模式的最小候选。
    """
    logger = get_logger("diophantine_analyzer")
    if params.dimension != TORUS3:
        raise ValidationError("小分母模式只对 torus3 斜率定义")
    targets = [float(s) for s in s_targets]
    if any(b <= a for a, b in zip(targets, targets[1:])):
        raise ValidationError(f"s_targets 必须严格递增: {targets}")

    slopes = (params.a1, params.a2)
    raw = set()
    for which in (0, 1):
        convs, _ = convergent_list(slopes[which], cutoff)
        for c in convs:
            q = c.denominator
            other = -round(q * slopes[1 - which])
            own = [-c.numerator, -round(q * slopes[which])]
            for value in own:
                mode = (value, other, q) if which == 0 else (other, value, q)
                if max(abs(x) for x in mode) <= cutoff:
                    raw.add(mode)

    candidates = []
    with mpmath.workprec(prec):
        for mode in raw:
            if mode[2] == 0 or is_exact_zero(params, mode):
                continue
            size = sum(abs(x) for x in mode)
            if size < min_norm:
                continue
            inverse = 1 / abs(lambda_mp(params, mode, prec))
            if inverse <= 1:
                continue
            exponent = float(mpmath.log(inverse) / mpmath.log(size))
            candidates.append((canonical_order_key(mode), mode, size, inverse, exponent))
    candidates.sort(key=lambda item: item[0])

    result = ModeSearchResult(modes=[], targets=targets, matched_targets=[], achieved_exponents=[],
                              inverse_lambdas=[])
    last_norm = 0
    for s in targets:
        pick = next((c for c in candidates if c[2] > last_norm and c[4] > s), None)
        if pick is None:
            message = f"在 max|N_i| <= {cutoff} 内找不到满足 |λ|⁻¹ > |N|^{s:g} 的模式"
            result.warnings.append(message)
            logger.warning(message)
            continue
        _, mode, size, inverse, exponent = pick
        result.modes.append(ModeIndex(mode))
        result.matched_targets.append(s)
        result.achieved_exponents.append(exponent)
        with mpmath.workprec(prec):
            result.inverse_lambdas.append(mpmath.nstr(inverse, 12))
        last_norm = size
    logger.info(f"小分母模式: {[m.components for m in result.modes]}")
    return result
