"""
标准正态期望与嵌套期望 𝒩_a 的数值计算。

所有 RSB 压强都建立在同一个递归结构上：

    𝒩_{K+1} = 2cosh(g),  g = offset + Σ_a c_a h^(a)
    𝒩_a     = 𝔼_{a+1}[𝒩_{a+1}^{θ_a/θ_{a+1}}],  θ_{K+1} = 1

场 g 取值于 "偏移集合 × 间距为 h 的等距格点"。每一层按系数选规则：
c = 0 时不展开；c 足够大时在同一格点上用离散高斯权重（梯形规则，
误差约 exp(-π²/h)，与 c 无关）；c 很小时用 Gauss-Hermite 节点展开偏移集合。
全部递归在对数域中进行，代价随 K 线性增长。
"""
import functools
import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.linalg import eigh_tridiagonal
from scipy.special import logsumexp

from app.core.errors import BudgetExceeded, DomainError, NonFiniteIntegrand, ShapeMismatch
from app.core.types import QuadratureSpec
from app.utils.logger import logger
from app.utils.rng import substream

MIN_THETA = 0.01
LOG_TWO = math.log(2.0)

# 格点间距 h = FIELD_SPAN / nodes_per_level
FIELD_SPAN = 10.0
# c/h 不小于该值的层走格点规则
LATTICE_RESOLUTION = 1.5
# 格点规则覆盖 |z| ≤ GAUSS_TAIL + c
GAUSS_TAIL = 9.0
WEAK_NODES = 24
MIN_WEAK_NODES = 8


@dataclass(frozen=True)
class FieldArgument:
    offset: float
    coeffs: tuple

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coeffs)
        if not math.isfinite(self.offset) or any(not math.isfinite(c) or c < 0 for c in coeffs):
            raise DomainError(f"场系数必须有限且非负: offset={self.offset}, coeffs={coeffs}")
        object.__setattr__(self, 'offset', float(self.offset))
        object.__setattr__(self, 'coeffs', coeffs)


def log_cosh(x):
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - LOG_TWO


def log_two_cosh(x):
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax))


@functools.lru_cache(maxsize=32)
def gauss_hermite_rule(n: int):
    """Golub-Welsch：Hermite 三对角矩阵的特征分解，返回 𝒩(0,1) 的节点与权重。"""
    k = np.arange(1, n)
    x, vectors = eigh_tridiagonal(np.zeros(n), np.sqrt(k / 2.0))
    # 特征值升序；强制 ±x 严格对称，奇函数的期望精确为 0
    nodes = np.sqrt(2.0) * (x - x[::-1]) / 2.0
    weights = (vectors[0] ** 2 + vectors[0, ::-1] ** 2) / 2.0
    # 尾部权重可能下溢为 0
    keep = weights > 0.0
    nodes, weights = nodes[keep], weights[keep] / weights[keep].sum()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


@functools.lru_cache(maxsize=32)
def monte_carlo_rule(n: int, seed: int):
    # 对偶采样：z 与 -z 成对出现
    half = substream(seed, 'quadrature', n).standard_normal((n + 1) // 2)
    nodes = np.concatenate([half, -half])
    weights = np.full(nodes.size, 1.0 / nodes.size)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def field_spacing(spec: QuadratureSpec) -> float:
    return FIELD_SPAN / spec.nodes_per_level


@dataclass(frozen=True)
class LevelRule:
    """
    单层积分规则。

    kind = 'point'   无噪声，不展开
    kind = 'lattice' shifts 为整数格点位移，权重为离散高斯
    kind = 'nodes'   shifts 为场位移 c·z，展开偏移集合
    """
    kind: str
    shifts: np.ndarray
    log_weights: np.ndarray

    @property
    def size(self) -> int:
        return self.log_weights.size

    @property
    def half_width(self) -> int:
        return int(self.shifts[-1]) if self.kind == 'lattice' else 0


POINT_RULE = LevelRule('point', np.zeros(1), np.zeros(1))


def lattice_rule(c: float, h: float) -> LevelRule:
    delta = h / c
    half = math.ceil((GAUSS_TAIL + c) / delta)
    steps = np.arange(-half, half + 1)
    log_w = -0.5 * (steps * delta) ** 2
    return LevelRule('lattice', steps, log_w - logsumexp(log_w))


def node_rule(c: float, nodes, weights) -> LevelRule:
    return LevelRule('nodes', c * np.asarray(nodes), np.log(weights))


def _is_strong(c, h):
    return c > 0.0 and c >= LATTICE_RESOLUTION * h


def _tensor_points(coeffs, h, weak_size):
    """逐层展开后最大中间数组的元素个数。"""
    count, width, worst = 1, 1, 1
    for c in coeffs:
        if c == 0.0:
            continue
        if _is_strong(c, h):
            half = math.ceil((GAUSS_TAIL + c) * c / h)
            worst = max(worst, count * width * (2 * half + 1))
            width += 2 * half
        else:
            count *= weak_size
            worst = max(worst, count * width)
    return max(worst, count * width)


def level_rules(coeffs, spec: QuadratureSpec):
    """
    为每一层选规则。弱层先用 WEAK_NODES 点 Gauss-Hermite；超出预算时缩小弱层点数，
    仍不够再换成 mc_samples 点的对偶蒙特卡洛规则。
    """
    h = field_spacing(spec)
    weak_levels = sum(1 for c in coeffs if c > 0.0 and not _is_strong(c, h))
    budget = spec.max_tensor_points

    def build(nodes, weights):
        rules = []
        for c in coeffs:
            if c == 0.0:
                rules.append(POINT_RULE)
            elif _is_strong(c, h):
                rules.append(lattice_rule(c, h))
            else:
                rules.append(node_rule(c, nodes, weights))
        return rules

    if _tensor_points(coeffs, h, WEAK_NODES) <= budget:
        return build(*gauss_hermite_rule(WEAK_NODES))
    if weak_levels:
        size = WEAK_NODES - 1
        while size >= MIN_WEAK_NODES and _tensor_points(coeffs, h, size) > budget:
            size -= 1
        if size >= MIN_WEAK_NODES:
            logger.info(f"网格超出预算 {budget}, 弱层改用 {size} 点 Gauss-Hermite")
            return build(*gauss_hermite_rule(size))
        if spec.mc_samples == 0:
            raise BudgetExceeded(f"{weak_levels} 个弱层的张量网格超出预算 {budget}, 且未启用蒙特卡洛回退")
        nodes, weights = monte_carlo_rule(spec.mc_samples, spec.mc_seed)
        if _tensor_points(coeffs, h, nodes.size) <= budget:
            logger.info(f"网格超出预算 {budget}, 弱层改用 {nodes.size} 点对偶蒙特卡洛规则")
            return build(nodes, weights)
    raise BudgetExceeded(f"场系数 {tuple(coeffs)} 在间距 h={h:g} 下的网格超出预算 {budget}")


def gauss_expect(f, spec: QuadratureSpec) -> float:
    nodes, weights = gauss_hermite_rule(spec.nodes_per_level)
    values = np.asarray(f(nodes), dtype=float)
    if values.shape != nodes.shape:
        values = np.array([f(z) for z in nodes], dtype=float)
    if not np.all(np.isfinite(values)):
        raise NonFiniteIntegrand("被积函数在求积节点处出现 NaN/inf")
    return float(weights @ values)


def _check_thetas(thetas, k):
    if len(thetas) != k:
        raise ShapeMismatch(f"θ 个数应为 {k}, 实际为 {len(thetas)}")
    for lo, hi in zip(thetas, thetas[1:]):
        if lo >= hi:
            raise DomainError(f"θ 必须严格递增: {thetas}")
    for theta in thetas:
        if not MIN_THETA <= theta <= 1.0:
            raise DomainError(f"θ 必须在 [{MIN_THETA}, 1] 内: {thetas}")


class NestedGaussianAverage:
    """
    构造 log 𝒩_a 与伸缩权重 𝒲_b。

    第 a 层（从 0 计）把定义在 P_a 上的函数积分到 P_{a-1} 上，
    P_a 为 "偏移 × 格点" 的二维数组。average() 由内向外逐层积分：
    第 1..K 层按 𝒲 加权，最外层不加权。
    """

    def __init__(self, arg: FieldArgument, thetas, spec: QuadratureSpec):
        thetas = tuple(float(t) for t in thetas)
        k = len(arg.coeffs) - 1
        if k < 0:
            raise ShapeMismatch("至少需要一层场系数")
        _check_thetas(thetas, k)
        self.k = k
        self.thetas = thetas
        self.spacing = field_spacing(spec)
        self._rules = level_rules(arg.coeffs, spec)

        offsets, radius = np.array([arg.offset]), 0
        self._parent_counts = []
        for rule in self._rules:
            self._parent_counts.append(offsets.size)
            if rule.kind == 'nodes':
                offsets = (offsets[:, None] + rule.shifts[None, :]).ravel()
            radius += rule.half_width
        self.g = offsets[:, None] + self.spacing * np.arange(-radius, radius + 1)[None, :]

        log_n = [None] * (k + 1)
        log_n[k] = log_two_cosh(self.g)
        if not np.all(np.isfinite(log_n[k])):
            raise NonFiniteIntegrand(f"log 2cosh 在网格上出现非有限值 (offset={arg.offset}, coeffs={arg.coeffs})")
        ratios = [thetas[a] / self._theta(a + 1) for a in range(k)]
        for a in range(k - 1, -1, -1):
            log_n[a] = logsumexp(ratios[a] * self._gather(a + 1, log_n[a + 1]) + self._rules[a + 1].log_weights,
                                 axis=-1)
        self._log_n = log_n

        # kernels[b] = w_b · 𝒲_b，沿最后一个轴求和为 1
        self._kernels = [None] * (k + 1)
        for b in range(1, k + 1):
            log_kernel = (ratios[b - 1] * self._gather(b, log_n[b]) - log_n[b - 1][..., None]
                          + self._rules[b].log_weights)
            self._kernels[b] = np.exp(log_kernel)
        self._outer_weights = np.exp(self._rules[0].log_weights)

    def _theta(self, level):
        return self.thetas[level] if level < self.k else 1.0

    def _gather(self, level, values):
        """把 P_level 上的值排成 (偏移, 格点, 本层节点) 三维，最后一轴对应本层积分。"""
        rule = self._rules[level]
        if rule.kind == 'point':
            return values[..., None]
        if rule.kind == 'lattice':
            return sliding_window_view(values, rule.size, axis=1)
        return values.reshape(self._parent_counts[level], rule.size, -1).transpose(0, 2, 1)

    def _outer(self, values) -> float:
        return float(np.sum(self._gather(0, values) * self._outer_weights))

    def log_partition(self) -> float:
        """(1/θ₁) 𝔼₁ log 𝒩₁，含 log 2；K=0 时为 𝔼 log 2cosh(g)。"""
        outer = self._outer(self._log_n[0])
        return outer / self.thetas[0] if self.k > 0 else outer

    def average(self, values, square_at_level=None) -> float:
        """
        伸缩平均 𝔼₁ Ê₂ … Ê_{K+1}[values]。

        square_at_level = s 时，在对第 s+1..K+1 层求完平均之后、对第 1..s 层
        求平均之前取平方：s ∈ 1..K 给出 q̄_s 型量，s = 0 对整体平均取平方。
        """
        if square_at_level is not None and not 0 <= square_at_level <= self.k:
            raise ShapeMismatch(f"square_at_level 必须在 0..{self.k}: {square_at_level}")
        acc = np.broadcast_to(np.asarray(values, dtype=float), self.g.shape)
        for level in range(self.k, 0, -1):
            acc = np.sum(self._gather(level, acc) * self._kernels[level], axis=-1)
            if square_at_level == level:
                acc = acc ** 2
        result = self._outer(acc)
        if square_at_level == 0:
            result = result ** 2
        return result

    def tanh_moments(self):
        """(m, q̄₁..q̄_{K+1})：一次网格计算得到全部自洽方程右端。"""
        t = np.tanh(self.g)
        m = self.average(t)
        qs = [self.average(t, square_at_level=a) for a in range(1, self.k + 1)]
        qs.append(self.average(t * t))
        return m, tuple(qs)


def nested_log_cosh_expect(arg: FieldArgument, thetas, spec: QuadratureSpec) -> float:
    return NestedGaussianAverage(arg, thetas, spec).log_partition()


def nested_ratio_expect(arg: FieldArgument, thetas, inner: str, square_at_level=None,
                        spec: QuadratureSpec | None = None) -> float:
    spec = spec or QuadratureSpec()
    grid = NestedGaussianAverage(arg, thetas, spec)
    if inner == 'tanh':
        values = np.tanh(grid.g)
    elif inner == 'tanh2':
        values = np.tanh(grid.g) ** 2
    elif inner == 'none':
        values = 1.0
    else:
        raise ValueError(f"未知的被积函数选择: {inner!r}")
    return grid.average(values, square_at_level)
