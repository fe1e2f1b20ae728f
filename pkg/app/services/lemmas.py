"""
插值压强导数恒等式的有限 N 数值检验。

σ 求和精确枚举；无序与辅助高斯场用公共随机数蒙特卡洛（对偶成对），
有限差分的每个模板点使用完全相同的抽样。

最内层的场在每个无序样本上重复抽取 inner_samples 次：第 0 层时对 log 𝒵
取平均，第 1 层时对 𝒵^θ 取平均后再取 (1/θ) log，并对复本数做 1/L 外推。
"""
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp, softmax

from app.core.errors import BudgetExceeded, DomainError, RangeViolation
from app.core.types import HopfieldParams, ModelKind, SkParams
from app.services.disorder import pattern_count
from app.services.enumeration import all_configurations
from app.utils.logger import logger
from app.utils.rng import substream

MAX_SPINS = 10
CHUNK = 250
MAX_CHUNK_ENTRIES = 2_000_000
SELECTORS = ('t', 'w', 'z', 'x1', 'x2', 'y1', 'y2')


@dataclass(frozen=True)
class InterpolationPoint:
    t: float
    xs: tuple
    ys: tuple = ()
    z: float = 0.0
    w: float = 0.0
    level: int = 0
    thetas: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, 'xs', tuple(float(x) for x in self.xs))
        object.__setattr__(self, 'ys', tuple(float(y) for y in self.ys))
        object.__setattr__(self, 'thetas', tuple(float(t) for t in self.thetas))
        if self.level not in (0, 1):
            raise RangeViolation(f"只支持第 0、1 层插值: {self.level}")
        if not 0.0 <= self.t <= 1.0:
            raise RangeViolation(f"t 必须在 [0, 1] 内: {self.t}")
        if len(self.xs) != self.level + 1 or any(x < 0.0 for x in self.xs):
            raise RangeViolation(f"x 需要 {self.level + 1} 个非负分量: {self.xs}")
        if self.ys and (len(self.ys) != self.level + 1 or any(y < 0.0 for y in self.ys)):
            raise RangeViolation(f"y 需要 {self.level + 1} 个非负分量: {self.ys}")
        if len(self.thetas) != self.level or any(not 0.0 < th < 1.0 for th in self.thetas):
            raise RangeViolation(f"第 {self.level} 层需要 {self.level} 个 θ ∈ (0,1): {self.thetas}")
        if self.z >= 1.0:
            raise RangeViolation(f"z 必须 < 1: {self.z}")

    @property
    def theta(self):
        # 第 0 层的恒等式等价于 θ = 0 的形式
        return self.thetas[0] if self.level else 0.0

    def value(self, which):
        if which in ('t', 'w', 'z'):
            return getattr(self, which)
        index = int(which[1]) - 1
        values = self.xs if which[0] == 'x' else self.ys
        if index >= len(values):
            raise RangeViolation(f"第 {self.level} 层没有变量 {which}")
        return values[index]

    def shifted(self, which, delta):
        if which in ('t', 'w', 'z'):
            return replace(self, **{which: getattr(self, which) + delta})
        index = int(which[1]) - 1
        name = 'xs' if which[0] == 'x' else 'ys'
        values = list(getattr(self, name))
        values[index] += delta
        return replace(self, **{name: tuple(values)})


@dataclass(frozen=True)
class DerivativeCheck:
    fd_lhs: float
    bracket_rhs: float
    abs_diff: float

    @property
    def rel_diff(self):
        return self.abs_diff / max(abs(self.bracket_rhs), 1e-300)


def _antithetic_draws(seed, tag, samples, draw):
    """第 2k 与 2k+1 个样本互为对偶（全部高斯量取反）。"""
    draws = []
    for r in range(samples):
        if r % 2 == 0:
            draws.append(draw(substream(seed, 'lemma', tag, r // 2)))
        else:
            draws.append(tuple(-v for v in draws[-1]))
    return draws


def _stack(draws, index):
    return np.array([d[index] for d in draws])


def _chi_square(values):
    """最后一维上 Σ(g² − 1)。"""
    return np.sum(values ** 2 - 1.0, axis=-1)


def _broken(avg, kind, theta, inner_field):
    """(1−θ)·⟨·⟩₂，外层场再加 θ·⟨·⟩₁。"""
    value = (1.0 - theta) * avg[f'{kind}_in']
    if not inner_field:
        value += theta * avg[f'{kind}_out']
    return value


class _SkInterpolation:
    model = ModelKind.SK
    width = 1

    def __init__(self, params: SkParams, n, point, inner):
        self.params = params
        self.n = n
        self.level = point.level
        self.inner = inner
        self.states = all_configurations(n)
        self.mags = self.states.mean(axis=1)

    def draw(self, rng):
        n = self.n
        return (rng.standard_normal((n, n)), rng.standard_normal((self.level, n)),
                rng.standard_normal((self.inner, n)))

    def components(self, draws):
        z = np.triu(_stack(draws, 0), k=1)
        z = z + np.transpose(z, (0, 2, 1))
        s = self.states
        return {
            'pair': 0.5 * np.einsum('si,cij,sj->cs', s, z, s),
            'outer': np.einsum('can,sn->cas', _stack(draws, 1), s),
            'inner': np.einsum('cln,sn->cls', _stack(draws, 2), s),
            'chi_pair': np.sum(np.triu(_stack(draws, 0) ** 2 - 1.0, k=1), axis=(1, 2)),
            'chi_outer': _chi_square(_stack(draws, 1)),
            'chi_inner': _chi_square(_stack(draws, 2)).mean(axis=1),
        }

    def control(self, comps, point):
        """压强按 β 展开的首阶 χ² 涨落，期望为零。"""
        p, n = self.params, self.n
        chi = point.t * p.j ** 2 / n * comps['chi_pair'] + point.xs[self.level] * comps['chi_inner']
        for a in range(self.level):
            chi = chi + point.xs[a] * comps['chi_outer'][:, a]
        return p.beta ** 2 / (2.0 * n) * chi

    def log_weights(self, comps, point):
        p, n, mag = self.params, self.n, self.mags
        outer = math.sqrt(point.t) * p.j / math.sqrt(n) * comps['pair']
        for a in range(self.level):
            outer = outer + math.sqrt(point.xs[a]) * comps['outer'][:, a, :]
        local = point.t * p.j0 * n * mag ** 2 / 2.0 + point.w * p.j0 * n * mag
        log_b = outer[:, None, :] + local[None, None, :] + math.sqrt(point.xs[self.level]) * comps['inner']
        return p.beta * log_b

    def observables(self, comps, point, pi, weights):
        s, n = self.states, self.n
        pairs = np.einsum('cls,si,sj->clij', pi, s, s)
        obs = _replica_moments(pi @ s, weights, 'q', n)
        obs.update(_replica_moments(pairs.reshape(*pairs.shape[:2], -1), weights, 'q2', n * n))
        obs['m'] = np.einsum('cl,cl->', weights, pi @ self.mags)
        obs['m2'] = np.einsum('cl,cl->', weights, pi @ self.mags ** 2)
        return obs

    def bracket(self, which, point, avg):
        p, theta = self.params, point.theta
        b2 = p.beta ** 2
        if which == 't':
            q2 = 1.0 - _broken(avg, 'q2', theta, inner_field=False)
            return b2 * p.j ** 2 / 4.0 * q2 + p.beta * p.j0 / 2.0 * avg['m2']
        if which in ('x1', 'x2'):
            inner_field = int(which[1]) - 1 == self.level
            return b2 / 2.0 * (1.0 - _broken(avg, 'q', theta, inner_field))
        if which == 'w':
            return p.beta * p.j0 * avg['m']
        raise RangeViolation(f"SK 插值没有变量 {which}")


class _HopfieldInterpolation:
    """t 扮演 β 的角色；τ 为标准高斯，对每个 σ 解析积分。"""

    model = ModelKind.HOPFIELD

    def __init__(self, params: HopfieldParams, n, point, inner):
        if not point.ys:
            raise RangeViolation("Hopfield 插值需要 y 分量")
        self.n = n
        self.p = max(1, pattern_count(n, params.alpha) - 1)
        self.alpha = self.p / n
        self.width = self.p
        self.level = point.level
        self.inner = inner
        self.states = all_configurations(n)
        # Mattis 规范下待检索模式为全 1
        self.retrieval = self.states.sum(axis=1)

    def draw(self, rng):
        n, p, level, inner = self.n, self.p, self.level, self.inner
        return (rng.standard_normal((p, n)), rng.standard_normal((level, n)), rng.standard_normal((inner, n)),
                rng.standard_normal((level, p)), rng.standard_normal((inner, p)))

    def components(self, draws):
        s = self.states
        return {
            'overlap': np.einsum('sn,cpn->csp', s, _stack(draws, 0)),
            'outer': np.einsum('can,sn->cas', _stack(draws, 1), s),
            'inner': np.einsum('cln,sn->cls', _stack(draws, 2), s),
            'j_outer': _stack(draws, 3),
            'j_inner': _stack(draws, 4),
            'chi_overlap': _chi_square(_stack(draws, 0).reshape(len(draws), -1)),
            'chi_outer': _chi_square(_stack(draws, 1)),
            'chi_inner': _chi_square(_stack(draws, 2)).mean(axis=1),
            'chi_j_outer': _chi_square(_stack(draws, 3)),
            'chi_j_inner': _chi_square(_stack(draws, 4)).mean(axis=1),
        }

    def control(self, comps, point):
        n, level = self.n, self.level
        chi = point.xs[level] * comps['chi_inner']
        for a in range(level):
            chi = chi + point.xs[a] * comps['chi_outer'][:, a]
        tau = point.t / n * comps['chi_overlap'] + point.ys[level] * comps['chi_j_inner']
        for a in range(level):
            tau = tau + point.ys[a] * comps['chi_j_outer'][:, a]
        return (chi + tau / (1.0 - point.z)) / (2.0 * n)

    def _shift(self, comps, point):
        """给定 σ 时 τ 的高斯均值乘以 (1−z)。"""
        b = math.sqrt(point.t / self.n) * comps['overlap'][:, None, :, :]
        for a in range(self.level):
            b = b + math.sqrt(point.ys[a]) * comps['j_outer'][:, a, None, None, :]
        return b + math.sqrt(point.ys[self.level]) * comps['j_inner'][:, :, None, :]

    def log_weights(self, comps, point):
        n, ret = self.n, self.retrieval
        log_b = (point.t / (2.0 * n) * ret ** 2 + point.w * ret)[None, None, :]
        for a in range(self.level):
            log_b = log_b + math.sqrt(point.xs[a]) * comps['outer'][:, a, None, :]
        log_b = log_b + math.sqrt(point.xs[self.level]) * comps['inner']
        log_b = log_b + np.sum(self._shift(comps, point) ** 2, axis=-1) / (2.0 * (1.0 - point.z))
        return log_b - 0.5 * self.p * math.log(1.0 - point.z)

    def observables(self, comps, point, pi, weights):
        n, p = self.n, self.p
        mean_tau = self._shift(comps, point)[:, :pi.shape[1]] / (1.0 - point.z)
        tau = np.einsum('cls,clsp->clp', pi, mean_tau)
        tau2 = np.einsum('cls,clsp->clp', pi, mean_tau ** 2) + 1.0 / (1.0 - point.z)
        spin_tau = np.einsum('cls,si,clsp->clip', pi, self.states, mean_tau)
        obs = _replica_moments(pi @ self.states, weights, 'q', n)
        obs.update(_replica_moments(tau, weights, 'p', p))
        obs.update(_replica_moments(spin_tau.reshape(*spin_tau.shape[:2], -1), weights, 'pq', n * p))
        obs['p11'] = np.einsum('cl,cl->', weights, tau2.mean(axis=-1))
        mags = self.retrieval / n
        obs['m'] = np.einsum('cl,cl->', weights, pi @ mags)
        obs['m2'] = np.einsum('cl,cl->', weights, pi @ mags ** 2)
        return obs

    def bracket(self, which, point, avg):
        theta, alpha = point.theta, self.alpha
        if which == 't':
            return 0.5 * avg['m2'] + 0.5 * alpha * (avg['p11'] - _broken(avg, 'pq', theta, inner_field=False))
        if which in ('x1', 'x2', 'y1', 'y2'):
            inner_field = int(which[1]) - 1 == self.level
            if which[0] == 'x':
                return 0.5 * (1.0 - _broken(avg, 'q', theta, inner_field))
            return 0.5 * alpha * (avg['p11'] - _broken(avg, 'p', theta, inner_field))
        if which == 'z':
            return 0.5 * alpha * avg['p11']
        if which == 'w':
            return avg['m']
        raise RangeViolation(f"Hopfield 插值没有变量 {which}")


def _replica_moments(values, weights, name, size):
    """
    values: (C, L, D) 的热平均。

    返回块内求和的 Σ_l 𝒲 ω²（内层复本）与 (Σ_l 𝒲 ω)²（外层复本），均按 D 归一。
    """
    inner = np.einsum('cl,cld->', weights, values ** 2) / size
    outer = np.sum(np.einsum('cl,cld->cd', weights, values) ** 2) / size
    return {f'{name}_in': inner, f'{name}_out': outer}


def _sample_pressures(log_b, point):
    """每个无序样本的 𝒜 估计及内层 log 𝒵。"""
    log_z = logsumexp(log_b, axis=-1)
    inner = log_z.shape[-1]
    if point.level == 0:
        return log_z.mean(axis=-1), log_z
    theta = point.theta
    return (logsumexp(theta * log_z, axis=-1) - math.log(inner)) / theta, log_z


def _inner_weights(log_z, point):
    if point.level == 0:
        return np.full_like(log_z, 1.0 / log_z.shape[-1])
    return softmax(point.theta * log_z, axis=-1)


def _replica_parts(point, inner):
    """
    (复本数, 系数) 组合。第 1 层的 (1/θ) log 平均 𝒵^θ 及复本权重平均都有 O(1/L) 偏差，
    用全部 L 个与前 L/2 个内层复本外推 2·𝒜_L − 𝒜_{L/2}；第 0 层无偏。
    """
    if point.level == 0 or inner < 2:
        return ((inner, 1.0),)
    return ((inner, 2.0), (inner // 2, -1.0))


def interpolation_derivative_check(model, params, n: int, point: InterpolationPoint, which: str,
                                   disorder_samples: int, seed: int = 0, inner_samples: int = 32,
                                   step: float = 1e-3, richardson: bool = True) -> DerivativeCheck:
    """
    有限差分 ∂𝒜/∂(which) 与对应括号表达式的比较。

    步长为 step·max(|变量|, 1)；richardson 时用 h 与 h/2 两个中心差分外推。
    """
    if n > MAX_SPINS:
        raise BudgetExceeded(f"插值检验最多 {MAX_SPINS} 个自旋, 请求 {n}")
    if which not in SELECTORS:
        raise RangeViolation(f"未知的导数变量: {which!r}")
    if disorder_samples < 1 or inner_samples < 1:
        raise RangeViolation("样本数必须 ≥ 1")
    model = ModelKind(model)
    engine_cls = _SkInterpolation if model is ModelKind.SK else _HopfieldInterpolation
    engine = engine_cls(params, n, point, inner_samples)
    center = point.value(which)

    h = step * max(abs(center), 1.0)
    offsets = (h, -h, h / 2.0, -h / 2.0) if richardson else (h, -h)
    try:
        stencil = [point.shifted(which, d) for d in offsets]
    except RangeViolation as exc:
        raise DomainError(f"{which} 的差分模板越出定义域: {exc}") from None

    totals = np.zeros(len(stencil))
    sums = {}
    parts = _replica_parts(point, engine.inner)
    draws = _antithetic_draws(seed, model.value, disorder_samples, engine.draw)
    chunk = max(1, min(CHUNK, MAX_CHUNK_ENTRIES // (engine.inner * 2 ** n * engine.width)))
    for start in range(0, disorder_samples, chunk):
        comps = engine.components(draws[start:start + chunk])
        for i, shifted in enumerate(stencil):
            log_b = engine.log_weights(comps, shifted)
            for size, coef in parts:
                pressures, _ = _sample_pressures(log_b[:, :size], shifted)
                totals[i] += coef * pressures.sum()
            totals[i] -= n * engine.control(comps, shifted).sum()
        log_b = engine.log_weights(comps, point)
        for size, coef in parts:
            sub = log_b[:, :size]
            _, log_z = _sample_pressures(sub, point)
            observed = engine.observables(comps, point, softmax(sub, axis=-1), _inner_weights(log_z, point))
            for key, value in observed.items():
                sums[key] = sums.get(key, 0.0) + coef * float(value)

    values = totals / (disorder_samples * n)
    derivative = (values[0] - values[1]) / (2.0 * h)
    if richardson:
        half = (values[2] - values[3]) / h
        derivative = (4.0 * half - derivative) / 3.0
    averages = {key: value / disorder_samples for key, value in sums.items()}
    rhs = engine.bracket(which, point, averages)
    check = DerivativeCheck(float(derivative), float(rhs), float(abs(derivative - rhs)))
    logger.info(f"{model.value} 第 {point.level} 层 ∂{which}: 差分 {check.fd_lhs:.6f}, "
                f"括号 {check.bracket_rhs:.6f}, 相对差 {check.rel_diff:.2e}")
    return check
