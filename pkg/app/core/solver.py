import math
import traceback
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import isotonic_regression

from app.core.errors import (AnsatzError, BracketViolation, DomainError, MaxIterations, RangeViolation,
                             RsbError)
from app.core.types import RsbAnsatz, SolveReport
from app.utils.logger import logger

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
THETA_LIMITS = (0.01, 0.99)


@dataclass(frozen=True)
class SolverOptions:
    damping: float = 0.5
    tol: float = 1e-10
    max_iter: int = 20000
    projection: bool = True
    multistart: tuple = ()
    strict: bool = False

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise RangeViolation(f"damping 必须在 (0, 1] 内: {self.damping}")
        if not self.tol > 0.0:
            raise RangeViolation(f"tol 必须为正: {self.tol}")
        if self.max_iter < 1:
            raise RangeViolation(f"max_iter 必须 ≥ 1: {self.max_iter}")


class _AnsatzCodec:
    """RsbAnsatz 与 [m, q̄..., p̄...] 向量之间的转换及单调盒投影。"""

    def __init__(self, template: RsbAnsatz):
        self.template = template
        self.nq = len(template.qs)

    def encode(self, a: RsbAnsatz):
        return np.array((a.m,) + a.qs + a.ps, dtype=float)

    def decode(self, x):
        return replace(self.template, m=x[0], qs=tuple(x[1:1 + self.nq]), ps=tuple(x[1 + self.nq:]))

    def project(self, x):
        x = x.copy()
        x[0] = np.clip(x[0], -1.0, 1.0)
        qs = x[1:1 + self.nq]
        x[1:1 + self.nq] = np.clip(isotonic_regression(qs).x, 0.0, 1.0)
        if x.size > 1 + self.nq:
            ps = x[1 + self.nq:]
            x[1 + self.nq:] = np.clip(isotonic_regression(ps).x, 0.0, None)
        return x


class _VectorCodec:
    def encode(self, value):
        return np.atleast_1d(np.asarray(value, dtype=float))

    def decode(self, x):
        return x.copy()

    def project(self, x):
        return x


def damped_fixed_point(mapping, init, opts: SolverOptions | None = None) -> SolveReport:
    """
    阻尼不动点迭代 x ← (1−γ)x + γ·map(x)。

    init 为 RsbAnsatz 时每一步后投影到单调盒；否则按普通实向量迭代。
    未收敛时返回 converged=False 的报告，strict 模式下抛出 MaxIterations。
    """
    opts = opts or SolverOptions()
    codec = _AnsatzCodec(init) if isinstance(init, RsbAnsatz) else _VectorCodec()
    x = codec.encode(init)
    if opts.projection:
        x = codec.project(x)
    gamma = opts.damping
    residual = math.inf
    converged = False
    iterations = 0

    for iterations in range(1, opts.max_iter + 1):
        current = codec.decode(x)
        try:
            fx = codec.encode(mapping(current))
        except DomainError as exc:
            exc.iterate = current
            logger.debug(f"第 {iterations} 步映射越出定义域: {exc}")
            raise
        if not np.all(np.isfinite(fx)):
            logger.warning(f"第 {iterations} 步映射输出非有限值, 迭代发散")
            residual = math.inf
            break
        residual = float(np.max(np.abs(fx - x)))
        x = (1.0 - gamma) * x + gamma * fx
        if opts.projection:
            x = codec.project(x)
        if iterations % 1000 == 0:
            logger.debug(f"迭代 {iterations}: 残差 {residual:.3e}")
        if residual <= opts.tol:
            converged = True
            break

    point = codec.decode(x)
    report = SolveReport(
        ansatz=point if isinstance(point, RsbAnsatz) else None,
        pressure=math.nan,
        residual=residual,
        stationarity=(),
        iterations=iterations,
        converged=converged,
        point=tuple(float(v) for v in (point.free_vector() if isinstance(point, RsbAnsatz) else point)),
    )
    if not converged:
        logger.warning(f"不动点迭代在 {iterations} 步内未收敛, 残差 {residual:.3e}")
        if opts.strict:
            raise MaxIterations(f"{iterations} 步内未收敛, 残差 {residual:.3e}", report=report)
    return report


def _shift(a: RsbAnsatz, indices, delta):
    vector = list(a.free_vector())
    for index in indices:
        vector[index] += delta
    return a.with_free_vector(vector)


def _blocks(a: RsbAnsatz, step):
    """m̄ 单独一块；间隙不超过 step 的相邻 q̄ 视为塌缩层，并成一块整体平移。"""
    blocks, current = [(0,)], [1]
    for index in range(2, len(a.qs) + 1):
        if a.qs[index - 1] - a.qs[index - 2] <= step:
            current.append(index)
        else:
            blocks.append(tuple(current))
            current = [index]
    blocks.append(tuple(current))
    return blocks


def _room(a: RsbAnsatz, block):
    """块在单调盒内向下、向上可移动的距离。"""
    vector = a.free_vector()
    if block == (0,):
        return vector[0] + 1.0, 1.0 - vector[0]
    lo = vector[block[0] - 1] if block[0] > 1 else 0.0
    hi = vector[block[-1] + 1] if block[-1] + 1 < len(vector) else 1.0
    return vector[block[0]] - lo, hi - vector[block[-1]]


def _derivative(pressure, a, block, h, base):
    down, up = _room(a, block)
    if down >= h and up >= h:
        return (pressure(_shift(a, block, h)) - pressure(_shift(a, block, -h))) / (2.0 * h)
    for sign, room in ((1.0, up), (-1.0, down)):
        if room >= 2.0 * h:
            logger.info(f"分量 {block} 贴近单调盒边界, 改用单侧差分")
            f1 = pressure(_shift(a, block, sign * h))
            f2 = pressure(_shift(a, block, 2.0 * sign * h))
            return sign * (-3.0 * base() + 4.0 * f1 - f2) / (2.0 * h)
    return None


def stationarity_check(pressure, a: RsbAnsatz, step: float = 1e-5) -> tuple:
    """
    对 (m̄, q̄₁..q̄_{K+1}) 的有限差分梯度。

    塌缩层（间隙不超过 step）沿保序方向整体平移，块内各分量报告同一方向导数；
    贴着盒边界 m̄ = ±1、q̄ = 0 或 1 的块改用指向盒内的二阶单侧差分。
    模板点越出压强定义域时步长减半，最多 8 次，之后抛出 DomainError。
    """
    cache = {}

    def base():
        if 'value' not in cache:
            cache['value'] = pressure(a)
        return cache['value']

    gradient = [0.0] * len(a.free_vector())
    for block in _blocks(a, step):
        h = step
        value = None
        for _ in range(9):
            try:
                value = _derivative(pressure, a, block, h, base)
            except (DomainError, AnsatzError):
                value = None
            if value is not None:
                break
            h /= 2.0
        if value is None:
            raise DomainError(f"分量 {block} 的差分模板在步长减半 8 次后仍越出定义域", iterate=a)
        for index in block:
            gradient[index] = value
    return tuple(gradient)


@dataclass(frozen=True)
class ThetaSearch:
    thetas: tuple
    value: float
    degenerate: bool
    curvature: tuple

    def to_json(self):
        return {'thetas': list(self.thetas), 'value': self.value, 'degenerate': self.degenerate,
                'curvature': list(self.curvature)}


def _golden(f, lo, hi, tol, maximize):
    sign = 1.0 if maximize else -1.0
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = sign * f(x1), sign * f(x2)
    while hi - lo > tol:
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = sign * f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = sign * f(x2)
    return 0.5 * (lo + hi)


def extremize_theta(pressure_at_solution, bracket, tol: float = 1e-4, scan_points: int = 9) -> ThetaSearch:
    """
    逐坐标黄金分割搜索 θ 的驻点。

    每个坐标先粗扫描判断内部极值是极大还是极小，再在相邻扫描点之间细化；
    目标函数在扫描上恒定时返回区间中点并标记退化。
    """
    bracket = [tuple(map(float, b)) for b in bracket]
    for lo, hi in bracket:
        if not (THETA_LIMITS[0] <= lo < hi <= THETA_LIMITS[1]):
            raise BracketViolation(f"θ 区间必须满足 {THETA_LIMITS[0]} ≤ lo < hi ≤ {THETA_LIMITS[1]}: {(lo, hi)}")
    k = len(bracket)
    thetas = [lo + (hi - lo) * (j + 1) / (k + 1) for j, (lo, hi) in enumerate(bracket)]
    flat = [False] * k
    gap = 1e-6

    for _ in range(50):
        moved = 0.0
        for j, (lo, hi) in enumerate(bracket):
            lo_j = max(lo, thetas[j - 1] + gap) if j > 0 else lo
            hi_j = min(hi, thetas[j + 1] - gap) if j < k - 1 else hi

            def along(x, j=j):
                trial = list(thetas)
                trial[j] = x
                return pressure_at_solution(tuple(trial))

            grid = np.linspace(lo_j, hi_j, scan_points)
            values = np.array([along(x) for x in grid])
            spread = float(values.max() - values.min())
            if spread <= 1e-12 * max(1.0, float(np.abs(values).max())):
                flat[j] = True
                new = 0.5 * (lo_j + hi_j)
            else:
                flat[j] = False
                i_max, i_min = int(values.argmax()), int(values.argmin())
                maximize = 0 < i_max < scan_points - 1 or not 0 < i_min < scan_points - 1
                i = i_max if maximize else i_min
                a_lo, a_hi = grid[max(i - 1, 0)], grid[min(i + 1, scan_points - 1)]
                new = _golden(along, a_lo, a_hi, tol, maximize)
            moved = max(moved, abs(new - thetas[j]))
            thetas[j] = new
        if moved <= tol:
            break

    value = pressure_at_solution(tuple(thetas))
    curvature = []
    for j in range(k):
        if flat[j]:
            curvature.append(0)
            continue
        h = max(1e-3, 10.0 * tol)
        up, down = list(thetas), list(thetas)
        up[j] += h
        down[j] -= h
        second = pressure_at_solution(tuple(up)) - 2.0 * value + pressure_at_solution(tuple(down))
        curvature.append(int(np.sign(second)))
    degenerate = all(flat)
    if degenerate:
        logger.info("θ 目标函数在扫描区间上恒定, 返回区间中点")
    return ThetaSearch(tuple(thetas), value, degenerate, tuple(curvature))


def default_initial_ansatze(problem):
    k = problem.k
    return (
        ('retrieval', problem.ansatz(0.999, np.linspace(0.99, 0.5, k + 1)[::-1])),
        ('glass', problem.ansatz(0.0, np.linspace(0.01, 0.3, k + 1))),
    )


def solve_problem(problem, opts: SolverOptions | None = None) -> list:
    """多起点求解；每个起点返回一份报告，失败的分支 converged=False。"""
    opts = opts or SolverOptions()
    starts = opts.multistart or default_initial_ansatze(problem)
    reports = []
    for index, start in enumerate(starts):
        name, init = start if isinstance(start, tuple) else (f'start{index}', start)
        try:
            report = damped_fixed_point(problem.sce, init, opts)
        except RsbError as exc:
            logger.warning(f"分支 {name} 失败: {exc}")
            reports.append(SolveReport(None, math.nan, math.nan, (), 0, False, branch=name))
            continue
        if not report.converged:
            reports.append(replace(report, branch=name))
            continue
        try:
            ansatz = problem.complete(report.ansatz)
            pressure = problem.pressure(ansatz)
        except RsbError:
            logger.error(f"分支 {name} 收敛点压强求值失败: {traceback.format_exc()}")
            reports.append(replace(report, branch=name, converged=False))
            continue
        try:
            gradient = stationarity_check(problem.reduced_pressure, ansatz)
        except RsbError as exc:
            logger.warning(f"分支 {name} 驻点检验失败: {exc}")
            gradient = ()
        logger.info(f"分支 {name}: {report.iterations} 步收敛, 压强 {pressure:.10f}")
        reports.append(replace(report, ansatz=ansatz, pressure=pressure, stationarity=gradient, branch=name))
    return reports


def solve_with_theta_extremization(problem, opts: SolverOptions | None = None, bracket=THETA_LIMITS,
                                   tol: float = 1e-4) -> list:
    if problem.k == 0:
        return solve_problem(problem, opts)

    def objective(thetas):
        reports = [r for r in solve_problem(problem.with_thetas(thetas), opts) if r.converged]
        if not reports:
            raise DomainError(f"θ={thetas} 处没有收敛的分支")
        return max(r.pressure for r in reports)

    search = extremize_theta(objective, [bracket] * problem.k, tol)
    reports = solve_problem(problem.with_thetas(search.thetas), opts)
    return [replace(r, theta_search=search.to_json()) for r in reports]
