import asyncio
import csv
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np

from app.core.errors import RangeViolation, RsbError
from app.core.hopfield_model import HopfieldProblem
from app.core.sk_model import SkProblem
from app.core.solver import SolverOptions, solve_problem, solve_with_theta_extremization
from app.core.types import HopfieldParams, ModelKind, QuadratureSpec, SkParams, SolveReport
from app.utils.logger import logger

MODEL_PARAMETERS = {
    ModelKind.SK: ('beta', 'j0', 'j'),
    ModelKind.HOPFIELD: ('beta', 'alpha'),
}


@dataclass(frozen=True)
class SolveRequest:
    """一次求解所需的全部输入，可跨进程传递。"""

    model: ModelKind
    k: int
    params: dict
    thetas: tuple = ()
    nodes: int | None = None
    seed: int = 0
    options: SolverOptions = field(default_factory=SolverOptions)
    extremize_theta: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'model', ModelKind(self.model))
        if self.k < 0:
            raise RangeViolation(f"k 必须 ≥ 0: {self.k}")
        if not self.extremize_theta and len(self.thetas) != self.k:
            raise RangeViolation(f"k={self.k} 需要 {self.k} 个 θ, 收到 {len(self.thetas)}")
        unknown = set(self.params) - set(MODEL_PARAMETERS[self.model])
        if unknown:
            raise RangeViolation(f"{self.model.value} 模型没有参数 {sorted(unknown)}")

    def model_params(self):
        if self.model is ModelKind.SK:
            return SkParams(**self.params)
        return HopfieldParams(**self.params)

    def problem(self):
        spec = QuadratureSpec(mc_seed=self.seed) if self.nodes is None else QuadratureSpec(
            nodes_per_level=self.nodes, mc_seed=self.seed)
        cls = SkProblem if self.model is ModelKind.SK else HopfieldProblem
        thetas = self.thetas if not self.extremize_theta else tuple(
            (a + 1) / (self.k + 1) for a in range(self.k))
        return cls(self.model_params(), self.k, thetas, spec)

    def with_params(self, **values):
        return replace(self, params={**self.params, **values})


def run_solve(request: SolveRequest) -> list:
    problem = request.problem()
    if request.extremize_theta:
        return solve_with_theta_extremization(problem, request.options)
    return solve_problem(problem, request.options)


def ranked(reports) -> list:
    """收敛分支按压强降序，全部保留。"""
    return sorted((r for r in reports if r.converged), key=lambda r: -r.pressure)


@dataclass(frozen=True)
class SweepAxis:
    name: str
    start: float
    stop: float
    steps: int

    def __post_init__(self):
        if self.steps < 1:
            raise RangeViolation(f"扫描轴 {self.name} 的 steps 必须 ≥ 1: {self.steps}")
        if self.stop < self.start:
            raise RangeViolation(f"扫描轴 {self.name} 需要 stop ≥ start: {self.start} > {self.stop}")

    @classmethod
    def parse(cls, text: str):
        """解析 name:start:stop:steps。"""
        parts = text.split(':')
        if len(parts) != 4:
            raise RangeViolation(f"扫描轴格式应为 name:start:stop:steps, 收到 {text!r}")
        name, start, stop, steps = parts
        try:
            return cls(name, float(start), float(stop), int(steps))
        except ValueError:
            raise RangeViolation(f"扫描轴数值无法解析: {text!r}") from None

    def values(self):
        if self.steps == 1:
            return [self.start]
        return [float(v) for v in np.linspace(self.start, self.stop, self.steps)]


@dataclass(frozen=True)
class SweepGrid:
    axis1: SweepAxis
    axis2: SweepAxis | None = None
    fixed: dict = field(default_factory=dict)

    def axes(self):
        return [a for a in (self.axis1, self.axis2) if a is not None]

    def points(self):
        """行优先顺序：第一轴为外层。"""
        names = [a.name for a in self.axes()]
        for values in product(*(a.values() for a in self.axes())):
            yield dict(zip(names, values))


def sweep_columns(request: SolveRequest):
    k = request.k
    columns = list(MODEL_PARAMETERS[request.model]) + ['k'] + [f'theta{a + 1}' for a in range(k)]
    columns += ['branch', 'm'] + [f'q{a + 1}' for a in range(k + 1)]
    if request.model is ModelKind.HOPFIELD:
        columns += [f'p{a + 1}' for a in range(k + 1)]
    return columns + ['pressure', 'residual', 'converged']


def _number(value):
    return repr(float(value))


def report_row(request: SolveRequest, report: SolveReport, thetas) -> dict:
    params = request.model_params().as_dict()
    row = {name: _number(params[name]) for name in MODEL_PARAMETERS[request.model]}
    row['k'] = str(request.k)
    for a in range(request.k):
        row[f'theta{a + 1}'] = _number(thetas[a]) if a < len(thetas) else ''
    row['branch'] = report.branch
    row['converged'] = 'true' if report.converged else 'false'
    if not report.converged or report.ansatz is None:
        return row
    a = report.ansatz
    row['m'] = _number(a.m)
    row.update({f'q{i + 1}': _number(q) for i, q in enumerate(a.qs)})
    if request.model is ModelKind.HOPFIELD:
        row.update({f'p{i + 1}': _number(p) for i, p in enumerate(a.ps)})
    row['pressure'] = _number(report.pressure)
    row['residual'] = _number(report.residual)
    return row


def solve_point(request: SolveRequest) -> list:
    """单个网格点：每个多起点分支一行，失败分支给出 converged=false 的空行。"""
    try:
        reports = run_solve(request)
    except RsbError:
        logger.error(f"网格点 {request.params} 求解失败: {traceback.format_exc()}")
        reports = [SolveReport(None, math.nan, math.nan, (), 0, False, branch='error')]
    rows = []
    for report in reports:
        thetas = report.ansatz.thetas if report.ansatz is not None else request.thetas
        rows.append(report_row(request, report, thetas))
    return rows


async def run_sweep(request: SolveRequest, grid: SweepGrid, jobs: int = 1) -> list:
    """并发求解网格点；结果按网格顺序缓冲后返回。"""
    requests = [request.with_params(**{**grid.fixed, **point}) for point in grid.points()]
    logger.info(f"扫描 {len(requests)} 个网格点, 并发数 {jobs}")
    if jobs <= 1:
        return [solve_point(r) for r in requests]
    loop = asyncio.get_running_loop()
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [loop.run_in_executor(pool, solve_point, r) for r in requests]
        return list(await asyncio.gather(*futures))


def write_sweep_csv(handle, request: SolveRequest, row_groups):
    writer = csv.DictWriter(handle, fieldnames=sweep_columns(request), restval='', lineterminator='\n')
    writer.writeheader()
    for rows in row_groups:
        writer.writerows(rows)
