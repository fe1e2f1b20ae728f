"""
`verify` 子命令的验收套件。

每个套件返回 CheckResult 列表；value ≤ bound 即通过。
"""
import math
import traceback
from dataclasses import dataclass

import numpy as np

from app.core.errors import RsbError
from app.core.hopfield_model import HopfieldProblem, hop_pressure_rs
from app.core.sk_model import SkProblem, sk_pressure_krsb
from app.core.solver import SolverOptions, solve_problem
from app.core.types import HopfieldParams, QuadratureSpec, RsbAnsatz, SkParams, split_level
from app.services.disorder import draw_hopfield_sample, draw_sk_sample, mattis_gauge
from app.services.enumeration import enumerate_hopfield_pressure, enumerate_sk_pressure
from app.services.lemmas import InterpolationPoint, interpolation_derivative_check
from app.services.metropolis import metropolis_run, overlap_histogram
from app.utils.logger import logger

SUITES = ('collapse', 'stationarity', 'enumeration', 'lemmas', 'histogram')


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    bound: float

    @property
    def passed(self):
        return math.isfinite(self.value) and self.value <= self.bound


@dataclass(frozen=True)
class VerifyOptions:
    n: int | None = None
    samples: int | None = None
    seed: int = 0
    nodes: int | None = None
    sweeps: int | None = None
    inner_samples: int = 64
    histogram_out: str | None = None


def format_table(results) -> str:
    width = max([len(r.name) for r in results] + [5])
    lines = [f"{'check':<{width}}  {'value':>12}  {'bound':>12}  result"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {r.value:>12.4e}  {r.bound:>12.4e}  {'PASS' if r.passed else 'FAIL'}")
    return '\n'.join(lines)


def _spec(options):
    """未给 --nodes 时沿用 QuadratureSpec 的默认值（RSB_NODES）。"""
    return QuadratureSpec() if options.nodes is None else QuadratureSpec(nodes_per_level=options.nodes)


def _drop(values, index):
    return values[:index] + values[index + 1:]


def _max_diff(left: RsbAnsatz, right: RsbAnsatz):
    pairs = zip((left.m,) + left.qs + left.ps, (right.m,) + right.qs + right.ps)
    return max(abs(a - b) for a, b in pairs)


def _collapse_model(name, make_problem):
    """
    在 (β, θ) 的 5×5 网格上拆分一层再比较：压强与 SCE 映射都应与低一层一致。
    """
    results = []
    for k in (1, 2, 3):
        worst_pressure, worst_map = 0.0, 0.0
        base_thetas = tuple(np.linspace(0.25, 0.75, k - 1)) if k > 1 else ()
        for i, beta in enumerate(np.linspace(0.4, 1.6, 5)):
            for j, s in enumerate(np.linspace(0.1, 0.9, 5)):
                level = 1 + (i + j) % k
                lo = base_thetas[level - 2] if level >= 2 else 0.0
                hi = base_thetas[level - 1] if level - 1 < len(base_thetas) else 1.0
                base_problem = make_problem(float(beta), k - 1, base_thetas)
                base = base_problem.complete(base_problem.ansatz(0.6, np.linspace(0.55, 0.9, k)))
                split = split_level(base, level, lo + s * (hi - lo))
                problem = make_problem(float(beta), k, split.thetas)
                split = problem.complete(split)
                worst_pressure = max(worst_pressure,
                                     abs(problem.pressure(split) - base_problem.pressure(base)))
                mapped = problem.sce(split)
                merged = RsbAnsatz(k=k - 1, m=mapped.m, qs=_drop(mapped.qs, level),
                                   ps=_drop(mapped.ps, level) if mapped.ps else (), thetas=base.thetas)
                worst_map = max(worst_map, _max_diff(merged, base_problem.sce(base)))
        results.append(CheckResult(f"{name} K={k} pressure collapse", worst_pressure, 1e-10))
        results.append(CheckResult(f"{name} K={k} SCE collapse", worst_map, 1e-10))
    return results


def collapse_suite(options: VerifyOptions) -> list:
    spec = _spec(options)
    results = _collapse_model('sk', lambda beta, k, thetas: SkProblem(SkParams(beta, j0=0.5), k, thetas, spec))
    results += _collapse_model(
        'hopfield', lambda beta, k, thetas: HopfieldProblem(HopfieldParams(beta, alpha=0.05), k, thetas, spec))

    worst = 0.0
    for beta in np.linspace(0.4, 1.6, 5):
        for m in (0.0, 0.3, 0.8):
            exact = math.log(2.0) + math.log(math.cosh(beta * m)) - beta * m ** 2 / 2.0
            worst = max(worst, abs(hop_pressure_rs(HopfieldParams(float(beta), 0.0), m, 0.9, 0.0, spec) - exact))
    results.append(CheckResult("hopfield α=0 Curie-Weiss pressure", worst, 1e-12))
    high_t = abs(sk_pressure_krsb(SkParams(0.0, j0=1.0), RsbAnsatz.rs(0.3, 0.2), spec).pressure - math.log(2.0))
    results.append(CheckResult("sk β=0 pressure", high_t, 1e-15))
    return results


SK_STATIONARITY_PARAMS = (
    SkParams(0.5), SkParams(1.5), SkParams(2.0), SkParams(3.0), SkParams(4.0),
    SkParams(0.8, j0=1.2), SkParams(1.5, j0=1.2), SkParams(2.0, j0=1.0), SkParams(3.0, j0=1.5),
    SkParams(2.5, j0=0.5),
)
HOPFIELD_STATIONARITY_PARAMS = (
    HopfieldParams(1.5), HopfieldParams(2.0), HopfieldParams(3.0),
    HopfieldParams(1.5, alpha=0.02), HopfieldParams(2.0, alpha=0.05), HopfieldParams(3.0, alpha=0.05),
    HopfieldParams(3.0, alpha=0.08), HopfieldParams(4.0, alpha=0.05), HopfieldParams(2.5, alpha=0.03),
    HopfieldParams(4.0, alpha=0.03),
)
STATIONARITY_THETAS = ((), (0.5,), (0.3, 0.7))
STATIONARITY_POINTS = tuple(
    (model, params, thetas)
    for thetas in STATIONARITY_THETAS
    for model, group in (('sk', SK_STATIONARITY_PARAMS), ('hopfield', HOPFIELD_STATIONARITY_PARAMS))
    for params in group
)


def stationarity_suite(options: VerifyOptions) -> list:
    spec = _spec(options)
    results = []
    for model, params, thetas in STATIONARITY_POINTS:
        cls = SkProblem if model == 'sk' else HopfieldProblem
        problem = cls(params, len(thetas), thetas, spec)
        label = ', '.join(f"{k}={v:g}" for k, v in params.as_dict().items())
        try:
            reports = [r for r in solve_problem(problem, SolverOptions()) if r.converged]
        except RsbError:
            logger.error(f"驻点检验 {model} ({label}) 失败: {traceback.format_exc()}")
            reports = []
        gradients = [max(map(abs, r.stationarity)) for r in reports if r.stationarity]
        value = max(gradients) if gradients else math.inf
        results.append(CheckResult(f"{model} K={len(thetas)} ({label}) |∇A|", value, 1e-5))
    return results


def enumeration_suite(options: VerifyOptions) -> list:
    n = options.n or 12
    samples = options.samples or 200
    params = SkParams(0.3)
    mean, error = enumerate_sk_pressure(n, params, samples, options.seed)
    results = [CheckResult(f"sk N={n} high-T |A_N − (log 2 + β²/4)| − 3·SE",
                           abs(mean - (math.log(2.0) + params.beta ** 2 / 4.0)) - 3.0 * error, 0.02)]

    hop_n = 14
    hop = HopfieldParams(0.5, alpha=1.0 / hop_n)
    mean, error = enumerate_hopfield_pressure(hop_n, hop, samples, options.seed, p=1)
    problem = HopfieldProblem(hop, 0, (), _spec(options))
    pressures = [r.pressure for r in solve_problem(problem) if r.converged]
    value = abs(mean - max(pressures)) - 3.0 * error if pressures else math.inf
    results.append(CheckResult(f"hopfield N={hop_n} P=1 |A_N − A_RS| − 3·SE", value, 0.03))
    return results


def _lemma_checks():
    sk_weak = SkParams(0.5, j0=0.5)
    sk_rs = InterpolationPoint(t=0.6, xs=(0.4,), w=0.1)
    sk_1rsb = InterpolationPoint(t=0.6, xs=(0.3, 0.3), w=0.1, level=1, thetas=(0.5,))
    hop = HopfieldParams(1.0, alpha=0.35)
    hop_rs = InterpolationPoint(t=0.5, xs=(0.3,), ys=(0.3,), z=0.1, w=0.1)
    hop_1rsb = InterpolationPoint(t=0.5, xs=(0.2, 0.2), ys=(0.2, 0.2), z=0.1, w=0.1, level=1, thetas=(0.5,))
    return (
        [('sk', sk_weak, sk_rs, which) for which in ('t', 'x1', 'w')]
        + [('sk', sk_weak, sk_1rsb, which) for which in ('t', 'x1', 'x2', 'w')]
        + [('hopfield', hop, hop_rs, which) for which in ('t', 'x1', 'y1', 'z', 'w')]
        + [('hopfield', hop, hop_1rsb, which) for which in ('t', 'x1', 'x2', 'y1', 'y2', 'z', 'w')]
    )


def lemmas_suite(options: VerifyOptions) -> list:
    n = options.n or 6
    samples = options.samples or 5000
    results = []
    for model, params, point, which in _lemma_checks():
        check = interpolation_derivative_check(model, params, n, point, which, samples, options.seed,
                                               options.inner_samples)
        results.append(CheckResult(f"{model} level {point.level} ∂{which} relative", check.rel_diff, 1e-2))

    # t = 0 时 w 导数可解析：βJ₀ tanh(βJ₀w)
    exact = interpolation_derivative_check('sk', SkParams(1.0, j0=1.0), n, InterpolationPoint(t=0.0, xs=(0.0,), w=0.3),
                                           'w', 2, options.seed, 1)
    results.append(CheckResult("sk t=0 ∂w absolute", exact.abs_diff, 1e-10))
    results.append(CheckResult("sk t=0 ∂w vs tanh", abs(exact.bracket_rhs - math.tanh(0.3)), 1e-10))
    return results


def _pooled_histogram(n, params, beta, sweeps, bins, seed, samples):
    """对若干无序样本的 q₁₂ 直方图求和。"""
    pooled = None
    for index in range(samples):
        sample = draw_sk_sample(n, params, seed + index)
        histogram = overlap_histogram(sample, beta, sweeps, bins=bins, seed=seed + index)
        pooled = histogram if pooled is None else pooled.merge(histogram)
    return pooled


def histogram_suite(options: VerifyOptions) -> list:
    n = options.n or 400
    sweeps = options.sweeps or 2000
    results = []

    # β = 0 时 q₁₂ 以 0 为中心，宽度 1/√N
    paramagnet = _pooled_histogram(n, SkParams(1.0), 0.0, sweeps, 201, options.seed, 1)
    counts = np.asarray(paramagnet.counts, dtype=float)
    mean = float(counts @ paramagnet.centers() / paramagnet.total)
    results.append(CheckResult(f"sk N={n} β=0 |⟨q₁₂⟩|", abs(mean), 0.1))
    results.append(CheckResult(f"sk N={n} β=0 |√N·std(q₁₂) − 1|",
                               abs(paramagnet.std() * math.sqrt(n) - 1.0), 0.2))

    # 低温 SK：q₁₂ 分布明显变宽
    glass_n = 300
    hot = _pooled_histogram(glass_n, SkParams(1.0), 0.0, max(100, sweeps // 2), 41, options.seed, 4)
    cold = _pooled_histogram(glass_n, SkParams(1.0), 2.0, max(100, sweeps // 2), 41, options.seed, 4)
    results.append(CheckResult(f"sk N={glass_n} 3·std(β=0)/std(β=2)", 3.0 * hot.std() / cold.std(), 1.0))
    if options.histogram_out:
        cold.write_csv(options.histogram_out)
        logger.info(f"重叠直方图已写入 {options.histogram_out}")

    # 纯 Curie-Weiss：m = tanh(βm)
    cw = mattis_gauge(draw_hopfield_sample(500, HopfieldParams(2.0), options.seed, p=1))
    summary = metropolis_run(cw, 2.0, 400, seed=options.seed)
    results.append(CheckResult("curie-weiss N=500 β=2 |m − 0.9575|", abs(summary.overlap_mean - 0.95750), 0.02))

    # 检索态：N=2000, α=0.05, β=2 与 RS 检索解比较
    retrieval = HopfieldParams(2.0, alpha=0.05)
    reports = solve_problem(HopfieldProblem(retrieval, 0, (), _spec(options)))
    theory = [r.ansatz.m for r in reports if r.converged and r.ansatz.m > 0.5]
    sample = mattis_gauge(draw_hopfield_sample(2000, retrieval, options.seed))
    summary = metropolis_run(sample, 2.0, 200, seed=options.seed)
    value = abs(summary.overlap_mean - max(theory)) if theory else math.inf
    results.append(CheckResult("hopfield N=2000 α=0.05 β=2 |m_MC − m_RS|", value, 0.05))
    return results


def run_suite(name: str, options: VerifyOptions) -> list:
    suites = {
        'collapse': collapse_suite,
        'stationarity': stationarity_suite,
        'enumeration': enumeration_suite,
        'lemmas': lemmas_suite,
        'histogram': histogram_suite,
    }
    if name not in suites:
        raise KeyError(name)
    logger.info(f"运行验收套件 {name}")
    return suites[name](options)
