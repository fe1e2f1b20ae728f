import math
from dataclasses import dataclass, field

import numpy as np

from app.core.errors import RangeViolation, SusceptibilityDivergence
from app.core.quadrature import FieldArgument, NestedGaussianAverage
from app.core.types import HopfieldParams, ModelKind, QuadratureSpec, RsbAnsatz, validate_ansatz


@dataclass(frozen=True)
class QDenominators:
    values: tuple


@dataclass(frozen=True)
class HopfieldEvaluation:
    pressure: float
    terms: dict = field(default_factory=dict)


def _q_values(beta, qs, thetas):
    k = len(thetas)
    values = [0.0] * (k + 1)
    values[k] = 1.0 - beta * (1.0 - qs[k])
    for a in range(k - 1, -1, -1):
        values[a] = values[a + 1] - beta * thetas[a] * (qs[a + 1] - qs[a])
    return values


def hop_q_denominators(p: HopfieldParams, a: RsbAnsatz) -> QDenominators:
    values = _q_values(p.beta, a.qs, a.thetas)
    if any(v <= 0.0 for v in values):
        raise SusceptibilityDivergence(f"磁化率分母非正 𝒬={values} (β={p.beta}, q̄={a.qs}, θ={a.thetas})")
    return QDenominators(tuple(values))


def hop_p_closed_form(p: HopfieldParams, a: RsbAnsatz) -> tuple:
    """p̄₁ = βq̄₁/𝒬₁², p̄_h = p̄_{h-1} + β(q̄_h − q̄_{h-1})/(𝒬_h 𝒬_{h-1})"""
    qd = hop_q_denominators(p, a).values
    ps = [p.beta * a.qs[0] / qd[0] ** 2]
    for h in range(1, a.k + 1):
        ps.append(ps[-1] + p.beta * (a.qs[h] - a.qs[h - 1]) / (qd[h] * qd[h - 1]))
    return tuple(ps)


def hop_field(p: HopfieldParams, m: float, ps) -> FieldArgument:
    gaps = np.diff(np.concatenate([[0.0], ps]))
    coeffs = np.sqrt(np.clip(p.alpha * p.beta * gaps, 0.0, None))
    return FieldArgument(offset=p.beta * m, coeffs=tuple(coeffs))


def _alpha_sector(p: HopfieldParams, a: RsbAnsatz, qd) -> float:
    alpha, beta = p.alpha, p.beta
    logs = sum(math.log(qd[z + 1] / qd[z]) / theta for z, theta in enumerate(a.thetas))
    return 0.5 * alpha * logs - 0.5 * alpha * math.log(qd[-1]) + 0.5 * alpha * beta * a.qs[0] / qd[0]


def _hop_source(p: HopfieldParams, a: RsbAnsatz) -> float:
    alpha, beta = p.alpha, p.beta
    qs, ps = a.qs, a.ps
    source = -0.5 * beta * a.m ** 2 - 0.5 * alpha * beta * ps[-1] * (1.0 - qs[-1])
    for level, theta in enumerate(a.thetas):
        source -= 0.5 * alpha * beta * theta * (ps[level + 1] * qs[level + 1] - ps[level] * qs[level])
    return source


def hop_evaluate_krsb(p: HopfieldParams, a: RsbAnsatz, spec: QuadratureSpec | None = None) -> HopfieldEvaluation:
    validate_ansatz(a, ModelKind.HOPFIELD)
    spec = spec or QuadratureSpec()
    qd = hop_q_denominators(p, a).values
    if p.beta == 0.0:
        entropy = math.log(2.0)
    else:
        entropy = NestedGaussianAverage(hop_field(p, a.m, a.ps), a.thetas, spec).log_partition()
    alpha_sector = _alpha_sector(p, a, qd)
    source = _hop_source(p, a)
    return HopfieldEvaluation(entropy + alpha_sector + source,
                              {'entropy': entropy, 'alpha_sector': alpha_sector, 'source': source})


def hop_pressure_krsb(p: HopfieldParams, a: RsbAnsatz, spec: QuadratureSpec | None = None) -> float:
    return hop_evaluate_krsb(p, a, spec).pressure


def hop_sce_krsb(p: HopfieldParams, a: RsbAnsatz, spec: QuadratureSpec | None = None) -> RsbAnsatz:
    """p̄ 由输入 q̄ 的闭式给出（忽略 a.ps），输出的 p̄' 在新的 q̄' 处重新计算。"""
    validate_ansatz(a, ModelKind.HOPFIELD)
    spec = spec or QuadratureSpec()
    ps = hop_p_closed_form(p, a)
    grid = NestedGaussianAverage(hop_field(p, a.m, ps), a.thetas, spec)
    m, qs = grid.tanh_moments()
    mapped = RsbAnsatz(k=a.k, m=m, qs=qs, ps=ps, thetas=a.thetas)
    return mapped.with_ps(hop_p_closed_form(p, mapped))


def _rs(m, q, pp=0.0):
    if not 0.0 <= q <= 1.0 or not -1.0 <= m <= 1.0 or pp < 0.0:
        raise RangeViolation(f"RS 序参量超出范围: m={m}, q={q}, p={pp}")
    return RsbAnsatz.rs(m, q, pp)


def hop_pressure_rs(p: HopfieldParams, m: float, q: float, pp: float,
                    spec: QuadratureSpec | None = None) -> float:
    return hop_pressure_krsb(p, _rs(m, q, pp), spec)


def hop_sce_rs(p: HopfieldParams, m: float, q: float, spec: QuadratureSpec | None = None):
    a = _rs(m, q)
    pp = hop_p_closed_form(p, a)[0]
    spec = spec or QuadratureSpec()
    grid = NestedGaussianAverage(hop_field(p, m, (pp,)), (), spec)
    m_new, qs = grid.tanh_moments()
    return m_new, qs[0], pp


class HopfieldProblem:
    """Hopfield 模型的鞍点问题；迭代只在 (m̄, q̄) 上进行，p̄ 每步由闭式重算。"""

    model = ModelKind.HOPFIELD

    def __init__(self, params: HopfieldParams, k: int, thetas=(), spec: QuadratureSpec | None = None):
        self.params = params
        self.k = k
        self.thetas = tuple(thetas)
        self.spec = spec or QuadratureSpec()

    def ansatz(self, m, qs) -> RsbAnsatz:
        return RsbAnsatz(k=self.k, m=m, qs=tuple(qs), ps=(0.0,) * (self.k + 1), thetas=self.thetas)

    def complete(self, a: RsbAnsatz) -> RsbAnsatz:
        return a.with_ps(hop_p_closed_form(self.params, a))

    def sce(self, a: RsbAnsatz) -> RsbAnsatz:
        return hop_sce_krsb(self.params, a, self.spec)

    def pressure(self, a: RsbAnsatz) -> float:
        return hop_pressure_krsb(self.params, a, self.spec)

    def reduced_pressure(self, a: RsbAnsatz) -> float:
        return self.pressure(self.complete(a))

    def with_thetas(self, thetas):
        return HopfieldProblem(self.params, self.k, thetas, self.spec)
