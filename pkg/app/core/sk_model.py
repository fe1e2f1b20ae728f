import math
from dataclasses import dataclass, field

import numpy as np

from app.core.errors import RangeViolation
from app.core.quadrature import FieldArgument, NestedGaussianAverage
from app.core.types import ModelKind, QuadratureSpec, RsbAnsatz, SkParams, validate_ansatz


@dataclass(frozen=True)
class SkEvaluation:
    pressure: float
    terms: dict = field(default_factory=dict)


def sk_field(p: SkParams, a: RsbAnsatz) -> FieldArgument:
    # q̄₀ = 0
    gaps = np.diff(np.concatenate([[0.0], a.qs]))
    coeffs = p.beta * p.j * np.sqrt(np.clip(gaps, 0.0, None))
    return FieldArgument(offset=p.beta * p.j0 * a.m, coeffs=tuple(coeffs))


def sk_source(p: SkParams, a: RsbAnsatz) -> float:
    qs, thetas = a.qs, a.thetas
    bracket = (1.0 - qs[-1]) ** 2
    for level, theta in enumerate(thetas):
        bracket -= theta * (qs[level + 1] ** 2 - qs[level] ** 2)
    return 0.25 * (p.beta * p.j) ** 2 * bracket - 0.5 * p.beta * p.j0 * a.m ** 2


def sk_pressure_krsb(p: SkParams, a: RsbAnsatz, spec: QuadratureSpec | None = None) -> SkEvaluation:
    validate_ansatz(a, ModelKind.SK)
    spec = spec or QuadratureSpec()
    if p.beta == 0.0:
        return SkEvaluation(math.log(2.0), {'entropy': math.log(2.0), 'source': 0.0})
    entropy = NestedGaussianAverage(sk_field(p, a), a.thetas, spec).log_partition()
    source = sk_source(p, a)
    return SkEvaluation(entropy + source, {'entropy': entropy, 'source': source})


def sk_sce_krsb(p: SkParams, a: RsbAnsatz, spec: QuadratureSpec | None = None) -> RsbAnsatz:
    validate_ansatz(a, ModelKind.SK)
    spec = spec or QuadratureSpec()
    grid = NestedGaussianAverage(sk_field(p, a), a.thetas, spec)
    m, qs = grid.tanh_moments()
    return RsbAnsatz(k=a.k, m=m, qs=qs, thetas=a.thetas)


def _rs(m, q):
    if not 0.0 <= q <= 1.0 or not -1.0 <= m <= 1.0:
        raise RangeViolation(f"RS 序参量超出范围: m={m}, q={q}")
    return RsbAnsatz.rs(m, q)


def sk_pressure_rs(p: SkParams, m: float, q: float, spec: QuadratureSpec | None = None) -> SkEvaluation:
    return sk_pressure_krsb(p, _rs(m, q), spec)


def sk_sce_rs(p: SkParams, m: float, q: float, spec: QuadratureSpec | None = None):
    mapped = sk_sce_krsb(p, _rs(m, q), spec)
    return mapped.m, mapped.qs[0]


class SkProblem:
    """SK 模型在固定 (β, J₀, J, θ) 下的鞍点问题。"""

    model = ModelKind.SK

    def __init__(self, params: SkParams, k: int, thetas=(), spec: QuadratureSpec | None = None):
        self.params = params
        self.k = k
        self.thetas = tuple(thetas)
        self.spec = spec or QuadratureSpec()

    def ansatz(self, m, qs) -> RsbAnsatz:
        return RsbAnsatz(k=self.k, m=m, qs=tuple(qs), thetas=self.thetas)

    def complete(self, a: RsbAnsatz) -> RsbAnsatz:
        return a

    def sce(self, a: RsbAnsatz) -> RsbAnsatz:
        return sk_sce_krsb(self.params, a, self.spec)

    def pressure(self, a: RsbAnsatz) -> float:
        return sk_pressure_krsb(self.params, a, self.spec).pressure

    reduced_pressure = pressure

    def with_thetas(self, thetas):
        return SkProblem(self.params, self.k, thetas, self.spec)
