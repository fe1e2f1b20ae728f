import math
from dataclasses import dataclass, field, replace
from enum import Enum

from app.core.errors import OrderingViolation, RangeViolation, ShapeMismatch
from app.utils.config import default_nodes


class ModelKind(str, Enum):
    SK = 'sk'
    HOPFIELD = 'hopfield'


def _check_non_negative(owner, **values):
    for name, value in values.items():
        if not math.isfinite(value) or value < 0:
            raise RangeViolation(f"{owner}.{name} 必须是有限的非负数, 实际为 {value}")


@dataclass(frozen=True)
class SkParams:
    beta: float
    j0: float = 0.0
    j: float = 1.0

    model = ModelKind.SK

    def __post_init__(self):
        _check_non_negative('SkParams', beta=self.beta, j0=self.j0, j=self.j)

    def as_dict(self):
        return {'beta': self.beta, 'j0': self.j0, 'j': self.j}


@dataclass(frozen=True)
class HopfieldParams:
    beta: float
    alpha: float = 0.0

    model = ModelKind.HOPFIELD

    def __post_init__(self):
        _check_non_negative('HopfieldParams', beta=self.beta, alpha=self.alpha)

    def as_dict(self):
        return {'beta': self.beta, 'alpha': self.alpha}


def _floats(values):
    return tuple(float(v) for v in values)


@dataclass(frozen=True)
class RsbAnsatz:
    """K 步破缺的序参量：m̄, q̄₁..q̄_{K+1}, p̄₁..p̄_{K+1}（仅 Hopfield）, θ₁..θ_K。"""

    k: int
    m: float
    qs: tuple
    ps: tuple = ()
    thetas: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, 'm', float(self.m))
        object.__setattr__(self, 'qs', _floats(self.qs))
        object.__setattr__(self, 'ps', _floats(self.ps))
        object.__setattr__(self, 'thetas', _floats(self.thetas))

    @classmethod
    def rs(cls, m, q, p=None):
        return cls(k=0, m=m, qs=(q,), ps=() if p is None else (p,))

    def to_json(self):
        return {'k': self.k, 'm': self.m, 'qs': list(self.qs), 'ps': list(self.ps),
                'thetas': list(self.thetas)}

    @classmethod
    def from_json(cls, data):
        return cls(k=int(data['k']), m=data['m'], qs=data['qs'], ps=data.get('ps', ()),
                   thetas=data.get('thetas', ()))

    def free_vector(self):
        """自由序参量 (m̄, q̄₁..q̄_{K+1})，p̄ 由闭式给出。"""
        return (self.m,) + self.qs

    def with_free_vector(self, vector):
        vector = tuple(vector)
        if len(vector) != self.k + 2:
            raise ShapeMismatch(f"自由向量长度应为 {self.k + 2}, 实际为 {len(vector)}")
        return replace(self, m=vector[0], qs=vector[1:])

    def with_ps(self, ps):
        return replace(self, ps=tuple(ps))


def validate_ansatz(a: RsbAnsatz, model) -> RsbAnsatz:
    model = ModelKind(model)
    if not isinstance(a.k, int) or a.k < 0:
        raise RangeViolation(f"破缺层数 k 必须是非负整数: {a.k!r}")
    if len(a.qs) != a.k + 1:
        raise ShapeMismatch(f"qs 长度应为 {a.k + 1}, 实际为 {len(a.qs)}")
    if len(a.thetas) != a.k:
        raise ShapeMismatch(f"thetas 长度应为 {a.k}, 实际为 {len(a.thetas)}")
    expected_ps = a.k + 1 if model is ModelKind.HOPFIELD else 0
    if len(a.ps) != expected_ps:
        raise ShapeMismatch(f"{model.value} 模型的 ps 长度应为 {expected_ps}, 实际为 {len(a.ps)}")

    values = (a.m,) + a.qs + a.ps + a.thetas
    if not all(math.isfinite(v) for v in values):
        raise RangeViolation(f"序参量包含非有限值: {a}")
    if not -1.0 <= a.m <= 1.0:
        raise RangeViolation(f"m̄ 超出 [-1, 1]: {a.m}")
    if any(not 0.0 <= q <= 1.0 for q in a.qs):
        raise RangeViolation(f"q̄ 超出 [0, 1]: {a.qs}")
    if any(p < 0.0 for p in a.ps):
        raise RangeViolation(f"p̄ 必须非负: {a.ps}")
    if any(not 0.0 < t < 1.0 for t in a.thetas):
        raise RangeViolation(f"θ 必须在 (0, 1) 内: {a.thetas}")

    if any(lo > hi for lo, hi in zip(a.qs, a.qs[1:])):
        raise OrderingViolation(f"q̄ 必须单调不减: {a.qs}")
    if any(lo > hi for lo, hi in zip(a.ps, a.ps[1:])):
        raise OrderingViolation(f"p̄ 必须单调不减: {a.ps}")
    if any(lo >= hi for lo, hi in zip(a.thetas, a.thetas[1:])):
        raise OrderingViolation(f"θ 必须严格递增: {a.thetas}")
    return a


def merge_levels(a: RsbAnsatz, level: int) -> RsbAnsatz:
    """合并第 level 与 level+1 层（要求 q̄ 相等），删除 q̄_{level+1}、p̄_{level+1} 和 θ_level。"""
    if not 1 <= level <= a.k:
        raise ShapeMismatch(f"合并层号必须在 1..{a.k}: {level}")
    if a.qs[level - 1] != a.qs[level]:
        raise OrderingViolation(f"第 {level} 层与第 {level + 1} 层的 q̄ 不相等，无法合并")
    ps = a.ps[:level] + a.ps[level + 1:] if a.ps else ()
    return RsbAnsatz(k=a.k - 1, m=a.m, qs=a.qs[:level] + a.qs[level + 1:], ps=ps,
                     thetas=a.thetas[:level - 1] + a.thetas[level:])


def split_level(a: RsbAnsatz, level: int, theta: float) -> RsbAnsatz:
    """merge_levels 的逆操作：复制第 level 层并插入 θ_level = theta。"""
    if not 1 <= level <= a.k + 1:
        raise ShapeMismatch(f"拆分层号必须在 1..{a.k + 1}: {level}")
    i = level - 1
    ps = a.ps[:level] + a.ps[i:] if a.ps else ()
    return RsbAnsatz(k=a.k + 1, m=a.m, qs=a.qs[:level] + a.qs[i:], ps=ps,
                     thetas=a.thetas[:i] + (float(theta),) + a.thetas[i:])


@dataclass(frozen=True)
class QuadratureSpec:
    nodes_per_level: int = field(default_factory=default_nodes)
    mc_samples: int = 24
    max_tensor_points: int = 4_000_000
    mc_seed: int = 0

    def __post_init__(self):
        if self.nodes_per_level < 2:
            raise RangeViolation(f"nodes_per_level 必须 ≥ 2: {self.nodes_per_level}")
        if self.mc_samples < 0 or self.max_tensor_points < 1:
            raise RangeViolation("mc_samples 必须 ≥ 0 且 max_tensor_points 必须 ≥ 1")


@dataclass(frozen=True)
class SolveReport:
    ansatz: RsbAnsatz | None
    pressure: float
    residual: float
    stationarity: tuple
    iterations: int
    converged: bool
    point: tuple = ()
    branch: str = ''
    theta_search: dict | None = None

    def to_json(self):
        data = {
            'branch': self.branch,
            'ansatz': self.ansatz.to_json() if self.ansatz is not None else None,
            'pressure': self.pressure,
            'residual': self.residual,
            'stationarity': list(self.stationarity),
            'iterations': self.iterations,
            'converged': self.converged,
        }
        if self.theta_search is not None:
            data['theta_search'] = dict(self.theta_search)
        return data

    @classmethod
    def from_json(cls, data):
        ansatz = RsbAnsatz.from_json(data['ansatz']) if data.get('ansatz') else None
        return cls(ansatz=ansatz, pressure=data['pressure'], residual=data['residual'],
                   stationarity=tuple(data['stationarity']), iterations=data['iterations'],
                   converged=data['converged'], point=ansatz.free_vector() if ansatz else (),
                   branch=data.get('branch', ''), theta_search=data.get('theta_search'))
