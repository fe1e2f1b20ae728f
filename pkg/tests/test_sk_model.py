import math

import numpy as np
import pytest
from scipy.integrate import trapezoid
from scipy.special import roots_hermitenorm

from app.core.sk_model import SkProblem, sk_pressure_krsb, sk_pressure_rs, sk_sce_krsb, sk_sce_rs
from app.core.solver import damped_fixed_point
from app.core.types import QuadratureSpec, RsbAnsatz, SkParams, split_level

LOG2 = math.log(2.0)


def _normal_expect(f):
    h = np.linspace(-10.0, 10.0, 100_001)
    return trapezoid(f(h) * np.exp(-h ** 2 / 2.0) / math.sqrt(2.0 * math.pi), h)


def _one_step_pressure(beta, j0, m, qs, theta, nodes=400):
    """直接按一步破缺公式逐层求和。"""
    x, w = roots_hermitenorm(nodes)
    w = w / w.sum()
    q1, q2 = qs
    g = beta * j0 * m + beta * (math.sqrt(q1) * x[:, None] + math.sqrt(q2 - q1) * x[None, :])
    entropy = LOG2 + w @ np.log(np.cosh(g) ** theta @ w) / theta
    source = beta ** 2 / 4.0 * ((1 - q2) ** 2 - theta * (q2 ** 2 - q1 ** 2))
    return entropy + source - beta * j0 * m ** 2 / 2.0


def _two_step_pressure(beta, j, j0, m, qs, thetas, nodes=150):
    """直接按两步破缺公式逐层求和。"""
    x, w = roots_hermitenorm(nodes)
    w = w / w.sum()
    q1, q2, q3 = qs
    t1, t2 = thetas
    g = (beta * j0 * m + beta * j * (math.sqrt(q1) * x[:, None, None] + math.sqrt(q2 - q1) * x[None, :, None]
                                     + math.sqrt(q3 - q2) * x[None, None, :]))
    level3 = np.einsum('k,ijk->ij', w, np.cosh(g) ** t2)
    level2 = np.einsum('j,ij->i', w, level3 ** (t1 / t2))
    entropy = LOG2 + w @ np.log(level2) / t1
    source = (beta * j) ** 2 / 4.0 * ((1 - q3) ** 2 - t2 * (q3 ** 2 - q2 ** 2) - t1 * (q2 ** 2 - q1 ** 2))
    return entropy + source - beta * j0 * m ** 2 / 2.0


def test_infinite_temperature():
    assert sk_pressure_rs(SkParams(0.0, j0=1.0), 0.4, 0.3).pressure == LOG2
    assert sk_sce_rs(SkParams(0.0), 0.4, 0.3) == pytest.approx((0.0, 0.0), abs=1e-15)


def test_paramagnetic_substitution(spec):
    assert sk_pressure_rs(SkParams(1.2), 0.0, 0.0, spec).pressure == pytest.approx(LOG2 + 0.36, abs=1e-14)


def test_rs_map_against_dense_oracle():
    spec = QuadratureSpec(nodes_per_level=80)
    m_new, q_new = sk_sce_rs(SkParams(2.0), 0.0, 0.5, spec)
    assert m_new == pytest.approx(0.0, abs=1e-14)
    assert q_new == pytest.approx(_normal_expect(lambda h: np.tanh(2.0 * math.sqrt(0.5) * h) ** 2), abs=1e-8)


def test_rs_pressure_at_solution_against_dense_oracle():
    spec = QuadratureSpec(nodes_per_level=80)
    p = SkParams(2.0)
    report = damped_fixed_point(lambda a: sk_sce_krsb(p, a, spec), RsbAnsatz.rs(0.0, 0.5))
    q = report.ansatz.qs[0]
    oracle = _normal_expect(lambda h: np.log(2.0 * np.cosh(2.0 * math.sqrt(q) * h))) + (1.0 - q) ** 2
    assert report.converged
    assert sk_pressure_rs(p, 0.0, q, spec).pressure == pytest.approx(oracle, abs=1e-8)


@pytest.mark.parametrize('theta', [0.1, 0.4, 0.8])
def test_degenerate_one_step_equals_rs(spec, theta):
    p = SkParams(1.4, j0=0.6)
    one_step = sk_pressure_krsb(p, RsbAnsatz(k=1, m=0.3, qs=(0.45, 0.45), thetas=(theta,)), spec)
    assert one_step.pressure == pytest.approx(sk_pressure_rs(p, 0.3, 0.45, spec).pressure, abs=1e-10)


def test_two_step_against_direct_formula(spec):
    a = RsbAnsatz(k=2, m=0.2, qs=(0.1, 0.3, 0.6), thetas=(0.3, 0.7))
    value = sk_pressure_krsb(SkParams(1.5, j0=0.3), a, spec).pressure
    assert value == pytest.approx(_two_step_pressure(1.5, 1.0, 0.3, 0.2, a.qs, a.thetas), abs=1e-9)


def test_two_step_random_ansatze(spec):
    rng = np.random.default_rng(3)
    for _ in range(20):
        beta, j0 = rng.uniform(0.3, 1.5), rng.uniform(0.0, 1.0)
        qs = tuple(np.sort(rng.uniform(0.0, 0.9, 3)))
        thetas = tuple(np.sort(rng.uniform(0.05, 0.95, 2)))
        if thetas[1] - thetas[0] < 1e-3:
            continue
        m = rng.uniform(-0.8, 0.8)
        value = sk_pressure_krsb(SkParams(beta, j0=j0), RsbAnsatz(k=2, m=m, qs=qs, thetas=thetas), spec).pressure
        assert value == pytest.approx(_two_step_pressure(beta, 1.0, j0, m, qs, thetas), abs=1e-9)


def test_map_collapse_at_rs_fixed_point(spec):
    p = SkParams(1.5, j0=0.5)
    rs = damped_fixed_point(SkProblem(p, 0, (), spec).sce, RsbAnsatz.rs(0.5, 0.5)).ansatz
    m_star, q_star = rs.m, rs.qs[0]
    mapped = sk_sce_krsb(p, RsbAnsatz(k=2, m=m_star, qs=(q_star,) * 3, thetas=(0.3, 0.6)), spec)
    m_rs, q_rs = sk_sce_rs(p, m_star, q_star, spec)
    assert mapped.m == pytest.approx(m_rs, abs=1e-10)
    assert mapped.qs == pytest.approx((q_rs,) * 3, abs=1e-10)


def test_pressure_terms_add_up(spec):
    evaluation = sk_pressure_krsb(SkParams(1.1, j0=0.2), RsbAnsatz(k=1, m=0.1, qs=(0.2, 0.5), thetas=(0.4,)), spec)
    assert evaluation.pressure == pytest.approx(evaluation.terms['entropy'] + evaluation.terms['source'], abs=1e-15)


def test_one_step_random_ansatze(spec):
    rng = np.random.default_rng(5)
    for _ in range(20):
        beta, j0 = rng.uniform(0.3, 1.8), rng.uniform(0.0, 1.0)
        qs = tuple(np.sort(rng.uniform(0.0, 0.95, 2)))
        theta, m = rng.uniform(0.05, 0.95), rng.uniform(-0.8, 0.8)
        value = sk_pressure_krsb(SkParams(beta, j0=j0), RsbAnsatz(k=1, m=m, qs=qs, thetas=(theta,)), spec).pressure
        assert value == pytest.approx(_one_step_pressure(beta, j0, m, qs, theta), abs=1e-9)


@pytest.mark.parametrize('level, theta', [(3, 0.85), (1, 0.1), (2, 0.5)])
def test_three_step_collapse_at_default_quadrature(level, theta):
    p = SkParams(1.2, j0=0.5)
    two_step = RsbAnsatz(k=2, m=0.4, qs=(0.2, 0.5, 0.8), thetas=(0.3, 0.7))
    three_step = split_level(two_step, level, theta)
    assert sk_pressure_krsb(p, three_step).pressure == pytest.approx(sk_pressure_krsb(p, two_step).pressure,
                                                                     abs=1e-12)
