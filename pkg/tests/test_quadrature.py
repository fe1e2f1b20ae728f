import math
import warnings

import numpy as np
import pytest
from scipy.integrate import trapezoid

from app.core.errors import BudgetExceeded, DomainError
from app.core.quadrature import (FieldArgument, NestedGaussianAverage, gauss_expect, gauss_hermite_rule,
                                 level_rules, nested_log_cosh_expect, nested_ratio_expect)
from app.core.types import QuadratureSpec


def _normal_grid(half_width=10.0, points=2001):
    h = np.linspace(-half_width, half_width, points)
    density = np.exp(-h ** 2 / 2.0) / math.sqrt(2.0 * math.pi)
    return h, density


@pytest.mark.parametrize('f, expected', [
    (lambda h: np.ones_like(h), 1.0),
    (lambda h: h ** 2, 1.0),
    (np.cosh, math.exp(0.5)),
])
def test_standard_normal_moments(spec, f, expected):
    assert gauss_expect(f, spec) == pytest.approx(expected, abs=1e-12)


def test_rule_is_normalized_and_symmetric():
    nodes, weights = gauss_hermite_rule(40)
    assert weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(np.sort(nodes), -np.sort(nodes)[::-1], atol=1e-12)


def test_zero_field_is_log_two(spec):
    assert nested_log_cosh_expect(FieldArgument(0.0, (0.0,)), (), spec) == pytest.approx(math.log(2.0), abs=1e-15)


@pytest.mark.parametrize('theta', [0.1, 0.5, 0.9])
def test_silent_inner_level_collapses(spec, theta):
    one_level = nested_log_cosh_expect(FieldArgument(0.3, (0.7,)), (), spec)
    two_level = nested_log_cosh_expect(FieldArgument(0.3, (0.7, 0.0)), (theta,), spec)
    assert two_level == pytest.approx(one_level, abs=1e-12)


def test_two_level_against_trapezoid_oracle():
    x0, c1, c2 = 0.4, 0.8, 0.6
    h, density = _normal_grid()
    dh = h[1] - h[0]
    inner = np.log(2.0 * np.cosh(x0 + c1 * h[:, None] + c2 * h[None, :]))
    inner_avg = np.log(trapezoid(np.exp(inner) * density[None, :], dx=dh, axis=1))
    oracle = trapezoid(inner_avg * density, dx=dh)
    value = nested_log_cosh_expect(FieldArgument(x0, (c1, c2)), (1.0,), QuadratureSpec(nodes_per_level=60))
    assert value == pytest.approx(oracle, abs=1e-8)


def test_offset_symmetry(spec):
    thetas = (0.3, 0.7)
    plus = nested_log_cosh_expect(FieldArgument(0.5, (0.4, 0.3, 0.2)), thetas, spec)
    minus = nested_log_cosh_expect(FieldArgument(-0.5, (0.4, 0.3, 0.2)), thetas, spec)
    assert plus == pytest.approx(minus, abs=1e-12)


def test_ratio_with_deterministic_argument(spec):
    assert nested_ratio_expect(FieldArgument(0.0, (0.0,)), (), 'tanh', spec=spec) == pytest.approx(0.0, abs=1e-15)
    assert nested_ratio_expect(FieldArgument(0.7, (0.0, 0.0)), (0.5,), 'tanh', spec=spec) == pytest.approx(
        math.tanh(0.7), abs=1e-13)


def test_squared_levels_order(spec):
    grid = NestedGaussianAverage(FieldArgument(0.2, (0.5, 0.4, 0.3)), (0.3, 0.7), spec)
    m, qs = grid.tanh_moments()
    assert m ** 2 <= qs[0] <= qs[1] <= qs[2] <= 1.0
    assert grid.average(np.tanh(grid.g), square_at_level=0) == pytest.approx(m ** 2, abs=1e-14)


def test_theta_limits(spec):
    with pytest.raises(DomainError):
        nested_log_cosh_expect(FieldArgument(0.0, (0.1, 0.1)), (0.005,), spec)
    with pytest.raises(DomainError):
        nested_log_cosh_expect(FieldArgument(0.0, (0.1, 0.1, 0.1)), (0.6, 0.4), spec)


def test_negative_coefficient_rejected():
    with pytest.raises(DomainError):
        FieldArgument(0.0, (-0.1,))


def test_budget_fallback():
    weak = (0.1,) * 4
    strict = QuadratureSpec(nodes_per_level=40, mc_samples=0, max_tensor_points=1_000)
    with pytest.raises(BudgetExceeded):
        level_rules(weak, strict)
    relaxed = QuadratureSpec(nodes_per_level=40, mc_samples=4, max_tensor_points=1_000)
    rules = level_rules(weak, relaxed)
    assert {rule.size for rule in rules} == {4}
    assert rules[0].shifts.sum() == pytest.approx(0.0, abs=1e-12)


def test_budget_shrinks_gauss_hermite_before_monte_carlo():
    rules = level_rules((0.1,) * 4, QuadratureSpec(nodes_per_level=40, max_tensor_points=50_000))
    assert {rule.kind for rule in rules} == {'nodes'}
    assert rules[0].size == 14


def test_rule_kinds_follow_coefficients():
    kinds = [rule.kind for rule in level_rules((0.0, 0.05, 2.0), QuadratureSpec(nodes_per_level=80))]
    assert kinds == ['point', 'nodes', 'lattice']


def test_four_levels_fit_default_budget():
    rules = level_rules((0.6, 0.5, 0.4, 0.3), QuadratureSpec(nodes_per_level=80))
    assert all(rule.kind == 'lattice' for rule in rules)


@pytest.mark.parametrize('offset', [0.0, 2.5, 5.0])
@pytest.mark.parametrize('coeffs, thetas', [
    ((3.0,), ()),
    ((1.5, 2.6), (0.4,)),
    ((1.7, 1.7, 1.7), (0.3, 0.7)),
])
def test_node_doubling_at_strong_coupling(offset, coeffs, thetas):
    arg = FieldArgument(offset, coeffs)
    coarse, fine = QuadratureSpec(nodes_per_level=80), QuadratureSpec(nodes_per_level=160)
    assert nested_log_cosh_expect(arg, thetas, coarse) == pytest.approx(
        nested_log_cosh_expect(arg, thetas, fine), abs=1e-9)
    assert nested_ratio_expect(arg, thetas, 'tanh2', spec=coarse) == pytest.approx(
        nested_ratio_expect(arg, thetas, 'tanh2', spec=fine), abs=1e-9)


def test_strong_coupling_against_trapezoid_oracle():
    h, density = _normal_grid(half_width=14.0, points=40_001)
    dh = h[1] - h[0]
    oracle = trapezoid(np.log(2.0 * np.cosh(1.0 + 3.0 * h)) * density, dx=dh)
    assert nested_log_cosh_expect(FieldArgument(1.0, (3.0,)), (), QuadratureSpec(nodes_per_level=80)) == \
        pytest.approx(oracle, abs=1e-10)


def test_collapse_is_exact_for_lattice_levels():
    spec = QuadratureSpec(nodes_per_level=80)
    two = nested_log_cosh_expect(FieldArgument(0.3, (0.9, 1.2, 0.8)), (0.3, 0.7), spec)
    three = nested_log_cosh_expect(FieldArgument(0.3, (0.9, 1.2, 0.8, 0.0)), (0.3, 0.7, 0.85), spec)
    assert three == pytest.approx(two, abs=1e-12)


def test_no_log_of_zero_weights():
    with warnings.catch_warnings():
        warnings.simplefilter('error', RuntimeWarning)
        nodes, weights = gauss_hermite_rule(160)
        grid = NestedGaussianAverage(FieldArgument(0.4, (0.05, 0.1)), (0.5,), QuadratureSpec(nodes_per_level=160))
        grid.tanh_moments()
    assert np.all(weights > 0.0)
    assert np.array_equal(nodes, -nodes[::-1])
