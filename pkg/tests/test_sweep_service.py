import asyncio

import pytest

from app.core.errors import RangeViolation
from app.core.types import ModelKind, SolveReport
from app.services.sweep_service import (SolveRequest, SweepAxis, SweepGrid, report_row, run_sweep,
                                        sweep_columns)
from app.services.verification import CheckResult, format_table


def test_axis_parsing():
    axis = SweepAxis.parse('beta:0.5:1.5:3')
    assert axis == SweepAxis('beta', 0.5, 1.5, 3)
    assert axis.values() == [0.5, 1.0, 1.5]
    assert SweepAxis.parse('alpha:0.1:0.1:1').values() == [0.1]


@pytest.mark.parametrize('text', ['beta:0:1', 'beta:a:1:2', 'beta:1:0:3', 'beta:0:1:0'])
def test_axis_rejects(text):
    with pytest.raises(RangeViolation):
        SweepAxis.parse(text)


def test_grid_is_row_major():
    grid = SweepGrid(SweepAxis('beta', 1.0, 2.0, 2), SweepAxis('alpha', 0.0, 0.1, 2))
    assert list(grid.points()) == [
        {'beta': 1.0, 'alpha': 0.0}, {'beta': 1.0, 'alpha': 0.1},
        {'beta': 2.0, 'alpha': 0.0}, {'beta': 2.0, 'alpha': 0.1},
    ]


def test_hopfield_columns():
    request = SolveRequest(ModelKind.HOPFIELD, 1, {'beta': 1.0}, (0.5,))
    assert sweep_columns(request) == ['beta', 'alpha', 'k', 'theta1', 'branch', 'm', 'q1', 'q2', 'p1', 'p2',
                                      'pressure', 'residual', 'converged']


def test_request_validation():
    with pytest.raises(RangeViolation):
        SolveRequest(ModelKind.SK, 1, {'beta': 1.0})
    with pytest.raises(RangeViolation):
        SolveRequest(ModelKind.SK, 0, {'beta': 1.0, 'alpha': 0.1})
    request = SolveRequest('sk', 2, {'beta': 1.0}, extremize_theta=True)
    assert request.problem().thetas == pytest.approx((1 / 3, 2 / 3))


def test_unconverged_row_has_empty_numbers():
    request = SolveRequest(ModelKind.SK, 0, {'beta': 1.0})
    row = report_row(request, SolveReport(None, float('nan'), float('nan'), (), 0, False, branch='glass'), ())
    assert row == {'beta': '1.0', 'j0': '0.0', 'j': '1.0', 'k': '0', 'branch': 'glass', 'converged': 'false'}


def test_fixed_parameters_do_not_override_axis():
    request = SolveRequest(ModelKind.SK, 0, {'beta': 1.0}, nodes=8)
    grid = SweepGrid(SweepAxis('beta', 0.2, 0.4, 2), fixed={'beta': 9.0, 'j0': 0.5})
    rows = asyncio.run(run_sweep(request, grid))
    assert [group[0]['beta'] for group in rows] == ['0.2', '0.4']
    assert all(group[0]['j0'] == '0.5' for group in rows)


def test_check_table():
    results = [CheckResult('a', 1e-12, 1e-10), CheckResult('b', float('nan'), 1.0), CheckResult('c', 2.0, 1.0)]
    assert [r.passed for r in results] == [True, False, False]
    table = format_table(results).splitlines()
    assert len(table) == 4
    assert table[1].endswith('PASS') and table[3].endswith('FAIL')
