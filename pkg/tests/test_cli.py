import asyncio
import csv
import io
import json
import math

import pytest

from app.main import main
from app.services.verification import VerifyOptions, _spec


def run(argv):
    return asyncio.run(main(argv))


def _json_lines(text):
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def _csv_rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_solve_infinite_temperature(capsys):
    assert run(['solve', '--model', 'sk', '--beta', '0', '--j0', '1', '--nodes', '16']) == 0
    reports = _json_lines(capsys.readouterr().out)
    assert reports
    assert reports[0]['pressure'] == pytest.approx(math.log(2.0), abs=1e-15)
    assert reports[0]['converged']


def test_solve_curie_weiss(capsys):
    assert run(['solve', '--model', 'hopfield', '--beta', '2', '--alpha', '0', '--nodes', '16']) == 0
    best = _json_lines(capsys.readouterr().out)[0]
    assert best['branch'] == 'retrieval'
    assert best['ansatz']['m'] == pytest.approx(0.9575, abs=1e-4)


def test_solve_is_deterministic(capsys):
    argv = ['solve', '--model', 'sk', '--beta', '1.5', '--k', '1', '--theta', '0.5', '--nodes', '16']
    run(argv)
    first = capsys.readouterr().out
    run(argv)
    assert capsys.readouterr().out == first


@pytest.mark.parametrize('argv', [
    ['solve', '--model', 'sk', '--beta', '1', '--alpha', '0.1'],
    ['solve', '--model', 'hopfield', '--beta', '1', '--j0', '1'],
    ['solve', '--model', 'sk', '--beta', '1', '--k', '1'],
    ['solve', '--model', 'sk', '--beta', '1', '--k', '1', '--theta', '0.5', '--extremize-theta'],
    ['solve', '--model', 'sk', '--beta', '-1'],
    ['solve', '--model', 'potts', '--beta', '1'],
    ['sweep', '--model', 'sk', '--beta', '1', '--sweep', 'alpha:0:1:3'],
    ['sweep', '--model', 'sk', '--beta', '1', '--sweep', 'beta:0:1'],
    ['sweep', '--model', 'sk', '--beta', '1', '--sweep', 'beta:0:1:3', '--jobs', '0'],
    ['verify', '--suite', 'everything'],
])
def test_usage_errors(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        run(argv)
    assert exc.value.code == 1
    assert capsys.readouterr().err.strip().splitlines()[-1].startswith('rsb-solver')


def test_single_point_sweep_matches_solve(capsys):
    run(['solve', '--model', 'sk', '--beta', '0.8', '--j0', '1.2', '--nodes', '16'])
    best = _json_lines(capsys.readouterr().out)[0]
    assert run(['sweep', '--model', 'sk', '--beta', '0.8', '--j0', '1.2', '--nodes', '16',
                '--sweep', 'beta:0.8:0.8:1']) == 0
    rows = _csv_rows(capsys.readouterr().out)
    assert list(rows[0])[:4] == ['beta', 'j0', 'j', 'k']
    assert max(float(r['pressure']) for r in rows if r['converged'] == 'true') == best['pressure']


def test_sweep_through_glass_transition(capsys):
    assert run(['sweep', '--model', 'sk', '--beta', '1', '--nodes', '24', '--sweep', 'beta:0.5:1.5:3']) == 0
    rows = _csv_rows(capsys.readouterr().out)
    assert [r['beta'] for r in rows] == ['0.5', '0.5', '1.0', '1.0', '1.5', '1.5']
    hot = [float(r['q1']) for r in rows if r['beta'] == '0.5' and r['converged'] == 'true']
    cold = [float(r['q1']) for r in rows if r['beta'] == '1.5' and r['converged'] == 'true']
    assert hot and max(hot) < 1e-6
    assert cold and max(cold) > 0.1


def test_sweep_keeps_failed_points(tmp_path, capsys):
    out = tmp_path / 'sweep.csv'
    code = run(['sweep', '--model', 'hopfield', '--beta', '2', '--max-iter', '1', '--nodes', '8',
                '--sweep', 'alpha:0.05:0.1:2', '--out', str(out)])
    assert code == 0
    rows = _csv_rows(out.read_text())
    assert len(rows) == 4
    assert all(r['converged'] == 'false' and r['pressure'] == '' for r in rows)


def test_two_axis_sweep_order(capsys):
    run(['sweep', '--model', 'hopfield', '--beta', '1', '--alpha', '0', '--nodes', '8',
         '--sweep', 'beta:0.5:1.0:2', '--sweep', 'alpha:0.0:0.01:2'])
    rows = _csv_rows(capsys.readouterr().out)
    pairs = [(r['beta'], r['alpha']) for r in rows[::2]]
    assert pairs == [('0.5', '0.0'), ('0.5', '0.01'), ('1.0', '0.0'), ('1.0', '0.01')]


def test_verify_collapse(capsys):
    assert run(['verify', '--suite', 'collapse', '--nodes', '8']) == 0
    table = capsys.readouterr().out
    assert 'PASS' in table and 'FAIL' not in table


def test_verify_collapse_at_default_quadrature(capsys):
    assert run(['verify', '--suite', 'collapse']) == 0
    table = capsys.readouterr().out
    assert 'K=3' in table and 'FAIL' not in table


def test_verify_output_is_byte_identical(capsys):
    run(['verify', '--suite', 'collapse', '--nodes', '8'])
    first = capsys.readouterr().out
    run(['verify', '--suite', 'collapse', '--nodes', '8'])
    assert capsys.readouterr().out == first


def test_sweep_output_is_byte_identical(capsys):
    argv = ['sweep', '--model', 'hopfield', '--beta', '2', '--nodes', '16', '--sweep', 'alpha:0.02:0.06:3']
    run(argv)
    first = capsys.readouterr().out
    run(argv)
    assert capsys.readouterr().out == first


def test_sweep_across_susceptibility_boundary(capsys):
    # β > 1 时玻璃起点 𝒬 ≤ 0，高 α 处检索态消失
    assert run(['sweep', '--model', 'hopfield', '--beta', '2', '--nodes', '16', '--sweep', 'alpha:0.05:0.3:3']) == 0
    text = capsys.readouterr().out
    rows = _csv_rows(text)
    assert 'nan' not in text.lower()
    assert any(r['converged'] == 'false' for r in rows)
    for row in rows:
        if row['converged'] == 'false':
            assert row['pressure'] == '' and row['m'] == ''
        else:
            assert math.isfinite(float(row['pressure']))


def test_verify_quadrature_follows_environment(monkeypatch):
    monkeypatch.setenv('RSB_NODES', '24')
    assert _spec(VerifyOptions()).nodes_per_level == 24
    assert _spec(VerifyOptions(nodes=8)).nodes_per_level == 8
