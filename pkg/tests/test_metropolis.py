import csv
import math

import numpy as np
import pytest

from app.core.errors import RangeViolation
from app.core.hopfield_model import HopfieldProblem
from app.core.solver import solve_problem
from app.core.types import HopfieldParams, SkParams
from app.services.disorder import SkDisorderSample, draw_hopfield_sample, draw_sk_sample, mattis_gauge
from app.services.metropolis import metropolis_run, overlap_histogram


def test_infinite_temperature_overlap():
    sample = draw_sk_sample(200, SkParams(1.0), seed=1)
    summary = metropolis_run(sample, 0.0, 200, init='random', seed=1)
    assert abs(summary.overlap_mean) < 0.05
    assert summary.samples == 100


def test_curie_weiss_magnetisation():
    sample = mattis_gauge(draw_hopfield_sample(500, HopfieldParams(2.0), seed=0, p=1))
    summary = metropolis_run(sample, 2.0, 400, seed=0)
    assert summary.overlap_mean == pytest.approx(0.9575, abs=0.02)


def test_two_spin_equilibrium():
    coupling, beta = 0.5, 1.0
    sample = SkDisorderSample(2, np.array([[0.0, coupling], [coupling, 0.0]]), 0)
    summary = metropolis_run(sample, beta, 40000, init='random', seed=4)
    # 每自旋能量 −J⟨σ₁σ₂⟩/2
    assert summary.energy_mean == pytest.approx(-0.5 * coupling * math.tanh(beta * coupling), abs=0.01)


def test_paramagnet_overlap_width():
    n = 400
    histogram = overlap_histogram(draw_sk_sample(n, SkParams(1.0), seed=2), 0.0, 400, bins=201, seed=2)
    assert histogram.total == 200
    assert sum(histogram.counts) == histogram.total
    assert 0.8 <= histogram.std() * math.sqrt(n) <= 1.2


def test_ferromagnet_overlap_at_edges():
    histogram = overlap_histogram(draw_sk_sample(100, SkParams(2.0, j0=1.5, j=0.0), seed=3), 2.0, 300, seed=3)
    counts = np.asarray(histogram.counts)
    edge = np.abs(histogram.centers()) > 0.9
    assert counts[edge].sum() >= 0.9 * histogram.total


def test_histogram_csv(tmp_path):
    histogram = overlap_histogram(draw_sk_sample(50, SkParams(0.5), seed=0), 0.5, 100, bins=10)
    path = tmp_path / 'overlap.csv'
    histogram.write_csv(path)
    with open(path, newline='') as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ['bin_lo', 'bin_hi', 'count']
    assert len(rows) == 11
    assert float(rows[1][0]) == -1.0 and float(rows[-1][1]) == 1.0
    assert sum(int(r[2]) for r in rows[1:]) == histogram.total
    assert b'\r' not in path.read_bytes()


def test_invalid_runs():
    sample = draw_sk_sample(10, SkParams(1.0), seed=0)
    with pytest.raises(RangeViolation):
        metropolis_run(sample, 1.0, 99)
    with pytest.raises(RangeViolation):
        metropolis_run(sample, 1.0, 100, init='hot')
    with pytest.raises(RangeViolation):
        overlap_histogram(sample, 1.0, 100, replicas=3)


def test_hopfield_retrieval_matches_replica_symmetric_overlap():
    params = HopfieldParams(2.0, alpha=0.05)
    theory = max(r.ansatz.m for r in solve_problem(HopfieldProblem(params, 0, ())) if r.converged)
    sample = mattis_gauge(draw_hopfield_sample(2000, params, seed=0))
    summary = metropolis_run(sample, 2.0, 200, seed=0)
    assert summary.overlap_mean == pytest.approx(theory, abs=0.05)


def test_low_temperature_overlaps_spread_out():
    def pooled_std(beta):
        histograms = [overlap_histogram(draw_sk_sample(300, SkParams(1.0), seed=s), beta, 400, bins=41, seed=s)
                      for s in range(4)]
        merged = histograms[0]
        for other in histograms[1:]:
            merged = merged.merge(other)
        return merged.std()

    assert pooled_std(2.0) >= 3.0 * pooled_std(0.0)


def test_merge_requires_same_bins():
    sample = draw_sk_sample(20, SkParams(1.0), seed=0)
    with pytest.raises(RangeViolation):
        overlap_histogram(sample, 0.0, 100, bins=10).merge(overlap_histogram(sample, 0.0, 100, bins=11))
