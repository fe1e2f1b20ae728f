import csv
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from app.core.errors import RangeViolation
from app.services.disorder import HopfieldDisorderSample, SkDisorderSample
from app.utils.logger import logger
from app.utils.rng import substream

BATCHES = 10


@dataclass(frozen=True)
class MetropolisSummary:
    overlap_mean: float
    energy_mean: float
    overlap_error: float
    energy_error: float
    samples: int


@dataclass(frozen=True)
class OverlapHistogram:
    bin_edges: tuple
    counts: tuple
    total: int

    def centers(self):
        edges = np.asarray(self.bin_edges)
        return 0.5 * (edges[:-1] + edges[1:])

    def std(self):
        weights = np.asarray(self.counts, dtype=float)
        centers = self.centers()
        mean = weights @ centers / self.total
        return float(np.sqrt(weights @ (centers - mean) ** 2 / self.total))

    def merge(self, other: 'OverlapHistogram') -> 'OverlapHistogram':
        """合并分箱相同的两个直方图（例如不同无序样本）。"""
        if self.bin_edges != other.bin_edges:
            raise RangeViolation("分箱不同的直方图不能合并")
        counts = tuple(a + b for a, b in zip(self.counts, other.counts))
        return OverlapHistogram(self.bin_edges, counts, self.total + other.total)

    def write_csv(self, path):
        with open(path, 'w', newline='') as handle:
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(['bin_lo', 'bin_hi', 'count'])
            for lo, hi, count in zip(self.bin_edges, self.bin_edges[1:], self.counts):
                writer.writerow([repr(float(lo)), repr(float(hi)), count])


@njit(cache=True, nogil=True)
def _sk_sweep(spins, fields, couplings, sites, thresholds, beta):
    # couplings 对称，按行读取
    n = spins.size
    for t in range(sites.size):
        i = sites[t]
        s = spins[i]
        delta = 2.0 * s * fields[i]
        # 接受概率 min(1, exp(−βΔE))
        if delta <= 0.0 or thresholds[t] < math.exp(-beta * delta):
            for j in range(n):
                fields[j] -= 2.0 * s * couplings[i, j]
            spins[i] = -s


@njit(cache=True, nogil=True)
def _hopfield_sweep(spins, overlaps, columns, self_coupling, sites, thresholds, beta, inv_n):
    p = overlaps.size
    for t in range(sites.size):
        i = sites[t]
        s = spins[i]
        h = 0.0
        for mu in range(p):
            h += columns[i, mu] * overlaps[mu]
        delta = 2.0 * inv_n * (s * h - self_coupling[i])
        if delta <= 0.0 or thresholds[t] < math.exp(-beta * delta):
            for mu in range(p):
                overlaps[mu] -= 2.0 * s * columns[i, mu]
            spins[i] = -s


class _SkChain:
    """H = −Σ_{i<j} J_ij σ_i σ_j，维护局部场 h = Jσ。"""

    def __init__(self, sample: SkDisorderSample, spins):
        self.couplings = np.ascontiguousarray(sample.couplings, dtype=np.float64)
        self.reference = np.ones(sample.n)
        self.spins = spins
        self.fields = self.couplings @ spins

    def sweep(self, beta, sites, thresholds):
        _sk_sweep(self.spins, self.fields, self.couplings, sites, thresholds, float(beta))

    def energy(self):
        return -0.5 * self.spins @ self.fields


class _HopfieldChain:
    """H = −(1/2N) Σ_μ (ξ^μ·σ)²，维护重叠 M_μ = ξ^μ·σ。"""

    def __init__(self, sample: HopfieldDisorderSample, spins):
        self.n = sample.n
        self.columns = np.ascontiguousarray(sample.patterns.T, dtype=np.float64)
        self.self_coupling = np.sum(self.columns ** 2, axis=1)
        self.reference = sample.retrieved_pattern.astype(float)
        self.spins = spins
        self.overlaps = self.columns.T @ spins

    def sweep(self, beta, sites, thresholds):
        _hopfield_sweep(self.spins, self.overlaps, self.columns, self.self_coupling, sites, thresholds,
                        float(beta), 1.0 / self.n)

    def energy(self):
        return -0.5 * (self.overlaps @ self.overlaps) / self.n


def _chain(sample, init, rng):
    n = sample.n
    if init == 'pattern':
        spins = np.ones(n) if isinstance(sample, SkDisorderSample) else sample.retrieved_pattern.astype(float)
        spins = spins.copy()
    elif init == 'random':
        spins = rng.choice(np.array([-1.0, 1.0]), size=n)
    else:
        raise RangeViolation(f"未知的初始化策略: {init!r}")
    spins = np.ascontiguousarray(spins, dtype=np.float64)
    if isinstance(sample, SkDisorderSample):
        return _SkChain(sample, spins)
    return _HopfieldChain(sample, spins)


def _sweep(chain, beta, rng):
    # 随机数在 numpy 子流中预先抽取，结果与编译与否无关
    n = chain.spins.size
    sites = rng.integers(n, size=n)
    thresholds = rng.random(n)
    chain.sweep(beta, sites, thresholds)


def _batch_error(series):
    series = np.asarray(series, dtype=float)
    batches = min(BATCHES, series.size)
    if batches < 2:
        return 0.0
    means = np.array([chunk.mean() for chunk in np.array_split(series, batches)])
    return float(means.std(ddof=1) / math.sqrt(batches))


def metropolis_run(sample, beta: float, sweeps: int, init: str = 'pattern', seed: int = 0) -> MetropolisSummary:
    """单自旋翻转 Metropolis，前一半扫描作为热化丢弃。"""
    if sweeps < 100:
        raise RangeViolation(f"sweeps 必须 ≥ 100: {sweeps}")
    rng = substream(seed, 'metropolis', sample.n)
    chain = _chain(sample, init, rng)
    burn_in = sweeps // 2
    overlaps, energies = [], []
    for sweep in range(sweeps):
        _sweep(chain, beta, rng)
        if sweep >= burn_in:
            overlaps.append(chain.reference @ chain.spins / sample.n)
            energies.append(chain.energy() / sample.n)
    summary = MetropolisSummary(float(np.mean(overlaps)), float(np.mean(energies)),
                                _batch_error(overlaps), _batch_error(energies), len(overlaps))
    logger.info(f"Metropolis N={sample.n}, β={beta}: 重叠 {summary.overlap_mean:.4f} ± {summary.overlap_error:.1e}")
    return summary


def overlap_histogram(sample, beta: float, sweeps: int, bins: int = 40, seed: int = 0,
                      init: str = 'random', replicas: int = 2) -> OverlapHistogram:
    """同一无序样本上两条独立链，热化后每次扫描记录 q₁₂。"""
    if replicas != 2:
        raise RangeViolation("重叠直方图只支持两个复本")
    if sweeps < 100:
        raise RangeViolation(f"sweeps 必须 ≥ 100: {sweeps}")
    rngs = [substream(seed, 'replica', r, sample.n) for r in range(2)]
    chains = [_chain(sample, init, rng) for rng in rngs]
    burn_in = sweeps // 2
    values = []
    for sweep in range(sweeps):
        for chain, rng in zip(chains, rngs):
            _sweep(chain, beta, rng)
        if sweep >= burn_in:
            values.append(chains[0].spins @ chains[1].spins / sample.n)
    edges = np.linspace(-1.0, 1.0, bins + 1)
    counts, _ = np.histogram(values, bins=edges)
    return OverlapHistogram(tuple(float(e) for e in edges), tuple(int(c) for c in counts), len(values))
