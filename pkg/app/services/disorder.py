import math
from dataclasses import dataclass

import numpy as np

from app.core.errors import RangeViolation
from app.core.types import HopfieldParams, SkParams
from app.utils.rng import substream


@dataclass(frozen=True)
class SkDisorderSample:
    """对称耦合矩阵 J_ij = J₀/N + J·z_ij/√N（i<j），对角为零。"""

    n: int
    couplings: np.ndarray
    seed: int


@dataclass(frozen=True)
class HopfieldDisorderSample:
    n: int
    p: int
    retrieved_pattern: np.ndarray
    noise_patterns: np.ndarray
    seed: int

    @property
    def patterns(self):
        # 第 0 行为待检索模式
        return np.vstack([self.retrieved_pattern[None, :].astype(float), self.noise_patterns])


def draw_sk_sample(n: int, params: SkParams, seed: int, index: int = 0) -> SkDisorderSample:
    if n < 1:
        raise RangeViolation(f"系统大小必须 ≥ 1: {n}")
    rng = substream(seed, 'sk', n, index)
    z = np.triu(rng.standard_normal((n, n)), k=1)
    couplings = params.j0 / n + params.j * z / math.sqrt(n)
    couplings = np.triu(couplings, k=1)
    couplings = couplings + couplings.T
    couplings.setflags(write=False)
    return SkDisorderSample(n, couplings, seed)


def pattern_count(n: int, alpha: float) -> int:
    return max(1, math.ceil(alpha * n - 1e-12))


def draw_hopfield_sample(n: int, params: HopfieldParams, seed: int, index: int = 0,
                         boolean_noise: bool = False, p: int | None = None) -> HopfieldDisorderSample:
    if n < 1:
        raise RangeViolation(f"系统大小必须 ≥ 1: {n}")
    p = pattern_count(n, params.alpha) if p is None else p
    rng = substream(seed, 'hopfield', n, index)
    retrieved = rng.choice(np.array([-1, 1], dtype=np.int8), size=n)
    if boolean_noise:
        noise = rng.choice(np.array([-1.0, 1.0]), size=(p - 1, n))
    else:
        noise = rng.standard_normal((p - 1, n))
    return HopfieldDisorderSample(n, p, retrieved, noise, seed)


def gauge_sk(sample: SkDisorderSample, signs) -> SkDisorderSample:
    """σ_i → s_i σ_i 对应 J_ij → s_i s_j J_ij。"""
    signs = np.asarray(signs, dtype=float)
    couplings = sample.couplings * np.outer(signs, signs)
    return SkDisorderSample(sample.n, couplings, sample.seed)


def mattis_gauge(sample: HopfieldDisorderSample) -> HopfieldDisorderSample:
    """σ_i → ξ_i σ_i：待检索模式变为全 1，噪声模式逐列乘以 ξ_i。"""
    xi = sample.retrieved_pattern.astype(float)
    return HopfieldDisorderSample(sample.n, sample.p, np.ones(sample.n, dtype=np.int8),
                                  sample.noise_patterns * xi[None, :], sample.seed)
