"""
有限 N 的精确枚举。

前 b 个自旋（低位块）一次性向量化枚举，其余自旋按 Gray 码顺序遍历：
每一步只翻转一个高位自旋，增量更新高位能量与低位块感受到的场。
"""
import functools
import math

import numpy as np
from scipy.special import logsumexp

from app.core.errors import BudgetExceeded
from app.core.types import HopfieldParams, SkParams
from app.services.disorder import draw_hopfield_sample, draw_sk_sample
from app.utils.logger import logger

LOW_BLOCK = 12
MAX_SK_SPINS = 20
MAX_HOPFIELD_SPINS = 18


@functools.lru_cache(maxsize=8)
def all_configurations(n: int) -> np.ndarray:
    """2^n × n 的 ±1 构型表，第 i 列对应二进制第 i 位。"""
    codes = np.arange(2 ** n, dtype=np.int64)[:, None]
    bits = (codes >> np.arange(n)) & 1
    states = (1 - 2 * bits).astype(float)
    states.setflags(write=False)
    return states


def _gray_steps(count: int):
    # 第 t 步翻转的位 = t 的末尾零个数
    for t in range(1, count):
        yield (t & -t).bit_length() - 1


def sk_log_partition(couplings: np.ndarray, beta: float) -> float:
    """log Σ_σ exp(β Σ_{i<j} J_ij σ_i σ_j)。"""
    n = couplings.shape[0]
    b = min(n, LOW_BLOCK)
    low = all_configurations(b)
    j_ll = couplings[:b, :b]
    j_lh = couplings[:b, b:]
    j_hh = couplings[b:, b:]
    e_low = 0.5 * np.einsum('si,ij,sj->s', low, j_ll, low)

    high = np.ones(n - b)
    field = j_lh @ high
    e_high = 0.5 * high @ j_hh @ high
    total = logsumexp(beta * (e_low + low @ field + e_high))
    for k in _gray_steps(2 ** (n - b)):
        old = high[k]
        e_high -= 2.0 * old * (j_hh[k] @ high)
        field -= 2.0 * old * j_lh[:, k]
        high[k] = -old
        total = np.logaddexp(total, logsumexp(beta * (e_low + low @ field + e_high)))
    return float(total)


def hopfield_log_partition(patterns: np.ndarray, beta: float) -> float:
    """log Σ_σ exp((β/2N) Σ_μ (ξ^μ·σ)²)，patterns 为 P × N。"""
    n = patterns.shape[1]
    b = min(n, LOW_BLOCK)
    low = all_configurations(b)
    m_low = low @ patterns[:, :b].T
    norm_low = np.sum(m_low ** 2, axis=1)
    xi_high = patterns[:, b:]
    scale = beta / (2.0 * n)

    high = np.ones(n - b)
    m_high = xi_high @ high

    def chunk():
        return logsumexp(scale * (norm_low + 2.0 * m_low @ m_high + m_high @ m_high))

    total = chunk()
    for k in _gray_steps(2 ** (n - b)):
        m_high -= 2.0 * high[k] * xi_high[:, k]
        high[k] = -high[k]
        total = np.logaddexp(total, chunk())
    return float(total)


def _mean_and_error(values):
    values = np.asarray(values, dtype=float)
    mean = float(values.mean())
    error = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    return mean, error


def enumerate_sk_pressure(n: int, params: SkParams, samples: int, seed: int = 0):
    if n > MAX_SK_SPINS:
        raise BudgetExceeded(f"SK 精确枚举最多 {MAX_SK_SPINS} 个自旋, 请求 {n}")
    pressures = []
    for index in range(samples):
        sample = draw_sk_sample(n, params, seed, index)
        pressures.append(sk_log_partition(sample.couplings, params.beta) / n)
    mean, error = _mean_and_error(pressures)
    logger.info(f"SK 枚举 N={n}, β={params.beta}: A_N = {mean:.6f} ± {error:.2e} ({samples} 个样本)")
    return mean, error


def enumerate_hopfield_pressure(n: int, params: HopfieldParams, samples: int, seed: int = 0,
                                p: int | None = None, boolean_noise: bool = False):
    if n > MAX_HOPFIELD_SPINS:
        raise BudgetExceeded(f"Hopfield 精确枚举最多 {MAX_HOPFIELD_SPINS} 个自旋, 请求 {n}")
    pressures = []
    for index in range(samples):
        sample = draw_hopfield_sample(n, params, seed, index, boolean_noise=boolean_noise, p=p)
        pressures.append(hopfield_log_partition(sample.patterns, params.beta) / n)
    mean, error = _mean_and_error(pressures)
    logger.info(f"Hopfield 枚举 N={n}, β={params.beta}: A_N = {mean:.6f} ± {error:.2e} ({samples} 个样本)")
    return mean, error
