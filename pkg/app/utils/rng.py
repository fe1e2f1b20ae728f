import hashlib

import numpy as np


def derive_seed(base_seed: int, *keys) -> int:
    """由主种子和名字/计数器派生稳定的 64 位子种子。"""
    text = ":".join([str(int(base_seed))] + [str(k) for k in keys])
    digest = hashlib.sha256(text.encode("ascii")).digest()
    return int.from_bytes(digest[:8], "big", signed=False)


def substream(base_seed: int, *keys) -> np.random.Generator:
    # 第 k 个样本的随机流与前面有多少样本无关
    return np.random.default_rng(derive_seed(base_seed, *keys))
