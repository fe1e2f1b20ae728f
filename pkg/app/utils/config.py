import os
from dataclasses import dataclass

DEFAULT_NODES = 80


@dataclass(frozen=True)
class Settings:
    log_level: str
    log_file: str


settings = Settings(
    log_level=os.environ.get('RSB_LOG_LEVEL', 'INFO').upper(),
    log_file=os.environ.get('RSB_LOG_FILE', 'rsb_solver.log'),
)


def default_nodes() -> int:
    """每层 Gauss-Hermite 节点数，环境变量 RSB_NODES 覆盖默认值。"""
    raw = os.environ.get('RSB_NODES', '')
    if raw == '':
        return DEFAULT_NODES
    try:
        nodes = int(raw)
    except ValueError:
        raise ValueError(f"RSB_NODES 必须是整数: {raw!r}") from None
    if nodes < 2:
        raise ValueError(f"RSB_NODES 必须 ≥ 2: {nodes}")
    return nodes
