import os

# 测试时不写日志文件
os.environ.setdefault('RSB_LOG_FILE', '')

import pytest  # noqa: E402

from app.core.types import QuadratureSpec  # noqa: E402


@pytest.fixture
def spec():
    return QuadratureSpec(nodes_per_level=40)


@pytest.fixture
def coarse_spec():
    return QuadratureSpec(nodes_per_level=16)
