import sys
from pathlib import Path

import numpy as np
import pytest

# 模块平铺在仓库根目录
ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from graph_core import circular_graph, erdos_renyi  # noqa: E402
from spectral import graph_spectrum  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(2017)


@pytest.fixture
def ring8():
    return circular_graph(8)


@pytest.fixture
def er30():
    return erdos_renyi(30, 0.3, 7)


@pytest.fixture
def er30_spec(er30):
    return graph_spectrum(er30)
