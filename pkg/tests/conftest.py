import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from objectives import CutGraph, CutOracle  # noqa: E402
from graph_gen import assign_uniform_weights, gen_erdos_renyi  # noqa: E402


@pytest.fixture
def triangle():
    return CutGraph.from_edges(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def k4():
    return CutGraph.from_edges(4, [(a, b) for a in range(4) for b in range(a + 1, 4)])


def weighted_cut_oracle(n: int, seed: int, p: float = 0.5) -> CutOracle:
    """重み U(0,1) の ER グラフのカットオラクル"""
    graph = assign_uniform_weights(gen_erdos_renyi(n, p, seed), seed + 1000)
    return CutOracle(graph)


def mean_and_se(values):
    values = np.asarray(values, dtype=np.float64)
    se = values.std(ddof=1) / np.sqrt(len(values)) if len(values) > 1 else 0.0
    return float(values.mean()), float(se)
