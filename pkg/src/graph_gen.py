"""
ランダムグラフ生成モジュール

Erdős–Rényi、確率的ブロックモデル（クラスタ間の辺なし）、Barabási–Albert、
コンフィギュレーションモデルの4種と、一様乱数による辺重みの付与。
全ての生成器は (パラメータ, seed) の純粋関数で、同じ入力からはビット単位で同じ辺リストを返す。
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from objectives import CutGraph
from oracle import InvalidInputError

logger = logging.getLogger(__name__)

MODELS = ("erdos_renyi", "sbm", "barabasi_albert", "configuration")


def _canonical(n: int, u: np.ndarray, v: np.ndarray, communities=None) -> CutGraph:
    """辺を (min, max) に正規化し、重複を除いて辞書順に並べる"""
    u = np.asarray(u, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    lo, hi = np.minimum(u, v), np.maximum(u, v)
    keep = lo != hi
    pairs = np.unique(np.stack([lo[keep], hi[keep]], axis=1), axis=0) if keep.any() \
        else np.empty((0, 2), dtype=np.int64)
    return CutGraph(n, pairs[:, 0], pairs[:, 1], np.ones(len(pairs)), False, communities)


def gen_erdos_renyi(n: int, p: float, seed: int) -> CutGraph:
    """G(n, p): 各ノード対が独立に確率 p で辺になる"""
    if not 0.0 <= p <= 1.0:
        raise InvalidInputError(f"p は [0, 1] の範囲で指定してください: {p}")
    if n < 1:
        raise InvalidInputError(f"n は1以上が必要です: {n}")
    rng = np.random.default_rng(seed)
    iu, iv = np.triu_indices(n, k=1)
    mask = rng.random(len(iu)) < p
    return _canonical(n, iu[mask], iv[mask])


def gen_sbm(num_clusters: int, size_lo: int, size_hi: int, p_in: float, seed: int) -> CutGraph:
    """互いに連結しないクラスタからなる確率的ブロックモデル

    クラスタサイズは [size_lo, size_hi] から独立一様に選び、クラスタ内の各ノード対を確率 p_in で結ぶ。
    """
    if size_lo > size_hi or size_lo < 1:
        raise InvalidInputError(f"クラスタサイズの範囲が不正です: [{size_lo}, {size_hi}]")
    if not 0.0 <= p_in <= 1.0:
        raise InvalidInputError(f"p_in は [0, 1] の範囲で指定してください: {p_in}")
    if num_clusters < 1:
        raise InvalidInputError(f"クラスタ数は1以上が必要です: {num_clusters}")
    rng = np.random.default_rng(seed)
    sizes = rng.integers(size_lo, size_hi + 1, size=num_clusters)
    us, vs = [], []
    offset = 0
    for size in sizes:
        iu, iv = np.triu_indices(int(size), k=1)
        mask = rng.random(len(iu)) < p_in
        us.append(iu[mask] + offset)
        vs.append(iv[mask] + offset)
        offset += int(size)
    communities = np.repeat(np.arange(num_clusters), sizes)
    return _canonical(offset, np.concatenate(us), np.concatenate(vs), communities)


def gen_barabasi_albert(n: int, m: int, seed: int) -> CutGraph:
    """優先的選択グラフ

    m 個の孤立ノードから始め、新しいノードごとに既存ノードから (次数 + 1) に比例する確率で
    m 個の異なる接続先を非復元抽出する。辺数はちょうど m·(n − m)。
    """
    if not 1 <= m < n:
        raise InvalidInputError(f"1 ≤ m < n が必要です: n={n}, m={m}")
    rng = np.random.default_rng(seed)
    degree = np.zeros(n, dtype=np.int64)
    us, vs = [], []
    for newcomer in range(m, n):
        weights = degree[:newcomer] + 1.0
        targets = rng.choice(newcomer, size=m, replace=False, p=weights / weights.sum())
        us.append(np.full(m, newcomer))
        vs.append(targets)
        degree[targets] += 1
        degree[newcomer] += m
    return _canonical(n, np.concatenate(us), np.concatenate(vs))


def sample_power_law_degrees(n: int, exponent: float, rng: np.random.Generator) -> np.ndarray:
    """離散べき分布 P(d) ∝ d^-exponent（1 ≤ d ≤ n−1）から次数列を抽出し、和が偶数になるまで引き直す"""
    if exponent <= 1.0:
        raise InvalidInputError(f"べき指数は1より大きい必要があります: {exponent}")
    if n < 2:
        raise InvalidInputError(f"n は2以上が必要です: {n}")
    support = np.arange(1, n, dtype=np.float64)
    probs = support ** (-exponent)
    probs /= probs.sum()
    while True:
        degrees = rng.choice(support.astype(np.int64), size=n, p=probs)
        if degrees.sum() % 2 == 0:
            return degrees


def gen_configuration_model(n: int, exponent: float, seed: int,
                            degrees: Optional[Sequence[int]] = None) -> CutGraph:
    """コンフィギュレーションモデル（単純グラフへの射影）

    スタブを一様にマッチングし、自己ループと多重辺は捨てる。
    degrees を与えた場合はその次数列を使う（和は偶数であること）。
    """
    rng = np.random.default_rng(seed)
    if degrees is None:
        deg = sample_power_law_degrees(n, exponent, rng)
    else:
        deg = np.asarray(degrees, dtype=np.int64)
        if len(deg) != n or deg.sum() % 2 or np.any(deg < 0):
            raise InvalidInputError("次数列は長さ n・非負・和が偶数である必要があります")
    stubs = np.repeat(np.arange(n), deg)
    rng.shuffle(stubs)
    pairs = stubs.reshape(-1, 2)
    graph = _canonical(n, pairs[:, 0], pairs[:, 1])
    dropped = len(pairs) - graph.num_edges
    if dropped:
        logger.debug("コンフィギュレーションモデル: 自己ループ・多重辺 %d 本を除外", dropped)
    return graph


def assign_uniform_weights(G: CutGraph, seed: int) -> CutGraph:
    """各辺に U(0, 1) の重みを独立に付与（値は開区間 (0, 1) に収まる）"""
    rng = np.random.default_rng(seed)
    w = rng.uniform(np.nextafter(0.0, 1.0), 1.0, size=G.num_edges)
    return G.with_weights(w)


@dataclass
class GraphGenSpec:
    """グラフ生成の指定"""
    model: str = "erdos_renyi"
    n: int = 1000
    p: float = 0.5
    num_clusters: int = 7
    size_lo: int = 30
    size_hi: int = 120
    p_in: float = 0.8
    m: int = 100
    exponent: float = 2.0
    seed: int = 0
    weighted: bool = False

    def validate(self):
        if self.model not in MODELS:
            raise InvalidInputError(f"未知のモデルです: {self.model} (候補: {', '.join(MODELS)})")
        if not 0.0 <= self.p <= 1.0 or not 0.0 <= self.p_in <= 1.0:
            raise InvalidInputError("確率は [0, 1] の範囲で指定してください")
        if self.model == "barabasi_albert" and not 1 <= self.m < self.n:
            raise InvalidInputError(f"1 ≤ m < n が必要です: n={self.n}, m={self.m}")
        if self.model == "configuration" and self.exponent <= 1.0:
            raise InvalidInputError(f"べき指数は1より大きい必要があります: {self.exponent}")
        if self.model == "sbm" and self.size_lo > self.size_hi:
            raise InvalidInputError("size_lo ≤ size_hi が必要です")


def generate(spec: GraphGenSpec) -> CutGraph:
    """GraphGenSpec に従ってグラフを生成"""
    spec.validate()
    if spec.model == "erdos_renyi":
        graph = gen_erdos_renyi(spec.n, spec.p, spec.seed)
    elif spec.model == "sbm":
        graph = gen_sbm(spec.num_clusters, spec.size_lo, spec.size_hi, spec.p_in, spec.seed)
    elif spec.model == "barabasi_albert":
        graph = gen_barabasi_albert(spec.n, spec.m, spec.seed)
    else:
        graph = gen_configuration_model(spec.n, spec.exponent, spec.seed)
    logger.info("グラフ生成: %s n=%d 辺数=%d", spec.model, graph.n, graph.num_edges)
    if spec.weighted:
        # 重みは構造とは別系列の乱数から
        graph = assign_uniform_weights(graph, spec.seed + 1)
    return graph
