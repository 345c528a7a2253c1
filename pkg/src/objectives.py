"""
目的関数モジュール

カット関数（無向・有向重み付き）、画像要約、映画推薦、収益最大化、モジュラ関数と、
ダミー要素で台集合を拡張するラッパーを提供する。
"""

import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from oracle import (
    ElementSet,
    GroundSet,
    InvalidInputError,
    ObjectiveContractError,
    ValueOracle,
)

logger = logging.getLogger(__name__)

# 密行列でまとめ評価するカットグラフの最大ノード数
DENSE_CUT_LIMIT = 4096
# まとめ評価の1チャンクあたりの集合数
BATCH_CHUNK = 1024


def _index_array(S: Iterable[int]) -> np.ndarray:
    return np.fromiter(S, dtype=np.int64, count=len(S)) if S else np.empty(0, dtype=np.int64)


# ========== データ型 ==========

@dataclass
class CutGraph:
    """カット関数用のグラフ

    Attributes:
        n: ノード数
        u, v: 辺の端点（長さ E の配列）
        w: 辺の重み（非負）
        directed: 有向グラフかどうか（カット判定では向きを無視する）
        communities: SBM などで生成した場合のクラスタ番号（任意）
    """
    n: int
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    directed: bool = False
    communities: Optional[np.ndarray] = None

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.int64)
        self.v = np.asarray(self.v, dtype=np.int64)
        self.w = np.asarray(self.w, dtype=np.float64)
        if not (len(self.u) == len(self.v) == len(self.w)):
            raise InvalidInputError("辺配列の長さが一致しません")
        if self.n < 0:
            raise InvalidInputError(f"ノード数が負です: {self.n}")
        if len(self.u):
            if np.any(self.u == self.v):
                raise InvalidInputError("自己ループは使えません")
            if min(self.u.min(), self.v.min()) < 0 or max(self.u.max(), self.v.max()) >= self.n:
                raise InvalidInputError("辺の端点がノード範囲外です")
            if np.any(~np.isfinite(self.w)) or np.any(self.w < 0):
                raise ObjectiveContractError("辺の重みは有限かつ非負である必要があります")

    @classmethod
    def from_edges(cls, n: int, edges: Sequence[Tuple], directed: bool = False) -> "CutGraph":
        """(u, v) または (u, v, w) のリストから生成"""
        u = [e[0] for e in edges]
        v = [e[1] for e in edges]
        w = [e[2] if len(e) > 2 else 1.0 for e in edges]
        return cls(n, np.array(u, dtype=np.int64), np.array(v, dtype=np.int64),
                   np.array(w, dtype=np.float64), directed)

    @property
    def num_edges(self) -> int:
        return len(self.u)

    def edges(self) -> List[Tuple[int, int, float]]:
        return [(int(a), int(b), float(c)) for a, b, c in zip(self.u, self.v, self.w)]

    def degrees(self) -> np.ndarray:
        """向きを無視した（重みなし）次数"""
        return (np.bincount(self.u, minlength=self.n) + np.bincount(self.v, minlength=self.n)).astype(np.int64)

    def adjacency(self) -> sparse.csr_matrix:
        """向きを無視した対称重み行列（逆向きの辺は重みを合算）"""
        a = sparse.coo_matrix((self.w, (self.u, self.v)), shape=(self.n, self.n)).tocsr()
        return (a + a.T).tocsr()

    def with_weights(self, w: np.ndarray) -> "CutGraph":
        return CutGraph(self.n, self.u.copy(), self.v.copy(), np.asarray(w, dtype=np.float64),
                        self.directed, self.communities)


@dataclass
class SimilarityMatrix:
    """n×n の類似度行列 s_{i,j}"""
    s: np.ndarray

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=np.float64)
        if self.s.ndim != 2 or self.s.shape[0] != self.s.shape[1]:
            raise InvalidInputError(f"類似度行列は正方行列である必要があります: shape={self.s.shape}")
        if not np.all(np.isfinite(self.s)):
            raise ObjectiveContractError("類似度行列に非有限値が含まれています")

    @property
    def n(self) -> int:
        return self.s.shape[0]

    def is_symmetric(self, tol: float = 1e-9) -> bool:
        return bool(np.allclose(self.s, self.s.T, rtol=0.0, atol=tol))

    def require_symmetric(self, tol: float = 1e-9):
        if not self.is_symmetric(tol):
            err = float(np.max(np.abs(self.s - self.s.T)))
            raise ObjectiveContractError(f"類似度行列が対称ではありません (最大誤差 {err:.3g})")


@dataclass
class RevenueWeights:
    """収益最大化用の対称な疎重み行列 w_{i,j}（対角は0）"""
    w: sparse.csc_matrix

    def __post_init__(self):
        w = sparse.csc_matrix(self.w, dtype=np.float64)
        if w.shape[0] != w.shape[1]:
            raise InvalidInputError("重み行列は正方行列である必要があります")
        if w.nnz and (w.data.min() < 0 or not np.all(np.isfinite(w.data))):
            raise ObjectiveContractError("重みは有限かつ非負である必要があります")
        if w.diagonal().any():
            raise ObjectiveContractError("重み行列の対角は0である必要があります")
        if w.nnz and abs(w - w.T).max() > 1e-12:
            raise ObjectiveContractError("重み行列が対称ではありません")
        self.w = w

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @classmethod
    def from_graph(cls, graph: CutGraph) -> "RevenueWeights":
        return cls(graph.adjacency().tocsc())


# ========== 類似度の構築 ==========

def cosine_similarity_matrix(vectors: np.ndarray, min_norm: float = 1e-12) -> SimilarityMatrix:
    """行ベクトル間のコサイン類似度（画像要約用、生のピクセルベクトル）"""
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidInputError("ベクトルは2次元配列で与えてください")
    norms = np.linalg.norm(x, axis=1)
    small = np.flatnonzero(norms < min_norm)
    if len(small):
        raise ObjectiveContractError(f"ノルムが小さすぎるベクトルがあります: 行 {small[:5].tolist()}")
    unit = x / norms[:, None]
    s = unit @ unit.T
    s = (s + s.T) / 2.0
    np.fill_diagonal(s, 1.0)
    return SimilarityMatrix(s)


def inner_product_similarity(ratings: np.ndarray) -> SimilarityMatrix:
    """評価ベクトル（行=映画）の内積による類似度 s_{i,j} = ⟨row_i, row_j⟩"""
    r = np.asarray(ratings, dtype=np.float64)
    if r.ndim != 2:
        raise InvalidInputError("評価行列は2次元配列で与えてください")
    return SimilarityMatrix(r @ r.T)


# ========== 目的関数（純粋関数） ==========

def cut_value(G: CutGraph, S: Iterable[int]) -> float:
    """ちょうど一方の端点が S に含まれる辺の重みの総和（向きは無視）"""
    S = frozenset(S)
    if not S or G.num_edges == 0:
        return 0.0
    mask = np.zeros(G.n, dtype=bool)
    mask[_index_array(S)] = True
    crossing = mask[G.u] != mask[G.v]
    return float(G.w[crossing].sum())


def image_summarization_value(M: SimilarityMatrix, S: Iterable[int]) -> float:
    """画像要約: Σ_i max_{j∈S} s_ij − (1/|X|) Σ_{j,k∈S} s_jk（空集合は0、負は0に切り詰め）"""
    S = frozenset(S)
    if not S:
        return 0.0
    idx = np.sort(_index_array(S))
    coverage = M.s[:, idx].max(axis=1).sum()
    redundancy = M.s[np.ix_(idx, idx)].sum() / M.n
    return max(0.0, float(coverage - redundancy))


def movie_recommendation_value(M: SimilarityMatrix, S: Iterable[int], lam: float = 0.95) -> float:
    """映画推薦: Σ_{i∈S} Σ_j s_ij − λ Σ_{j,k∈S} s_jk（負は0に切り詰め）"""
    S = frozenset(S)
    if not S:
        return 0.0
    idx = np.sort(_index_array(S))
    relevance = M.s[idx, :].sum()
    redundancy = M.s[np.ix_(idx, idx)].sum()
    return max(0.0, float(relevance - lam * redundancy))


def revenue_value(W: RevenueWeights, S: Iterable[int], alpha: float = 0.5,
                  include_selected: bool = False) -> float:
    """収益最大化: Σ_{i∈X∖S} (Σ_{j∈S} w_ij)^alpha

    include_selected=True のときは S 内のユーザーも外側の和に含める（単調な定式化）。
    """
    S = frozenset(S)
    if not S:
        return 0.0
    idx = _index_array(S)
    influence = np.asarray(W.w[:, idx].sum(axis=1)).ravel()
    if not include_selected:
        influence[idx] = 0.0
    return float(np.power(np.maximum(influence, 0.0), alpha).sum())


# ========== オラクル ==========

class ModularOracle(ValueOracle):
    """モジュラ関数 f(S) = Σ_{e∈S} w_e（テスト用）"""

    name = "modular"

    def __init__(self, weights: Sequence[float], **kwargs):
        w = np.asarray(weights, dtype=np.float64)
        if np.any(w < 0):
            raise ObjectiveContractError("モジュラ関数の重みは非負である必要があります")
        super().__init__(len(w), **kwargs)
        self.weights = w

    def _value(self, S: ElementSet) -> float:
        return float(self.weights[_index_array(S)].sum()) if S else 0.0


class CutOracle(ValueOracle):
    """カット関数のオラクル

    ノード数が DENSE_CUT_LIMIT 以下なら、バッチ内の集合を 0/1 行列に並べて
    f = M·d − rowsum((M A) ∘ M) でまとめて評価する。
    """

    name = "cut"

    def __init__(self, graph: CutGraph, **kwargs):
        super().__init__(graph.n, **kwargs)
        self.graph = graph
        self._dense = None
        self._degree = None
        if graph.n <= DENSE_CUT_LIMIT:
            a = graph.adjacency().toarray()
            self._dense = a
            self._degree = a.sum(axis=1)
        self._scale = float(graph.w.sum()) + 1.0

    def _value(self, S: ElementSet) -> float:
        return cut_value(self.graph, S)

    def _values(self, sets: Sequence[ElementSet]) -> List[float]:
        if self._dense is None or len(sets) < 2:
            return super()._values(sets)
        out = np.empty(len(sets))
        for start in range(0, len(sets), BATCH_CHUNK):
            chunk = sets[start:start + BATCH_CHUNK]
            lens = np.fromiter((len(s) for s in chunk), dtype=np.int64, count=len(chunk))
            rows = np.repeat(np.arange(len(chunk)), lens)
            cols = np.fromiter((a for s in chunk for a in s), dtype=np.int64, count=int(lens.sum()))
            m = np.zeros((len(chunk), self.n))
            m[rows, cols] = 1.0
            vals = m @ self._degree - np.einsum("ij,ij->i", m @ self._dense, m)
            out[start:start + len(chunk)] = vals
        # 丸め誤差による微小な負値は0とみなす
        tiny = (out < 0) & (out > -1e-9 * self._scale)
        out[tiny] = 0.0
        return out.tolist()


class ImageSummarizationOracle(ValueOracle):
    name = "image"

    def __init__(self, similarity: SimilarityMatrix, **kwargs):
        similarity.require_symmetric()
        super().__init__(similarity.n, **kwargs)
        self.similarity = similarity

    def _value(self, S: ElementSet) -> float:
        return image_summarization_value(self.similarity, S)


class MovieRecommendationOracle(ValueOracle):
    name = "movie"

    def __init__(self, similarity: SimilarityMatrix, lam: float = 0.95, **kwargs):
        super().__init__(similarity.n, **kwargs)
        self.similarity = similarity
        self.lam = lam

    def _value(self, S: ElementSet) -> float:
        return movie_recommendation_value(self.similarity, S, self.lam)


class RevenueOracle(ValueOracle):
    name = "revenue"

    def __init__(self, weights: RevenueWeights, alpha: float = 0.5,
                 include_selected: bool = False, **kwargs):
        super().__init__(weights.n, **kwargs)
        self.weights = weights
        self.alpha = alpha
        self.include_selected = include_selected

    def _value(self, S: ElementSet) -> float:
        return revenue_value(self.weights, S, self.alpha, self.include_selected)


class DummyPaddedOracle(ValueOracle):
    """ダミー要素を追加したオラクル

    ダミー要素 a は全ての S で f_S(a) = 0。集合の値は実要素部分の内側の値に等しい。
    台帳は内側のオラクルと共有する。
    """

    def __init__(self, inner: ValueOracle, extra: int):
        if extra < 0:
            raise InvalidInputError(f"追加ダミー数が負です: {extra}")
        self.inner = inner
        self.name = inner.name
        self.ground_set = GroundSet(inner.ground_set.n, inner.ground_set.dummy_count + extra)
        self.ledger = inner.ledger
        self.n_threads = inner.n_threads
        self.dummy_ids = list(range(inner.ground_set.size, self.ground_set.size))

    def _strip(self, S: ElementSet) -> ElementSet:
        n = self.ground_set.n
        if not S or max(S) < n:
            return S
        return frozenset(a for a in S if a < n)

    def _value(self, S: ElementSet) -> float:
        return self.inner._value(self._strip(S))

    def _values(self, sets: Sequence[ElementSet]) -> List[float]:
        # ダミーを除いた後で重複をまとめ、同じ実集合には同じ値を返す
        stripped = [self._strip(s) for s in sets]
        index = {}
        unique = []
        for s in stripped:
            if s not in index:
                index[s] = len(unique)
                unique.append(s)
        values = self.inner._values(unique)
        return [values[index[s]] for s in stripped]

    def fork(self) -> "DummyPaddedOracle":
        return DummyPaddedOracle(self.inner.fork(), len(self.dummy_ids))


def pad_with_dummies(oracle: ValueOracle, target_size: int,
                     current_size: Optional[int] = None) -> ValueOracle:
    """生存集合のサイズが target_size になるようにダミー要素を追加

    Args:
        oracle: 元のオラクル
        target_size: パディング後の生存集合サイズ（通常は k）
        current_size: 現在の生存集合サイズ（省略時は台集合全体）

    Returns:
        ダミーが不要ならそのままのオラクル、必要なら DummyPaddedOracle
    """
    if current_size is None:
        current_size = oracle.ground_set.size
    if target_size < current_size:
        raise InvalidInputError(
            f"target_size ({target_size}) が現在のサイズ ({current_size}) より小さいです"
        )
    extra = target_size - current_size
    if extra == 0:
        return oracle
    return DummyPaddedOracle(oracle, extra)
