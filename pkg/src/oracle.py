"""
値オラクル（value oracle）モジュール

サブモジュラ関数 f: 2^N → ℝ≥0 への問い合わせ口と、適応ラウンド数・クエリ数の台帳を提供する。
全アルゴリズムはこのモジュールの evaluate_batch を通してのみ f を評価する。
"""

import copy
import logging
import threading
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

Element = int
ElementSet = FrozenSet[int]


# ========== 例外 ==========

class BlitsError(Exception):
    """本パッケージの基底例外"""


class InvalidInputError(BlitsError, ValueError):
    """入力が不正（未知の要素ID、空バッチ、k > n など）"""


class ObjectiveContractError(BlitsError, ValueError):
    """目的関数の前提（非負性・対称性など）違反"""


class InfeasibleSampleError(BlitsError, ValueError):
    """|X| < b のためサイズ b の部分集合を抽出できない"""


class DegenerateObjectiveError(BlitsError):
    """全ての単集合の値が 0"""


class SizeGuardError(BlitsError):
    """全列挙の演算量が上限を超える"""


class ParseError(BlitsError, ValueError):
    """入力ファイルの書式エラー"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"{line}行目: {message}"
        super().__init__(message)


class SpecError(BlitsError, ValueError):
    """実験仕様の不正"""


# ========== 基本型 ==========

@dataclass(frozen=True)
class GroundSet:
    """台集合 N（実要素 [0, n) とダミー要素 [n, n + dummy_count)）"""
    n: int
    dummy_count: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise InvalidInputError(f"台集合のサイズは1以上が必要です: n={self.n}")
        if self.dummy_count < 0:
            raise InvalidInputError(f"ダミー数が負です: {self.dummy_count}")

    @property
    def size(self) -> int:
        return self.n + self.dummy_count

    def real_ids(self) -> range:
        return range(self.n)

    def dummy_ids(self) -> range:
        return range(self.n, self.size)

    def is_dummy(self, a: int) -> bool:
        return self.n <= a < self.size

    def validate(self, S: Iterable[int]):
        """S の全要素が台集合に含まれることを確認"""
        if not S:
            return
        lo, hi = min(S), max(S)
        if lo < 0 or hi >= self.size:
            bad = lo if lo < 0 else hi
            raise InvalidInputError(f"未知の要素IDです: {bad} (台集合サイズ {self.size})")


@dataclass
class QueryLedger:
    """適応ラウンドごとのクエリ数の台帳

    total_queries = sum(per_round)、adaptive_rounds = len(per_round) を常に満たす。
    """
    per_round: List[int] = field(default_factory=list)

    def __post_init__(self):
        self._lock = threading.Lock()

    @property
    def total_queries(self) -> int:
        return sum(self.per_round)

    @property
    def adaptive_rounds(self) -> int:
        return len(self.per_round)

    def record(self, count: int):
        if count < 1:
            raise InvalidInputError("1ラウンドのクエリ数は1以上が必要です")
        with self._lock:
            self.per_round.append(count)

    def absorb(self, other: "QueryLedger"):
        """逐次実行された別台帳のラウンドを後ろに連結"""
        with self._lock:
            self.per_round.extend(other.per_round)

    def snapshot(self) -> "QueryLedger":
        return QueryLedger(list(self.per_round))

    @classmethod
    def merge_parallel(cls, ledgers: Sequence["QueryLedger"]) -> "QueryLedger":
        """並列に走った複数の台帳をラウンド単位で合算

        ラウンド数は最大値、クエリ数は総和になる。
        """
        depth = max((lg.adaptive_rounds for lg in ledgers), default=0)
        merged = [0] * depth
        for lg in ledgers:
            for i, c in enumerate(lg.per_round):
                merged[i] += c
        return cls(merged)

    def __getstate__(self):
        return {"per_round": list(self.per_round)}

    def __setstate__(self, state):
        self.per_round = state["per_round"]
        self._lock = threading.Lock()


class EvalBatch:
    """1適応ラウンド分のクエリ集合

    各クエリは同一バッチ内の他の回答に依存しない。evaluate_batch に渡した時点で凍結される。
    重複する集合は1度だけ評価され、結果が各位置に配られる。
    """

    def __init__(self, queries: Iterable[Iterable[int]] = ()):
        self._queries: List[ElementSet] = []
        self._sealed = False
        for q in queries:
            self.add(q)

    def add(self, S: Iterable[int]) -> int:
        """集合を追加して、その位置を返す"""
        if self._sealed:
            raise InvalidInputError("評価済みのバッチには追加できません")
        self._queries.append(S if isinstance(S, frozenset) else frozenset(S))
        return len(self._queries) - 1

    def add_marginal(self, S: Iterable[int], a: int) -> "MarginalRef":
        """f_S(a) のための2クエリを追加"""
        base = S if isinstance(S, frozenset) else frozenset(S)
        return MarginalRef(self.add(base | {a}), self.add(base))

    def seal(self):
        self._sealed = True

    @property
    def sealed(self) -> bool:
        return self._sealed

    @property
    def queries(self) -> Tuple[ElementSet, ...]:
        return tuple(self._queries)

    def unique_queries(self) -> Tuple[List[ElementSet], List[int]]:
        """重複を除いた集合のリストと、各クエリ→一意集合の対応を返す"""
        index: Dict[ElementSet, int] = {}
        unique: List[ElementSet] = []
        mapping: List[int] = []
        for q in self._queries:
            pos = index.get(q)
            if pos is None:
                pos = len(unique)
                index[q] = pos
                unique.append(q)
            mapping.append(pos)
        return unique, mapping

    def __len__(self) -> int:
        return len(self._queries)


@dataclass(frozen=True)
class MarginalRef:
    """バッチ内の限界貢献 f(S∪a) − f(S) への参照"""
    with_index: int
    without_index: int

    def resolve(self, values: Sequence[float]) -> float:
        return values[self.with_index] - values[self.without_index]


# ========== オラクル ==========

class ValueOracle(ABC):
    """非負サブモジュラ関数への値オラクル

    サブクラスは _value（1集合の評価）を実装する。まとめて高速に評価できる場合は
    _values を上書きする。バックエンドのデータは読み取り専用で、並列評価から安全に共有できる。
    """

    name = "oracle"

    def __init__(self, n: int, *, n_threads: int = 1):
        """
        Args:
            n: 実要素数
            n_threads: バッチ評価に使うスレッド数
        """
        self.ground_set = GroundSet(n)
        self.ledger = QueryLedger()
        self.n_threads = max(1, int(n_threads))

    @property
    def n(self) -> int:
        return self.ground_set.n

    @abstractmethod
    def _value(self, S: ElementSet) -> float:
        """集合 S の値（検証・台帳記録なし）"""

    def _values(self, sets: Sequence[ElementSet]) -> List[float]:
        if self.n_threads > 1 and len(sets) > 1:
            chunks = [list(c) for c in np.array_split(np.arange(len(sets)), self.n_threads) if len(c)]
            with ThreadPoolExecutor(max_workers=self.n_threads) as executor:
                futures = [executor.submit(lambda idx: [self._value(sets[i]) for i in idx], c)
                           for c in chunks]
                out: List[float] = []
                for f in futures:
                    out.extend(f.result())
                return out
        return [self._value(s) for s in sets]

    def peek(self, S: Iterable[int]) -> float:
        """台帳に記録せずに f(S) を評価（計測用）"""
        S = S if isinstance(S, frozenset) else frozenset(S)
        self.ground_set.validate(S)
        value = float(self._values([S])[0])
        _check_nonnegative(self, S, value)
        return value

    def fork(self) -> "ValueOracle":
        """データを共有し、台帳だけ新しいオラクルを返す"""
        clone = copy.copy(self)
        clone.ledger = QueryLedger()
        return clone

    def __repr__(self) -> str:
        return f"{type(self).__name__}(n={self.n})"


class FunctionOracle(ValueOracle):
    """任意の関数 fn(S) をオラクル化する"""

    name = "function"

    def __init__(self, n: int, fn: Callable[[ElementSet], float], *, n_threads: int = 1):
        super().__init__(n, n_threads=n_threads)
        self.fn = fn

    def _value(self, S: ElementSet) -> float:
        return float(self.fn(S))


def _check_nonnegative(oracle: ValueOracle, S: ElementSet, value: float):
    if not value >= 0.0:
        raise ObjectiveContractError(
            f"{oracle.name}: 目的関数が負の値を返しました f(S)={value!r} (|S|={len(S)})"
        )


# ========== 評価 ==========

def evaluate_batch(oracle: ValueOracle, batch: EvalBatch, *, record: bool = True) -> List[float]:
    """バッチを1適応ラウンドとして評価

    Args:
        oracle: 値オラクル
        batch: 評価するクエリ集合（空不可）
        record: False の場合は台帳に記録しない（計測・全列挙用）

    Returns:
        クエリ順の f(S) のリスト
    """
    if len(batch) == 0:
        raise InvalidInputError("空のバッチは評価できません")
    batch.seal()
    unique, mapping = batch.unique_queries()
    for S in unique:
        oracle.ground_set.validate(S)

    values = [float(v) for v in oracle._values(unique)]
    for S, v in zip(unique, values):
        _check_nonnegative(oracle, S, v)

    if record:
        # 評価が全て成功した時点で1ラウンドとして記録
        oracle.ledger.record(len(unique))
        logger.debug("ラウンド %d: %d クエリ (重複除去前 %d)",
                     oracle.ledger.adaptive_rounds, len(unique), len(batch))
    return [values[i] for i in mapping]


def marginal(oracle: ValueOracle, S: Iterable[int], a: int) -> float:
    """f_S(a) = f(S∪{a}) − f(S) を1ラウンドで評価"""
    batch = EvalBatch()
    ref = batch.add_marginal(S, a)
    return ref.resolve(evaluate_batch(oracle, batch))


def marginals(oracle: ValueOracle, S: Iterable[int], candidates: Sequence[int]) -> Tuple[List[float], float]:
    """共通の S に対する複数要素の限界貢献を1ラウンドで評価

    f(S) は1度だけ評価されるので、k 要素なら k+1 評価になる。

    Returns:
        (各候補の限界貢献, f(S))
    """
    base = S if isinstance(S, frozenset) else frozenset(S)
    batch = EvalBatch()
    base_index = batch.add(base)
    refs = [MarginalRef(batch.add(base | {a}), base_index) for a in candidates]
    values = evaluate_batch(oracle, batch)
    return [ref.resolve(values) for ref in refs], values[base_index]
