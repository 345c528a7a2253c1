"""
比較用アルゴリズム: Greedy / RandomGreedy / Random
"""

import logging
from dataclasses import dataclass
from typing import FrozenSet, Tuple

import numpy as np
from tqdm import tqdm

from blits import RunTrace
from oracle import InvalidInputError, ValueOracle, marginals

logger = logging.getLogger(__name__)

STOP_RULES = ("exact_k", "nonnegative_only")


@dataclass
class BaselineConfig:
    """ベースラインの設定

    Attributes:
        k: 濃度制約
        seed: 乱数シード（Greedy では未使用）
        stop_rule: exact_k なら負の限界貢献でも k 回追加、nonnegative_only なら負になった時点で停止
        unconstrained: Random で各要素を確率 1/2 で選ぶ（濃度制約なし）
    """
    k: int
    seed: int = 0
    stop_rule: str = "exact_k"
    unconstrained: bool = False

    def __post_init__(self):
        if self.k < 0:
            raise InvalidInputError(f"k は0以上が必要です: {self.k}")
        if self.stop_rule not in STOP_RULES:
            raise InvalidInputError(f"未知の停止規則です: {self.stop_rule}")


def _check_k(oracle: ValueOracle, k: int):
    if k > oracle.n:
        raise InvalidInputError(f"k ({k}) が台集合のサイズ ({oracle.n}) を超えています")


def greedy(oracle: ValueOracle, k: int, *, stop_rule: str = "exact_k",
           progress: bool = False) -> Tuple[FrozenSet[int], RunTrace]:
    """各ラウンドで限界貢献が最大の要素を1つ加える（同値なら最小ID）

    限界貢献が負でも加え続ける。stop_rule="nonnegative_only" の場合は負になった時点で止める。
    """
    _check_k(oracle, k)
    trace = RunTrace(algorithm="greedy")
    S: FrozenSet[int] = frozenset()
    for _ in tqdm(range(k), desc="greedy", disable=not progress, leave=False):
        candidates = [a for a in range(oracle.n) if a not in S]
        gains, _ = marginals(oracle, S, candidates)
        best = int(np.argmax(gains))
        if stop_rule == "nonnegative_only" and gains[best] < 0:
            logger.debug("greedy: 限界貢献が負になったため |S|=%d で停止", len(S))
            break
        S = S | {candidates[best]}
        trace.record(oracle, S)
    return S, trace.finalize(oracle, S)


def random_greedy(oracle: ValueOracle, k: int, seed: int = 0,
                  progress: bool = False) -> Tuple[FrozenSet[int], RunTrace]:
    """限界貢献の上位 k 要素から一様に1つ選んで加える

    正の限界貢献を持つ候補が k 個に満たない場合、候補プールを限界貢献0のダミーで埋める。
    ダミーが選ばれたラウンドは何も加えない。
    """
    _check_k(oracle, k)
    rng = np.random.default_rng(seed)
    trace = RunTrace(algorithm="random_greedy")
    S: FrozenSet[int] = frozenset()
    for _ in tqdm(range(k), desc="random_greedy", disable=not progress, leave=False):
        candidates = np.array([a for a in range(oracle.n) if a not in S], dtype=np.int64)
        gains, _ = marginals(oracle, S, candidates.tolist())
        gains = np.asarray(gains)
        positive = gains > 0
        # 限界貢献の降順、同値は ID の昇順
        order = np.lexsort((candidates[positive], -gains[positive]))
        pool = candidates[positive][order][:k]
        pick = int(rng.integers(k))
        if pick < len(pool):
            S = S | {int(pool[pick])}
        trace.record(oracle, S)
    return S, trace.finalize(oracle, S)


def random_subset(oracle: ValueOracle, k: int, seed: int = 0,
                  unconstrained: bool = False) -> Tuple[FrozenSet[int], RunTrace]:
    """一様ランダムな k 要素集合を返す（適応ラウンド0）

    unconstrained=True の場合は各要素を独立に確率 1/2 で含める。
    """
    _check_k(oracle, k)
    rng = np.random.default_rng(seed)
    if unconstrained:
        S = frozenset(np.flatnonzero(rng.random(oracle.n) < 0.5).tolist())
    else:
        S = frozenset(rng.choice(oracle.n, size=k, replace=False).tolist())
    trace = RunTrace(algorithm="random")
    trace.record(oracle, S)
    return S, trace.finalize(oracle, S)


def run_baseline(name: str, oracle: ValueOracle, cfg: BaselineConfig,
                 progress: bool = False) -> Tuple[FrozenSet[int], RunTrace]:
    """名前でベースラインを実行"""
    if name == "greedy":
        return greedy(oracle, cfg.k, stop_rule=cfg.stop_rule, progress=progress)
    if name == "random_greedy":
        return random_greedy(oracle, cfg.k, cfg.seed, progress=progress)
    if name == "random":
        return random_subset(oracle, cfg.k, cfg.seed, cfg.unconstrained)
    raise InvalidInputError(f"未知のベースラインです: {name}")
