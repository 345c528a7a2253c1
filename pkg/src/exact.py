"""
全列挙による厳密計算（小規模インスタンスの検証用）

- brute_force_opt: |T| ≤ k の全部分集合から最適解を求める
- exact_delta / exact_block_value: U(X) の全 b-部分集合にわたる厳密な期待値
- ExactEstimator: SIEVE のサンプリング推定器を厳密計算に置き換える
- check_feige_lemma / check_filter_shrink: 理論上の性質の検査

計測用の評価は台帳に記録しない。ただし ExactEstimator は SIEVE の推定器として
ラウンドを記録する（制御フローとラウンド数はサンプリング版と同じ）。
"""

import dataclasses
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import comb

from blits import BlitsConfig, BlockEstimate, block_round, delta_round, run_sieve
from oracle import EvalBatch, InvalidInputError, SizeGuardError, ValueOracle, evaluate_batch

logger = logging.getLogger(__name__)

OPT_ENUMERATION_LIMIT = 10 ** 7
BLOCK_ENUMERATION_LIMIT = 10 ** 6
EVAL_CHUNK = 4096


def _guard(count: int, limit: int, what: str):
    if count > limit:
        raise SizeGuardError(f"{what} の列挙数 {count:,} が上限 {limit:,} を超えています")


@dataclass
class BruteForceResult:
    opt_set: FrozenSet[int]
    opt_value: float
    enumerated_count: int


def brute_force_opt(oracle: ValueOracle, k: int, limit: int = OPT_ENUMERATION_LIMIT) -> BruteForceResult:
    """|T| ≤ k の全部分集合を評価して最適解を求める（同値なら辞書順最小の集合）"""
    n = oracle.n
    k = min(k, n)
    total = int(sum(comb(n, j, exact=True) for j in range(k + 1)))
    _guard(total, limit, "最適解探索")

    best_key: Optional[Tuple[int, ...]] = None
    best_value = -math.inf
    candidates = itertools.chain.from_iterable(itertools.combinations(range(n), j) for j in range(k + 1))
    while True:
        chunk = list(itertools.islice(candidates, EVAL_CHUNK))
        if not chunk:
            break
        values = evaluate_batch(oracle, EvalBatch(chunk), record=False)
        for key, v in zip(chunk, values):
            tol = 1e-12 * max(1.0, abs(best_value)) if best_key is not None else 0.0
            if best_key is None or v > best_value + tol or (abs(v - best_value) <= tol and key < best_key):
                best_key, best_value = key, v
    return BruteForceResult(frozenset(best_key), float(best_value), total)


def enumerate_blocks(X: Sequence[int], b: int, limit: int = BLOCK_ENUMERATION_LIMIT,
                     reverse: bool = False) -> List[FrozenSet[int]]:
    """X の全 b-部分集合（U(X) の台）"""
    items = sorted(X, reverse=reverse)
    if len(items) < b:
        raise InvalidInputError(f"|X|={len(items)} < b={b}")
    _guard(int(comb(len(items), b, exact=True)), limit, "ブロック")
    return [frozenset(c) for c in itertools.combinations(items, b)]


def exact_delta_all(oracle: ValueOracle, S, X: Sequence[int], b: int, extra=(),
                    record: bool = False) -> Tuple[Dict[int, float], List[float]]:
    """全ての a ∈ X について Δ(a, S, X) を厳密に計算"""
    X = list(X)
    return delta_round(oracle, frozenset(S), X, enumerate_blocks(X, b), extra, record)


def exact_delta(oracle: ValueOracle, S, X: Sequence[int], b: int, a: int) -> float:
    """Δ(a, S, X) = E_{R∼U(X)}[f_{S∪(R∖a)}(a)]"""
    if a not in set(X):
        raise InvalidInputError(f"要素 {a} は X に含まれていません")
    deltas, _ = exact_delta_all(oracle, S, X, b)
    return deltas[a]


def exact_block_value(oracle: ValueOracle, S, X: Sequence[int], X_plus, b: int,
                      reverse: bool = False) -> float:
    """E_{R∼U(X)}[f_S(R ∩ X⁺)]"""
    blocks = enumerate_blocks(X, b, reverse=reverse)
    rng = np.random.default_rng(0)
    return block_round(oracle, frozenset(S), frozenset(X_plus), blocks, rng, record=False).value


class ExactEstimator:
    """SIEVE の推定器を全列挙で置き換える（各推定は1ラウンドとして記録）"""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def deltas(self, oracle, S, X, b, extra=(), record=True):
        return delta_round(oracle, S, X, enumerate_blocks(X, b), extra, record)

    def block_value(self, oracle, S, X, X_plus, b, record=True) -> BlockEstimate:
        return block_round(oracle, S, X_plus, enumerate_blocks(X, b), self.rng, record)

    def draw(self, X, b) -> FrozenSet[int]:
        blocks = enumerate_blocks(X, b)
        return blocks[int(self.rng.integers(len(blocks)))]


# ========== 性質の検査 ==========

@dataclass
class FeigeReport:
    mean: float
    standard_error: float
    bound: float
    g_empty: float
    p: float
    trials: int
    passed: bool


def check_feige_lemma(oracle_g: ValueOracle, inclusion_probs: Sequence[float], trials: int,
                      seed: int = 0, sigmas: float = 3.0) -> FeigeReport:
    """各要素を確率 p_a ≤ p で独立に含むランダム集合 A について E[g(A)] ≥ (1 − p) g(∅) を経験的に確認

    Args:
        oracle_g: 非負サブモジュラ関数 g
        inclusion_probs: 要素ごとの包含確率
        trials: 試行回数
        seed: 乱数シード
        sigmas: 許容する標準誤差の倍数
    """
    probs = np.asarray(inclusion_probs, dtype=np.float64)
    if len(probs) != oracle_g.n or np.any(probs < 0) or np.any(probs > 1):
        raise InvalidInputError("包含確率は長さ n で [0, 1] の範囲である必要があります")
    if trials < 1:
        raise InvalidInputError("試行回数は1以上が必要です")
    rng = np.random.default_rng(seed)
    draws = rng.random((trials, oracle_g.n)) < probs
    sets = [frozenset(np.flatnonzero(row).tolist()) for row in draws]
    values = np.empty(trials)
    for start in range(0, trials, EVAL_CHUNK):
        chunk = sets[start:start + EVAL_CHUNK]
        values[start:start + len(chunk)] = evaluate_batch(oracle_g, EvalBatch(chunk), record=False)

    g_empty = oracle_g.peek(frozenset())
    p = float(probs.max()) if len(probs) else 0.0
    mean = math.fsum(values) / trials
    se = float(values.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    bound = (1.0 - p) * g_empty
    passed = mean >= bound - sigmas * se - 1e-12
    if not passed:
        logger.warning("確率的包含の下界を満たしません: mean=%.6g bound=%.6g se=%.3g", mean, bound, se)
    return FeigeReport(mean, se, bound, g_empty, p, trials, passed)


@dataclass
class ShrinkReport:
    ratios: List[Tuple[int, int]] = field(default_factory=list)
    factor: float = 1.0
    violations: List[Tuple[int, int]] = field(default_factory=list)
    returned_early: bool = False

    @property
    def passed(self) -> bool:
        return not self.violations


def check_filter_shrink(oracle: ValueOracle, cfg: BlitsConfig, S=frozenset(), i: int = 1,
                        opt_guess: Optional[float] = None) -> ShrinkReport:
    """厳密モードで SIEVE を1回実行し、返らずに続いた反復ごとに |X_{j+1}| ≤ |X_j|/(1+ε/4) を確認

    opt_guess を省略した場合は brute_force_opt の値を使う。
    """
    cfg = dataclasses.replace(cfg, exact=True)
    if opt_guess is None:
        opt_guess = brute_force_opt(oracle.fork(), cfg.k).opt_value
    outcome = run_sieve(oracle.fork(), frozenset(S), cfg, i, opt_guess, cfg.seed)
    factor = 1.0 + cfg.epsilon / 4.0
    report = ShrinkReport(list(outcome.shrink), factor, returned_early=not outcome.padded)
    for before, after in outcome.shrink:
        if after > before / factor + 1e-12:
            report.violations.append((before, after))
    return report
