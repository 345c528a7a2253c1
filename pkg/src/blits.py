"""
BLITS / SIEVE エンジン

ブロックを r 回追加していく低適応度アルゴリズム BLITS と、そのブロックを探す SIEVE、
最良サンプルを採用する変種 BLITS+、OPT の非適応的な推定を実装する。

期待値はサンプリング推定（既定）か、全列挙による厳密計算（exact=True）で求める。
どちらも同じ制御フローを通る。
"""

import dataclasses
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from objectives import pad_with_dummies
from oracle import (
    DegenerateObjectiveError,
    EvalBatch,
    InfeasibleSampleError,
    InvalidInputError,
    MarginalRef,
    QueryLedger,
    ValueOracle,
    evaluate_batch,
)

logger = logging.getLogger(__name__)

Seed = Union[int, np.random.Generator, None]


# ========== 設定 ==========

@dataclass
class OptGuessStrategy:
    """OPT の推定方法

    variant:
        fixed           -- value をそのまま使う
        grid            -- base·factor^j (j < count)。base 省略時は単集合の最大値から作る
        greedy_multiple -- Greedy が途中で到達した最大値の multiplier 倍
    """
    variant: str = "grid"
    value: Optional[float] = None
    base: Optional[float] = None
    factor: Optional[float] = None
    count: Optional[int] = None
    multiplier: float = 1.0

    def __post_init__(self):
        if self.variant not in ("fixed", "grid", "greedy_multiple"):
            raise InvalidInputError(f"未知の OPT 推定方法です: {self.variant}")
        if self.variant == "fixed" and not (self.value is not None and self.value > 0):
            raise InvalidInputError("fixed の OPT 推定値は正である必要があります")
        if self.base is not None and self.base <= 0:
            raise InvalidInputError("grid の base は正である必要があります")
        if self.factor is not None and self.factor <= 1.0:
            raise InvalidInputError("grid の factor は1より大きい必要があります")
        if self.count is not None and self.count < 1:
            raise InvalidInputError("grid の count は1以上が必要です")
        if self.multiplier <= 0:
            raise InvalidInputError("greedy_multiple の倍率は正である必要があります")

    @classmethod
    def fixed(cls, value: float) -> "OptGuessStrategy":
        return cls("fixed", value=value)

    @classmethod
    def grid(cls, base: Optional[float] = None, factor: Optional[float] = None,
             count: Optional[int] = None) -> "OptGuessStrategy":
        return cls("grid", base=base, factor=factor, count=count)

    @classmethod
    def greedy_multiple(cls, c: float = 1.0) -> "OptGuessStrategy":
        return cls("greedy_multiple", multiplier=c)

    @classmethod
    def parse(cls, text: str) -> "OptGuessStrategy":
        """文字列表現から生成: grid / grid:<base>:<factor>:<count> / fixed:<v> / greedy:<c>"""
        parts = [p.strip() for p in str(text).split(":")]
        kind, args = parts[0].lower(), parts[1:]
        try:
            if kind == "fixed" and len(args) == 1:
                return cls.fixed(float(args[0]))
            if kind == "grid" and not args:
                return cls.grid()
            if kind == "grid" and len(args) == 3:
                return cls.grid(float(args[0]), float(args[1]), int(args[2]))
            if kind in ("greedy", "greedy_multiple"):
                return cls.greedy_multiple(float(args[0]) if args else 1.0)
        except ValueError as e:
            raise InvalidInputError(f"OPT 推定の指定を解釈できません: {text!r} ({e})") from e
        raise InvalidInputError(f"OPT 推定の指定を解釈できません: {text!r}")

    def describe(self) -> str:
        if self.variant == "fixed":
            return f"fixed:{self.value:g}"
        if self.variant == "greedy_multiple":
            return f"greedy:{self.multiplier:g}"
        if self.base is None:
            return "grid"
        return f"grid:{self.base:g}:{self.factor:g}:{self.count}"


@dataclass
class BlitsConfig:
    """BLITS の設定

    Attributes:
        k: 濃度制約
        r: 反復回数の上限（1 ≤ r ≤ k）
        epsilon: 精度パラメータ (0, 1)
        m: 推定1回あたりのサンプル数
        opt_guess: OPT の推定方法
        seed: 乱数シード
        rho_cap: SIEVE 内部反復の上限（省略時 ⌈log_{1+ε/4} n⌉ + 1）
        exact: True なら期待値を全列挙で厳密に計算する
        workers: OPT の複数推定値を並列に走らせるスレッド数
    """
    k: int
    r: int = 10
    epsilon: float = 0.3
    m: int = 30
    opt_guess: OptGuessStrategy = field(default_factory=OptGuessStrategy)
    seed: int = 0
    rho_cap: Optional[int] = None
    exact: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise InvalidInputError(f"k は1以上が必要です: {self.k}")
        if not 1 <= self.r <= self.k:
            raise InvalidInputError(f"1 ≤ r ≤ k が必要です: r={self.r}, k={self.k}")
        if not 0.0 < self.epsilon < 1.0:
            raise InvalidInputError(f"epsilon は (0, 1) で指定してください: {self.epsilon}")
        if self.m < 1:
            raise InvalidInputError(f"サンプル数 m は1以上が必要です: {self.m}")
        if self.rho_cap is not None and self.rho_cap < 1:
            raise InvalidInputError(f"rho_cap は1以上が必要です: {self.rho_cap}")

    @property
    def block_size(self) -> int:
        return max(1, self.k // self.r)

    def resolve_rho_cap(self, n: int) -> int:
        if self.rho_cap is not None:
            return self.rho_cap
        return math.ceil(math.log(max(n, 1)) / math.log(1.0 + self.epsilon / 4.0)) + 1

    @classmethod
    def practical(cls, k: int, **overrides) -> "BlitsConfig":
        """実験で使う既定値 r=10, ε=0.3, m=30（r は k で頭打ち）"""
        params = dict(r=min(10, k), epsilon=0.3, m=30)
        params.update(overrides)
        return cls(k=k, **params)

    @classmethod
    def theory(cls, k: int, n: int, epsilon: float, log_base: str = "eps2", **overrides) -> "BlitsConfig":
        """理論上の r = ⌈20 ε⁻¹ log_{1+ε/2} n⌉（log_base="eps4" なら 1+ε/4 を底にする）"""
        base = 1.0 + (epsilon / 2.0 if log_base == "eps2" else epsilon / 4.0)
        r = math.ceil(20.0 / epsilon * math.log(max(n, 2)) / math.log(base))
        if r > k:
            logger.warning("理論値 r=%d が k=%d を超えるため k に切り詰めます", r, k)
            r = k
        return cls(k=k, r=r, epsilon=epsilon, **overrides)


# ========== 型 ==========

@dataclass(frozen=True)
class Block:
    """SIEVE が返すブロック R ∩ X⁺（ダミーを除く）"""
    elements: FrozenSet[int]
    estimated_gain: float

    def __len__(self) -> int:
        return len(self.elements)


EMPTY_BLOCK = Block(frozenset(), 0.0)


class BlockEstimate(NamedTuple):
    """E[f_S(R ∩ X⁺)] の推定値と、サンプル中の最良ブロック・一様に選んだブロック"""
    value: float
    best: Block
    uniform: Block


@dataclass
class SieveState:
    """SIEVE 1反復分の状態"""
    X: FrozenSet[int]
    X_plus: FrozenSet[int]
    t: float
    j: int
    i: int
    S: FrozenSet[int]


@dataclass
class SieveOutcome:
    """SIEVE 1回の結果と内訳"""
    block: Block
    rounds: int
    t: Optional[float] = None
    states: List[SieveState] = field(default_factory=list)
    shrink: List[Tuple[int, int]] = field(default_factory=list)
    padded: bool = False
    capped: bool = False
    # exact モードのみ: 返したブロックの分布の厳密な期待利得
    expected_gain: Optional[float] = None
    final_oracle: Optional[ValueOracle] = None


class TraceRow(NamedTuple):
    adaptive_round: int
    cumulative_queries: int
    solution_size: int
    value: float


@dataclass
class RunTrace:
    """1回の実行の適応ラウンドごとの記録

    値は計測用に台帳の外で評価する。
    """
    algorithm: str = ""
    rows: List[TraceRow] = field(default_factory=list)
    final_set: FrozenSet[int] = frozenset()
    final_value: float = 0.0
    ledger: QueryLedger = field(default_factory=QueryLedger)
    flags: List[str] = field(default_factory=list)
    opt_guess: Optional[float] = None
    sieve_log: List[dict] = field(default_factory=list)

    def record(self, oracle: ValueOracle, S: FrozenSet[int]):
        row = TraceRow(oracle.ledger.adaptive_rounds, oracle.ledger.total_queries, len(S), oracle.peek(S))
        if self.rows and row.adaptive_round <= self.rows[-1].adaptive_round:
            self.rows[-1] = row
        else:
            self.rows.append(row)

    def finalize(self, oracle: ValueOracle, S: FrozenSet[int]) -> "RunTrace":
        self.final_set = frozenset(S)
        self.final_value = oracle.peek(S)
        self.ledger = oracle.ledger.snapshot()
        return self

    def aligned(self, ledger: QueryLedger, rounds: int, queries: int) -> "RunTrace":
        """並列実行した台帳 ledger の上に行を載せ直す

        ラウンド数は rounds だけずらし、累積クエリ数は ledger の該当ラウンドまでの合計に置き換える。
        """
        cumulative = np.concatenate(([0], np.cumsum(ledger.per_round, dtype=np.int64)))
        rows = [TraceRow(r.adaptive_round + rounds, queries + int(cumulative[r.adaptive_round]),
                         r.solution_size, r.value) for r in self.rows]
        return dataclasses.replace(self, rows=rows)


# ========== 閾値とサンプリング ==========

def threshold_t(opt_guess: float, fS: float, i: int, r: int, epsilon: float) -> float:
    """t = (1−ε/2)/2 · ((1 − 1/r)^{i−1} (1 − ε/2) OPT − f(S))"""
    if not 1 <= i <= r:
        raise InvalidInputError(f"反復番号 i は [1, r] の範囲である必要があります: i={i}, r={r}")
    return (1.0 - epsilon / 2.0) / 2.0 * ((1.0 - 1.0 / r) ** (i - 1) * (1.0 - epsilon / 2.0) * opt_guess - fS)


def sample_blocks(X: Sequence[int], b: int, m: int, seed: Seed = None) -> List[FrozenSet[int]]:
    """X からサイズちょうど b の一様ランダム部分集合を m 個、独立に抽出"""
    X = np.asarray(sorted(X), dtype=np.int64)
    if len(X) < b:
        raise InfeasibleSampleError(f"|X|={len(X)} < b={b} のため抽出できません（先にパディングが必要）")
    rng = np.random.default_rng(seed)
    return [frozenset(X[rng.choice(len(X), size=b, replace=False)].tolist()) for _ in range(m)]


def delta_round(oracle: ValueOracle, S: FrozenSet[int], X: Sequence[int],
                 samples: Sequence[FrozenSet[int]], extra: Sequence[FrozenSet[int]] = (),
                 record: bool = True) -> Tuple[Dict[int, float], List[float]]:
    """サンプル R ごとの f_{S∪(R∖a)}(a) の実現値を1バッチで求めて平均する

    extra の集合も同じバッチで評価して値を返す。
    """
    batch = EvalBatch()
    extra_index = [batch.add(e) for e in extra]
    per_sample: List[List[MarginalRef]] = []
    for R in samples:
        base = S | R
        base_index = batch.add(base)
        refs = []
        for a in X:
            if a in R:
                refs.append(MarginalRef(base_index, batch.add(base - {a})))
            else:
                refs.append(MarginalRef(batch.add(base | {a}), base_index))
        per_sample.append(refs)
    values = evaluate_batch(oracle, batch, record=record)
    count = len(samples)
    deltas = {
        a: math.fsum(refs[pos].resolve(values) for refs in per_sample) / count
        for pos, a in enumerate(X)
    }
    return deltas, [values[i] for i in extra_index]


def block_round(oracle: ValueOracle, S: FrozenSet[int], X_plus: FrozenSet[int],
                 samples: Sequence[FrozenSet[int]], rng: np.random.Generator,
                 record: bool = True) -> BlockEstimate:
    """サンプル R ごとの f_S(R ∩ X⁺) を1バッチで求める"""
    n = oracle.ground_set.n
    blocks = [frozenset(a for a in R if a in X_plus and a < n) for R in samples]
    batch = EvalBatch()
    base_index = batch.add(S)
    indices = [batch.add(S | T) for T in blocks]
    values = evaluate_batch(oracle, batch, record=record)
    gains = [values[i] - values[base_index] for i in indices]
    best = int(np.argmax(gains))
    pick = int(rng.integers(len(samples)))
    return BlockEstimate(
        math.fsum(gains) / len(gains),
        Block(blocks[best], gains[best]),
        Block(blocks[pick], gains[pick]),
    )


class SampledEstimator:
    """m 個のサンプルによる推定（Δ̂ とブロック値は独立なサンプル集合を使う）"""

    def __init__(self, m: int, rng: np.random.Generator):
        self.m = m
        self.rng = rng

    def deltas(self, oracle, S, X, b, extra=(), record=True):
        return delta_round(oracle, S, X, sample_blocks(X, b, self.m, self.rng), extra, record)

    def block_value(self, oracle, S, X, X_plus, b, record=True) -> BlockEstimate:
        return block_round(oracle, S, X_plus, sample_blocks(X, b, self.m, self.rng), self.rng, record)

    def draw(self, X, b) -> FrozenSet[int]:
        return sample_blocks(X, b, 1, self.rng)[0]


def make_estimator(cfg: BlitsConfig, rng: np.random.Generator):
    if cfg.exact:
        from exact import ExactEstimator
        return ExactEstimator(rng)
    return SampledEstimator(cfg.m, rng)


def estimate_delta_all(oracle: ValueOracle, S, X: Sequence[int], b: int, m: int,
                       seed: Seed = None) -> Dict[int, float]:
    """全ての a ∈ X について Δ̂(a, S, X) を1適応ラウンドで推定"""
    deltas, _ = delta_round(oracle, frozenset(S), list(X), sample_blocks(X, b, m, seed))
    return deltas


def estimate_block_value(oracle: ValueOracle, S, X: Sequence[int], X_plus, b: int, m: int,
                         seed: Seed = None) -> BlockEstimate:
    """Ê[f_S(R ∩ X⁺)] を1適応ラウンドで推定し、最良サンプルと一様サンプルも返す"""
    rng = np.random.default_rng(seed)
    return block_round(oracle, frozenset(S), frozenset(X_plus), sample_blocks(X, b, m, rng), rng)


# ========== SIEVE ==========

def run_sieve(oracle: ValueOracle, S, cfg: BlitsConfig, i: int, opt_guess: float,
              rng: Seed = None, *, plus: bool = False, estimator=None) -> SieveOutcome:
    """SIEVE を実行して内訳付きの結果を返す

    Args:
        oracle: 値オラクル
        S: 現在の解
        cfg: 設定
        i: BLITS の反復番号 (1..r)
        opt_guess: OPT の推定値
        rng: 乱数生成器またはシード
        plus: True なら最良サンプルを返す（BLITS+）
        estimator: 期待値の推定器（省略時は cfg から作る）
    """
    S = frozenset(S)
    rng = np.random.default_rng(rng)
    k, r, eps = cfg.k, cfg.r, cfg.epsilon
    b = min(cfg.block_size, k - len(S))
    if b <= 0:
        return SieveOutcome(EMPTY_BLOCK, 0)
    estimator = estimator or make_estimator(cfg, rng)
    start_rounds = oracle.ledger.adaptive_rounds
    rho_cap = cfg.resolve_rho_cap(oracle.n)

    X = [a for a in range(oracle.ground_set.n) if a not in S]
    outcome = SieveOutcome(EMPTY_BLOCK, 0)
    t: Optional[float] = None
    best_seen: Optional[Block] = None
    j = 0

    def finish(block: Block, **kw) -> SieveOutcome:
        outcome.block = block
        outcome.rounds = oracle.ledger.adaptive_rounds - start_rounds
        outcome.t = t
        for key, value in kw.items():
            setattr(outcome, key, value)
        return outcome

    while len(X) > k:
        if j >= rho_cap:
            logger.warning("SIEVE が反復上限 %d に達しました (i=%d, |X|=%d)", rho_cap, i, len(X))
            return finish(best_seen or EMPTY_BLOCK, capped=True)
        deltas, extra = estimator.deltas(oracle, S, X, b, extra=(S,) if t is None else ())
        if t is None:
            t = threshold_t(opt_guess, extra[0], i, r, eps)
        X_plus = frozenset(a for a in X if deltas[a] >= 0.0)
        estimate = estimator.block_value(oracle, S, X, X_plus, b)
        outcome.states.append(SieveState(frozenset(X), X_plus, t, j, i, S))
        if best_seen is None or estimate.best.estimated_gain > best_seen.estimated_gain:
            best_seen = estimate.best
        if estimate.value >= t / r:
            block = estimate.best if plus else estimate.uniform
            gain = estimate.value if cfg.exact else None
            logger.debug("SIEVE i=%d j=%d: 閾値到達 |block|=%d", i, j, len(block))
            return finish(block, expected_gain=gain, final_oracle=oracle)
        cutoff = (1.0 + eps / 4.0) * t / k
        survivors = [a for a in X if deltas[a] >= cutoff]
        outcome.shrink.append((len(X), len(survivors)))
        X = survivors
        j += 1

    # 生存集合を k までダミーで埋めて X⁺ を作り直す
    padded = pad_with_dummies(oracle, k, len(X))
    X_full = X + (list(padded.dummy_ids) if padded is not oracle else [])
    deltas, extra = estimator.deltas(padded, S, X_full, b, extra=(S,) if t is None else ())
    if t is None:
        t = threshold_t(opt_guess, extra[0], i, r, eps)
    X_plus = frozenset(a for a in X_full if deltas[a] >= 0.0)
    outcome.states.append(SieveState(frozenset(X_full), X_plus, t, j, i, S))
    if plus:
        block = estimator.block_value(padded, S, X_full, X_plus, b).best
    else:
        R = estimator.draw(X_full, b)
        block = Block(frozenset(a for a in R if a in X_plus and a < oracle.ground_set.n), float("nan"))
    gain = None
    if cfg.exact:
        from exact import exact_block_value
        gain = exact_block_value(padded, S, X_full, X_plus, b)
    return finish(block, padded=True, expected_gain=gain, final_oracle=padded)


def sieve(oracle: ValueOracle, S, cfg: BlitsConfig, i: int, opt_guess: float,
          rng: Seed = None, *, plus: bool = False) -> Block:
    """S に追加するブロックを SIEVE で求める"""
    return run_sieve(oracle, S, cfg, i, opt_guess, rng, plus=plus).block


# ========== OPT の推定 ==========

def guess_opt_grid(oracle: ValueOracle, k: int, epsilon: float,
                   factor: Optional[float] = None, count: Optional[int] = None) -> List[float]:
    """単集合の値を1ラウンドで問い合わせ、OPT ∈ [v_max, k·v_max] を覆う等比数列を返す"""
    batch = EvalBatch([{a} for a in range(oracle.n)])
    v_max = max(evaluate_batch(oracle, batch))
    if v_max <= 0.0:
        raise DegenerateObjectiveError("全ての単集合の値が0のため OPT を推定できません")
    factor = factor or (1.0 + epsilon)
    if count is None:
        count = math.ceil(math.log(k) / math.log(factor) - 1e-9) + 1 if k > 1 else 1
    return [v_max * factor ** j for j in range(count)]


def resolve_opt_guesses(oracle: ValueOracle, cfg: BlitsConfig) -> List[float]:
    strategy = cfg.opt_guess
    if strategy.variant == "fixed":
        return [float(strategy.value)]
    if strategy.variant == "grid":
        if strategy.base is None:
            return guess_opt_grid(oracle, cfg.k, cfg.epsilon, strategy.factor, strategy.count)
        factor = strategy.factor or (1.0 + cfg.epsilon)
        count = strategy.count or (math.ceil(math.log(cfg.k) / math.log(factor) - 1e-9) + 1 if cfg.k > 1 else 1)
        return [strategy.base * factor ** j for j in range(count)]

    from baselines import greedy
    # Greedy の参照実行は別台帳で行い、BLITS の適応ラウンドには数えない
    _, reference = greedy(oracle.fork(), cfg.k)
    v = max(row.value for row in reference.rows)
    if v <= 0.0:
        raise DegenerateObjectiveError("Greedy の値が0のため OPT を推定できません")
    logger.info("Greedy 参照値 %.4g × %.3g を OPT 推定値に使用", v, strategy.multiplier)
    return [strategy.multiplier * v]


# ========== BLITS ==========

def _blits_single(oracle: ValueOracle, cfg: BlitsConfig, opt_guess: float,
                  rng: np.random.Generator, plus: bool, name: str) -> Tuple[FrozenSet[int], RunTrace]:
    trace = RunTrace(algorithm=name, opt_guess=opt_guess)
    estimator = make_estimator(cfg, rng)
    S: FrozenSet[int] = frozenset()
    for i in range(1, cfg.r + 1):
        if len(S) >= cfg.k:
            break
        before = oracle.peek(S)
        outcome = run_sieve(oracle, S, cfg, i, opt_guess, rng, plus=plus, estimator=estimator)
        if outcome.capped:
            trace.flags.append(f"rho_cap:i={i}")
        S = S | outcome.block.elements
        trace.sieve_log.append({
            "i": i, "f_before": before, "t": outcome.t, "rounds": outcome.rounds,
            "block_size": len(outcome.block), "padded": outcome.padded,
            "capped": outcome.capped, "expected_gain": outcome.expected_gain,
        })
        if outcome.rounds > 0:
            trace.record(oracle, S)
    return S, trace.finalize(oracle, S)


def blits(oracle: ValueOracle, cfg: BlitsConfig, *, plus: bool = False) -> Tuple[FrozenSet[int], RunTrace]:
    """BLITS: SIEVE が返すブロックを r 回 S に加える

    OPT の推定値が複数ある場合は、推定値ごとに独立な実行を（概念上並列に）行い、
    最後の1ラウンドで最良の S を選ぶ。

    Returns:
        (解 S, 実行記録)
    """
    name = "blits_plus" if plus else "blits"
    if cfg.k > oracle.n:
        raise InvalidInputError(f"k ({cfg.k}) が台集合のサイズ ({oracle.n}) を超えています")
    guesses = resolve_opt_guesses(oracle, cfg)
    if len(guesses) == 1:
        S, trace = _blits_single(oracle, cfg, guesses[0], np.random.default_rng(cfg.seed), plus, name)
        logger.info("%s: f(S)=%.4g |S|=%d ラウンド=%d", name, trace.final_value, len(S),
                    trace.ledger.adaptive_rounds)
        return S, trace

    rounds_before = oracle.ledger.adaptive_rounds
    queries_before = oracle.ledger.total_queries
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(guesses))
    forks = [oracle.fork() for _ in guesses]

    def job(idx: int):
        return _blits_single(forks[idx], cfg, guesses[idx], np.random.default_rng(seeds[idx]), plus, name)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as executor:
            results = list(executor.map(job, range(len(guesses))))
    else:
        results = [job(idx) for idx in range(len(guesses))]

    merged = QueryLedger.merge_parallel([f.ledger for f in forks])
    oracle.ledger.absorb(merged)
    finals = evaluate_batch(oracle, EvalBatch([S for S, _ in results]))
    winner = int(np.argmax(finals))
    S, trace = results[winner]
    trace = trace.aligned(merged, rounds_before, queries_before)
    trace.flags.append(f"opt_guesses={len(guesses)}")
    trace.record(oracle, S)
    trace.finalize(oracle, S)
    logger.info("%s: OPT 推定 %d 個中 %d 番目 (%.4g) を採用 f(S)=%.4g", name, len(guesses),
                winner, guesses[winner], trace.final_value)
    return S, trace


def blits_plus(oracle: ValueOracle, cfg: BlitsConfig) -> Tuple[FrozenSet[int], RunTrace]:
    """BLITS+: 閾値を超えたラウンドで一様サンプルではなく最良サンプルを加える"""
    return blits(oracle, cfg, plus=True)
