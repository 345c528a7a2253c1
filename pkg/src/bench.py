"""
実験ハーネス

インスタンスの生成・読み込み、実験仕様（key=value ファイル + CLI 上書き）、
アルゴリズム×シードの実行、トレース CSV とプロット用データの出力。
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from dotenv import dotenv_values
from PIL import Image, UnidentifiedImageError
from tqdm import tqdm

from baselines import BaselineConfig, run_baseline
from blits import BlitsConfig, OptGuessStrategy, RunTrace, blits
from graph_gen import MODELS, GraphGenSpec, assign_uniform_weights, generate
from objectives import (
    CutGraph,
    CutOracle,
    ImageSummarizationOracle,
    ModularOracle,
    MovieRecommendationOracle,
    RevenueOracle,
    RevenueWeights,
    SimilarityMatrix,
    cosine_similarity_matrix,
    inner_product_similarity,
)
from oracle import BlitsError, ObjectiveContractError, ParseError, SpecError, ValueOracle

logger = logging.getLogger(__name__)

OBJECTIVES = ("cut", "image", "movie", "revenue", "modular")
ALGORITHMS = ("blits", "blits_plus", "greedy", "random_greedy", "random")
BLITS_ALGORITHMS = ("blits", "blits_plus")
INPUT_KINDS = ("similarity", "ratings", "vectors", "images")
TRACE_COLUMNS = ["experiment_id", "algorithm", "seed", "adaptive_round",
                 "cumulative_queries", "solution_size", "value"]
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".gif")
IMAGE_SIZE = (32, 32)

EXIT_OK = 0
EXIT_RUN_ERROR = 1
EXIT_SPEC_ERROR = 2


# ========== 入力ファイル ==========

def load_edge_list(path: Union[str, Path], directed: bool = False) -> CutGraph:
    """タブ区切りの辺リスト `src<TAB>dst[<TAB>weight]` を読み込む

    `#` で始まる行はコメント。`# nodes <n> directed <0|1>` ヘッダがあればノード数と向きに使う。
    ID が [0, n) に収まっていればそのまま、そうでなければ昇順に詰め直す。

    Args:
        path: 辺リストのパス
        directed: True ならヘッダにかかわらず有向グラフとして扱う
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"辺リストが見つかりません: {path}")

    declared_n: Optional[int] = None
    raw: List[Tuple[str, str, float, int]] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                tokens = text.lstrip("#").split()
                if len(tokens) >= 2 and tokens[0] == "nodes":
                    try:
                        declared_n = int(tokens[1])
                        if len(tokens) >= 4 and tokens[2] == "directed":
                            directed = directed or tokens[3] not in ("0", "false", "False")
                    except ValueError as e:
                        raise ParseError(f"ヘッダを解釈できません: {text}", lineno) from e
                continue
            cols = text.split("\t")
            if len(cols) not in (2, 3) or not all(c.strip() for c in cols):
                raise ParseError(f"列数が不正です（2列または3列）: {text!r}", lineno)
            try:
                weight = float(cols[2]) if len(cols) == 3 else 1.0
            except ValueError as e:
                raise ParseError(f"重みが数値ではありません: {cols[2]!r}", lineno) from e
            if not math.isfinite(weight):
                raise ParseError(f"重みが有限値ではありません: {cols[2]!r}", lineno)
            if weight < 0:
                raise ObjectiveContractError(f"{lineno}行目: 負の重みは使えません: {weight}")
            raw.append((cols[0].strip(), cols[1].strip(), weight, lineno))

    labels = sorted({a for e in raw for a in e[:2]}, key=_label_key)
    if declared_n is not None:
        n = declared_n
    else:
        n = len(labels)
    if all(lbl.isdigit() and int(lbl) < n for lbl in labels):
        mapping = {lbl: int(lbl) for lbl in labels}
    else:
        if declared_n is not None and len(labels) > declared_n:
            raise ParseError(f"ヘッダのノード数 {declared_n} より多くのノードがあります")
        mapping = {lbl: i for i, lbl in enumerate(labels)}
        logger.info("ノードIDを 0..%d に詰め直しました", len(labels) - 1)

    u, v, w = [], [], []
    loops = 0
    for a, b, weight, _ in raw:
        if mapping[a] == mapping[b]:
            loops += 1
            continue
        u.append(mapping[a])
        v.append(mapping[b])
        w.append(weight)
    if loops:
        logger.warning("自己ループ %d 本を除外しました", loops)
    logger.info("辺リスト読み込み: %s ノード=%d 辺=%d", path.name, n, len(u))
    return CutGraph(n, np.array(u, dtype=np.int64), np.array(v, dtype=np.int64),
                    np.array(w, dtype=np.float64), directed)


def _label_key(label: str):
    return (0, int(label), "") if label.isdigit() else (1, 0, label)


def save_edge_list(G: CutGraph, path: Union[str, Path]) -> Path:
    """ヘッダ付きの辺リストとして保存（重みは往復で値が変わらない表記）"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# nodes {G.n} directed {int(G.directed)}\n")
        for a, b, weight in G.edges():
            f.write(f"{a}\t{b}\t{weight!r}\n")
    return path


def load_similarity_matrix(path: Union[str, Path], kind: str = "similarity",
                           image_mode: bool = False) -> SimilarityMatrix:
    """カンマ区切りの数値行列を読み込む

    Args:
        path: CSV ファイル
        kind: similarity（n×n 行列そのまま）/ ratings（行ベクトルの内積）/ vectors（コサイン類似度）
        image_mode: True なら対称性（許容誤差 1e-9）を要求する
    """
    path = Path(path)
    if kind not in ("similarity", "ratings", "vectors"):
        raise SpecError(f"未知の入力種別です: {kind}")
    try:
        frame = pd.read_csv(path, header=None)
    except pd.errors.EmptyDataError as e:
        raise ParseError(f"空のファイルです: {path}") from e
    except pd.errors.ParserError as e:
        raise ParseError(f"行の長さが揃っていません: {e}") from e
    try:
        data = frame.to_numpy(dtype=np.float64)
    except ValueError as e:
        raise ParseError(f"数値以外の値が含まれています: {e}") from e
    if np.isnan(data).any():
        row = int(np.flatnonzero(np.isnan(data).any(axis=1))[0]) + 1
        raise ParseError("行の長さが揃っていないか、空の値があります", row)

    if kind == "ratings":
        matrix = inner_product_similarity(data)
    elif kind == "vectors":
        matrix = cosine_similarity_matrix(data)
    else:
        matrix = SimilarityMatrix(data)
    if image_mode:
        matrix.require_symmetric(1e-9)
    logger.info("類似度行列読み込み: %s (%s) n=%d", path.name, kind, matrix.n)
    return matrix


def load_image_vectors(directory: Union[str, Path], size: Tuple[int, int] = IMAGE_SIZE) -> np.ndarray:
    """ディレクトリ内の画像を RGB の生ピクセルベクトル（行）に変換"""
    directory = Path(directory)
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise ParseError(f"画像が見つかりません: {directory}")
    rows = []
    for p in files:
        try:
            with Image.open(p) as img:
                rows.append(np.asarray(img.convert("RGB").resize(size), dtype=np.float64).ravel())
        except (UnidentifiedImageError, OSError) as e:
            raise ParseError(f"画像を読み込めません: {p.name} ({e})") from e
    logger.info("画像読み込み: %d 枚 (%dx%d)", len(rows), size[0], size[1])
    return np.vstack(rows)


# ========== 実験仕様 ==========

def _parse_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"真偽値ではありません: {value!r}")


def _parse_list(value) -> List[str]:
    if isinstance(value, (list, tuple)):
        return [str(v) for v in value]
    return [v.strip() for v in str(value).split(",") if v.strip()]


@dataclass
class ExperimentSpec:
    """実験の指定

    インスタンスは input があればファイルから、なければ model で生成する。
    """
    experiment_id: str = "experiment"
    objective: str = "cut"
    model: str = "erdos_renyi"
    input: Optional[Path] = None
    input_kind: str = "similarity"
    directed: bool = False
    weighted: bool = False
    n: int = 300
    p: float = 0.5
    m: int = 100
    exponent: float = 2.0
    clusters: int = 7
    size_lo: int = 30
    size_hi: int = 120
    p_in: float = 0.8
    dim: int = 64
    lam: float = 0.95
    alpha: float = 0.5
    k: int = 210
    r: int = 10
    epsilon: float = 0.3
    samples: int = 30
    opt_guess: str = "grid"
    exact: bool = False
    stop_rule: str = "exact_k"
    seed: int = 0
    reps: int = 1
    algorithms: List[str] = field(default_factory=lambda: list(ALGORITHMS))
    out: Path = Path("outputs/trace.csv")
    workers: int = 1

    _CONVERTERS = {
        int: int,
        float: float,
        bool: _parse_bool,
        str: str,
    }

    @classmethod
    def from_sources(cls, config_path: Optional[Union[str, Path]] = None,
                     overrides: Optional[Dict[str, object]] = None) -> "ExperimentSpec":
        """key=value 設定ファイルと上書き値（None 以外、上書きが優先）から生成"""
        values: Dict[str, object] = {}
        if config_path is not None:
            config_path = Path(config_path)
            if not config_path.exists():
                raise SpecError(f"設定ファイルが見つかりません: {config_path}")
            values.update({k.strip().lower(): v for k, v in dotenv_values(config_path).items()
                           if v is not None})
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})

        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise SpecError(f"未知の設定キーです: {', '.join(unknown)}")
        kwargs = {}
        for key, value in values.items():
            try:
                kwargs[key] = cls._convert(key, value)
            except ValueError as e:
                raise SpecError(f"設定 {key}={value!r} を解釈できません: {e}") from e
        spec = cls(**kwargs)
        spec.validate()
        return spec

    @classmethod
    def _convert(cls, key: str, value):
        if key == "algorithms":
            return _parse_list(value)
        if key in ("input", "out"):
            return Path(value)
        default = next(f for f in fields(cls) if f.name == key).default
        return cls._CONVERTERS[type(default)](value) if type(default) in cls._CONVERTERS else value

    def validate(self):
        if self.objective not in OBJECTIVES:
            raise SpecError(f"未知の目的関数です: {self.objective} (候補: {', '.join(OBJECTIVES)})")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad or not self.algorithms:
            raise SpecError(f"未知のアルゴリズムです: {bad} (候補: {', '.join(ALGORITHMS)})")
        if self.reps < 1:
            raise SpecError(f"繰り返し回数は1以上が必要です: {self.reps}")
        if self.k < 1:
            raise SpecError(f"k は1以上が必要です: {self.k}")
        if any(a in BLITS_ALGORITHMS for a in self.algorithms) and not 1 <= self.r <= self.k:
            raise SpecError(f"1 ≤ r ≤ k が必要です: r={self.r}, k={self.k}")
        if self.directed and self.input is None:
            raise SpecError("directed は辺リスト入力（input）と組み合わせて指定してください")
        if self.input is None and self.objective in ("cut", "revenue") and self.model not in MODELS:
            raise SpecError(f"未知のグラフモデルです: {self.model}")
        if self.input_kind not in INPUT_KINDS:
            raise SpecError(f"未知の入力種別です: {self.input_kind}")
        if self.workers < 1:
            raise SpecError("workers は1以上が必要です")
        try:
            OptGuessStrategy.parse(self.opt_guess)
        except BlitsError as e:
            raise SpecError(str(e)) from e

    def graph_spec(self) -> GraphGenSpec:
        return GraphGenSpec(model=self.model, n=self.n, p=self.p, num_clusters=self.clusters,
                            size_lo=self.size_lo, size_hi=self.size_hi, p_in=self.p_in,
                            m=self.m, exponent=self.exponent, seed=self.seed, weighted=self.weighted)

    def blits_config(self, seed: int) -> BlitsConfig:
        return BlitsConfig(k=self.k, r=self.r, epsilon=self.epsilon, m=self.samples,
                           opt_guess=OptGuessStrategy.parse(self.opt_guess), seed=seed,
                           exact=self.exact)


# ========== インスタンス ==========

def _instance_graph(spec: ExperimentSpec) -> CutGraph:
    if spec.input is not None:
        return load_edge_list(spec.input, directed=spec.directed)
    return generate(spec.graph_spec())


def _instance_similarity(spec: ExperimentSpec) -> SimilarityMatrix:
    image_mode = spec.objective == "image"
    if spec.input is not None:
        if spec.input_kind == "images":
            return cosine_similarity_matrix(load_image_vectors(spec.input))
        return load_similarity_matrix(spec.input, spec.input_kind, image_mode)
    # random_vectors: 非負の乱数ベクトル（画像はピクセル、映画は 0〜5 の評価値）
    rng = np.random.default_rng(spec.seed)
    if image_mode:
        return cosine_similarity_matrix(rng.random((spec.n, spec.dim)))
    return inner_product_similarity(rng.integers(0, 6, size=(spec.n, spec.dim)).astype(np.float64))


def build_oracle(spec: ExperimentSpec) -> ValueOracle:
    """実験仕様から値オラクルを作る"""
    if spec.objective == "cut":
        graph = _instance_graph(spec)
        return CutOracle(graph)
    if spec.objective == "revenue":
        graph = _instance_graph(spec)
        if spec.input is None and not spec.weighted:
            graph = assign_uniform_weights(graph, spec.seed + 1)
        return RevenueOracle(RevenueWeights.from_graph(graph), alpha=spec.alpha)
    if spec.objective == "image":
        return ImageSummarizationOracle(_instance_similarity(spec))
    if spec.objective == "movie":
        return MovieRecommendationOracle(_instance_similarity(spec), lam=spec.lam)
    rng = np.random.default_rng(spec.seed)
    return ModularOracle(rng.random(spec.n))


# ========== 実行 ==========

@dataclass
class ExperimentResult:
    trace: pd.DataFrame
    summary: pd.DataFrame
    exit_code: int
    errors: List[str] = field(default_factory=list)
    path: Optional[Path] = None


def run_algorithm(name: str, oracle: ValueOracle, spec: ExperimentSpec, seed: int) -> RunTrace:
    """1アルゴリズム・1シードの実行（オラクルは台帳を分けたコピーを使う）"""
    oracle = oracle.fork()
    if name in BLITS_ALGORITHMS:
        _, trace = blits(oracle, spec.blits_config(seed), plus=name == "blits_plus")
    else:
        cfg = BaselineConfig(k=spec.k, seed=seed, stop_rule=spec.stop_rule)
        _, trace = run_baseline(name, oracle, cfg)
    trace.algorithm = name
    return trace


def _trace_records(spec: ExperimentSpec, name: str, seed: int, trace: RunTrace) -> List[dict]:
    return [
        {"experiment_id": spec.experiment_id, "algorithm": name, "seed": seed,
         "adaptive_round": row.adaptive_round, "cumulative_queries": row.cumulative_queries,
         "solution_size": row.solution_size, "value": row.value}
        for row in trace.rows
    ]


def _error_record(spec: ExperimentSpec, name: str, seed: int) -> dict:
    return {"experiment_id": spec.experiment_id, "algorithm": name, "seed": seed,
            "adaptive_round": -1, "cumulative_queries": 0, "solution_size": 0, "value": np.nan}


def summarize(trace: pd.DataFrame) -> pd.DataFrame:
    """アルゴリズムごとの最終値・ラウンド数・クエリ数の平均"""
    ok = trace[trace["adaptive_round"] >= 0]
    if ok.empty:
        return pd.DataFrame(columns=["algorithm", "runs", "mean_value", "mean_rounds",
                                     "mean_queries", "mean_size"])
    final = ok.sort_values("adaptive_round").groupby(["algorithm", "seed"], sort=True).tail(1)
    summary = final.groupby("algorithm", sort=True).agg(
        runs=("seed", "count"),
        mean_value=("value", "mean"),
        mean_rounds=("adaptive_round", "mean"),
        mean_queries=("cumulative_queries", "mean"),
        mean_size=("solution_size", "mean"),
    )
    return summary.reset_index()


def run_experiment(spec: ExperimentSpec, progress: bool = False,
                   oracle: Optional[ValueOracle] = None) -> ExperimentResult:
    """全 (アルゴリズム, 繰り返し) を実行してトレース CSV を書き出す

    各実行のシードは seed + 繰り返し番号。失敗した実行は adaptive_round=-1、
    value=ERROR の行として残し、終了コード1を返す。
    """
    spec.validate()
    if oracle is None:
        oracle = build_oracle(spec)
    if spec.k > oracle.n:
        raise SpecError(f"k ({spec.k}) がインスタンスのサイズ ({oracle.n}) を超えています")

    jobs = [(name, spec.seed + rep) for name in spec.algorithms for rep in range(spec.reps)]
    logger.info("実験 %s: %s n=%d k=%d ジョブ=%d", spec.experiment_id, spec.objective,
                oracle.n, spec.k, len(jobs))

    def job(item):
        name, seed = item
        try:
            return name, seed, run_algorithm(name, oracle, spec, seed), None
        except Exception as e:
            logger.exception("実行失敗: %s seed=%d", name, seed)
            return name, seed, None, f"{name} seed={seed}: {e}"

    if spec.workers > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as executor:
            outcomes = list(tqdm(executor.map(job, jobs), total=len(jobs), desc="runs",
                                 disable=not progress))
    else:
        outcomes = [job(item) for item in tqdm(jobs, desc="runs", disable=not progress)]

    records, errors = [], []
    for name, seed, trace, error in outcomes:
        if error is not None:
            errors.append(error)
            records.append(_error_record(spec, name, seed))
        else:
            records.extend(_trace_records(spec, name, seed, trace))

    frame = pd.DataFrame.from_records(records, columns=TRACE_COLUMNS)
    frame = frame.sort_values(["algorithm", "seed", "adaptive_round"], kind="mergesort") \
                 .reset_index(drop=True)
    path = write_trace(frame, spec.out)
    return ExperimentResult(frame, summarize(frame), EXIT_RUN_ERROR if errors else EXIT_OK, errors, path)


def write_trace(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, columns=TRACE_COLUMNS, na_rep="ERROR")
    logger.info("トレースを保存しました: %s (%d 行)", path, len(frame))
    return path


def read_trace(path: Union[str, Path]) -> pd.DataFrame:
    path = Path(path)
    try:
        frame = pd.read_csv(path, na_values=["ERROR"])
    except pd.errors.EmptyDataError as e:
        raise ParseError(f"空のトレースファイルです: {path}") from e
    missing = [c for c in TRACE_COLUMNS if c not in frame.columns]
    if missing:
        raise ParseError(f"トレースの列が不足しています: {missing}")
    return frame


# ========== プロット用データ ==========

def emit_plot_data(trace: Union[pd.DataFrame, str, Path],
                   out: Optional[Union[str, Path]] = None) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """ラウンドごとの平均値と標準誤差の系列を作る

    全アルゴリズム共通のラウンド格子に揃え、各実行の最終ラウンド以降は最後の値で埋める。

    Returns:
        (平均系列, シードごとの系列)
    """
    frame = trace if isinstance(trace, pd.DataFrame) else read_trace(trace)
    frame = frame[frame["adaptive_round"] >= 0]
    if frame.empty:
        raise SpecError("トレースが空です")

    grid = np.sort(frame["adaptive_round"].unique())
    mean_parts, seed_parts = [], []
    for name, group in frame.groupby("algorithm", sort=True):
        wide = group.pivot_table(index="adaptive_round", columns="seed", values="value", aggfunc="last")
        wide = wide.reindex(grid).ffill()
        wide = wide.dropna(how="all")
        counts = wide.notna().sum(axis=1)
        stderr = (wide.std(axis=1, ddof=1) / np.sqrt(counts)).where(counts > 1, 0.0).fillna(0.0)
        mean_parts.append(pd.DataFrame({
            "algorithm": name,
            "adaptive_round": wide.index.astype(int),
            "mean_value": wide.mean(axis=1).to_numpy(),
            "stderr": stderr.to_numpy(),
            "runs": counts.to_numpy(),
        }))
        long = wide.reset_index().melt(id_vars="adaptive_round", var_name="seed", value_name="value")
        long.insert(0, "algorithm", name)
        seed_parts.append(long.dropna(subset=["value"]))

    mean_frame = pd.concat(mean_parts, ignore_index=True)
    per_seed = pd.concat(seed_parts, ignore_index=True) \
        .sort_values(["algorithm", "seed", "adaptive_round"], kind="mergesort") \
        .reset_index(drop=True)[["algorithm", "seed", "adaptive_round", "value"]]

    if out is not None:
        out = Path(out)
        out.parent.mkdir(parents=True, exist_ok=True)
        mean_frame.to_csv(out, index=False)
        per_seed.to_csv(out.with_name(f"{out.stem}_per_seed{out.suffix}"), index=False)
        logger.info("プロット用データを保存しました: %s", out)
    return mean_frame, per_seed
