import itertools

import numpy as np
import pandas as pd
import pytest
from PIL import Image

from bench import (
    TRACE_COLUMNS,
    ExperimentSpec,
    build_oracle,
    emit_plot_data,
    load_edge_list,
    load_image_vectors,
    load_similarity_matrix,
    read_trace,
    run_experiment,
    save_edge_list,
)
from graph_gen import GraphGenSpec, generate
from objectives import (
    CutOracle,
    ImageSummarizationOracle,
    ModularOracle,
    MovieRecommendationOracle,
    RevenueOracle,
)
from oracle import FunctionOracle, ObjectiveContractError, ParseError, SpecError


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def _spec(tmp_path, **kwargs):
    params = dict(experiment_id="t", objective="cut", model="erdos_renyi", n=20, p=0.5,
                  k=5, r=5, samples=5, opt_guess="grid", seed=0, reps=1,
                  algorithms=["random"], out=tmp_path / "trace.csv")
    params.update(kwargs)
    spec = ExperimentSpec(**params)
    spec.validate()
    return spec


# ========== 辺リスト ==========

def test_single_weighted_edge(tmp_path):
    graph = load_edge_list(_write(tmp_path / "g.tsv", "0\t1\t2.5\n"))
    assert graph.n == 2
    assert graph.edges() == [(0, 1, 2.5)]
    assert CutOracle(graph).peek({0}) == 2.5


def test_empty_edge_list(tmp_path):
    graph = load_edge_list(_write(tmp_path / "empty.tsv", ""))
    assert graph.n == 0
    assert graph.num_edges == 0


def test_header_keeps_isolated_nodes(tmp_path):
    graph = load_edge_list(_write(tmp_path / "g.tsv", "# nodes 5 directed 1\n0\t1\n3\t1\t4\n"))
    assert graph.n == 5
    assert graph.directed
    assert graph.edges() == [(0, 1, 1.0), (3, 1, 4.0)]


def test_comments_and_blank_lines(tmp_path):
    graph = load_edge_list(_write(tmp_path / "g.tsv", "# 交通網\n\n0\t1\n\n1\t2\n"))
    assert graph.n == 3
    assert graph.num_edges == 2


def test_non_numeric_labels_are_remapped(tmp_path):
    graph = load_edge_list(_write(tmp_path / "g.tsv", "tokyo\tosaka\nosaka\tnagoya\n"))
    assert graph.n == 3
    # 昇順: nagoya=0, osaka=1, tokyo=2
    assert graph.edges() == [(2, 1, 1.0), (1, 0, 1.0)]


def test_self_loops_are_dropped(tmp_path):
    graph = load_edge_list(_write(tmp_path / "g.tsv", "0\t0\n0\t1\n"))
    assert graph.num_edges == 1


@pytest.mark.parametrize("text, line", [
    ("0\t1\tabc\n", 1),
    ("0\t1\n1\t2\n0\t1\t2\t3\n", 3),
    ("0\n", 1),
    ("0\t1\tinf\n", 1),
    ("# nodes x\n", 1),
])
def test_malformed_lines_report_line_number(tmp_path, text, line):
    with pytest.raises(ParseError) as info:
        load_edge_list(_write(tmp_path / "bad.tsv", text))
    assert info.value.line == line
    assert f"{line}行目" in str(info.value)


def test_negative_weight_is_contract_error(tmp_path):
    with pytest.raises(ObjectiveContractError):
        load_edge_list(_write(tmp_path / "neg.tsv", "0\t1\t-1\n"))


def test_missing_edge_list(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_edge_list(tmp_path / "none.tsv")


def test_edge_list_round_trip(tmp_path):
    graph = generate(GraphGenSpec(model="erdos_renyi", n=30, p=0.3, seed=4, weighted=True))
    loaded = load_edge_list(save_edge_list(graph, tmp_path / "g.tsv"))
    assert loaded.n == graph.n
    original, reloaded = CutOracle(graph), CutOracle(loaded)
    rng = np.random.default_rng(0)
    for _ in range(100):
        S = set(np.flatnonzero(rng.random(30) < 0.5).tolist())
        assert original.peek(S) == reloaded.peek(S)


# ========== 類似度行列・画像 ==========

def test_identity_similarity(tmp_path):
    path = tmp_path / "s.csv"
    pd.DataFrame(np.eye(3)).to_csv(path, header=False, index=False)
    matrix = load_similarity_matrix(path, "similarity", image_mode=True)
    assert np.array_equal(matrix.s, np.eye(3))


def test_ratings_become_inner_products(tmp_path):
    path = _write(tmp_path / "r.csv", "1,0\n0,1\n1,1\n")
    matrix = load_similarity_matrix(path, "ratings")
    assert matrix.s.tolist() == [[1, 0, 1], [0, 1, 1], [1, 1, 2]]


def test_ragged_rows(tmp_path):
    with pytest.raises(ParseError):
        load_similarity_matrix(_write(tmp_path / "a.csv", "1,0,0\n0,1\n0,0,1\n"))
    with pytest.raises(ParseError):
        load_similarity_matrix(_write(tmp_path / "b.csv", "1,0\n0,1,5\n"))


def test_asymmetric_image_matrix(tmp_path):
    path = _write(tmp_path / "s.csv", "1,0.5\n0.2,1\n")
    with pytest.raises(ObjectiveContractError):
        load_similarity_matrix(path, "similarity", image_mode=True)
    assert load_similarity_matrix(path, "similarity").n == 2


def test_image_directory(tmp_path):
    colors = [(255, 0, 0), (0, 255, 0), (250, 5, 0)]
    for i, color in enumerate(colors):
        Image.new("RGB", (8, 6), color).save(tmp_path / f"img{i}.png")
    _write(tmp_path / "notes.txt", "画像以外は無視")
    vectors = load_image_vectors(tmp_path)
    assert vectors.shape == (3, 32 * 32 * 3)

    spec = ExperimentSpec(objective="image", input=tmp_path, input_kind="images", k=2, r=1)
    oracle = build_oracle(spec)
    assert isinstance(oracle, ImageSummarizationOracle)
    assert oracle.n == 3
    # 赤に近い画像同士の類似度が高い
    assert oracle.similarity.s[0, 2] > oracle.similarity.s[0, 1]


def test_image_directory_without_images(tmp_path):
    with pytest.raises(ParseError):
        load_image_vectors(tmp_path)


# ========== 実験仕様 ==========

def test_spec_from_file_and_overrides(tmp_path):
    config = _write(tmp_path / "exp.env",
                    "# コメント\nexperiment_id=er\nobjective=cut\nn=50\nk=10\nr=5\n"
                    "epsilon=0.2\nalgorithms=blits, greedy\nexact=true\nout=outputs/er.csv\n")
    spec = ExperimentSpec.from_sources(config, {"k": 20, "r": None, "seed": 3})
    assert spec.experiment_id == "er"
    assert spec.n == 50
    assert spec.k == 20
    assert spec.r == 5
    assert spec.epsilon == 0.2
    assert spec.seed == 3
    assert spec.exact is True
    assert spec.algorithms == ["blits", "greedy"]
    assert spec.out.as_posix() == "outputs/er.csv"
    cfg = spec.blits_config(7)
    assert (cfg.k, cfg.r, cfg.seed, cfg.exact) == (20, 5, 7, True)


@pytest.mark.parametrize("text", [
    "colour=blue\n",
    "k=ten\n",
    "objective=knapsack\n",
    "algorithms=blits,annealing\n",
    "k=3\nr=5\n",
    "opt_guess=fixed:-2\n",
    "reps=0\n",
    "model=lattice\n",
    "directed=true\n",
])
def test_invalid_specs(tmp_path, text):
    with pytest.raises(SpecError):
        ExperimentSpec.from_sources(_write(tmp_path / "bad.env", text))


def test_baselines_only_spec_ignores_r(tmp_path):
    spec = ExperimentSpec.from_sources(None, {"algorithms": "greedy,random", "k": 5, "n": 20})
    assert spec.r == 10
    assert spec.algorithms == ["greedy", "random"]


def test_directed_flag_marks_headerless_edge_list(tmp_path):
    path = _write(tmp_path / "traffic.tsv", "0\t1\t3\n2\t1\t1\n")
    assert not load_edge_list(path).directed
    assert load_edge_list(path, directed=True).directed

    spec = _spec(tmp_path, input=path, directed=True, k=2, r=1)
    oracle = build_oracle(spec)
    assert oracle.graph.directed
    assert oracle.peek({1}) == 4.0


def test_missing_config_file(tmp_path):
    with pytest.raises(SpecError):
        ExperimentSpec.from_sources(tmp_path / "none.env")


@pytest.mark.parametrize("objective, cls", [
    ("cut", CutOracle),
    ("revenue", RevenueOracle),
    ("image", ImageSummarizationOracle),
    ("movie", MovieRecommendationOracle),
    ("modular", ModularOracle),
])
def test_build_synthetic_oracles(tmp_path, objective, cls):
    oracle = build_oracle(_spec(tmp_path, objective=objective, n=12, dim=4))
    assert isinstance(oracle, cls)
    assert oracle.n == 12
    assert oracle.peek(set(range(12))) >= 0.0


# ========== 実行 ==========

def test_random_run_has_single_round_zero_row(tmp_path):
    result = run_experiment(_spec(tmp_path))
    assert list(result.trace.columns) == TRACE_COLUMNS
    assert len(result.trace) == 1
    row = result.trace.iloc[0]
    assert row["adaptive_round"] == 0
    assert row["cumulative_queries"] == 0
    assert row["solution_size"] == 5
    assert result.exit_code == 0
    assert result.path.exists()


def test_greedy_run_records_every_round(tmp_path):
    result = run_experiment(_spec(tmp_path, algorithms=["greedy"]))
    assert result.trace["adaptive_round"].tolist() == [1, 2, 3, 4, 5]
    assert result.trace["solution_size"].tolist() == [1, 2, 3, 4, 5]
    assert result.summary.loc[0, "mean_rounds"] == 5


def test_trace_is_byte_identical_across_runs(tmp_path):
    kwargs = dict(algorithms=["blits", "blits_plus", "greedy", "random_greedy", "random"], reps=2)
    first = run_experiment(_spec(tmp_path, out=tmp_path / "a.csv", **kwargs))
    second = run_experiment(_spec(tmp_path, out=tmp_path / "b.csv", workers=3, **kwargs))
    assert first.path.read_bytes() == second.path.read_bytes()


def test_trace_sorted_by_algorithm_seed_round(tmp_path):
    result = run_experiment(_spec(tmp_path, algorithms=["random", "greedy"], reps=2))
    keys = list(zip(result.trace["algorithm"], result.trace["seed"], result.trace["adaptive_round"]))
    assert keys == sorted(keys)
    assert set(result.trace["seed"]) == {0, 1}


def test_failed_run_leaves_error_row(tmp_path):
    def fragile(S):
        if len(S) > 2:
            raise RuntimeError("バックエンドが応答しません")
        return float(len(S))

    spec = _spec(tmp_path, algorithms=["greedy"], k=4, r=2)
    result = run_experiment(spec, oracle=FunctionOracle(6, fragile))
    assert result.exit_code == 1
    assert len(result.errors) == 1
    assert result.trace["adaptive_round"].tolist() == [-1]
    assert "ERROR" in result.path.read_text(encoding="utf-8")
    assert result.summary.empty
    assert read_trace(result.path)["value"].isna().all()


def test_k_above_instance_size(tmp_path):
    with pytest.raises(SpecError):
        run_experiment(_spec(tmp_path, n=4, k=5, r=1))


# ========== プロット用データ ==========

def test_single_run_has_zero_stderr(tmp_path):
    result = run_experiment(_spec(tmp_path, algorithms=["greedy"]))
    mean_frame, per_seed = emit_plot_data(result.trace)
    assert (mean_frame["stderr"] == 0).all()
    assert mean_frame["mean_value"].tolist() == result.trace["value"].tolist()
    assert len(per_seed) == 5


def test_series_share_round_grid(tmp_path):
    result = run_experiment(_spec(tmp_path, algorithms=["greedy", "random"], k=3, r=3))
    mean_frame, _ = emit_plot_data(result.trace)
    greedy = mean_frame[mean_frame["algorithm"] == "greedy"]
    random = mean_frame[mean_frame["algorithm"] == "random"]
    assert greedy["adaptive_round"].tolist() == [1, 2, 3]
    assert random["adaptive_round"].tolist() == [0, 1, 2, 3]
    # 最終ラウンド以降は最後の値で埋める
    assert random["mean_value"].nunique() == 1


def test_plot_data_files(tmp_path):
    result = run_experiment(_spec(tmp_path, algorithms=["greedy"], reps=2))
    out = tmp_path / "plot" / "er.csv"
    emit_plot_data(result.path, out)
    assert out.exists()
    assert (tmp_path / "plot" / "er_per_seed.csv").exists()
    assert list(pd.read_csv(out).columns) == ["algorithm", "adaptive_round", "mean_value", "stderr", "runs"]


def test_empty_trace_is_error():
    with pytest.raises(SpecError):
        emit_plot_data(pd.DataFrame(columns=TRACE_COLUMNS))


def test_random_mean_matches_enumeration(tmp_path):
    graph = generate(GraphGenSpec(model="erdos_renyi", n=10, p=0.5, seed=5, weighted=True))
    oracle = CutOracle(graph)
    expected = np.mean([oracle.peek(set(T)) for T in itertools.combinations(range(10), 4)])
    spec = _spec(tmp_path, n=10, k=4, r=2, reps=40)
    mean_frame, _ = emit_plot_data(run_experiment(spec, oracle=oracle).trace)
    row = mean_frame.iloc[0]
    assert row["runs"] == 40
    assert abs(row["mean_value"] - expected) <= 4 * row["stderr"]
