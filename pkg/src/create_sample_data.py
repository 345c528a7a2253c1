#!/usr/bin/env python
"""小規模なサンプルインスタンスと実験設定ファイルを作成"""

from pathlib import Path

import numpy as np
import pandas as pd

from bench import save_edge_list
from graph_gen import GraphGenSpec, generate


SAMPLE_CONFIG = """\
# BLITS サンプル実験（縮小版の Erdős–Rényi カット）
experiment_id=sample_er
objective=cut
input={graph}
k=60
r=10
epsilon=0.3
samples=30
opt_guess=greedy:1.0
seed=0
reps=3
algorithms=blits,blits_plus,greedy,random_greedy,random
out=outputs/sample_er_trace.csv
"""


def create_sample_data(output_dir: Path = Path("data"), seed: int = 0) -> dict:
    """カット用グラフ（ER・SBM・有向重み付き）、映画の評価行列、実験設定を書き出す"""

    print("🧪 サンプルインスタンスを生成中...")
    output_dir.mkdir(parents=True, exist_ok=True)
    written = {}

    graphs = {
        "er_n100": GraphGenSpec(model="erdos_renyi", n=100, p=0.5, seed=seed),
        "sbm_small": GraphGenSpec(model="sbm", num_clusters=3, size_lo=10, size_hi=20, p_in=0.8, seed=seed),
        "ba_n100": GraphGenSpec(model="barabasi_albert", n=100, m=5, seed=seed),
        "er_weighted": GraphGenSpec(model="erdos_renyi", n=50, p=0.2, seed=seed, weighted=True),
    }
    for name, spec in graphs.items():
        graph = generate(spec)
        path = save_edge_list(graph, output_dir / f"{name}.tsv")
        written[name] = path
        print(f"  {path}: ノード {graph.n}, 辺 {graph.num_edges}")

    # 交通網を模した有向重み付きグラフ（重み = 車両数）
    rng = np.random.default_rng(seed)
    n = 40
    pairs = [(a, b) for a in range(n) for b in range(n) if a != b and rng.random() < 0.08]
    traffic = output_dir / "traffic_directed.tsv"
    with open(traffic, "w", encoding="utf-8") as f:
        f.write(f"# nodes {n} directed 1\n")
        for a, b in pairs:
            f.write(f"{a}\t{b}\t{int(rng.integers(10, 500))}\n")
    written["traffic_directed"] = traffic
    print(f"  {traffic}: ノード {n}, 辺 {len(pairs)}")

    # 映画 × ユーザーの評価行列（0〜5）
    ratings = rng.integers(0, 6, size=(60, 30))
    ratings_path = output_dir / "movie_ratings.csv"
    pd.DataFrame(ratings).to_csv(ratings_path, header=False, index=False)
    written["movie_ratings"] = ratings_path
    print(f"  {ratings_path}: 映画 {ratings.shape[0]}, ユーザー {ratings.shape[1]}")

    config = output_dir / "sample_experiment.env"
    config.write_text(SAMPLE_CONFIG.format(graph=written["er_n100"].as_posix()), encoding="utf-8")
    written["config"] = config

    print(f"✅ サンプルデータを保存しました: {output_dir}")
    print(f"   実行例: python src/main.py run --config {config}")
    return written


if __name__ == "__main__":
    create_sample_data()
