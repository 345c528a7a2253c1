"""
BLITS 実験 CLI メインプログラム
"""

import logging
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from bench import (
    EXIT_SPEC_ERROR,
    ExperimentSpec,
    build_oracle,
    emit_plot_data,
    run_experiment,
    save_edge_list,
)
from graph_gen import generate as generate_graph
from oracle import BlitsError

# Typer CLIアプリ
app = typer.Typer(help="低適応度サブモジュラ最大化（BLITS）実験ツール")
console = Console()


@app.callback()
def main(verbose: bool = typer.Option(False, "--verbose", "-v", help="DEBUG ログを表示")):
    """ログ設定"""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, rich_tracebacks=True, show_path=False)],
        force=True,
    )


def _load_spec(config: Optional[Path], overrides: dict) -> ExperimentSpec:
    try:
        return ExperimentSpec.from_sources(config, overrides)
    except BlitsError as e:
        console.print(f"[bold red]設定エラー: {e}[/bold red]")
        raise typer.Exit(EXIT_SPEC_ERROR)


@app.command()
def generate(
    objective: str = typer.Option("cut", "--objective", help="目的関数 (cut/revenue/image/movie)"),
    model: str = typer.Option("erdos_renyi", "--model", help="グラフモデル"),
    n: int = typer.Option(300, "--n", help="ノード数・アイテム数"),
    p: float = typer.Option(0.5, "--p", help="ER の辺確率"),
    ba_m: int = typer.Option(100, "--ba-m", help="BA の1ノードあたりの辺数"),
    exponent: float = typer.Option(2.0, "--exponent", help="コンフィギュレーションモデルのべき指数"),
    clusters: int = typer.Option(7, "--clusters", help="SBM のクラスタ数"),
    p_in: float = typer.Option(0.8, "--p-in", help="SBM のクラスタ内辺確率"),
    dim: int = typer.Option(64, "--dim", help="画像・映画の乱数ベクトル次元"),
    weighted: bool = typer.Option(False, "--weighted/--unweighted", help="U(0,1) の辺重みを付ける"),
    seed: int = typer.Option(0, "--seed", help="乱数シード"),
    out: Path = typer.Option(Path("data/instance.tsv"), "--out", "-o", help="出力ファイル"),
):
    """インスタンスを生成してファイルに保存"""

    spec = _load_spec(None, dict(objective=objective, model=model, n=n, p=p, m=ba_m,
                                 exponent=exponent, clusters=clusters, p_in=p_in, dim=dim,
                                 weighted=weighted, seed=seed, k=1, r=1))
    console.print(f"\n[bold blue]🔧 インスタンス生成[/bold blue] {objective} / {model}")
    try:
        if objective in ("cut", "revenue"):
            graph = generate_graph(spec.graph_spec())
            save_edge_list(graph, out)
            console.print(f"ノード数: {graph.n:,}  辺数: {graph.num_edges:,}")
        elif objective in ("image", "movie"):
            oracle = build_oracle(spec)
            out.parent.mkdir(parents=True, exist_ok=True)
            pd.DataFrame(oracle.similarity.s).to_csv(out, header=False, index=False)
            console.print(f"アイテム数: {oracle.n:,}")
        else:
            console.print(f"[bold red]{objective} の生成には対応していません[/bold red]")
            raise typer.Exit(EXIT_SPEC_ERROR)
    except BlitsError as e:
        console.print(f"[bold red]エラー: {e}[/bold red]")
        raise typer.Exit(EXIT_SPEC_ERROR)
    console.print(f"[bold green]✅ 保存しました: {out}[/bold green]")


@app.command()
def run(
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="key=value 形式の実験設定ファイル"),
    experiment_id: Optional[str] = typer.Option(None, "--experiment-id", help="実験ID"),
    objective: Optional[str] = typer.Option(None, "--objective", help="目的関数"),
    model: Optional[str] = typer.Option(None, "--model", help="グラフモデル"),
    input_path: Optional[Path] = typer.Option(None, "--input", help="入力ファイル（辺リスト・CSV・画像ディレクトリ）"),
    input_kind: Optional[str] = typer.Option(None, "--input-kind", help="similarity/ratings/vectors/images"),
    directed: Optional[bool] = typer.Option(None, "--directed/--undirected", help="辺リストを有向グラフとして扱う"),
    n: Optional[int] = typer.Option(None, "--n", help="ノード数・アイテム数"),
    p: Optional[float] = typer.Option(None, "--p", help="ER の辺確率"),
    k: Optional[int] = typer.Option(None, "--k", help="濃度制約"),
    r: Optional[int] = typer.Option(None, "--r", help="BLITS の反復回数"),
    epsilon: Optional[float] = typer.Option(None, "--epsilon", help="精度パラメータ"),
    samples: Optional[int] = typer.Option(None, "--samples", help="推定1回あたりのサンプル数"),
    opt_guess: Optional[str] = typer.Option(None, "--opt-guess", help="grid / grid:b:f:c / fixed:v / greedy:c"),
    exact: Optional[bool] = typer.Option(None, "--exact/--sampled", help="期待値を全列挙で計算"),
    seed: Optional[int] = typer.Option(None, "--seed", help="基準シード"),
    reps: Optional[int] = typer.Option(None, "--reps", help="繰り返し回数"),
    algorithms: Optional[str] = typer.Option(None, "--algorithms", help="カンマ区切りのアルゴリズム名"),
    workers: Optional[int] = typer.Option(None, "--workers", help="並列実行のスレッド数"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="トレース CSV の出力先"),
):
    """実験を実行してトレースを保存"""

    overrides = dict(experiment_id=experiment_id, objective=objective, model=model, input=input_path,
                     input_kind=input_kind, directed=directed, n=n, p=p, k=k, r=r, epsilon=epsilon,
                     samples=samples, opt_guess=opt_guess, exact=exact, seed=seed, reps=reps, algorithms=algorithms,
                     workers=workers, out=out)
    spec = _load_spec(config, overrides)

    console.print(f"\n[bold blue]🚀 実験 {spec.experiment_id}[/bold blue]")
    console.print(f"目的関数: {spec.objective}  k={spec.k}  r={spec.r}  ε={spec.epsilon}  m={spec.samples}")
    console.print(f"アルゴリズム: {', '.join(spec.algorithms)}  繰り返し: {spec.reps}\n")

    try:
        with console.status("[bold green]インスタンスを準備中..."):
            oracle = build_oracle(spec)
    except (BlitsError, FileNotFoundError) as e:
        console.print(f"[bold red]インスタンスエラー: {e}[/bold red]")
        raise typer.Exit(EXIT_SPEC_ERROR)

    try:
        result = run_experiment(spec, progress=True, oracle=oracle)
    except BlitsError as e:
        console.print(f"[bold red]設定エラー: {e}[/bold red]")
        raise typer.Exit(EXIT_SPEC_ERROR)

    display_summary(result.summary, spec.k)
    for error in result.errors:
        console.print(f"[bold red]失敗: {error}[/bold red]")
    console.print(f"\nトレース: {result.path}")
    if result.exit_code:
        raise typer.Exit(result.exit_code)
    console.print("[bold green]🎉 全ての実行が完了しました！[/bold green]")


@app.command("plot-data")
def plot_data(
    trace: Path = typer.Argument(..., help="トレース CSV"),
    out: Path = typer.Option(Path("outputs/plot_data.csv"), "--out", "-o", help="出力 CSV"),
):
    """トレースからラウンドごとの平均・標準誤差の系列を作成"""

    try:
        mean_frame, per_seed = emit_plot_data(trace, out)
    except (BlitsError, FileNotFoundError) as e:
        console.print(f"[bold red]エラー: {e}[/bold red]")
        raise typer.Exit(EXIT_SPEC_ERROR)

    table = Table(title="最終ラウンドの値")
    table.add_column("アルゴリズム", style="cyan")
    table.add_column("ラウンド", style="green", justify="right")
    table.add_column("平均値", style="green", justify="right")
    table.add_column("標準誤差", style="green", justify="right")
    for name, group in mean_frame.groupby("algorithm", sort=True):
        last = group.iloc[-1]
        table.add_row(str(name), f"{int(last['adaptive_round'])}", f"{last['mean_value']:.4f}",
                      f"{last['stderr']:.4f}")
    console.print(table)
    console.print(f"[bold green]✅ 保存しました: {out}[/bold green] （シード別 {len(per_seed):,} 行）")


@app.command()
def info():
    """システム情報を表示"""

    console.print("\n[bold blue]ℹ️ システム情報[/bold blue]\n")

    import scipy
    import PIL
    import tqdm

    table = Table(title="インストール済みパッケージ")
    table.add_column("パッケージ", style="cyan")
    table.add_column("バージョン", style="green")

    packages = [
        ("NumPy", np.__version__),
        ("SciPy", scipy.__version__),
        ("pandas", pd.__version__),
        ("Pillow", PIL.__version__),
        ("tqdm", tqdm.__version__),
    ]
    for name, version in packages:
        table.add_row(name, version)
    console.print(table)

    data_dir = Path("data")
    if data_dir.exists():
        files = list(data_dir.glob("*"))
        console.print(f"\n[bold]データディレクトリ:[/bold] {data_dir}")
        console.print(f"ファイル数: {len(files)}")
    else:
        console.print(f"\n[yellow]データディレクトリが存在しません: {data_dir}[/yellow]")


def display_summary(summary: pd.DataFrame, k: int):
    """アルゴリズムごとの結果をテーブル表示"""

    table = Table(title="実験結果")
    table.add_column("アルゴリズム", style="cyan")
    table.add_column("実行数", justify="right")
    table.add_column("平均 f(S)", style="green", justify="right")
    table.add_column("平均ラウンド", justify="right")
    table.add_column("平均クエリ", justify="right")
    table.add_column("平均 |S| / k", justify="right")

    for row in summary.itertuples(index=False):
        table.add_row(
            row.algorithm,
            f"{row.runs}",
            f"{row.mean_value:.4f}",
            f"{row.mean_rounds:.1f}",
            f"{row.mean_queries:,.0f}",
            f"{row.mean_size:.1f} / {k}",
        )
    console.print(table)


if __name__ == "__main__":
    app()
