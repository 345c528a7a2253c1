#!/usr/bin/env python
"""
プロジェクトセットアップスクリプト
"""

from pathlib import Path


def setup_project():
    """プロジェクト構造をセットアップ"""

    print("🏗️  Setting up BLITS experiment project...")

    # プロジェクトルート
    project_root = Path(__file__).parent

    # 必要なディレクトリを作成
    directories = [
        'data',
        'data/images',
        'outputs',
        'outputs/traces',
        'outputs/plot_data',
        'src',
        'tests',
    ]

    for dir_path in directories:
        full_path = project_root / dir_path
        full_path.mkdir(parents=True, exist_ok=True)
        print(f"  ✅ Created: {dir_path}")

    # __init__.pyを作成
    init_file = project_root / 'src' / '__init__.py'
    if not init_file.exists():
        init_file.write_text('"""BLITS: 低適応度の非単調サブモジュラ最大化"""\n')
        print(f"  ✅ Created: src/__init__.py")

    # サンプル実験設定を作成
    config_path = project_root / 'data' / 'example.env'
    if not config_path.exists():
        config_path.write_text(
            "# key=value 形式の実験設定（CLI フラグで上書き可能）\n"
            "experiment_id=example\n"
            "objective=cut\n"
            "model=erdos_renyi\n"
            "n=300\n"
            "p=0.5\n"
            "k=210\n"
            "reps=5\n"
            "out=outputs/traces/example.csv\n",
            encoding='utf-8',
        )
        print(f"  ✅ Created: data/example.env")

    print("\n✅ Project setup complete!")
    print(f"📁 Project root: {project_root}")

    # 環境チェック
    print("\nRunning environment check...")
    from test_environment import check_environment
    check_environment()


if __name__ == "__main__":
    setup_project()
