"""
BLITS: 低適応度の非単調サブモジュラ最大化
値オラクル・BLITS/SIEVE・ベースライン・目的関数・グラフ生成・全列挙テストキット
"""

__version__ = "1.0.0"
