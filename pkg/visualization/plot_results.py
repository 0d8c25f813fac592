"""
벤치마크 차트 생성
Matplotlib을 사용하여 차트 이미지 생성 (화면 없이 파일로 저장)
"""
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from core.config import CHART_DEFAULTS  # noqa: E402
from visualization.report import aggregate, split_benchmark_id, to_frame  # noqa: E402

plt.rcParams['font.size'] = CHART_DEFAULTS['font_size']
plt.rcParams['axes.unicode_minus'] = False  # 마이너스 기호 깨짐 방지


def plot_normalized_scores(results, output_path: str, title: str = "Normalized scores") -> Path:
    """
    (벤치마크, 에이전트)별 정규화 점수 막대 차트 (오차 막대 = 표준편차)

    Args:
        results: RunResult 목록 또는 결과 DataFrame
        output_path: 저장 경로 (.png)
    """
    frame = to_frame(results)
    if frame.empty:
        raise ValueError("차트를 그릴 결과가 없습니다")
    summary = aggregate(frame)
    pivot_mean = summary.pivot(index='benchmark_id', columns='agent', values='normalized_score')
    pivot_std = summary.pivot(index='benchmark_id', columns='agent', values='normalized_std')

    fig, ax = plt.subplots(figsize=CHART_DEFAULTS['figsize'])
    pivot_mean.plot.bar(ax=ax, yerr=pivot_std, capsize=3, rot=30)
    ax.axhline(0, color='gray', linewidth=0.8)
    ax.axhline(100, color='gray', linewidth=0.8, linestyle='--')
    ax.set_ylabel("normalized score")
    ax.set_xlabel("")
    ax.set_title(title)
    ax.set_xticklabels([" / ".join(split_benchmark_id(b)) for b in pivot_mean.index], ha='right')
    return _save(fig, output_path)


def plot_confounding_sweep(sweep: pd.DataFrame, output_path: str, dim_names: Sequence[str] = ()) -> Path:
    """
    confounding_sweep 결과: 차원별 온라인(부분 관측) vs 오프라인(교란) 점수 선 그래프
    """
    fig, ax = plt.subplots(figsize=CHART_DEFAULTS['figsize'])
    labels = [dim_names[d] if d < len(dim_names) else str(d) for d in sweep['dim']]
    ax.plot(labels, sweep['online_score'], marker='o', label="online (hidden in simulator)")
    ax.plot(labels, sweep['offline_score'], marker='s', label="offline (hidden in dataset)")
    ax.set_xlabel("hidden dimension")
    ax.set_ylabel("normalized score")
    ax.grid(alpha=0.3)
    ax.legend()
    return _save(fig, output_path)


def _save(fig, output_path: str) -> Path:
    path = Path(output_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=CHART_DEFAULTS['dpi'])
    plt.close(fig)
    print(f"  ✅ 차트 저장: {path}")
    return path
