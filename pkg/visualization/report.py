"""
결과 리포트 생성 (CSV / Markdown)

- CSV: (벤치마크, 에이전트, 시드)별 행 + seed='aggregate' 집계 행
- Markdown: 행 = 데이터셋 라벨, 열 = (시뮬레이터 라벨, 에이전트), 셀 = 'mean ± std'

표준편차는 모표준편차(ddof=0)를 쓴다. {10, 20, 30} → '20.0 ± 8.2'.
"""
from pathlib import Path
from typing import Sequence, Union

import pandas as pd

from core.config import RESULTS_COLUMNS
from visualization.formatters import format_score

REPORT_FORMATS = ('csv', 'markdown')
AGGREGATE_SEED = "aggregate"
STD_DDOF = 0
STD_NOTE = f"> 셀: 정규화 점수 평균 ± 표준편차 (시드 간 모표준편차, ddof={STD_DDOF})"


def to_frame(results: Union[pd.DataFrame, Sequence]) -> pd.DataFrame:
    """RunResult 목록 또는 결과 DataFrame → 결과 열만 가진 DataFrame (실패한 실행 제외)"""
    if isinstance(results, pd.DataFrame):
        frame = results.copy()
    else:
        frame = pd.DataFrame([r.to_row() for r in results if getattr(r, 'ok', True)], columns=RESULTS_COLUMNS)
    missing = [c for c in RESULTS_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"결과에 필요한 열이 없습니다: {', '.join(missing)}")
    return frame[RESULTS_COLUMNS]


def split_benchmark_id(benchmark_id: str):
    """'<시뮬레이터>__<데이터셋>' → (시뮬레이터, 데이터셋). 구분자가 없으면 데이터셋은 '-'"""
    sim, sep, dataset = str(benchmark_id).partition("__")
    return (sim, dataset) if sep else (sim, "-")


def aggregate(frame: pd.DataFrame) -> pd.DataFrame:
    """
    (benchmark_id, agent)별 집계

    Returns:
        DataFrame(benchmark_id, agent, raw_return, normalized_score, normalized_std, n_seeds, wall_time)
    """
    grouped = frame.groupby(['benchmark_id', 'agent'], sort=True)
    summary = grouped.agg(
        raw_return=('raw_return', 'mean'),
        normalized_score=('normalized_score', 'mean'),
        normalized_std=('normalized_score', lambda s: float(s.std(ddof=STD_DDOF))),
        n_seeds=('seed', 'count'),
        wall_time=('wall_time', 'sum'),
    ).reset_index()
    return summary


def report_csv(frame: pd.DataFrame) -> pd.DataFrame:
    """시드별 행 뒤에 집계 행을 붙인 표"""
    runs = frame.copy()
    runs['seed'] = runs['seed'].astype(str)
    runs['normalized_std'] = float('nan')
    runs['n_seeds'] = 1
    summary = aggregate(frame)
    summary['seed'] = AGGREGATE_SEED
    summary['config_hash'] = ""
    summary['dataset_hash'] = ""
    columns = RESULTS_COLUMNS + ['normalized_std', 'n_seeds']
    return pd.concat([runs[columns], summary[columns]], ignore_index=True)


def report_markdown(frame: pd.DataFrame, decimals: int = 1) -> str:
    """
    피벗 표 Markdown

    Returns:
        표준편차 기준을 밝힌 머리줄 + '| dataset | sim / agent | ... |' 형식 표
    """
    summary = aggregate(frame)
    parts = summary['benchmark_id'].map(split_benchmark_id)
    summary['simulator'] = [p[0] for p in parts]
    summary['dataset'] = [p[1] for p in parts]
    summary['cell'] = [format_score(m, s, decimals)
                       for m, s in zip(summary['normalized_score'], summary['normalized_std'])]

    columns = sorted({(sim, agent) for sim, agent in zip(summary['simulator'], summary['agent'])})
    datasets = sorted(summary['dataset'].unique())
    cells = {(row.dataset, row.simulator, row.agent): row.cell for row in summary.itertuples()}

    header = ["dataset"] + [f"{sim} / {agent}" for sim, agent in columns]
    lines = [
        STD_NOTE,
        "",
        "| " + " | ".join(header) + " |",
        "|" + "|".join(["---"] + [":---:"] * len(columns)) + "|",
    ]
    for dataset in datasets:
        row = [dataset] + [cells.get((dataset, sim, agent), "") for sim, agent in columns]
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def emit_report(results, fmt: str, path: str) -> Path:
    """
    결과 → 리포트 파일

    Args:
        results: RunResult 목록 또는 결과 DataFrame
        fmt: 'csv' | 'markdown'
        path: 출력 파일 경로

    Returns:
        저장한 경로

    Raises:
        ValueError: 결과가 비어 있거나 형식이 알 수 없을 때
    """
    if fmt not in REPORT_FORMATS:
        raise ValueError(f"알 수 없는 리포트 형식입니다: {fmt} (사용 가능: {', '.join(REPORT_FORMATS)})")
    frame = to_frame(results)
    if frame.empty:
        raise ValueError("리포트를 만들 결과가 없습니다")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == 'csv':
        report_csv(frame).to_csv(path, index=False, float_format='%.17g')
    else:
        path.write_text(report_markdown(frame), encoding='utf-8')
    return path
