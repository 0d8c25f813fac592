"""
숨김 차원 분석

- rank_hidden_dims: 관측 차원을 하나씩 숨긴 시뮬레이터에서 온라인 학습 → 영향이 작은/큰 차원(h_low/h_high) 선택
- confounding_sweep: 같은 차원을 (a) 시뮬레이터에서 숨긴 온라인 학습 (부분 관측만)과
  (b) 그 차원을 보고 행동한 정책의 데이터에서 지운 오프라인 학습 (교란)으로 비교
"""
from typing import Dict, Optional, Sequence

import pandas as pd

from core.agents import AgentConfig, evaluate_policy, train_offline_bcq, train_online_q
from core.config import EVAL_SEED_OFFSET, REFS_CACHE_PATH
from core.environments import Env
from core.normalization import ReferencePair, compute_reference_pair
from core.perturb import with_hidden_dims
from data.corruption import corrupt_hide_dims
from data.generate_datasets import build_tier_dataset
from data.recipes import DatasetRecipe

DEFAULT_EVAL_EPISODES = 20


def _refs(env: Env, refs: Optional[ReferencePair], refs_cache: Optional[str]) -> ReferencePair:
    return refs or compute_reference_pair(env, cache_path=refs_cache)


def rank_hidden_dims(env: Env, config: Optional[AgentConfig] = None, seed: int = 0,
                     episodes: int = DEFAULT_EVAL_EPISODES, refs: Optional[ReferencePair] = None,
                     refs_cache: Optional[str] = REFS_CACHE_PATH, verbose: bool = False) -> pd.DataFrame:
    """
    차원별로 숨긴 환경에서 학습/평가한 점수로 정렬

    평가도 같은 차원을 숨긴 환경에서 한다 (배포 시에도 그 차원을 볼 수 없다는 가정).

    Args:
        env: 참 환경
        config: 에이전트 설정 (기본값: 환경 기본 설정)
        seed: 학습 시드
        episodes: 평가 에피소드 수
        refs: 정규화 참조 쌍

    Returns:
        DataFrame(dim, raw_return, normalized_score), 점수 내림차순 (첫 행이 h_low, 마지막 행이 h_high)
    """
    config = config or AgentConfig.for_env(env.unwrapped.name)
    refs = _refs(env, refs, refs_cache)
    rows = []
    for dim in range(env.obs_dim):
        hidden = with_hidden_dims(env, [dim])
        result = train_online_q(hidden, config, seed)
        raw, _ = evaluate_policy(hidden, result.policy, episodes, EVAL_SEED_OFFSET + seed)
        rows.append({'dim': dim, 'raw_return': raw, 'normalized_score': refs.normalize(raw)})
        if verbose:
            print(f"  차원 {dim} 숨김: 정규화 점수 {refs.normalize(raw):.1f}")
    frame = pd.DataFrame(rows, columns=['dim', 'raw_return', 'normalized_score'])
    return frame.sort_values('normalized_score', ascending=False, kind='mergesort').reset_index(drop=True)


def hidden_dim_levels(ranking: pd.DataFrame) -> Dict[str, int]:
    """rank_hidden_dims 결과 → {'low': 영향 최소 차원, 'high': 영향 최대 차원}"""
    if ranking.empty:
        raise ValueError("순위표가 비어 있습니다")
    return {'low': int(ranking['dim'].iloc[0]), 'high': int(ranking['dim'].iloc[-1])}


def confounding_sweep(env: Env, dims: Optional[Sequence[int]] = None, config: Optional[AgentConfig] = None,
                      seed: int = 0, tier: str = 'medium_expert', n_records: Optional[int] = None,
                      episodes: int = DEFAULT_EVAL_EPISODES, refs: Optional[ReferencePair] = None,
                      refs_cache: Optional[str] = REFS_CACHE_PATH, verbose: bool = False) -> pd.DataFrame:
    """
    부분 관측(온라인)과 교란(오프라인)의 차원별 영향 비교

    오프라인 쪽은 데이터셋을 한 번 만든 뒤 차원마다 그 열만 0으로 지운다.
    두 쪽 모두 해당 차원을 숨긴 환경에서 평가한다.

    Args:
        env: 참 환경
        dims: 비교할 관측 차원 (기본값: 전체)
        config: 에이전트 설정
        seed: 시드
        tier: 오프라인 데이터셋 tier
        n_records: 데이터셋 크기 (기본값: 환경별 기본 크기)

    Returns:
        DataFrame(dim, online_score, offline_score, offline_gap) - offline_gap = online - offline
    """
    config = config or AgentConfig.for_env(env.unwrapped.name)
    refs = _refs(env, refs, refs_cache)
    dims = list(range(env.obs_dim)) if dims is None else [int(d) for d in dims]

    recipe = DatasetRecipe(env=env.unwrapped.name, tier=tier, n_records=n_records,
                           env_params=env.unwrapped.params_dict())
    dataset = build_tier_dataset(env, recipe, seed, refs=refs, refs_cache=refs_cache, verbose=verbose)

    rows = []
    for dim in dims:
        hidden = with_hidden_dims(env, [dim])
        online = train_online_q(hidden, config, seed)
        online_raw, _ = evaluate_policy(hidden, online.policy, episodes, EVAL_SEED_OFFSET + seed)
        # 행동 정책은 숨기기 전 관측을 보고 행동했다
        confounded = corrupt_hide_dims(dataset, [dim], behavior_mode='privileged')
        offline = train_offline_bcq(confounded, config, seed)
        offline_raw, _ = evaluate_policy(hidden, offline.policy, episodes, EVAL_SEED_OFFSET + seed)
        online_score, offline_score = refs.normalize(online_raw), refs.normalize(offline_raw)
        rows.append({'dim': dim, 'online_score': online_score, 'offline_score': offline_score,
                     'offline_gap': online_score - offline_score})
        if verbose:
            print(f"  차원 {dim}: 온라인 {online_score:.1f} / 오프라인 {offline_score:.1f}")
    return pd.DataFrame(rows, columns=['dim', 'online_score', 'offline_score', 'offline_gap'])
