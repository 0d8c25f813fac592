"""
오프라인 데이터셋 생성

- tier별 행동 정책 학습 (random / medium / expert)
- 관측 기반 수집과 특권(전체 상태) 기반 수집
- 히스토리 기반 교란 수집 (정책은 최근 k개 관측을 보지만 기록은 현재 관측만)
- 레시피 → 데이터셋
"""
import copy
import json
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional

import numpy as np

from core.agents import (
    AgentConfig, FullStatePolicy, MarginalizedPolicy, Policy, QPolicy, ScriptedPolicy,
    UniformPolicy, default_action_grid, evaluate_policy,
)
from core.config import EVAL_SEED_OFFSET, MEDIUM_TARGET_SCORE, REFS_CACHE_PATH, TIER_EVAL_EPISODES
from core.environments import Env, WindyGridParams, env_key
from core.errors import TierTrainingError
from core.normalization import ReferencePair, clear_online_runs, compute_reference_pair, online_run
from core.perturb import HistoryWindow, with_action_delay, with_hidden_dims, with_obs_history
from core.transitions import TransitionBatch, TransitionBuffer
from data.corruption import apply_corruptions, corrupt_hide_dims
from data.dataset import Dataset, DatasetMeta, concatenate_datasets
from data.recipes import DatasetRecipe

DEFAULT_SCRIPTED_EPSILON = 0.1


# ===== tier 정책 =====

@dataclass
class TierPolicy:
    tier: str
    policy: Policy
    raw_score: float
    normalized_score: float
    replay: Optional[TransitionBatch] = None


_TIER_CACHE: Dict[str, TierPolicy] = {}


def clear_tier_cache():
    _TIER_CACHE.clear()
    clear_online_runs()


def train_tier_policy(env: Env, tier: str, budget: Optional[Dict[str, Any]] = None, seed: int = 0,
                      refs: Optional[ReferencePair] = None, refs_cache: Optional[str] = REFS_CACHE_PATH,
                      verbose: bool = False) -> TierPolicy:
    """
    tier별 데이터 생성 정책

    - random: 균등 정책
    - expert: 온라인 fitted-Q 학습 완료 정책
    - medium: 같은 학습 실행에서 정규화 점수가 처음으로 40 이상이 된 체크포인트

    Args:
        env: 행동 정책이 학습/행동하는 환경
        tier: 'random' | 'medium' | 'expert'
        budget: AgentConfig 덮어쓰기 (sweeps, steps_per_sweep 등)
        seed: 학습 시드
        refs: 정규화 참조 쌍 (medium에서 없으면 계산)
        refs_cache: 참조 쌍 YAML 캐시 경로
        verbose: 진행 상황 출력

    Returns:
        TierPolicy (medium이면 체크포인트까지의 리플레이 버퍼 포함)

    Raises:
        TierTrainingError: 예산 안에서 medium 목표 점수에 도달하지 못함 (최고 점수 포함)
    """
    key = f"{env_key(env)}#{tier}#{seed}#{json.dumps(budget or {}, sort_keys=True)}"
    if key in _TIER_CACHE:
        return _TIER_CACHE[key]

    config = AgentConfig.for_env(env.unwrapped.name, budget)
    grid = default_action_grid(env, config.action_grid_size)
    eval_seed = EVAL_SEED_OFFSET + seed

    if tier == 'random':
        policy = UniformPolicy(grid, seed=[seed, 5])
        raw, _ = evaluate_policy(env, policy, TIER_EVAL_EPISODES, eval_seed)
        result = TierPolicy('random', policy, raw, refs.normalize(raw) if refs else 0.0)

    elif tier == 'expert':
        run = online_run(env, config, seed, verbose)
        raw, _ = evaluate_policy(env, run.policy, TIER_EVAL_EPISODES, eval_seed)
        result = TierPolicy('expert', run.policy, raw, refs.normalize(raw) if refs else 100.0)

    elif tier == 'medium':
        refs = refs or compute_reference_pair(env, cache_path=refs_cache, verbose=verbose)
        run = online_run(env, config, seed, verbose)
        best = -np.inf
        result = None
        for checkpoint in run.checkpoints:
            policy = QPolicy(checkpoint.q, grid, seed=[seed, 2])
            raw, _ = evaluate_policy(env, policy, TIER_EVAL_EPISODES, eval_seed)
            score = refs.normalize(raw)
            best = max(best, score)
            if score >= MEDIUM_TARGET_SCORE:
                if verbose:
                    print(f"  ✅ medium 체크포인트: sweep {checkpoint.sweep + 1}, 정규화 점수 {score:.1f}")
                result = TierPolicy('medium', policy, raw, score,
                                    replay=run.buffer.head(checkpoint.buffer_size))
                break
        if result is None:
            raise TierTrainingError(
                f"{env_key(env)}: {len(run.checkpoints)} sweep 안에 정규화 점수 {MEDIUM_TARGET_SCORE}에 "
                f"도달하지 못했습니다 (최고 {best:.1f})")
    else:
        raise ValueError(f"행동 정책을 학습할 수 없는 tier입니다: {tier} (사용 가능: random, medium, expert)")

    _TIER_CACHE[key] = result
    return result


# ===== 스크립트 행동 정책 =====

def _toward(delta: int, positive: int, negative: int) -> int:
    return positive if delta > 0 else negative


def wind_aware_behavior(params: WindyGridParams, epsilon: float = DEFAULT_SCRIPTED_EPSILON, seed=0) -> ScriptedPolicy:
    """
    바람을 보고 움직이는 windygrid 행동 정책

    바람이 없으면 세로 방향으로 목표에 다가가고 (세로가 맞으면 가로),
    바람이 불면 가로 방향으로 다가간다 (가로가 맞으면 세로).
    """
    gx, gy = params.goal

    def rule(obs: np.ndarray) -> int:
        x, y, wind = int(round(obs[0])), int(round(obs[1])), int(round(obs[2]))
        dx, dy = gx - x, gy - y
        vertical = _toward(dy, 0, 1) if dy != 0 else None
        horizontal = _toward(dx, 3, 2) if dx != 0 else None
        if wind == 1:
            return horizontal if horizontal is not None else (vertical if vertical is not None else 0)
        return vertical if vertical is not None else (horizontal if horizontal is not None else 0)

    return ScriptedPolicy(rule, np.arange(4), epsilon=epsilon, seed=seed, name="wind_aware")


def wind_blind_behavior(params: WindyGridParams, epsilon: float = DEFAULT_SCRIPTED_EPSILON, seed=0) -> MarginalizedPolicy:
    """wind_aware와 같은 규칙을 쓰되 바람 칸 대신 독립적으로 뽑은 바람을 보는 정책"""
    inner = wind_aware_behavior(params, epsilon, seed=[*np.atleast_1d(seed).tolist(), 1])
    p = float(params.wind_prob)
    return MarginalizedPolicy(inner, index=2, values=(0.0, 1.0), probs=(1.0 - p, p), seed=seed)


def bandit_behavior(params=None, epsilon: float = 0.0, seed=0) -> ScriptedPolicy:
    """전체 상태 (z)를 보고 z=0이면 a1, z=1이면 a0"""
    return ScriptedPolicy(lambda state: 1 if int(round(state[0])) == 0 else 0, np.arange(2),
                          epsilon=epsilon, seed=seed, name="bandit_reference")


SCRIPTED_BEHAVIORS: Dict[str, Callable[..., Policy]] = {
    'wind_aware': wind_aware_behavior,
    'wind_blind': wind_blind_behavior,
    'bandit_reference': bandit_behavior,
}


# ===== 수집 =====

def _meta(env: Env, tier: str, behavior_mode: str, seed: int, n: int) -> DatasetMeta:
    return DatasetMeta(
        env_name=env.unwrapped.name,
        env_params=env.unwrapped.params_dict(),
        tier=tier,
        behavior_mode=behavior_mode,
        seed=int(seed),
        record_count=int(n),
        obs_dim=env.obs_dim,
        action_kind=env.action_kind,
        action_dim=env.action_dim if env.action_kind == 'continuous' else 1,
    )


def _collect(env: Env, policy: Policy, n_records: int, seed: int,
             policy_input: Callable[[np.ndarray], np.ndarray],
             window: Optional[HistoryWindow] = None) -> TransitionBatch:
    policy = copy.deepcopy(policy)
    policy.reseed([seed, 6])
    episode_rng = np.random.default_rng(seed)
    buffer = TransitionBuffer(env.obs_dim, discrete=env.action_kind == 'discrete')

    obs = env.reset(int(episode_rng.integers(0, 2 ** 31 - 1)))
    if window is not None:
        window.reset(obs)
    while len(buffer) < n_records:
        action = policy.act(policy_input(obs))
        result = env.step(action)
        buffer.add(obs, action, result.reward, result.obs, result.done)
        if result.done:
            obs = env.reset(int(episode_rng.integers(0, 2 ** 31 - 1)))
            if window is not None:
                window.reset(obs)
        else:
            obs = result.obs
            if window is not None:
                window.push(obs)
    return buffer.to_batch()


def collect_dataset(env: Env, policy: Policy, n_records: int, behavior_mode: str, seed: int,
                    tier: str = 'scripted') -> Dataset:
    """
    정책을 환경에서 실행해 정확히 n_records개 전이 수집

    Args:
        env: 수집 환경 (래퍼 포함 가능, 기록되는 관측은 이 환경이 내보낸 관측)
        policy: 행동 정책 (privileged 모드에서는 전체 상태를 입력으로 받는다)
        n_records: 레코드 수
        behavior_mode: 'observed' | 'privileged'
        seed: 수집 시드
        tier: 메타데이터 tier 라벨

    Returns:
        Dataset
    """
    if behavior_mode == 'observed':
        policy_input = lambda obs: obs
    elif behavior_mode == 'privileged':
        policy_input = lambda obs: env.full_state()
    else:
        raise ValueError(f"알 수 없는 behavior_mode입니다: {behavior_mode}")
    batch = _collect(env, policy, n_records, seed, policy_input)
    return Dataset(_meta(env, tier, behavior_mode, seed, len(batch)), batch)


def collect_history_confounded(env: Env, k: int, policy: Policy, n_records: int, seed: int,
                               tier: str = 'scripted') -> Dataset:
    """
    최근 k개 관측(에피소드 시작은 0 패딩)을 보는 정책으로 수집하되 현재 관측만 기록

    k=1이면 observed 모드 collect_dataset과 같은 데이터셋이다.
    """
    window = HistoryWindow(k, env.obs_dim)
    batch = _collect(env, policy, n_records, seed, lambda obs: window.current(), window=window)
    if window.k == 1:
        return Dataset(_meta(env, tier, 'observed', seed, len(batch)), batch)
    meta = _meta(env, tier, 'privileged', seed, len(batch))
    meta.corruption = [{'kind': 'history_confounded', 'k': int(k)}]
    return Dataset(meta, batch)


# ===== 레시피 =====

def build_tier_dataset(env: Env, recipe: DatasetRecipe, seed: int, refs: Optional[ReferencePair] = None,
                       refs_cache: Optional[str] = REFS_CACHE_PATH, verbose: bool = False) -> Dataset:
    """
    레시피 하나를 데이터셋으로 만든다

    Args:
        env: 데이터가 나오는 (참) 환경
        recipe: DatasetRecipe
        seed: 정책 학습/수집 시드
        refs: 정규화 참조 쌍 (medium 계열에서 없으면 계산)
        refs_cache: 참조 쌍 캐시 경로
        verbose: 진행 상황 출력
    """
    recipe.validate()
    privileged = recipe.behavior_mode == 'privileged'
    k = int(recipe.history_k)

    acting_env = with_action_delay(env, recipe.action_delay) if recipe.action_delay else env
    collection_env = acting_env
    if recipe.hide_during_collection:
        collection_env = with_hidden_dims(acting_env, recipe.hide_during_collection)

    if k > 1:
        train_env = with_obs_history(collection_env, k)
    elif privileged:
        train_env = acting_env
    else:
        train_env = collection_env

    def behavior_for(tier_name: str) -> TierPolicy:
        if tier_name == 'scripted':
            epsilon = DEFAULT_SCRIPTED_EPSILON if recipe.epsilon is None else recipe.epsilon
            policy = SCRIPTED_BEHAVIORS[recipe.behavior](env.unwrapped.params, epsilon=epsilon, seed=[seed, 8])
            return TierPolicy('scripted', policy, float('nan'), float('nan'))
        trained = train_tier_policy(train_env, tier_name, recipe.budget, seed, refs=refs,
                                    refs_cache=refs_cache, verbose=verbose)
        policy = trained.policy if recipe.epsilon is None else trained.policy.with_epsilon(recipe.epsilon)
        return TierPolicy(trained.tier, policy, trained.raw_score, trained.normalized_score, trained.replay)

    def collect(tier_policy: TierPolicy, n: int, tier_label: str, collect_seed: int) -> Dataset:
        policy = tier_policy.policy
        if k > 1:
            return collect_history_confounded(collection_env, k, policy, n, collect_seed, tier=tier_label)
        if privileged and tier_policy.tier != 'scripted':
            policy = FullStatePolicy(policy, env.unwrapped.observe_state)
        mode = 'privileged' if privileged else 'observed'
        return collect_dataset(collection_env, policy, n, mode, collect_seed, tier=tier_label)

    n = int(recipe.n_records)
    if verbose:
        print(f"📂 데이터셋 생성: {recipe.env} / {recipe.label} / seed {seed} / {n:,}개")

    if recipe.tier in ('random', 'medium', 'expert', 'scripted'):
        dataset = collect(behavior_for(recipe.tier), n, recipe.tier, seed)
    elif recipe.tier == 'medium_expert':
        medium = collect(behavior_for('medium'), n // 2, 'medium', seed)
        expert = collect(behavior_for('expert'), n - n // 2, 'expert', seed + 1)
        dataset = concatenate_datasets([medium, expert], tier='medium_expert')
    else:
        replay = behavior_for('medium').replay
        if k > 1:
            replay = TransitionBatch(obs=replay.obs[:, -env.obs_dim:], actions=replay.actions,
                                     rewards=replay.rewards, next_obs=replay.next_obs[:, -env.obs_dim:],
                                     dones=replay.dones)
        dataset = Dataset(_meta(collection_env, 'medium_replay', 'observed', seed, len(replay)), replay)
        if k > 1:
            dataset = dataset.with_batch(dataset.batch, behavior_mode='privileged',
                                         corruption=[{'kind': 'history_confounded', 'k': k}])
        elif privileged and recipe.hide_during_collection:
            dataset = corrupt_hide_dims(dataset, recipe.hide_during_collection, behavior_mode='privileged')

    dataset = apply_corruptions(dataset, recipe.corruption, seed)
    if verbose:
        print(f"  ✅ {len(dataset):,}개 전이 ({dataset.meta.behavior_mode}, 오염 {dataset.meta.corruption})")
    return dataset
