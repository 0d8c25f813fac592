"""
D4RL 방식 점수 정규화

normalized = 100 × (raw - random_ref) / (expert_ref - random_ref)
random 정책이 0, expert 정책이 100이며 범위를 벗어날 수 있다.
"""
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

import yaml

from core.agents import (
    AgentConfig, TrainingResult, UniformPolicy, default_action_grid, evaluate_policy, train_online_q,
)
from core.config import REFERENCE_EPISODES, REFERENCE_SEED, REFS_CACHE_PATH
from core.environments import Env, env_key
from core.errors import TierTrainingError


def normalize_score(raw: float, random_ref: float, expert_ref: float) -> float:
    """
    Args:
        raw: 원시 수익
        random_ref: 균등 랜덤 정책 평균 수익
        expert_ref: expert 정책 평균 수익

    Returns:
        정규화 점수
    """
    if not expert_ref > random_ref:
        raise ValueError(f"expert 참조({expert_ref})가 random 참조({random_ref})보다 커야 합니다")
    return 100.0 * (raw - random_ref) / (expert_ref - random_ref)


@dataclass
class ReferencePair:
    random_ref: float
    expert_ref: float

    def normalize(self, raw: float) -> float:
        return normalize_score(raw, self.random_ref, self.expert_ref)

    def to_dict(self) -> Dict[str, float]:
        return {'random_ref': float(self.random_ref), 'expert_ref': float(self.expert_ref)}


# 온라인 학습 캐시: (env_key, 시드, 설정) → TrainingResult. expert 참조와 tier 정책이 같은 실행을 쓴다.
_ONLINE_RUNS: Dict[str, TrainingResult] = {}


def online_run(env: Env, config: AgentConfig, seed: int, verbose: bool = False) -> TrainingResult:
    """같은 (환경, 설정, 시드)의 온라인 fitted-Q 학습은 프로세스에서 한 번만"""
    key = f"{env_key(env)}#{seed}#{json.dumps(config.to_dict(), sort_keys=True)}"
    if key not in _ONLINE_RUNS:
        _ONLINE_RUNS[key] = train_online_q(env, config, seed, verbose=verbose)
    return _ONLINE_RUNS[key]


def measure_reference_pair(env: Env, seed: int = REFERENCE_SEED, episodes: int = REFERENCE_EPISODES,
                           config: Optional[AgentConfig] = None, verbose: bool = False) -> ReferencePair:
    """
    균등 랜덤 정책과 expert(온라인 fitted-Q) 정책의 평균 수익 측정

    Raises:
        TierTrainingError: expert가 random보다 낫지 않을 때
    """
    config = config or AgentConfig.for_env(env.unwrapped.name)
    uniform = UniformPolicy(default_action_grid(env, config.action_grid_size), seed=seed)
    random_ref, _ = evaluate_policy(env, uniform, episodes, seed)
    if verbose:
        print(f"  random 참조: {random_ref:.3f}")
        print("  expert 학습 중...")
    expert = online_run(env, config, seed, verbose=verbose)
    expert_ref, _ = evaluate_policy(env, expert.policy, episodes, seed)
    if verbose:
        print(f"  expert 참조: {expert_ref:.3f}")
    if not expert_ref > random_ref:
        raise TierTrainingError(
            f"{env_key(env)}: expert 수익({expert_ref:.3f})이 random 수익({random_ref:.3f})보다 높지 않습니다")
    return ReferencePair(random_ref=random_ref, expert_ref=expert_ref)


# 메모리 캐시: env_key → ReferencePair
_REFERENCE_CACHE: Dict[str, ReferencePair] = {}


def _load_cache_file(path: Path) -> Dict[str, Dict[str, float]]:
    if not path.exists():
        return {}
    with open(path, 'r', encoding='utf-8') as f:
        return yaml.safe_load(f) or {}


def compute_reference_pair(env: Env, seed: int = REFERENCE_SEED, cache_path: Optional[str] = REFS_CACHE_PATH,
                           config: Optional[AgentConfig] = None, verbose: bool = False) -> ReferencePair:
    """
    (환경, 파라미터, 시드)별로 캐시된 참조 쌍

    메모리 캐시 → YAML 캐시 파일 → 측정 순서로 찾는다.
    """
    key = f"{env_key(env)}#seed={seed}"
    if key in _REFERENCE_CACHE:
        return _REFERENCE_CACHE[key]

    cache_file = Path(cache_path) if cache_path else None
    if cache_file is not None:
        stored = _load_cache_file(cache_file).get(key)
        if stored is not None:
            pair = ReferencePair(**stored)
            _REFERENCE_CACHE[key] = pair
            return pair

    if verbose:
        print(f"📊 참조 점수 측정: {key}")
    pair = measure_reference_pair(env, seed=seed, config=config, verbose=verbose)
    _REFERENCE_CACHE[key] = pair
    if cache_file is not None:
        cache_file.parent.mkdir(parents=True, exist_ok=True)
        stored = _load_cache_file(cache_file)
        stored[key] = pair.to_dict()
        with open(cache_file, 'w', encoding='utf-8') as f:
            yaml.safe_dump(stored, f, allow_unicode=True, sort_keys=True)
    return pair


def clear_online_runs():
    _ONLINE_RUNS.clear()


def clear_reference_cache():
    _REFERENCE_CACHE.clear()
    clear_online_runs()
