"""
테스트 공통 픽스처
작은 환경/데이터셋/학습 예산과 전역 캐시 초기화를 제공
"""
import numpy as np
import pytest


@pytest.fixture(autouse=True)
def clear_caches():
    """참조 점수와 tier 정책 메모리 캐시를 테스트마다 비움"""
    from core.normalization import clear_reference_cache
    from data.generate_datasets import clear_tier_cache
    clear_reference_cache()
    clear_tier_cache()
    yield
    clear_reference_cache()
    clear_tier_cache()


@pytest.fixture
def pendulum_env():
    from core.environments import make_env
    return make_env('pendulum')


@pytest.fixture
def windygrid_env():
    from core.environments import make_env
    return make_env('windygrid')


@pytest.fixture
def bandit_env():
    from core.environments import make_env
    return make_env('bandit')


@pytest.fixture
def small_windygrid_config():
    """몇 초 안에 끝나는 windygrid 에이전트 설정"""
    from core.agents import AgentConfig
    return AgentConfig.for_env('windygrid', {
        'sweeps': 3,
        'steps_per_sweep': 300,
        'fq_iterations': 20,
        'eval_episodes': 2,
        'model_epochs': 2,
        'rollout_batch': 16,
        'rollout_horizon': 3,
        'model': {'n_members': 3},
    })


@pytest.fixture
def uniform_windygrid_dataset(windygrid_env):
    """균등 랜덤 정책으로 모은 windygrid 데이터셋 2,000개"""
    from core.agents import UniformPolicy
    from data.generate_datasets import collect_dataset
    return collect_dataset(windygrid_env, UniformPolicy(np.arange(4), seed=0), 2_000, 'observed', seed=0,
                           tier='random')


@pytest.fixture
def uniform_pendulum_dataset(pendulum_env):
    """균등 랜덤 토크 정책으로 모은 진자 데이터셋 1,000개"""
    from core.agents import UniformPolicy, default_action_grid
    from data.generate_datasets import collect_dataset
    policy = UniformPolicy(default_action_grid(pendulum_env, 9), seed=0)
    return collect_dataset(pendulum_env, policy, 1_000, 'observed', seed=0, tier='random')


@pytest.fixture
def refs_cache_path(tmp_path):
    """임시 참조 점수 캐시 파일 경로"""
    return str(tmp_path / "refs_cache.yaml")


@pytest.fixture
def seeded_refs_cache(refs_cache_path):
    """
    기본 windygrid / 진자 참조 점수를 미리 넣어 둔 캐시 파일
    (expert 학습 없이 벤치마크 실행 경로만 확인. 실제 참조 학습은 test_acceptance의 tier 테스트)
    """
    import yaml
    from core.config import REFERENCE_SEED
    from core.environments import env_key, make_env

    stored = {
        f"{env_key(make_env('windygrid'))}#seed={REFERENCE_SEED}": {'random_ref': -40.0, 'expert_ref': 0.0},
        f"{env_key(make_env('pendulum'))}#seed={REFERENCE_SEED}": {'random_ref': -1200.0, 'expert_ref': -200.0},
    }
    with open(refs_cache_path, 'w', encoding='utf-8') as f:
        yaml.safe_dump(stored, f)
    return refs_cache_path


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: 대용량 데이터/전체 학습이 필요한 수용 테스트")
