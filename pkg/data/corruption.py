"""
offline2real 데이터셋 오염 연산

- 관측 노이즈: 레코드 번호로 노이즈 행을 정해 o, o2에 더함
- 차원 숨김: 지정한 관측 차원을 정확히 0.0으로 고정
"""
from typing import Iterable, Optional

import numpy as np

from core.transitions import TransitionBatch
from data.dataset import BEHAVIOR_MODES, Dataset


def continues_episode(batch: TransitionBatch) -> np.ndarray:
    """
    레코드 t의 o2가 레코드 t+1의 o로 이어지는지 (done이 아니고 값이 같음)

    마지막 레코드는 항상 False.
    """
    n = len(batch)
    out = np.zeros(n, dtype=bool)
    if n > 1:
        out[:-1] = ~batch.dones[:-1] & np.all(batch.next_obs[:-1] == batch.obs[1:], axis=1)
    return out


def observation_noise(batch: TransitionBatch, seed: int):
    """
    레코드별 표준 정규 노이즈

    o의 노이즈는 default_rng(seed)의 t번째 행이다. o2는 에피소드가 이어지면 레코드 t+1의 o 노이즈를
    그대로 쓰고, 아니면 default_rng([seed, 1])의 t번째 행을 쓴다. 그래서 레코드 t의 노이즈는
    (seed, t, 차원)과 레코드 t, t+1의 연결 여부로만 정해진다.

    Returns:
        (o 노이즈, o2 노이즈) - 각각 (n, obs_dim)
    """
    shape = (len(batch), batch.obs_dim)
    obs_noise = np.random.default_rng(seed).standard_normal(shape)
    next_noise = np.random.default_rng([seed, 1]).standard_normal(shape)
    rows = np.flatnonzero(continues_episode(batch))
    next_noise[rows] = obs_noise[rows + 1]
    return obs_noise, next_noise


def corrupt_obs_noise(dataset: Dataset, sigma: float, seed: int) -> Dataset:
    """
    Args:
        dataset: 원본 데이터셋
        sigma: 노이즈 표준편차 (0 이상)
        seed: 노이즈 행렬 시드

    Returns:
        o, o2에 N(0, σ²) 노이즈를 더한 새 데이터셋 (σ=0이면 배열은 그대로)
    """
    if sigma < 0:
        raise ValueError(f"관측 노이즈 σ는 0 이상이어야 합니다: {sigma}")
    corruption = dataset.meta.corruption + [{'kind': 'obs_noise', 'sigma': float(sigma), 'seed': int(seed)}]
    b = dataset.batch
    if sigma == 0.0:
        return dataset.with_batch(b, corruption=corruption)

    obs_noise, next_noise = observation_noise(b, seed)
    corrupted = TransitionBatch(
        obs=b.obs + sigma * obs_noise,
        actions=b.actions.copy(),
        rewards=b.rewards.copy(),
        next_obs=b.next_obs + sigma * next_noise,
        dones=b.dones.copy(),
    )
    return dataset.with_batch(corrupted, corruption=corruption)


def corrupt_hide_dims(dataset: Dataset, indices: Iterable[int], behavior_mode: Optional[str] = None) -> Dataset:
    """
    지정 관측 차원을 모든 o, o2에서 0.0으로 고정

    Args:
        dataset: 원본 데이터셋
        indices: 숨길 관측 인덱스
        behavior_mode: 행동 정책이 숨긴 값을 봤는지 수집한 쪽이 선언 (기본값: 원본 그대로)
    """
    indices = sorted({int(i) for i in indices})
    dim = dataset.meta.obs_dim
    bad = [i for i in indices if not 0 <= i < dim]
    if bad:
        raise ValueError(f"숨길 관측 인덱스가 범위를 벗어났습니다: {bad} (관측 차원 {dim})")
    b = dataset.batch
    behavior_mode = behavior_mode or dataset.meta.behavior_mode
    if behavior_mode not in BEHAVIOR_MODES:
        raise ValueError(f"알 수 없는 behavior_mode입니다: {behavior_mode}")
    corruption = dataset.meta.corruption + [{'kind': 'hidden_dims', 'indices': indices}]
    if not indices:
        return dataset.with_batch(b, corruption=corruption, behavior_mode=behavior_mode)

    obs, next_obs = b.obs.copy(), b.next_obs.copy()
    obs[:, indices] = 0.0
    next_obs[:, indices] = 0.0
    hidden = TransitionBatch(obs=obs, actions=b.actions.copy(), rewards=b.rewards.copy(),
                             next_obs=next_obs, dones=b.dones.copy())
    return dataset.with_batch(hidden, corruption=corruption, behavior_mode=behavior_mode)


def apply_corruptions(dataset: Dataset, corruptions, seed: int) -> Dataset:
    """
    레시피의 오염 목록을 순서대로 적용

    Args:
        corruptions: [{'kind': 'obs_noise', 'sigma': s, 'seed': optional}, {'kind': 'hidden_dims', 'indices': [...]}]
        seed: obs_noise 항목에 seed가 없을 때 쓸 시드
    """
    for item in corruptions or []:
        kind = item.get('kind')
        if kind == 'obs_noise':
            dataset = corrupt_obs_noise(dataset, float(item['sigma']), int(item.get('seed', seed)))
        elif kind == 'hidden_dims':
            dataset = corrupt_hide_dims(dataset, item.get('indices', []))
        else:
            raise ValueError(f"알 수 없는 데이터셋 오염 종류입니다: {kind} (사용 가능: obs_noise, hidden_dims)")
    return dataset
