"""
전이(transition) 배열 묶음

리플레이 버퍼, 데이터셋, 모델 롤아웃이 공유하는 (o, a, r, o', done) 배열 표현
"""
from dataclasses import dataclass
from typing import List, Optional

import numpy as np


@dataclass
class TransitionBatch:
    obs: np.ndarray        # (n, obs_dim)
    actions: np.ndarray    # 이산: (n,) int, 연속: (n, action_dim) float
    rewards: np.ndarray    # (n,)
    next_obs: np.ndarray   # (n, obs_dim)
    dones: np.ndarray      # (n,) bool

    def __len__(self) -> int:
        return int(self.rewards.shape[0])

    @property
    def obs_dim(self) -> int:
        return int(self.obs.shape[1])

    def take(self, indices: np.ndarray) -> "TransitionBatch":
        return TransitionBatch(
            obs=self.obs[indices],
            actions=self.actions[indices],
            rewards=self.rewards[indices],
            next_obs=self.next_obs[indices],
            dones=self.dones[indices],
        )

    def head(self, n: int) -> "TransitionBatch":
        return self.take(np.arange(min(n, len(self))))

    @staticmethod
    def concatenate(batches: List["TransitionBatch"]) -> "TransitionBatch":
        batches = [b for b in batches if len(b) > 0]
        if not batches:
            raise ValueError("합칠 전이가 없습니다")
        return TransitionBatch(
            obs=np.concatenate([b.obs for b in batches]),
            actions=np.concatenate([b.actions for b in batches]),
            rewards=np.concatenate([b.rewards for b in batches]),
            next_obs=np.concatenate([b.next_obs for b in batches]),
            dones=np.concatenate([b.dones for b in batches]),
        )


class TransitionBuffer:
    """
    스텝 단위로 전이를 쌓는 가변 버퍼 (온라인 학습/데이터 수집용)

    Args:
        obs_dim: 관측 차원
        discrete: 이산 행동 여부
    """

    def __init__(self, obs_dim: int, discrete: bool):
        self.obs_dim = obs_dim
        self.discrete = discrete
        self._obs: List[np.ndarray] = []
        self._actions: List = []
        self._rewards: List[float] = []
        self._next_obs: List[np.ndarray] = []
        self._dones: List[bool] = []

    def __len__(self) -> int:
        return len(self._rewards)

    def add(self, obs, action, reward: float, next_obs, done: bool):
        self._obs.append(np.asarray(obs, dtype=float))
        self._actions.append(int(action) if self.discrete else np.asarray(action, dtype=float).reshape(-1))
        self._rewards.append(float(reward))
        self._next_obs.append(np.asarray(next_obs, dtype=float))
        self._dones.append(bool(done))

    def to_batch(self, limit: Optional[int] = None) -> TransitionBatch:
        n = len(self) if limit is None else min(limit, len(self))
        if self.discrete:
            actions = np.asarray(self._actions[:n], dtype=np.int64)
        elif n == 0:
            actions = np.zeros((0, 1))
        else:
            actions = np.asarray(self._actions[:n], dtype=float).reshape(n, -1)
        return TransitionBatch(
            obs=np.asarray(self._obs[:n], dtype=float).reshape(n, self.obs_dim),
            actions=actions,
            rewards=np.asarray(self._rewards[:n], dtype=float),
            next_obs=np.asarray(self._next_obs[:n], dtype=float).reshape(n, self.obs_dim),
            dones=np.asarray(self._dones[:n], dtype=bool),
        )
