"""
참조 에이전트

- online_q: ε-greedy 탐험 + 주기적 fitted-Q
- offline_bcq: 행동 정책 빈도로 argmax를 제한한 fitted-Q
- mopo_lite: 직접 예측 앙상블 + 패널티 롤아웃 + fitted-Q
- hymopo: 시뮬레이터 기준 보정 앙상블 + 패널티 롤아웃 + fitted-Q

정책 개선 단계는 모두 이산화한 행동 격자 위의 fitted-Q이다.
"""
import copy
import itertools
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.config import AGENT_DEFAULTS, ENV_AGENT_OVERRIDES, POLICY_FORMAT_VERSION, Q_FEATURES
from core.dynamics_model import (
    CorrectionEnsemble, ModelConfig, augment_with_sim, ridge_inverse,
    fit_correction_ensemble, fit_direct_ensemble,
)
from core.environments import Env, make_env
from core.errors import ConfigError
from core.features import FeatureMap, build_feature_map
from core.transitions import TransitionBatch, TransitionBuffer


# ===== 설정 =====

@dataclass
class AgentConfig:
    action_grid_size: int = AGENT_DEFAULTS['action_grid_size']
    gamma: float = AGENT_DEFAULTS['gamma']
    ridge: float = AGENT_DEFAULTS['ridge']
    fq_iterations: int = AGENT_DEFAULTS['fq_iterations']
    batch_size: int = AGENT_DEFAULTS['batch_size']
    sweeps: int = AGENT_DEFAULTS['sweeps']
    steps_per_sweep: int = AGENT_DEFAULTS['steps_per_sweep']
    epsilon_start: float = AGENT_DEFAULTS['epsilon_start']
    epsilon_end: float = AGENT_DEFAULTS['epsilon_end']
    eval_episodes: int = AGENT_DEFAULTS['eval_episodes']
    bc_threshold: float = AGENT_DEFAULTS['bc_threshold']
    bc_bins: int = AGENT_DEFAULTS['bc_bins']
    penalty_coef: float = AGENT_DEFAULTS['penalty_coef']
    rollout_horizon: int = AGENT_DEFAULTS['rollout_horizon']
    rollout_batch: int = AGENT_DEFAULTS['rollout_batch']
    model_epochs: int = AGENT_DEFAULTS['model_epochs']
    model_ratio: float = AGENT_DEFAULTS['model_ratio']
    rollout_epsilon: float = AGENT_DEFAULTS['rollout_epsilon']
    q_features: Dict[str, Any] = field(default_factory=lambda: {'kind': 'random_fourier', 'count': 300})
    model: Dict[str, Any] = field(default_factory=dict)

    def validate(self):
        for name in ('action_grid_size', 'fq_iterations', 'batch_size', 'sweeps', 'steps_per_sweep',
                     'eval_episodes', 'bc_bins', 'model_epochs'):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name}은 1 이상이어야 합니다: {getattr(self, name)}")
        for name in ('rollout_horizon', 'rollout_batch'):
            if int(getattr(self, name)) < 0:
                raise ConfigError(f"{name}은 0 이상이어야 합니다: {getattr(self, name)}")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"gamma는 [0, 1) 범위여야 합니다: {self.gamma}")
        for name in ('bc_threshold', 'model_ratio', 'epsilon_start', 'epsilon_end', 'rollout_epsilon'):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name}은 [0, 1] 범위여야 합니다: {getattr(self, name)}")
        if self.penalty_coef < 0:
            raise ConfigError(f"penalty_coef(λ)는 0 이상이어야 합니다: {self.penalty_coef}")

    @classmethod
    def for_env(cls, env_name: str, overrides: Optional[Dict[str, Any]] = None) -> "AgentConfig":
        """
        환경별 기본값 위에 덮어쓰기를 적용한 설정

        Raises:
            ConfigError: 알 수 없는 키 또는 범위 위반
        """
        values = dict(AGENT_DEFAULTS)
        values.update(ENV_AGENT_OVERRIDES.get(env_name, {}))
        values['q_features'] = dict(Q_FEATURES.get(env_name, {'kind': 'random_fourier', 'count': 300}))
        values['model'] = {}
        names = {f.name for f in fields(cls)}
        for key, value in (overrides or {}).items():
            if key not in names:
                raise ConfigError(f"에이전트 설정에 없는 키입니다: {key}")
            values[key] = value
        config = cls(**values)
        config.validate()
        return config

    def model_config(self, env_name: str, seed: int) -> ModelConfig:
        overrides = dict(self.model)
        overrides.setdefault('seed', seed)
        return ModelConfig.for_env(env_name, overrides)

    def to_dict(self) -> Dict[str, Any]:
        return {f.name: copy.deepcopy(getattr(self, f.name)) for f in fields(self)}


# ===== 행동 격자 =====

def default_action_grid(env: Env, size: int = 9) -> np.ndarray:
    """
    이산 환경은 행동 인덱스 전체, 연속 환경은 차원별 size개 균등 격자의 곱

    Returns:
        이산: (K,) int, 연속: (K, action_dim) float
    """
    if env.action_kind == 'discrete':
        return np.arange(env.n_actions)
    axes = [np.linspace(lo, hi, size) for lo, hi in zip(env.action_low, env.action_high)]
    return np.array(list(itertools.product(*axes)), dtype=float)


def action_indices(grid: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """데이터셋 행동 → 가장 가까운 격자 인덱스"""
    if grid.ndim == 1:
        idx = np.asarray(actions).reshape(-1).astype(np.int64)
        if np.any((idx < 0) | (idx >= len(grid))):
            raise ValueError(f"행동 인덱스가 범위를 벗어났습니다 (0..{len(grid) - 1})")
        return idx
    actions = np.asarray(actions, dtype=float).reshape(-1, grid.shape[1])
    distance = np.linalg.norm(actions[:, None, :] - grid[None, :, :], axis=2)
    return np.argmin(distance, axis=1)


# ===== 정책 =====

class Policy:
    """
    행동 격자 위의 정책 공통 클래스

    action_probs는 ε-soft 확률 (정확한 정책 평가용), act는 소유한 난수 생성기로 샘플링한다.
    """

    def __init__(self, grid: np.ndarray, epsilon: float = 0.0, seed=0):
        self.grid = np.asarray(grid)
        self.epsilon = float(epsilon)
        self.rng = np.random.default_rng(seed)

    @property
    def n_actions(self) -> int:
        return int(self.grid.shape[0])

    def base_probs(self, obs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _choose(self, obs: np.ndarray) -> int:
        probs = self.base_probs(obs[None, :])[0]
        return int(self.rng.choice(self.n_actions, p=probs))

    def action_probs(self, obs: np.ndarray) -> np.ndarray:
        obs = np.atleast_2d(np.asarray(obs, dtype=float))
        probs = self.base_probs(obs)
        if self.epsilon == 0.0:
            return probs
        return (1.0 - self.epsilon) * probs + self.epsilon / self.n_actions

    def act_index(self, obs: np.ndarray) -> int:
        obs = np.asarray(obs, dtype=float).reshape(-1)
        if self.epsilon > 0.0 and self.rng.random() < self.epsilon:
            return int(self.rng.integers(self.n_actions))
        return self._choose(obs)

    def act(self, obs: np.ndarray):
        index = self.act_index(obs)
        return int(self.grid[index]) if self.grid.ndim == 1 else self.grid[index].copy()

    def reseed(self, seed):
        self.rng = np.random.default_rng(seed)

    def with_epsilon(self, epsilon: float) -> "Policy":
        clone = copy.deepcopy(self)
        clone.epsilon = float(epsilon)
        return clone

    def greedy(self) -> "Policy":
        return self.with_epsilon(0.0)


class UniformPolicy(Policy):
    def base_probs(self, obs: np.ndarray) -> np.ndarray:
        obs = np.atleast_2d(obs)
        return np.full((obs.shape[0], self.n_actions), 1.0 / self.n_actions)

    def _choose(self, obs: np.ndarray) -> int:
        return int(self.rng.integers(self.n_actions))


class ScriptedPolicy(Policy):
    """관측(또는 상태) 하나 → 행동 인덱스 함수를 감싼 결정적 정책 (+ε)"""

    def __init__(self, rule: Callable[[np.ndarray], int], grid: np.ndarray, epsilon: float = 0.0,
                 seed=0, name: str = "scripted"):
        super().__init__(grid, epsilon, seed)
        self.rule = rule
        self.name = name

    def base_probs(self, obs: np.ndarray) -> np.ndarray:
        obs = np.atleast_2d(obs)
        probs = np.zeros((obs.shape[0], self.n_actions))
        for i, row in enumerate(obs):
            probs[i, int(self.rule(row))] = 1.0
        return probs

    def _choose(self, obs: np.ndarray) -> int:
        return int(self.rule(obs))


class FullStatePolicy(Policy):
    """특권 수집용: 전체 상태를 깨끗한 관측으로 바꿔 내부 정책에 전달"""

    def __init__(self, inner: Policy, observe: Callable[[np.ndarray], np.ndarray]):
        super().__init__(inner.grid, 0.0)
        self.inner = inner
        self.observe = observe

    def _observed(self, states: np.ndarray) -> np.ndarray:
        return np.array([self.observe(s) for s in np.atleast_2d(states)])

    def base_probs(self, obs: np.ndarray) -> np.ndarray:
        return self.inner.action_probs(self._observed(obs))

    def _choose(self, obs: np.ndarray) -> int:
        return self.inner.act_index(self.observe(obs))

    def reseed(self, seed):
        self.inner.reseed(seed)


class MarginalizedPolicy(Policy):
    """
    숨긴 입력을 주변분포에서 독립적으로 뽑은 값으로 바꿔 내부 정책을 호출

    특권 정책과 같은 주변 행동 분포를 갖지만 행동이 숨긴 변수와 독립인 (교란 없는) 대응 정책.

    Args:
        inner: 숨긴 값을 쓰는 정책
        index: 숨긴 관측 인덱스
        values: 숨긴 변수가 가질 수 있는 값
        probs: 각 값의 확률
    """

    def __init__(self, inner: Policy, index: int, values: Sequence[float], probs: Sequence[float], seed=0):
        super().__init__(inner.grid, 0.0, seed)
        self.inner = inner
        self.index = int(index)
        self.values = np.asarray(values, dtype=float)
        self.probs = np.asarray(probs, dtype=float)
        if not np.isclose(self.probs.sum(), 1.0):
            raise ValueError(f"주변분포 확률 합이 1이 아닙니다: {self.probs}")

    def _substituted(self, obs: np.ndarray, value: float) -> np.ndarray:
        replaced = np.array(obs, dtype=float, copy=True)
        replaced[..., self.index] = value
        return replaced

    def base_probs(self, obs: np.ndarray) -> np.ndarray:
        obs = np.atleast_2d(obs)
        total = np.zeros((obs.shape[0], self.n_actions))
        for value, p in zip(self.values, self.probs):
            total += p * self.inner.action_probs(self._substituted(obs, value))
        return total

    def _choose(self, obs: np.ndarray) -> int:
        value = self.values[self.rng.choice(len(self.values), p=self.probs)]
        return self.inner.act_index(self._substituted(obs, value))

    def reseed(self, seed):
        self.rng = np.random.default_rng(seed)
        self.inner.reseed([*np.atleast_1d(seed).tolist(), 1])


# ===== Q 함수 =====

class QFunction:
    """
    Q(o, a) = φ(o)ᵀ W[:, a]

    (o, 행동 one-hot)의 특징에 대한 선형 함수를 행동별 블록으로 저장한 형태.
    """

    def __init__(self, features: FeatureMap, n_actions: int, gamma: float, weights: Optional[np.ndarray] = None):
        self.features = features
        self.n_actions = int(n_actions)
        self.gamma = float(gamma)
        self.weights = np.zeros((features.output_dim, self.n_actions)) if weights is None else weights

    def values(self, obs: np.ndarray) -> np.ndarray:
        return self.features.transform(obs) @ self.weights

    def copy(self) -> "QFunction":
        return QFunction(self.features, self.n_actions, self.gamma, self.weights.copy())


def masked_argmax(values: np.ndarray, allowed: Optional[np.ndarray]) -> np.ndarray:
    """허용 행동 중 argmax, 허용 행동이 없는 행은 전체 argmax"""
    if allowed is None:
        return np.argmax(values, axis=1)
    allowed = allowed | ~allowed.any(axis=1, keepdims=True)
    return np.argmax(np.where(allowed, values, -np.inf), axis=1)


def masked_max(values: np.ndarray, allowed: Optional[np.ndarray]) -> np.ndarray:
    return values[np.arange(values.shape[0]), masked_argmax(values, allowed)]


def fitted_q_iteration(q: QFunction, batch: TransitionBatch, action_idx: np.ndarray,
                       iterations: int, ridge: float,
                       allowed_next: Optional[np.ndarray] = None) -> QFunction:
    """
    Bellman 타깃 r + γ·max_a' Q(o', a') (done이면 0)에 대한 반복 ridge 회귀

    Args:
        q: 시작 Q 함수 (warm start, 복사해서 사용)
        batch: 전이
        action_idx: 각 전이의 행동 격자 인덱스
        iterations: 반복 횟수
        ridge: ridge 계수
        allowed_next: (n, K) 다음 상태 허용 행동 마스크 (None이면 제한 없음)

    Returns:
        갱신된 QFunction
    """
    q = q.copy()
    if len(batch) == 0:
        return q
    phi = q.features.transform(batch.obs)
    phi_next = q.features.transform(batch.next_obs)
    not_done = ~batch.dones
    rows = {a: np.flatnonzero(action_idx == a) for a in range(q.n_actions)}
    rows = {a: idx for a, idx in rows.items() if len(idx)}
    # 행동별 Φ_a와 (Φ_aᵀΦ_a + ridge·I)⁻¹는 반복마다 같다
    phi_rows = {a: phi[idx] for a, idx in rows.items()}
    inverses = {a: ridge_inverse(phi_rows[a], ridge) for a in rows}
    del phi
    for _ in range(iterations):
        bootstrap = masked_max(phi_next @ q.weights, allowed_next)
        targets = batch.rewards + q.gamma * not_done * bootstrap
        weights = q.weights.copy()
        for a, idx in rows.items():
            weights[:, a] = inverses[a] @ (phi_rows[a].T @ targets[idx])
        q.weights = weights
    return q


class FittedQImprover:
    """정책 개선 서브루틴 (교체 가능한 인터페이스)"""

    def __init__(self, iterations: int, ridge: float):
        self.iterations = iterations
        self.ridge = ridge

    def __call__(self, q: QFunction, batch: TransitionBatch, action_idx: np.ndarray,
                 allowed_next: Optional[np.ndarray] = None) -> QFunction:
        return fitted_q_iteration(q, batch, action_idx, self.iterations, self.ridge, allowed_next)


PolicyImprover = Callable[..., QFunction]


class BehaviorModel:
    """
    특징 공간 칸별 경험적 행동 빈도

    tabular 특징이면 격자 칸, 연속 관측이면 차원별 bins 등분 칸을 쓴다.
    데이터에 없는 칸은 모든 확률이 0이다.
    """

    def __init__(self, n_actions: int, keys: np.ndarray, counts: np.ndarray,
                 features: Optional[FeatureMap] = None, edges: Optional[List[np.ndarray]] = None):
        self.n_actions = n_actions
        self.keys = keys
        self.counts = counts
        self.features = features
        self.edges = edges

    def _keys(self, obs: np.ndarray) -> np.ndarray:
        obs = np.atleast_2d(np.asarray(obs, dtype=float))
        if self.features is not None and self.features.kind == 'tabular':
            return self.features.cell_index(obs)
        if obs.shape[1] == 0:
            return np.zeros(obs.shape[0], dtype=np.int64)
        bins = np.stack([np.digitize(obs[:, d], self.edges[d]) for d in range(obs.shape[1])], axis=1)
        sizes = tuple(len(e) + 1 for e in self.edges)
        return np.ravel_multi_index(tuple(bins.T), sizes)

    @classmethod
    def fit(cls, obs: np.ndarray, action_idx: np.ndarray, n_actions: int, bins: int,
            features: Optional[FeatureMap] = None) -> "BehaviorModel":
        obs = np.atleast_2d(np.asarray(obs, dtype=float))
        edges = None
        if features is None or features.kind != 'tabular':
            edges = [np.linspace(obs[:, d].min(), obs[:, d].max(), bins + 1)[1:-1] for d in range(obs.shape[1])]
        model = cls(n_actions, np.zeros(0, dtype=np.int64), np.zeros((0, n_actions)), features, edges)
        keys, inverse = np.unique(model._keys(obs), return_inverse=True)
        counts = np.zeros((len(keys), n_actions))
        np.add.at(counts, (inverse.reshape(-1), action_idx), 1.0)
        model.keys, model.counts = keys, counts
        return model

    def probs(self, obs: np.ndarray) -> np.ndarray:
        query = self._keys(obs)
        out = np.zeros((len(query), self.n_actions))
        if len(self.keys) == 0:
            return out
        pos = np.clip(np.searchsorted(self.keys, query), 0, len(self.keys) - 1)
        found = self.keys[pos] == query
        counts = self.counts[pos[found]]
        out[found] = counts / counts.sum(axis=1, keepdims=True)
        return out

    def allowed(self, obs: np.ndarray, threshold: float) -> np.ndarray:
        return self.probs(obs) >= threshold


class QPolicy(Policy):
    """
    Q 함수에 대한 (ε-)greedy 정책

    behavior가 있으면 행동 정책 확률 ≥ threshold인 행동 중에서만 argmax (없으면 전체 argmax).
    """

    def __init__(self, q: QFunction, grid: np.ndarray, epsilon: float = 0.0, seed=0,
                 behavior: Optional[BehaviorModel] = None, threshold: float = 0.0):
        super().__init__(grid, epsilon, seed)
        self.q = q
        self.behavior = behavior
        self.threshold = float(threshold)

    def allowed(self, obs: np.ndarray) -> Optional[np.ndarray]:
        if self.behavior is None:
            return None
        return self.behavior.allowed(obs, self.threshold)

    def greedy_indices(self, obs: np.ndarray) -> np.ndarray:
        obs = np.atleast_2d(np.asarray(obs, dtype=float))
        return masked_argmax(self.q.values(obs), self.allowed(obs))

    def base_probs(self, obs: np.ndarray) -> np.ndarray:
        obs = np.atleast_2d(obs)
        probs = np.zeros((obs.shape[0], self.n_actions))
        probs[np.arange(obs.shape[0]), self.greedy_indices(obs)] = 1.0
        return probs

    def _choose(self, obs: np.ndarray) -> int:
        return int(self.greedy_indices(obs[None, :])[0])

    def act_indices(self, obs: np.ndarray) -> np.ndarray:
        """여러 관측에 대한 ε-greedy 인덱스 (모델 롤아웃용)"""
        greedy = self.greedy_indices(obs)
        if self.epsilon == 0.0:
            return greedy
        explore = self.rng.random(len(greedy)) < self.epsilon
        random_idx = self.rng.integers(0, self.n_actions, len(greedy))
        return np.where(explore, random_idx, greedy)


# ===== 평가 =====

def evaluate_policy(env: Env, policy: Policy, episodes: int, seed: int,
                    same_start: bool = False) -> Tuple[float, float]:
    """
    greedy(ε=0) 롤아웃의 에피소드 수익 평균/표준편차

    Args:
        env: 평가 환경
        policy: 정책 (복사본의 ε을 0으로 둔다)
        episodes: 에피소드 수 (1 이상)
        seed: 평가 시드
        same_start: True면 모든 에피소드를 같은 시드로 reset

    Returns:
        (평균 수익, 모표준편차) - 에피소드 1개면 표준편차 0
    """
    if episodes < 1:
        raise ValueError(f"episodes는 1 이상이어야 합니다: {episodes}")
    greedy = policy.greedy()
    greedy.reseed([seed, 9])
    rng = np.random.default_rng(seed)
    returns = []
    for _ in range(episodes):
        episode_seed = seed if same_start else int(rng.integers(0, 2 ** 31 - 1))
        obs = env.reset(episode_seed)
        total, done = 0.0, False
        while not done:
            result = env.step(greedy.act(obs))
            total += result.reward
            obs, done = result.obs, result.done
        returns.append(total)
    returns = np.asarray(returns)
    return float(returns.mean()), float(returns.std())


# ===== 학습 결과 =====

@dataclass
class Checkpoint:
    sweep: int
    q: QFunction
    buffer_size: int
    score: float


@dataclass
class RolloutTrace:
    """모델 롤아웃 기록 (전이 단위 배열)"""
    epoch: np.ndarray
    step: np.ndarray
    obs: np.ndarray
    actions: np.ndarray
    members: np.ndarray
    sim_next_obs: Optional[np.ndarray]
    delta: np.ndarray
    next_obs: np.ndarray
    reward: np.ndarray
    penalty: np.ndarray
    penalized_reward: np.ndarray
    dones: np.ndarray
    start_obs: np.ndarray
    penalty_coef: float

    def __len__(self) -> int:
        return int(self.reward.shape[0])


@dataclass
class TrainingResult:
    policy: QPolicy
    q: QFunction
    curve: List[float] = field(default_factory=list)
    checkpoints: List[Checkpoint] = field(default_factory=list)
    buffer: Optional[TransitionBatch] = None
    trace: Optional[RolloutTrace] = None
    ensemble: Optional[CorrectionEnsemble] = None


def _q_features(env: Env, config: AgentConfig, seed: int) -> FeatureMap:
    return build_feature_map(config.q_features, env.obs_dim, seed=seed, grid=env.obs_grid())


def _dataset_parts(dataset, env: Optional[Env]) -> Tuple[TransitionBatch, Env]:
    """Dataset 또는 TransitionBatch에서 (전이, 환경 템플릿)"""
    batch = dataset.batch if hasattr(dataset, 'batch') else dataset
    if len(batch) == 0:
        raise ValueError("빈 데이터셋으로는 학습할 수 없습니다")
    if env is None:
        if not hasattr(dataset, 'meta'):
            raise ValueError("TransitionBatch로 학습할 때는 env를 함께 넘겨야 합니다")
        env = make_env(dataset.meta.env_name, dataset.meta.env_params)
    if batch.obs_dim != env.obs_dim:
        raise ValueError(f"데이터셋 관측 차원({batch.obs_dim})이 환경({env.obs_dim})과 다릅니다")
    return batch, env


# ===== 온라인 =====

def train_online_q(env: Env, config: AgentConfig, seed: int, eval_env: Optional[Env] = None,
                   verbose: bool = False) -> TrainingResult:
    """
    ε-greedy 탐험으로 리플레이 버퍼를 쌓고 sweep마다 fitted-Q 회귀

    Args:
        env: 학습 환경 (시뮬레이터)
        config: 에이전트 설정
        seed: 학습 시드
        eval_env: sweep별 평가 환경 (기본값: env의 복사본)
        verbose: 진행 상황 출력

    Returns:
        TrainingResult (greedy 정책, sweep별 평가 점수, 체크포인트, 버퍼)
    """
    config.validate()
    eval_env = eval_env if eval_env is not None else copy.deepcopy(env)
    grid = default_action_grid(env, config.action_grid_size)
    q = QFunction(_q_features(env, config, seed), len(grid), config.gamma)
    policy = QPolicy(q, grid, epsilon=config.epsilon_start, seed=[seed, 1])
    improver = FittedQImprover(config.fq_iterations, config.ridge)
    buffer = TransitionBuffer(env.obs_dim, discrete=grid.ndim == 1)
    episode_rng = np.random.default_rng(seed)
    obs = env.reset(int(episode_rng.integers(0, 2 ** 31 - 1)))

    curve, checkpoints = [], []
    for sweep in range(config.sweeps):
        fraction = sweep / max(config.sweeps - 1, 1)
        policy.epsilon = config.epsilon_start + (config.epsilon_end - config.epsilon_start) * fraction
        for _ in range(config.steps_per_sweep):
            action = policy.act(obs)
            result = env.step(action)
            buffer.add(obs, action, result.reward, result.obs, result.done)
            obs = env.reset(int(episode_rng.integers(0, 2 ** 31 - 1))) if result.done else result.obs

        recent = buffer.to_batch()
        if len(recent) > config.batch_size:
            recent = recent.take(np.arange(len(recent) - config.batch_size, len(recent)))
        policy.q = improver(policy.q, recent, action_indices(grid, recent.actions))
        score, _ = evaluate_policy(eval_env, policy, config.eval_episodes, seed)
        curve.append(score)
        checkpoints.append(Checkpoint(sweep=sweep, q=policy.q.copy(), buffer_size=len(buffer), score=score))
        if verbose:
            print(f"  [{sweep + 1}/{config.sweeps}] ε={policy.epsilon:.2f} 버퍼 {len(buffer):,} 평가 수익 {score:.2f}")

    final = QPolicy(policy.q, grid, epsilon=0.0, seed=[seed, 2])
    return TrainingResult(policy=final, q=policy.q, curve=curve, checkpoints=checkpoints,
                          buffer=buffer.to_batch())


# ===== 오프라인 =====

def _offline_fit(batch: TransitionBatch, env: Env, config: AgentConfig, seed: int,
                 threshold: float) -> TrainingResult:
    grid = default_action_grid(env, config.action_grid_size)
    idx = action_indices(grid, batch.actions)
    q = QFunction(_q_features(env, config, seed), len(grid), config.gamma)
    behavior, allowed_next = None, None
    if threshold > 0.0:
        behavior = BehaviorModel.fit(batch.obs, idx, len(grid), config.bc_bins, q.features)
        allowed_next = behavior.allowed(batch.next_obs, threshold)
    q = fitted_q_iteration(q, batch, idx, config.fq_iterations, config.ridge, allowed_next)
    policy = QPolicy(q, grid, epsilon=0.0, seed=[seed, 2], behavior=behavior, threshold=threshold)
    return TrainingResult(policy=policy, q=q)


def train_offline_bcq(dataset, config: AgentConfig, seed: int = 0, env: Optional[Env] = None) -> TrainingResult:
    """
    행동 정책 제한 fitted-Q

    argmax는 행동 정책 빈도 ≥ τ(bc_threshold)인 행동으로 제한하고, 통과하는 행동이 없으면 전체 argmax.
    τ=0이면 제한 없는 fitted-Q와 같다.

    Args:
        dataset: Dataset 또는 TransitionBatch
        config: 에이전트 설정
        seed: 특징 시드
        env: 행동 격자/특징 격자를 줄 환경 (기본값: 데이터셋 메타로 생성)
    """
    config.validate()
    batch, env = _dataset_parts(dataset, env)
    return _offline_fit(batch, env, config, seed, config.bc_threshold)


# ===== 모델 기반 =====

def _train_model_based(batch: TransitionBatch, env: Env, config: AgentConfig, seed: int,
                       simulator: Optional[Env], eval_env: Optional[Env],
                       improver: Optional[PolicyImprover], verbose: bool) -> TrainingResult:
    config.validate()
    h, b = config.rollout_horizon, config.rollout_batch
    if h == 0 or b == 0:
        return _offline_fit(batch, env, config, seed, threshold=0.0)

    model_config = config.model_config(env.name, seed)
    if simulator is not None:
        if verbose:
            print("  o'_sim 계산 후 보정 앙상블 학습 중...")
        ensemble = fit_correction_ensemble(augment_with_sim(batch, simulator), model_config, env)
    else:
        if verbose:
            print("  직접 예측 앙상블 학습 중...")
        ensemble = fit_direct_ensemble(batch, model_config, env)

    grid = default_action_grid(env, config.action_grid_size)
    data_idx = action_indices(grid, batch.actions)
    improver = improver or FittedQImprover(config.fq_iterations, config.ridge)
    q = QFunction(_q_features(env, config, seed), len(grid), config.gamma)
    policy = QPolicy(q, grid, epsilon=config.rollout_epsilon, seed=[seed, 4])
    rng = np.random.default_rng([seed, 3])
    n = len(batch)
    lam = config.penalty_coef

    log: Dict[str, List[np.ndarray]] = {k: [] for k in (
        'epoch', 'step', 'obs', 'actions', 'members', 'sim_next_obs', 'delta', 'next_obs',
        'reward', 'penalty', 'penalized_reward', 'dones', 'start_obs', 'idx')}
    model_batches: List[TransitionBatch] = []
    curve = []

    for epoch in range(config.model_epochs):
        start_rows = rng.integers(0, n, b)
        obs = batch.obs[start_rows]
        log['start_obs'].append(obs.copy())
        for step in range(h):
            if len(obs) == 0:
                break
            idx = policy.act_indices(obs)
            actions = grid[idx]
            sim_next = simulator.simulate_from_obs(obs, actions) if simulator is not None else None
            members = rng.integers(0, ensemble.n_members, len(obs))
            delta, reward = ensemble.sample(members, obs, actions, sim_next, rng)
            next_obs = sim_next + delta if sim_next is not None else delta
            pen = ensemble.penalty(obs, actions)
            penalized = reward - lam * pen
            dones = np.asarray(env.is_terminal_obs(next_obs), dtype=bool)

            for key, value in (('epoch', np.full(len(obs), epoch)), ('step', np.full(len(obs), step)),
                               ('obs', obs), ('actions', actions), ('members', members),
                               ('delta', delta), ('next_obs', next_obs), ('reward', reward),
                               ('penalty', pen), ('penalized_reward', penalized), ('dones', dones),
                               ('idx', idx)):
                log[key].append(value)
            log['sim_next_obs'].append(sim_next if sim_next is not None else np.full_like(next_obs, np.nan))
            model_batches.append(TransitionBatch(obs=obs, actions=actions, rewards=penalized,
                                                 next_obs=next_obs, dones=dones))
            obs = next_obs[~dones]

        # 𝒟 ∪ 𝒟_model 혼합 배치
        model_data = TransitionBatch.concatenate(model_batches)
        model_idx_all = np.concatenate(log['idx'])
        total = min(config.batch_size, n + len(model_data))
        n_model = min(int(round(config.model_ratio * total)), len(model_data))
        n_real = total - n_model
        real_rows = rng.choice(n, n_real, replace=n_real > n)
        model_rows = rng.choice(len(model_data), n_model, replace=False)
        mixed = TransitionBatch.concatenate([batch.take(real_rows), model_data.take(model_rows)])
        mixed_idx = np.concatenate([data_idx[real_rows], model_idx_all[model_rows]])
        policy.q = improver(policy.q, mixed, mixed_idx)

        if eval_env is not None:
            score, _ = evaluate_policy(eval_env, policy, config.eval_episodes, seed)
        else:
            score = float(np.mean(np.concatenate(log['penalized_reward'])))
        curve.append(score)
        if verbose:
            print(f"  [{epoch + 1}/{config.model_epochs}] 모델 전이 {len(model_data):,} 점수 {score:.3f}")

    trace = RolloutTrace(
        epoch=np.concatenate(log['epoch']),
        step=np.concatenate(log['step']),
        obs=np.concatenate(log['obs']),
        actions=np.concatenate(log['actions']),
        members=np.concatenate(log['members']),
        sim_next_obs=np.concatenate(log['sim_next_obs']) if simulator is not None else None,
        delta=np.concatenate(log['delta']),
        next_obs=np.concatenate(log['next_obs']),
        reward=np.concatenate(log['reward']),
        penalty=np.concatenate(log['penalty']),
        penalized_reward=np.concatenate(log['penalized_reward']),
        dones=np.concatenate(log['dones']),
        start_obs=np.concatenate(log['start_obs']),
        penalty_coef=lam,
    )
    final = QPolicy(policy.q, grid, epsilon=0.0, seed=[seed, 2])
    return TrainingResult(policy=final, q=policy.q, curve=curve, trace=trace, ensemble=ensemble)


def train_mopo_lite(dataset, config: AgentConfig, seed: int = 0, env: Optional[Env] = None,
                    eval_env: Optional[Env] = None, improver: Optional[PolicyImprover] = None,
                    verbose: bool = False) -> TrainingResult:
    """
    직접 예측 앙상블로 h스텝 패널티 롤아웃 후 𝒟 ∪ 𝒟_model에서 fitted-Q

    h=0 또는 b=0이면 모델을 학습하지 않고 제한 없는 오프라인 fitted-Q를 돌려준다.
    """
    batch, env = _dataset_parts(dataset, env)
    return _train_model_based(batch, env, config, seed, None, eval_env, improver, verbose)


def train_hymopo(dataset, simulator: Env, config: AgentConfig, seed: int = 0,
                 env: Optional[Env] = None, eval_env: Optional[Env] = None,
                 improver: Optional[PolicyImprover] = None, verbose: bool = False) -> TrainingResult:
    """
    하이브리드 학습 루프

    1. 데이터셋 각 전이에 o'_sim = T_sim(o, a) 추가
    2. (Δo', r) 보정 앙상블 학습
    3. epoch마다 데이터셋에서 시작 관측 b개를 뽑아 h스텝 롤아웃
       (스텝마다 전이별로 멤버 무작위 선택, o_{j+1} = o'_sim + Δo', r̃ = r - λ·penalty)
    4. 𝒟 ∪ 𝒟_model 혼합 배치로 정책 개선

    Args:
        dataset: Dataset 또는 TransitionBatch
        simulator: sim2real 오차가 있는 시뮬레이터 (simulate_from_obs 제공)
        config: 에이전트 설정 (penalty_coef=λ, rollout_horizon=h, rollout_batch=b, model.n_members=N)
        seed: 시드
        env: 환경 템플릿 (기본값: simulator)
        eval_env: epoch별 평가 환경 (없으면 곡선은 평균 패널티 보상)
        improver: 정책 개선 서브루틴 (기본값: fitted-Q)
        verbose: 진행 상황 출력

    Returns:
        TrainingResult (trace에 롤아웃 기록)
    """
    batch, env = _dataset_parts(dataset, env if env is not None else simulator)
    return _train_model_based(batch, env, config, seed, simulator, eval_env, improver, verbose)


# ===== 저장 =====

def save_policy(policy: QPolicy, path: str):
    header = {
        'format_version': POLICY_FORMAT_VERSION,
        'features': policy.q.features.to_dict(),
        'gamma': policy.q.gamma,
        'epsilon': policy.epsilon,
        'threshold': policy.threshold,
        'has_behavior': policy.behavior is not None,
    }
    arrays = {'header': np.array(json.dumps(header)), 'weights': policy.q.weights, 'grid': policy.grid}
    if policy.behavior is not None:
        arrays['behavior_keys'] = policy.behavior.keys
        arrays['behavior_counts'] = policy.behavior.counts
        for d, edges in enumerate(policy.behavior.edges or []):
            arrays[f'behavior_edges_{d}'] = edges
        header['n_edges'] = len(policy.behavior.edges or [])
        arrays['header'] = np.array(json.dumps(header))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as f:
        np.savez(f, **arrays)


def load_policy(path: str) -> QPolicy:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data['header']))
        if header.get('format_version') != POLICY_FORMAT_VERSION:
            raise ValueError(f"정책 파일 버전이 다릅니다: {header.get('format_version')} (기대값 {POLICY_FORMAT_VERSION})")
        features = FeatureMap.from_dict(header['features'])
        grid = data['grid']
        q = QFunction(features, grid.shape[0], header['gamma'], data['weights'])
        behavior = None
        if header['has_behavior']:
            edges = [data[f'behavior_edges_{d}'] for d in range(header['n_edges'])] or None
            behavior = BehaviorModel(grid.shape[0], data['behavior_keys'], data['behavior_counts'],
                                     features=features, edges=edges)
        return QPolicy(q, grid, epsilon=header['epsilon'], behavior=behavior, threshold=header['threshold'])
