"""
확률적 앙상블 동역학 모델

- direct: (o, a) → (o', r)
- correction: (o, a) → (Δo' = o' - o'_sim, r), 예측 시 o'_sim + Δo'

각 멤버는 고정 랜덤 특징 위의 ridge 회귀이고, 분산은 멤버별/차원별 상수(holdout 잔차 평균제곱).
"""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from core.config import MODEL_DEFAULTS, MODEL_FEATURES, MODEL_FORMAT_VERSION
from core.environments import Env
from core.errors import ConfigError, SingularModelError
from core.features import FeatureMap, build_feature_map
from core.transitions import TransitionBatch

MODEL_MODES = ('direct', 'correction')
PENALTY_MODES = ('frobenius', 'disagreement')


# ===== 설정 =====

@dataclass
class ModelConfig:
    n_members: int = MODEL_DEFAULTS['n_members']
    ridge: float = MODEL_DEFAULTS['ridge']
    holdout_fraction: float = MODEL_DEFAULTS['holdout_fraction']
    bootstrap: bool = MODEL_DEFAULTS['bootstrap']
    penalty_mode: str = MODEL_DEFAULTS['penalty_mode']
    features: Dict[str, Any] = field(default_factory=lambda: {'kind': 'random_fourier', 'count': 200})
    seed: int = 0

    def validate(self):
        if self.n_members < 1:
            raise ConfigError(f"n_members는 1 이상이어야 합니다: {self.n_members}")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ConfigError(f"holdout_fraction은 [0, 1) 범위여야 합니다: {self.holdout_fraction}")
        if self.penalty_mode not in PENALTY_MODES:
            raise ConfigError(f"알 수 없는 penalty_mode입니다: {self.penalty_mode}")

    @classmethod
    def for_env(cls, env_name: str, overrides: Optional[Dict[str, Any]] = None) -> "ModelConfig":
        values = dict(MODEL_DEFAULTS)
        values['features'] = dict(MODEL_FEATURES.get(env_name, {'kind': 'random_fourier', 'count': 200}))
        for key, value in (overrides or {}).items():
            if key not in cls.__dataclass_fields__:
                raise ConfigError(f"모델 설정에 없는 키입니다: {key}")
            values[key] = value
        config = cls(**values)
        config.validate()
        return config


# ===== ridge 회귀 =====

def _regularized_gram(features: np.ndarray, ridge: float) -> np.ndarray:
    gram = features.T @ features
    if ridge > 0:
        return gram + ridge * np.eye(gram.shape[0])
    if np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise SingularModelError(
            f"정규방정식이 특이 행렬입니다 (ridge={ridge}, 특징 {gram.shape[0]}개, 샘플 {features.shape[0]}개)")
    return gram


def solve_ridge(features: np.ndarray, targets: np.ndarray, ridge: float) -> np.ndarray:
    """
    (ΦᵀΦ + ridge·I) W = ΦᵀY 풀이

    Raises:
        SingularModelError: 정규방정식이 특이 행렬일 때 (사용한 ridge 값을 메시지에 포함)
    """
    gram = _regularized_gram(features, ridge)
    try:
        return np.linalg.solve(gram, features.T @ targets)
    except np.linalg.LinAlgError as e:
        raise SingularModelError(f"정규방정식을 풀 수 없습니다 (ridge={ridge}): {e}") from e


def ridge_inverse(features: np.ndarray, ridge: float) -> np.ndarray:
    """(ΦᵀΦ + ridge·I)⁻¹ - 같은 특징으로 타깃만 바꿔 반복 회귀할 때 사용"""
    gram = _regularized_gram(features, ridge)
    try:
        return np.linalg.inv(gram)
    except np.linalg.LinAlgError as e:
        raise SingularModelError(f"정규방정식을 풀 수 없습니다 (ridge={ridge}): {e}") from e


@dataclass
class GaussianRegressor:
    features: FeatureMap
    weights: np.ndarray        # (feature_dim, target_dim)
    noise_var: np.ndarray      # (target_dim,)
    ridge: float

    def mean(self, inputs: np.ndarray) -> np.ndarray:
        return self.features.transform(inputs) @ self.weights

    @classmethod
    def fit(cls, features: FeatureMap, inputs: np.ndarray, targets: np.ndarray, ridge: float,
            holdout_inputs: Optional[np.ndarray] = None,
            holdout_targets: Optional[np.ndarray] = None) -> "GaussianRegressor":
        weights = solve_ridge(features.transform(inputs), targets, ridge)
        member = cls(features=features, weights=weights, noise_var=np.zeros(targets.shape[1]), ridge=ridge)
        if holdout_inputs is None or len(holdout_inputs) == 0:
            holdout_inputs, holdout_targets = inputs, targets
        residual = holdout_targets - member.mean(holdout_inputs)
        member.noise_var = np.mean(residual ** 2, axis=0)
        return member


# ===== 데이터 준비 =====

@dataclass
class AugmentedBatch:
    """o'_sim이 추가된 전이 묶음"""
    batch: TransitionBatch
    sim_next_obs: np.ndarray

    def __len__(self) -> int:
        return len(self.batch)

    def take(self, indices: np.ndarray) -> "AugmentedBatch":
        return AugmentedBatch(self.batch.take(indices), self.sim_next_obs[indices])


def model_inputs(obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """모델 입력 = [o, a] (이산 행동은 인덱스 한 열)"""
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    actions = np.asarray(actions, dtype=float).reshape(obs.shape[0], -1)
    return np.hstack([obs, actions])


def augment_with_sim(batch: TransitionBatch, simulator: Env) -> AugmentedBatch:
    """
    각 전이에 시뮬레이터 한 스텝 예측 o'_sim = T_sim(o, a)를 붙임

    Args:
        batch: 데이터셋 전이
        simulator: simulate_from_obs를 제공하는 환경 (sim2real 래퍼 포함 가능)

    Returns:
        AugmentedBatch
    """
    if batch.obs_dim != simulator.obs_dim:
        raise ValueError(f"데이터셋 관측 차원({batch.obs_dim})과 시뮬레이터 관측 차원({simulator.obs_dim})이 다릅니다")
    sim_next = simulator.simulate_from_obs(batch.obs, batch.actions)
    return AugmentedBatch(batch=batch, sim_next_obs=np.asarray(sim_next, dtype=float).reshape(len(batch), -1))


# ===== 앙상블 =====

@dataclass
class CorrectionEnsemble:
    members: List[GaussianRegressor]
    mode: str
    obs_dim: int
    penalty_mode: str = 'disagreement'
    holdout_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def n_members(self) -> int:
        return len(self.members)

    def _check_sim(self, sim_next_obs):
        if self.mode == 'correction' and sim_next_obs is None:
            raise ValueError("correction 모드 예측에는 o'_sim이 필요합니다")

    def _split(self, raw: np.ndarray, sim_next_obs: Optional[np.ndarray]):
        next_part = raw[..., :self.obs_dim]
        if self.mode == 'correction':
            next_part = np.asarray(sim_next_obs, dtype=float) + next_part
        return next_part, raw[..., self.obs_dim]

    def member_means(self, obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """멤버별 원시 출력 평균 (N, n, target_dim)"""
        inputs = model_inputs(obs, actions)
        return np.stack([m.mean(inputs) for m in self.members])

    def predict(self, member: int, obs: np.ndarray, actions: np.ndarray,
                sim_next_obs: Optional[np.ndarray] = None):
        """
        멤버 하나의 평균 예측

        Returns:
            (다음 관측 평균, 보상 평균, 차원별 분산)
        """
        self._check_sim(sim_next_obs)
        regressor = self.members[member]
        raw = regressor.mean(model_inputs(obs, actions))
        next_obs, reward = self._split(raw, sim_next_obs)
        return next_obs, reward, regressor.noise_var.copy()

    def sample(self, members: np.ndarray, obs: np.ndarray, actions: np.ndarray,
               sim_next_obs: Optional[np.ndarray], rng: np.random.Generator):
        """
        전이별로 지정한 멤버에서 (Δo' 또는 o', r) 샘플링

        Returns:
            (raw 샘플 중 관측 부분, 보상) - correction 모드에서 관측 부분은 Δo'
        """
        self._check_sim(sim_next_obs)
        members = np.asarray(members, dtype=np.int64).reshape(-1)
        inputs = model_inputs(obs, actions)
        raw = np.empty((inputs.shape[0], self.obs_dim + 1))
        for i in np.unique(members):
            rows = members == i
            regressor = self.members[i]
            mu = regressor.mean(inputs[rows])
            raw[rows] = mu + rng.standard_normal(mu.shape) * np.sqrt(regressor.noise_var)
        return raw[:, :self.obs_dim], raw[:, self.obs_dim]

    def penalty(self, obs: np.ndarray, actions: np.ndarray, mode: Optional[str] = None) -> np.ndarray:
        return penalty(self, obs, actions, mode or self.penalty_mode)

    def save(self, path: str):
        save_ensemble(self, path)


def penalty(ensemble: CorrectionEnsemble, obs: np.ndarray, actions: np.ndarray,
            mode: str = 'disagreement') -> np.ndarray:
    """
    불확실성 패널티 (샘플별, 0 이상)

    - frobenius: maxᵢ √(Σ_d noise_varⁱ_d)
    - disagreement: maxᵢ ‖μⁱ(o,a) - mean_j μʲ(o,a)‖
    """
    n = np.atleast_2d(np.asarray(obs, dtype=float)).shape[0]
    if mode == 'frobenius':
        value = max(float(np.sqrt(np.sum(m.noise_var))) for m in ensemble.members)
        return np.full(n, value)
    if mode == 'disagreement':
        means = ensemble.member_means(obs, actions)
        spread = np.linalg.norm(means - means.mean(axis=0, keepdims=True), axis=2)
        return spread.max(axis=0)
    raise ValueError(f"알 수 없는 패널티 모드입니다: {mode} (사용 가능: {', '.join(PENALTY_MODES)})")


def _fit_ensemble(inputs: np.ndarray, targets: np.ndarray, config: ModelConfig, mode: str,
                  obs_dim: int, grid: Optional[tuple]) -> CorrectionEnsemble:
    config.validate()
    n = inputs.shape[0]
    if n == 0:
        raise ValueError("빈 데이터로는 모델을 학습할 수 없습니다")
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(n)
    n_holdout = int(round(n * config.holdout_fraction)) if n > 1 else 0
    holdout, train = order[:n_holdout], order[n_holdout:]

    members = []
    for i in range(config.n_members):
        member_rng = np.random.default_rng([config.seed, i])
        rows = train[member_rng.integers(0, len(train), len(train))] if config.bootstrap else train
        features = build_feature_map(config.features, inputs.shape[1],
                                     seed=int(member_rng.integers(0, 2 ** 31 - 1)), grid=grid)
        members.append(GaussianRegressor.fit(
            features, inputs[rows], targets[rows], config.ridge,
            holdout_inputs=inputs[holdout], holdout_targets=targets[holdout],
        ))
    return CorrectionEnsemble(members=members, mode=mode, obs_dim=obs_dim,
                              penalty_mode=config.penalty_mode, holdout_indices=holdout)


def model_grid(env: Optional[Env]) -> Optional[tuple]:
    """tabular 모델 입력 격자 = 관측 격자 + 행동 인덱스"""
    if env is None or env.obs_grid() is None:
        return None
    lows, sizes = env.obs_grid()
    return np.append(lows, 0.0), np.append(sizes, env.n_actions)


def fit_correction_ensemble(augmented: AugmentedBatch, config: ModelConfig,
                            env: Optional[Env] = None) -> CorrectionEnsemble:
    """
    잔차 (Δo' = o' - o'_sim, r) 앙상블 학습

    Args:
        augmented: augment_with_sim 결과
        config: 모델 설정
        env: tabular 특징의 격자 정보를 줄 환경 (연속 특징이면 불필요)

    Returns:
        correction 모드 앙상블
    """
    batch = augmented.batch
    inputs = model_inputs(batch.obs, batch.actions)
    targets = np.hstack([batch.next_obs - augmented.sim_next_obs, batch.rewards[:, None]])
    return _fit_ensemble(inputs, targets, config, 'correction', batch.obs_dim, model_grid(env))


def fit_direct_ensemble(batch: TransitionBatch, config: ModelConfig,
                        env: Optional[Env] = None) -> CorrectionEnsemble:
    """(o', r) 직접 예측 앙상블 학습"""
    inputs = model_inputs(batch.obs, batch.actions)
    targets = np.hstack([batch.next_obs, batch.rewards[:, None]])
    return _fit_ensemble(inputs, targets, config, 'direct', batch.obs_dim, model_grid(env))


# ===== 저장 =====

def save_ensemble(ensemble: CorrectionEnsemble, path: str):
    header = {
        'format_version': MODEL_FORMAT_VERSION,
        'mode': ensemble.mode,
        'obs_dim': ensemble.obs_dim,
        'penalty_mode': ensemble.penalty_mode,
        'members': [{'features': m.features.to_dict(), 'ridge': m.ridge} for m in ensemble.members],
    }
    arrays = {'header': np.array(json.dumps(header)), 'holdout_indices': ensemble.holdout_indices}
    for i, m in enumerate(ensemble.members):
        arrays[f'weights_{i}'] = m.weights
        arrays[f'noise_var_{i}'] = m.noise_var
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as f:
        np.savez(f, **arrays)


def load_ensemble(path: str) -> CorrectionEnsemble:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data['header']))
        if header.get('format_version') != MODEL_FORMAT_VERSION:
            raise ValueError(f"모델 파일 버전이 다릅니다: {header.get('format_version')} (기대값 {MODEL_FORMAT_VERSION})")
        members = [
            GaussianRegressor(
                features=FeatureMap.from_dict(spec['features']),
                weights=data[f'weights_{i}'],
                noise_var=data[f'noise_var_{i}'],
                ridge=spec['ridge'],
            )
            for i, spec in enumerate(header['members'])
        ]
        return CorrectionEnsemble(members=members, mode=header['mode'], obs_dim=header['obs_dim'],
                                  penalty_mode=header['penalty_mode'],
                                  holdout_indices=data['holdout_indices'])
