"""
sim2real 오차 주입 래퍼

전이 파라미터 변경, 관측 노이즈, 관측 차원 숨김(0으로 고정), 행동 노이즈, 행동 지연.
래퍼는 관측 공간/행동 공간/horizon/done 의미를 바꾸지 않으며,
full_state()는 항상 모든 래퍼를 우회한다.
"""
import copy
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from core.environments import Env, StepResult
from core.errors import ConfigError

# 노이즈 전용 난수 스트림 (동역학 난수와 분리)
OBS_NOISE_STREAM = 1
ACTION_NOISE_STREAM = 2


class EnvWrapper(Env):
    """
    환경 래퍼 기본 클래스

    하위 클래스는 observation(obs), action(a), _on_reset(seed)만 필요에 따라 재정의한다.
    """

    def __init__(self, env: Env):
        self.env = env

    # --- 위임 속성 ---

    @property
    def name(self) -> str:
        return self.env.name

    @property
    def action_kind(self) -> str:
        return self.env.action_kind

    @property
    def obs_dim(self) -> int:
        return self.env.obs_dim

    @property
    def state_dim(self) -> int:
        return self.env.state_dim

    @property
    def n_actions(self) -> int:
        return self.env.n_actions

    @property
    def action_dim(self) -> int:
        return self.env.action_dim

    @property
    def params(self):
        return self.env.params

    @property
    def horizon(self) -> int:
        return self.env.horizon

    @property
    def unwrapped(self) -> Env:
        return self.env.unwrapped

    @property
    def action_low(self):
        return self.env.action_low

    @property
    def action_high(self):
        return self.env.action_high

    # --- 수명 주기 ---

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        obs = self.env.reset(seed)
        self._on_reset(seed)
        return self.observation(obs)

    def step(self, action) -> StepResult:
        result = self.env.step(self.action(action))
        return StepResult(obs=self.observation(result.obs), reward=result.reward, done=result.done)

    def _on_reset(self, seed: int):
        pass

    def observation(self, obs: np.ndarray) -> np.ndarray:
        return obs

    def action(self, action):
        return action

    # --- 특권 채널 / 시뮬레이터 인터페이스 ---

    def full_state(self) -> np.ndarray:
        return self.env.full_state()

    def observe_state(self, state: np.ndarray) -> np.ndarray:
        return self.env.observe_state(state)

    def simulate_from_obs(self, obs: np.ndarray, actions) -> np.ndarray:
        return self.env.simulate_from_obs(obs, actions)

    def is_terminal_obs(self, obs: np.ndarray) -> np.ndarray:
        return self.env.is_terminal_obs(obs)

    def null_action(self):
        return self.env.null_action()

    def obs_grid(self):
        return self.env.obs_grid()

    @property
    def label(self) -> str:
        return type(self).__name__

    def with_params(self, overrides: Dict[str, Any]) -> Env:
        return self.rewrap(self.env.with_params(overrides))

    def params_dict(self) -> Dict[str, Any]:
        return self.env.params_dict()

    def rewrap(self, inner: Env) -> "EnvWrapper":
        clone = copy.copy(self)
        clone.env = inner
        return clone


def _noise_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), stream])


class ObsNoiseWrapper(EnvWrapper):
    def __init__(self, env: Env, sigma: float):
        if sigma < 0:
            raise ValueError(f"관측 노이즈 σ는 0 이상이어야 합니다: {sigma}")
        super().__init__(env)
        self.sigma = float(sigma)
        self.noise_rng: Optional[np.random.Generator] = None

    def _on_reset(self, seed: int):
        self.noise_rng = _noise_rng(seed, OBS_NOISE_STREAM)

    def observation(self, obs: np.ndarray) -> np.ndarray:
        if self.sigma == 0.0:
            return obs
        return obs + self.noise_rng.normal(0.0, self.sigma, size=obs.shape)

    @property
    def label(self) -> str:
        return f"obsnoise{self.sigma:g}"


class HiddenDimsWrapper(EnvWrapper):
    def __init__(self, env: Env, indices: Iterable[int]):
        super().__init__(env)
        self.indices = tuple(sorted({int(i) for i in indices}))
        bad = [i for i in self.indices if not 0 <= i < env.obs_dim]
        if bad:
            raise ValueError(f"숨길 관측 인덱스가 범위를 벗어났습니다: {bad} (관측 차원 {env.obs_dim})")

    def observation(self, obs: np.ndarray) -> np.ndarray:
        if not self.indices:
            return obs
        hidden = np.array(obs, dtype=float, copy=True)
        hidden[..., list(self.indices)] = 0.0
        return hidden

    def simulate_from_obs(self, obs: np.ndarray, actions) -> np.ndarray:
        # 숨긴 값은 0으로 읽고, 예측에서도 0으로 돌려준다
        return self.observation(self.env.simulate_from_obs(self.observation(obs), actions))

    @property
    def label(self) -> str:
        return "hide" + "-".join(str(i) for i in self.indices)


class ActionNoiseWrapper(EnvWrapper):
    def __init__(self, env: Env, sigma: float):
        if env.action_kind != "continuous":
            raise ValueError(f"행동 노이즈는 연속 행동 환경에만 적용할 수 있습니다: {env.name}")
        if sigma < 0:
            raise ValueError(f"행동 노이즈 σ는 0 이상이어야 합니다: {sigma}")
        super().__init__(env)
        self.sigma = float(sigma)
        self.noise_rng: Optional[np.random.Generator] = None
        self.last_executed_action: Optional[np.ndarray] = None

    def _on_reset(self, seed: int):
        self.noise_rng = _noise_rng(seed, ACTION_NOISE_STREAM)

    def action(self, action):
        if self.sigma == 0.0:
            self.last_executed_action = np.asarray(action, dtype=float)
            return action
        action = np.asarray(action, dtype=float).reshape(-1)
        noisy = action + self.noise_rng.normal(0.0, self.sigma, size=action.shape)
        executed = np.clip(noisy, self.env.action_low, self.env.action_high)
        self.last_executed_action = executed
        return executed

    @property
    def label(self) -> str:
        return f"actnoise{self.sigma:g}"


class ActionDelayWrapper(EnvWrapper):
    def __init__(self, env: Env, delay: int):
        if int(delay) < 0:
            raise ValueError(f"행동 지연은 0 이상이어야 합니다: {delay}")
        super().__init__(env)
        self.delay = int(delay)
        self.queue: deque = deque()

    def _on_reset(self, seed: int):
        self.queue = deque(self.env.null_action() for _ in range(self.delay))

    def action(self, action):
        if self.delay == 0:
            return action
        self.queue.append(action)
        return self.queue.popleft()

    @property
    def label(self) -> str:
        return f"delay{self.delay}"


class HistoryWindow:
    """
    최근 k개 관측을 이어 붙인 창 (에피소드 시작은 0으로 패딩)
    """

    def __init__(self, k: int, obs_dim: int):
        if int(k) < 1:
            raise ValueError(f"히스토리 길이 k는 1 이상이어야 합니다: {k}")
        self.k = int(k)
        self.obs_dim = obs_dim
        self.frames: deque = deque(maxlen=self.k)

    def reset(self, obs: np.ndarray) -> np.ndarray:
        self.frames = deque((np.zeros(self.obs_dim) for _ in range(self.k - 1)), maxlen=self.k)
        self.frames.append(np.asarray(obs, dtype=float))
        return self.current()

    def push(self, obs: np.ndarray) -> np.ndarray:
        self.frames.append(np.asarray(obs, dtype=float))
        return self.current()

    def current(self) -> np.ndarray:
        return np.concatenate(list(self.frames))


class ObsHistoryWrapper(EnvWrapper):
    """관측을 최근 k개 관측의 연결로 바꾼다 (히스토리 기반 행동 정책 학습용)"""

    def __init__(self, env: Env, k: int):
        super().__init__(env)
        self.window = HistoryWindow(k, env.obs_dim)

    @property
    def obs_dim(self) -> int:
        return self.env.obs_dim * self.window.k

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        return self.window.reset(self.env.reset(seed))

    def step(self, action) -> StepResult:
        result = self.env.step(action)
        return StepResult(obs=self.window.push(result.obs), reward=result.reward, done=result.done)

    def simulate_from_obs(self, obs: np.ndarray, actions) -> np.ndarray:
        raise ValueError("히스토리 관측에서는 시뮬레이터 상태를 복원하지 않습니다")

    def is_terminal_obs(self, obs: np.ndarray) -> np.ndarray:
        obs = np.atleast_2d(np.asarray(obs, dtype=float))
        return self.env.is_terminal_obs(obs[:, -self.env.obs_dim:] if self.env.obs_dim else obs[:, :0])

    def obs_grid(self):
        grid = self.env.obs_grid()
        if grid is None:
            return None
        lows, sizes = grid
        return np.tile(lows, self.window.k), np.tile(sizes, self.window.k)

    @property
    def label(self) -> str:
        return f"history{self.window.k}"


# ===== 선언적 명세 =====

PERTURB_KINDS = {
    'transition': {'overrides'},
    'obs_noise': {'sigma'},
    'hidden_dims': {'indices'},
    'action_noise': {'sigma'},
    'action_delay': {'delay'},
}

# 바깥 래퍼일수록 큰 값
_CANONICAL_ORDER = {'transition': 0, 'action_noise': 1, 'action_delay': 2, 'obs_noise': 3, 'hidden_dims': 4}


@dataclass
class PerturbSpec:
    kind: str
    overrides: Dict[str, Any] = field(default_factory=dict)
    sigma: float = 0.0
    indices: Tuple[int, ...] = ()
    delay: int = 0

    def validate(self):
        if self.kind not in PERTURB_KINDS:
            raise ConfigError(f"알 수 없는 perturbation 종류입니다: {self.kind} (사용 가능: {', '.join(PERTURB_KINDS)})")
        if self.sigma < 0:
            raise ConfigError(f"σ는 0 이상이어야 합니다: {self.sigma}")
        if self.delay < 0:
            raise ConfigError(f"지연은 0 이상이어야 합니다: {self.delay}")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PerturbSpec":
        if not isinstance(data, dict) or 'kind' not in data:
            raise ConfigError(f"perturbation 항목에는 kind가 필요합니다: {data}")
        kind = data['kind']
        allowed = PERTURB_KINDS.get(kind)
        if allowed is None:
            raise ConfigError(f"알 수 없는 perturbation 종류입니다: {kind}")
        unknown = sorted(set(data) - allowed - {'kind'})
        if unknown:
            raise ConfigError(f"{kind}에 허용되지 않는 키입니다: {', '.join(unknown)}")
        spec = cls(
            kind=kind,
            overrides=dict(data.get('overrides') or {}),
            sigma=float(data.get('sigma', 0.0)),
            indices=tuple(int(i) for i in data.get('indices', ())),
            delay=int(data.get('delay', 0)),
        )
        spec.validate()
        return spec

    def to_dict(self) -> Dict[str, Any]:
        if self.kind == 'transition':
            return {'kind': self.kind, 'overrides': dict(self.overrides)}
        if self.kind in ('obs_noise', 'action_noise'):
            return {'kind': self.kind, 'sigma': self.sigma}
        if self.kind == 'hidden_dims':
            return {'kind': self.kind, 'indices': list(self.indices)}
        return {'kind': self.kind, 'delay': self.delay}

    @property
    def label(self) -> str:
        if self.kind == 'transition':
            return "+".join(f"{k}={v}" for k, v in sorted(self.overrides.items())) or "identity"
        if self.kind == 'obs_noise':
            return f"obsnoise{self.sigma:g}"
        if self.kind == 'action_noise':
            return f"actnoise{self.sigma:g}"
        if self.kind == 'hidden_dims':
            return "hide" + "-".join(str(i) for i in self.indices)
        return f"delay{self.delay}"

    def apply(self, env: Env) -> Env:
        if self.kind == 'transition':
            return with_transition_error(env, self.overrides)
        if self.kind == 'obs_noise':
            return with_obs_noise(env, self.sigma)
        if self.kind == 'hidden_dims':
            return with_hidden_dims(env, self.indices)
        if self.kind == 'action_noise':
            return with_action_noise(env, self.sigma)
        return with_action_delay(env, self.delay)


def with_transition_error(env: Env, overrides: Dict[str, Any]) -> Env:
    """동역학 파라미터만 바꾼 환경 (기존 래퍼 체인은 유지)"""
    return env.with_params(dict(overrides))


def with_obs_noise(env: Env, sigma: float) -> Env:
    return ObsNoiseWrapper(env, sigma)


def with_hidden_dims(env: Env, indices: Iterable[int]) -> Env:
    return HiddenDimsWrapper(env, indices)


def with_action_noise(env: Env, sigma: float) -> Env:
    return ActionNoiseWrapper(env, sigma)


def with_action_delay(env: Env, delay: int) -> Env:
    return ActionDelayWrapper(env, delay)


def with_obs_history(env: Env, k: int) -> Env:
    return ObsHistoryWrapper(env, k)


def apply_perturbations(env: Env, specs: Sequence[PerturbSpec]) -> Env:
    """
    명세 목록을 정해진 순서로 합성

    전이 파라미터 → 행동 노이즈 → 행동 지연 → 관측 노이즈 → 숨김 차원(가장 바깥).
    숨김 차원이 노이즈 뒤에 오므로 숨긴 값은 σ와 무관하게 정확히 0.0이다.
    """
    ordered = sorted(specs, key=lambda s: _CANONICAL_ORDER[s.kind])
    for spec in ordered:
        env = spec.apply(env)
    return env


def parse_perturbations(items: Optional[List[Dict[str, Any]]]) -> List[PerturbSpec]:
    return [PerturbSpec.from_dict(item) for item in (items or [])]


def perturbation_label(specs: Sequence[PerturbSpec]) -> str:
    return "+".join(s.label for s in specs) if specs else "exact"
