"""
기본 환경 모음

- pendulum: 연속 토크 스윙업 진자 (중력/마찰 파라미터)
- windygrid: 매 스텝 바람이 아래로 한 칸 미는 격자 세계 (이산, 정확해 계산 가능)
- bandit: 은닉 변수 z가 행동과 보상을 함께 좌우하는 2-행동 밴딧

모든 난수는 reset(seed)로 시드가 고정된 환경 소유 생성기에서만 나온다.
"""
import dataclasses
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from core.errors import EnvironmentStateError, UnknownParameterError


# ===== 공통 =====

@dataclass
class StepResult:
    obs: np.ndarray
    reward: float
    done: bool


def wrap_angle(theta):
    """
    각도를 (-π, π] 구간으로 정규화 (스칼라/배열 모두 지원)
    """
    wrapped = np.mod(np.asarray(theta, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    wrapped = np.where(wrapped <= -np.pi, np.pi, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def _replace_params(params, overrides: Dict[str, Any]):
    """dataclass 파라미터에서 지정한 필드만 교체 (없는 이름은 오류)"""
    names = {f.name for f in dataclasses.fields(params)}
    unknown = sorted(set(overrides) - names)
    if unknown:
        raise UnknownParameterError(
            f"{type(params).__name__}에 없는 파라미터입니다: {', '.join(unknown)} "
            f"(사용 가능: {', '.join(sorted(names))})"
        )
    updated = dataclasses.replace(params, **overrides)
    updated.validate()
    return updated


class Env:
    """
    환경 공통 인터페이스

    하위 클래스는 _reset_state, _advance, full_state, observe_state,
    simulate_from_obs를 구현한다.
    """

    name: str = "env"
    action_kind: str = "discrete"
    obs_dim: int = 0
    state_dim: int = 0
    n_actions: int = 0
    action_dim: int = 1

    def __init__(self, params):
        params.validate()
        self.params = params
        self.rng: Optional[np.random.Generator] = None
        self._t = 0
        self._done = False
        self._ready = False

    # --- 수명 주기 ---

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        if seed is None:
            raise EnvironmentStateError(f"{self.name}: reset에는 시드가 필요합니다")
        self.rng = np.random.default_rng(seed)
        self._t = 0
        self._done = False
        self._ready = True
        self._reset_state()
        return self.observe_state(self.full_state())

    def step(self, action) -> StepResult:
        if not self._ready:
            raise EnvironmentStateError(f"{self.name}: reset 전에 step을 호출했습니다")
        if self._done:
            raise EnvironmentStateError(f"{self.name}: 에피소드가 끝난 뒤 step을 호출했습니다 (reset 필요)")
        reward, terminal = self._advance(action)
        self._t += 1
        self._done = bool(terminal or self._t >= self.horizon)
        return StepResult(obs=self.observe_state(self.full_state()), reward=float(reward), done=self._done)

    @property
    def horizon(self) -> int:
        return int(self.params.horizon)

    @property
    def unwrapped(self) -> "Env":
        return self

    def with_params(self, overrides: Dict[str, Any]) -> "Env":
        """파라미터 일부를 바꾼 새 환경 (시드 상태는 복사하지 않음)"""
        return type(self)(_replace_params(self.params, dict(overrides)))

    def params_dict(self) -> Dict[str, Any]:
        return _params_to_dict(self.params)

    # --- 하위 클래스 구현 ---

    def _reset_state(self):
        raise NotImplementedError

    def _advance(self, action) -> Tuple[float, bool]:
        raise NotImplementedError

    def full_state(self) -> np.ndarray:
        raise NotImplementedError

    def observe_state(self, state: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def simulate_from_obs(self, obs: np.ndarray, actions) -> np.ndarray:
        raise NotImplementedError

    def is_terminal_obs(self, obs: np.ndarray) -> np.ndarray:
        obs = np.atleast_2d(obs)
        return np.zeros(obs.shape[0], dtype=bool)

    def null_action(self):
        return 0

    def obs_grid(self) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        """열거 가능한 관측이면 (하한, 칸 수), 연속 관측이면 None"""
        return None


def _params_to_dict(params) -> Dict[str, Any]:
    out = {}
    for f in dataclasses.fields(params):
        value = getattr(params, f.name)
        if isinstance(value, tuple):
            value = [_plain(v) for v in value]
        else:
            value = _plain(value)
        out[f.name] = value
    return out


def _plain(value):
    if isinstance(value, Fraction):
        return f"{value.numerator}/{value.denominator}"
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


# ===== 1. 진자 =====

@dataclass(frozen=True)
class PendulumParams:
    gravity: float = 9.81
    friction: float = 0.05
    mass: float = 1.0
    length: float = 1.0
    torque_limit: float = 2.0
    dt: float = 0.05
    horizon: int = 200

    def validate(self):
        for name in ("gravity", "mass", "length", "torque_limit", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"PendulumParams.{name}는 양수여야 합니다: {getattr(self, name)}")
        if self.friction < 0:
            raise ValueError(f"PendulumParams.friction은 0 이상이어야 합니다: {self.friction}")
        if int(self.horizon) < 1:
            raise ValueError(f"PendulumParams.horizon은 1 이상이어야 합니다: {self.horizon}")


def _pendulum_update(theta, omega, torque, params: PendulumParams):
    """semi-implicit Euler 한 스텝 (배열 지원). θ=0이 직립."""
    torque = np.clip(torque, -params.torque_limit, params.torque_limit)
    angular_acc = (
        -(params.gravity / params.length) * np.sin(theta + np.pi)
        + torque / (params.mass * params.length ** 2)
        - params.friction * omega
    )
    new_omega = omega + params.dt * angular_acc
    new_theta = wrap_angle(theta + params.dt * new_omega)
    reward = -(new_theta ** 2 + 0.1 * new_omega ** 2 + 0.001 * torque ** 2)
    return new_theta, new_omega, reward


def pendulum_step(state: Tuple[float, float], torque: float,
                  params: PendulumParams) -> Tuple[Tuple[float, float], float]:
    """
    진자 한 스텝

    Args:
        state: (θ, ω) - θ는 rad, 직립이 0
        torque: 가한 토크 (torque_limit로 클리핑)
        params: 진자 파라미터

    Returns:
        ((θ', ω'), reward)
    """
    theta, omega = float(state[0]), float(state[1])
    torque = float(np.asarray(torque, dtype=float).reshape(-1)[0])
    if not (math.isfinite(theta) and math.isfinite(omega) and math.isfinite(torque)):
        raise ValueError(f"진자 상태/토크에 유한하지 않은 값이 있습니다: θ={theta}, ω={omega}, τ={torque}")
    theta = wrap_angle(theta)
    new_theta, new_omega, reward = _pendulum_update(theta, omega, torque, params)
    return (float(new_theta), float(new_omega)), float(reward)


class PendulumEnv(Env):
    name = "pendulum"
    action_kind = "continuous"
    obs_dim = 3
    state_dim = 2
    action_dim = 1

    def __init__(self, params: Optional[PendulumParams] = None):
        super().__init__(params or PendulumParams())
        self.theta = 0.0
        self.omega = 0.0

    @property
    def action_low(self) -> np.ndarray:
        return np.array([-self.params.torque_limit])

    @property
    def action_high(self) -> np.ndarray:
        return np.array([self.params.torque_limit])

    def _reset_state(self):
        # (-π, π] 균등
        self.theta = float(np.pi - self.rng.uniform(0.0, 2.0 * np.pi))
        self.omega = float(self.rng.uniform(-1.0, 1.0))

    def set_state(self, theta: float, omega: float):
        """테스트/검증용으로 내부 상태를 직접 지정"""
        self.theta = wrap_angle(theta)
        self.omega = float(omega)

    def _advance(self, action) -> Tuple[float, bool]:
        (self.theta, self.omega), reward = pendulum_step((self.theta, self.omega), action, self.params)
        return reward, False

    def full_state(self) -> np.ndarray:
        return np.array([self.theta, self.omega])

    def observe_state(self, state: np.ndarray) -> np.ndarray:
        theta, omega = float(state[0]), float(state[1])
        return np.array([math.cos(theta), math.sin(theta), omega])

    def null_action(self):
        return np.zeros(1)

    def simulate_from_obs(self, obs: np.ndarray, actions) -> np.ndarray:
        """
        관측 (cosθ, sinθ, ω)에서 상태를 복원해 한 스텝 예측

        0으로 가려진 ω는 0으로 읽는다. cos, sin이 모두 0이면 각도를 복원할 수 없다.
        """
        obs = np.atleast_2d(np.asarray(obs, dtype=float))
        torque = np.asarray(actions, dtype=float).reshape(obs.shape[0], -1)[:, 0]
        cos_t, sin_t, omega = obs[:, 0], obs[:, 1], obs[:, 2]
        if np.any((cos_t == 0.0) & (sin_t == 0.0)):
            raise ValueError("cosθ와 sinθ가 모두 0인 관측은 각도를 복원할 수 없습니다")
        theta = np.arctan2(sin_t, cos_t)
        new_theta, new_omega, _ = _pendulum_update(theta, omega, torque, self.params)
        return np.stack([np.cos(new_theta), np.sin(new_theta), new_omega], axis=1)

    @staticmethod
    def energy(theta: float, omega: float, params: PendulumParams) -> float:
        """역학적 에너지 (피벗 기준 위치 에너지)"""
        return (0.5 * params.mass * params.length ** 2 * omega ** 2
                + params.mass * params.gravity * params.length * math.cos(theta))


# ===== 2. 바람 격자 =====

ACTION_NAMES = ("up", "down", "left", "right")
MOVES = ((0, 1), (0, -1), (-1, 0), (1, 0))


@dataclass(frozen=True)
class WindyGridParams:
    width: int = 5
    height: int = 5
    wind_prob: float = 0.4
    goal: Tuple[int, int] = (4, 4)
    start: Tuple[int, int] = (0, 0)
    step_penalty: float = -1.0
    goal_reward: float = 10.0
    horizon: int = 50
    discount: float = 0.95

    def __post_init__(self):
        # YAML 리스트로 들어와도 튜플로 고정
        object.__setattr__(self, "goal", tuple(int(v) for v in self.goal))
        object.__setattr__(self, "start", tuple(int(v) for v in self.start))

    def in_bounds(self, cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def validate(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"격자 크기는 1 이상이어야 합니다: {self.width}x{self.height}")
        if not 0.0 <= self.wind_prob <= 1.0:
            raise ValueError(f"wind_prob는 [0, 1] 범위여야 합니다: {self.wind_prob}")
        if not (self.in_bounds(self.goal) and self.in_bounds(self.start)):
            raise ValueError(f"start/goal이 격자 밖입니다: start={self.start}, goal={self.goal}")
        if self.start == self.goal:
            raise ValueError(f"start와 goal이 같습니다: {self.start}")
        if not 0.0 < self.discount < 1.0:
            raise ValueError(f"discount는 (0, 1) 범위여야 합니다: {self.discount}")
        if int(self.horizon) < 1:
            raise ValueError(f"horizon은 1 이상이어야 합니다: {self.horizon}")


def windygrid_move(x, y, wind, action, params: WindyGridParams):
    """의도한 이동 후 바람이면 한 칸 더 아래로 (벽에서 클리핑). 배열 지원."""
    action = np.asarray(action, dtype=np.int64)
    dx = np.take(np.array([m[0] for m in MOVES]), action)
    dy = np.take(np.array([m[1] for m in MOVES]), action)
    nx = np.clip(x + dx, 0, params.width - 1)
    ny = np.clip(y + dy, 0, params.height - 1)
    ny = np.where(np.asarray(wind) == 1, np.maximum(ny - 1, 0), ny)
    return nx, ny


def windygrid_step(cell: Tuple[int, int], wind: int, action: int,
                   params: WindyGridParams) -> Tuple[Tuple[int, int], float, bool]:
    """
    격자 한 스텝 (다음 바람 샘플링은 환경이 담당)

    Args:
        cell: (x, y), y=0이 맨 아래 행
        wind: 이번 스텝 바람 여부 {0, 1}
        action: 0=up, 1=down, 2=left, 3=right
        params: 격자 파라미터

    Returns:
        (cell', reward, done)
    """
    if not params.in_bounds(cell):
        raise ValueError(f"격자 밖의 칸입니다: {cell} (크기 {params.width}x{params.height})")
    if int(action) not in range(len(MOVES)):
        raise ValueError(f"행동 인덱스가 범위를 벗어났습니다: {action}")
    if int(wind) not in (0, 1):
        raise ValueError(f"바람 값은 0 또는 1이어야 합니다: {wind}")
    nx, ny = windygrid_move(int(cell[0]), int(cell[1]), int(wind), int(action), params)
    new_cell = (int(nx), int(ny))
    done = new_cell == params.goal
    reward = params.goal_reward if done else params.step_penalty
    return new_cell, float(reward), done


class WindyGridEnv(Env):
    name = "windygrid"
    action_kind = "discrete"
    obs_dim = 3
    state_dim = 3
    n_actions = 4

    def __init__(self, params: Optional[WindyGridParams] = None):
        super().__init__(params or WindyGridParams())
        self.cell = self.params.start
        self.wind = 0

    def _draw_wind(self) -> int:
        return int(self.rng.random() < self.params.wind_prob)

    def _reset_state(self):
        self.cell = self.params.start
        self.wind = self._draw_wind()

    def _advance(self, action) -> Tuple[float, bool]:
        index = int(np.asarray(action).reshape(-1)[0])
        self.cell, reward, done = windygrid_step(self.cell, self.wind, index, self.params)
        self.wind = self._draw_wind()
        return reward, done

    def full_state(self) -> np.ndarray:
        return np.array([self.cell[0], self.cell[1], self.wind], dtype=float)

    def observe_state(self, state: np.ndarray) -> np.ndarray:
        return np.asarray(state, dtype=float).copy()

    def simulate_from_obs(self, obs: np.ndarray, actions) -> np.ndarray:
        """관측 (x, y, wind)에서 한 스텝 평균 예측. 다음 바람 칸은 wind_prob."""
        obs = np.atleast_2d(np.asarray(obs, dtype=float))
        p = self.params
        x = np.clip(np.rint(obs[:, 0]), 0, p.width - 1).astype(np.int64)
        y = np.clip(np.rint(obs[:, 1]), 0, p.height - 1).astype(np.int64)
        wind = np.clip(np.rint(obs[:, 2]), 0, 1).astype(np.int64)
        action = np.clip(np.rint(np.asarray(actions, dtype=float).reshape(-1)), 0, 3).astype(np.int64)
        nx, ny = windygrid_move(x, y, wind, action, p)
        return np.stack([nx.astype(float), ny.astype(float), np.full(obs.shape[0], float(p.wind_prob))], axis=1)

    def is_terminal_obs(self, obs: np.ndarray) -> np.ndarray:
        obs = np.atleast_2d(np.asarray(obs, dtype=float))
        x = np.clip(np.rint(obs[:, 0]), 0, self.params.width - 1)
        y = np.clip(np.rint(obs[:, 1]), 0, self.params.height - 1)
        return (x == self.params.goal[0]) & (y == self.params.goal[1])

    def obs_grid(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.zeros(3), np.array([self.params.width, self.params.height, 2])


# ===== 3. 교란 밴딧 =====

def _fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return Fraction(value)
    return Fraction(value).limit_denominator(10 ** 9)


def _reference_reward_table() -> Tuple[Tuple[Fraction, Fraction], Tuple[Fraction, Fraction]]:
    # [z][a], a0=0, a1=1
    return (
        (Fraction(1, 6), Fraction(1, 4)),
        (Fraction(1, 3), Fraction(1, 2)),
    )


@dataclass(frozen=True)
class BanditSpec:
    p_z: Tuple[Fraction, Fraction] = (Fraction(1, 3), Fraction(2, 3))
    reward_table: Tuple[Tuple[Fraction, Fraction], Tuple[Fraction, Fraction]] = field(
        default_factory=_reference_reward_table)
    horizon: int = 1

    def __post_init__(self):
        object.__setattr__(self, "p_z", tuple(_fraction(v) for v in self.p_z))
        object.__setattr__(self, "reward_table",
                           tuple(tuple(_fraction(v) for v in row) for row in self.reward_table))

    def validate(self):
        if len(self.p_z) != 2 or len(self.reward_table) != 2 or any(len(r) != 2 for r in self.reward_table):
            raise ValueError("BanditSpec은 z ∈ {0,1}, 행동 2개 크기여야 합니다")
        if sum(self.p_z) != 1:
            raise ValueError(f"p_z 합이 1이 아닙니다: {self.p_z}")
        for p in list(self.p_z) + [v for row in self.reward_table for v in row]:
            if not 0 <= p <= 1:
                raise ValueError(f"확률은 [0, 1] 범위여야 합니다: {p}")
        if int(self.horizon) != 1:
            raise ValueError("밴딧은 한 번의 결정만 합니다 (horizon=1)")

    @classmethod
    def constant(cls, p) -> "BanditSpec":
        p = _fraction(p)
        return cls(reward_table=((p, p), (p, p)))


def bandit_pull(z: int, action: int, spec: BanditSpec, rng: np.random.Generator) -> int:
    """P(r=1|z,a)인 베르누이 보상"""
    prob = spec.reward_table[int(z)][int(action)]
    return int(rng.random() < float(prob))


class ConfoundedBanditEnv(Env):
    name = "bandit"
    action_kind = "discrete"
    obs_dim = 0
    state_dim = 1
    n_actions = 2

    def __init__(self, params: Optional[BanditSpec] = None):
        super().__init__(params or BanditSpec())
        self.z = 0

    def _reset_state(self):
        self.z = int(self.rng.random() < float(self.params.p_z[1]))

    def _advance(self, action) -> Tuple[float, bool]:
        index = int(np.asarray(action).reshape(-1)[0])
        if index not in (0, 1):
            raise ValueError(f"밴딧 행동은 0 또는 1이어야 합니다: {index}")
        return float(bandit_pull(self.z, index, self.params, self.rng)), True

    def full_state(self) -> np.ndarray:
        return np.array([float(self.z)])

    def observe_state(self, state: np.ndarray) -> np.ndarray:
        return np.zeros(0)

    def simulate_from_obs(self, obs: np.ndarray, actions) -> np.ndarray:
        obs = np.atleast_2d(np.asarray(obs, dtype=float))
        return np.zeros((obs.shape[0], 0))

    def is_terminal_obs(self, obs: np.ndarray) -> np.ndarray:
        obs = np.atleast_2d(np.asarray(obs, dtype=float))
        return np.ones(obs.shape[0], dtype=bool)

    def obs_grid(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.zeros(0), np.zeros(0, dtype=np.int64)


# ===== 4. 생성 =====

ENV_REGISTRY = {
    'pendulum': (PendulumEnv, PendulumParams),
    'windygrid': (WindyGridEnv, WindyGridParams),
    'bandit': (ConfoundedBanditEnv, BanditSpec),
}


def make_env(name: str, overrides: Optional[Dict[str, Any]] = None) -> Env:
    """
    이름과 파라미터 덮어쓰기로 환경 생성

    Args:
        name: 'pendulum' | 'windygrid' | 'bandit'
        overrides: 파라미터 이름 → 값

    Returns:
        환경 인스턴스 (reset 전 상태)
    """
    if name not in ENV_REGISTRY:
        raise ValueError(f"알 수 없는 환경입니다: {name} (사용 가능: {', '.join(ENV_REGISTRY)})")
    env_cls, params_cls = ENV_REGISTRY[name]
    params = _replace_params(params_cls(), dict(overrides or {}))
    return env_cls(params)


def env_key(env: Env) -> str:
    """캐시 키용 (이름 + 파라미터 + 래퍼 체인) 문자열"""
    items = ",".join(f"{k}={v}" for k, v in sorted(env.unwrapped.params_dict().items()))
    labels = []
    node = env
    while node is not env.unwrapped:
        labels.append(node.label)
        node = node.env
    suffix = "".join(f"|{label}" for label in reversed(labels))
    return f"{env.unwrapped.name}({items}){suffix}"
