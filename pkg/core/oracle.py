"""
정확해 계산

- 교란 밴딧: 참값, 교란된 조건부 추정량(유리수), 몬테카를로 확인
- 열거 가능한 환경: 가치 반복, 정확한 정책 평가

사용법:
  python -m core.oracle
"""
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core.environments import BanditSpec, Env, WindyGridParams, windygrid_move
from core.errors import NotEnumerableError, UndefinedEstimandError

# π_b[z][a]
BehaviorTable = Tuple[Tuple[Fraction, Fraction], Tuple[Fraction, Fraction]]


# ===== 1. 교란 밴딧 =====

def bandit_reference_behavior() -> BehaviorTable:
    """z=0이면 a1, z=1이면 a0을 고르는 결정적 행동 정책"""
    return ((Fraction(0), Fraction(1)), (Fraction(1), Fraction(0)))


def bandit_uniform_behavior() -> BehaviorTable:
    half = Fraction(1, 2)
    return ((half, half), (half, half))


def bandit_true_values(spec: BanditSpec) -> Tuple[Fraction, Fraction]:
    """행동별 E_z[P(r=1|z,a)]"""
    spec.validate()
    return tuple(
        sum(spec.p_z[z] * spec.reward_table[z][a] for z in (0, 1))
        for a in (0, 1)
    )


def bandit_confounded_estimates(spec: BanditSpec, behavior: BehaviorTable) -> Tuple[Fraction, Fraction]:
    """
    행동 정책 데이터의 조건부 추정량 P^{π_b}(r=1|a)

    = E_z[P(r=1|a,z)·π_b(a|z)] / E_z[π_b(a|z)]

    Raises:
        UndefinedEstimandError: π_b가 한 번도 고르지 않는 행동
    """
    spec.validate()
    estimates = []
    for a in (0, 1):
        marginal = sum(spec.p_z[z] * Fraction(behavior[z][a]) for z in (0, 1))
        if marginal == 0:
            raise UndefinedEstimandError(f"행동 a{a}의 주변 확률이 0이라 조건부 추정량이 정의되지 않습니다")
        joint = sum(spec.p_z[z] * spec.reward_table[z][a] * Fraction(behavior[z][a]) for z in (0, 1))
        estimates.append(joint / marginal)
    return tuple(estimates)


def _argmax(values: Sequence) -> int:
    return int(max(range(len(values)), key=lambda i: values[i]))


@dataclass
class BanditAnalysis:
    true_values: Tuple[Fraction, Fraction]
    confounded_estimates: Tuple[Fraction, Fraction]
    true_argmax: int
    confounded_argmax: int
    bias_gap: Tuple[Fraction, Fraction]

    def to_frame(self) -> pd.DataFrame:
        """보고서용 표 (행: 행동)"""
        rows = []
        for a in (0, 1):
            rows.append({
                'action': f"a{a}",
                'true_value': str(self.true_values[a]),
                'confounded_estimate': str(self.confounded_estimates[a]),
                'bias_gap': str(self.bias_gap[a]),
                'true_value_float': float(self.true_values[a]),
                'confounded_estimate_float': float(self.confounded_estimates[a]),
            })
        return pd.DataFrame(rows)


def analyze_bandit(spec: Optional[BanditSpec] = None, behavior: Optional[BehaviorTable] = None) -> BanditAnalysis:
    spec = spec or BanditSpec()
    behavior = behavior or bandit_reference_behavior()
    true_values = bandit_true_values(spec)
    confounded = bandit_confounded_estimates(spec, behavior)
    return BanditAnalysis(
        true_values=true_values,
        confounded_estimates=confounded,
        true_argmax=_argmax(true_values),
        confounded_argmax=_argmax(confounded),
        bias_gap=tuple(abs(t - c) for t, c in zip(true_values, confounded)),
    )


@dataclass
class EmpiricalCheck:
    means: Tuple[float, float]
    counts: Tuple[int, int]
    argmax: int


def bandit_empirical_check(spec: BanditSpec, behavior: BehaviorTable, n: int, seed: int) -> EmpiricalCheck:
    """
    (z, a, r)를 n번 뽑아 행동별 조건부 표본 평균 계산

    표본이 없는 행동의 평균은 nan.
    """
    if n < 1:
        raise ValueError(f"n은 1 이상이어야 합니다: {n}")
    rng = np.random.default_rng(seed)
    z = (rng.random(n) < float(spec.p_z[1])).astype(np.int64)
    p_a1 = np.array([float(behavior[0][1]), float(behavior[1][1])])
    a = (rng.random(n) < p_a1[z]).astype(np.int64)
    table = np.array([[float(v) for v in row] for row in spec.reward_table])
    r = (rng.random(n) < table[z, a]).astype(float)

    means, counts = [], []
    for action in (0, 1):
        mask = a == action
        counts.append(int(mask.sum()))
        means.append(float(r[mask].mean()) if mask.any() else float('nan'))
    argmax = int(np.nanargmax(means))
    return EmpiricalCheck(means=tuple(means), counts=tuple(counts), argmax=argmax)


# ===== 2. 열거 가능한 환경 =====

@dataclass
class TabularModel:
    """
    열거된 MDP

    Args:
        transitions: (S, A, S) 전이 확률
        rewards: (S, A) 기대 보상
        start_dist: (S,) 시작 분포
        observations: (S, obs_dim) 각 상태의 깨끗한 관측
        terminal: (S,) 흡수 종료 상태 여부
    """
    transitions: np.ndarray
    rewards: np.ndarray
    start_dist: np.ndarray
    observations: np.ndarray
    terminal: np.ndarray

    @property
    def n_states(self) -> int:
        return int(self.transitions.shape[0])

    @property
    def n_actions(self) -> int:
        return int(self.transitions.shape[1])

    def start_value(self, values: np.ndarray) -> float:
        return float(self.start_dist @ values)


def windygrid_state_index(x: int, y: int, wind: int, params: WindyGridParams) -> int:
    return (x * params.height + y) * 2 + wind


def windygrid_tabular_model(params: WindyGridParams) -> TabularModel:
    """
    (x, y, wind) 상태 전체 + 흡수 종료 상태

    목표 칸에 들어가는 전이는 goal_reward와 함께 종료 상태로 간다.
    """
    params.validate()
    n_cells = params.width * params.height * 2
    terminal_state = n_cells
    S, A = n_cells + 1, 4
    P = np.zeros((S, A, S))
    R = np.zeros((S, A))
    obs = np.zeros((S, 3))
    p = params.wind_prob
    for x in range(params.width):
        for y in range(params.height):
            for wind in (0, 1):
                s = windygrid_state_index(x, y, wind, params)
                obs[s] = (x, y, wind)
                for a in range(A):
                    nx, ny = windygrid_move(x, y, wind, a, params)
                    nx, ny = int(nx), int(ny)
                    if (nx, ny) == params.goal:
                        P[s, a, terminal_state] = 1.0
                        R[s, a] = params.goal_reward
                    else:
                        P[s, a, windygrid_state_index(nx, ny, 0, params)] += 1.0 - p
                        P[s, a, windygrid_state_index(nx, ny, 1, params)] += p
                        R[s, a] = params.step_penalty
    P[terminal_state, :, terminal_state] = 1.0
    obs[terminal_state] = (params.goal[0], params.goal[1], 0)
    start = np.zeros(S)
    start[windygrid_state_index(params.start[0], params.start[1], 0, params)] = 1.0 - p
    start[windygrid_state_index(params.start[0], params.start[1], 1, params)] = p
    terminal = np.zeros(S, dtype=bool)
    terminal[terminal_state] = True
    return TabularModel(transitions=P, rewards=R, start_dist=start, observations=obs, terminal=terminal)


def bandit_tabular_model(spec: BanditSpec) -> TabularModel:
    """z ∈ {0,1} 두 상태 + 종료 상태. 관측은 빈 벡터."""
    spec.validate()
    P = np.zeros((3, 2, 3))
    R = np.zeros((3, 2))
    for z in (0, 1):
        for a in (0, 1):
            P[z, a, 2] = 1.0
            R[z, a] = float(spec.reward_table[z][a])
    P[2, :, 2] = 1.0
    start = np.array([float(spec.p_z[0]), float(spec.p_z[1]), 0.0])
    return TabularModel(transitions=P, rewards=R, start_dist=start, observations=np.zeros((3, 0)),
                        terminal=np.array([False, False, True]))


def tabular_model_for(env: Env) -> TabularModel:
    """
    환경의 열거 모델

    Raises:
        NotEnumerableError: 연속 상태 환경 (pendulum)
    """
    base = env.unwrapped
    if base.name == 'windygrid':
        return windygrid_tabular_model(base.params)
    if base.name == 'bandit':
        return bandit_tabular_model(base.params)
    raise NotEnumerableError(f"{base.name} 환경은 상태를 열거할 수 없습니다")


def value_iteration(model: TabularModel, gamma: float, tol: float = 1e-8,
                    initial: Optional[np.ndarray] = None, max_iterations: int = 100_000):
    """
    Bellman 최적 방정식 반복

    sup-norm 변화가 tol·(1-γ)/(2γ) 아래로 내려가면 멈추므로 결과는 고정점에서 tol/2 이내.

    Returns:
        (V*, π*) - π*는 상태별 greedy 행동 인덱스
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma는 [0, 1) 범위여야 합니다: {gamma}")
    values = np.zeros(model.n_states) if initial is None else np.asarray(initial, dtype=float).copy()
    threshold = tol * (1.0 - gamma) / (2.0 * gamma) if gamma > 0 else np.inf
    for _ in range(max_iterations):
        q = model.rewards + gamma * model.transitions @ values
        updated = q.max(axis=1)
        change = np.max(np.abs(updated - values))
        values = updated
        if change < threshold:
            break
    q = model.rewards + gamma * model.transitions @ values
    return values, np.argmax(q, axis=1)


def policy_matrix(model: TabularModel, policy, observe: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> np.ndarray:
    """
    정책 → (S, A) 확률 행렬

    Args:
        policy: (S, A) 배열, (S,) 결정적 행동 배열, 또는 action_probs를 가진 Policy
        observe: 상태 관측 → 정책 입력 변환 (예: 바람 칸 0으로 숨김)
    """
    if hasattr(policy, 'action_probs'):
        inputs = model.observations if observe is None else observe(model.observations.copy())
        return np.asarray(policy.action_probs(inputs), dtype=float)
    policy = np.asarray(policy)
    if policy.ndim == 1:
        probs = np.zeros((model.n_states, model.n_actions))
        probs[np.arange(model.n_states), policy.astype(np.int64)] = 1.0
        return probs
    return policy.astype(float)


def _policy_chain(model: TabularModel, probs: np.ndarray):
    chain = np.einsum('sa,sat->st', probs, model.transitions)
    reward = np.sum(probs * model.rewards, axis=1)
    return chain, reward


def exact_policy_eval(model: TabularModel, policy, gamma: float, tol: float = 1e-10,
                      observe: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> np.ndarray:
    """
    선형 Bellman 방정식 (I - γP_π)V = R_π 직접 풀이

    tol은 반복 평가와 같은 시그니처를 위한 값이며 직접 풀이에는 쓰이지 않는다.
    """
    chain, reward = _policy_chain(model, policy_matrix(model, policy, observe))
    return np.linalg.solve(np.eye(model.n_states) - gamma * chain, reward)


def iterative_policy_eval(model: TabularModel, policy, gamma: float, tol: float = 1e-10,
                          observe: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                          max_iterations: int = 100_000) -> np.ndarray:
    """반복 정책 평가 (exact_policy_eval 교차 검증용)"""
    chain, reward = _policy_chain(model, policy_matrix(model, policy, observe))
    values = np.zeros(model.n_states)
    threshold = tol * (1.0 - gamma) / (2.0 * gamma) if gamma > 0 else np.inf
    for _ in range(max_iterations):
        updated = reward + gamma * chain @ values
        change = np.max(np.abs(updated - values))
        values = updated
        if change < threshold:
            break
    return values


def finite_horizon_return(model: TabularModel, policy, horizon: int,
                          observe: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> float:
    """시작 분포에서 horizon 스텝 동안의 기대 (할인 없는) 수익"""
    chain, reward = _policy_chain(model, policy_matrix(model, policy, observe))
    dist = model.start_dist.copy()
    total = 0.0
    for _ in range(horizon):
        total += float(dist @ reward)
        dist = dist @ chain
    return total


def hide_columns(indices: Sequence[int]) -> Callable[[np.ndarray], np.ndarray]:
    """지정 관측 열을 0으로 만드는 observe 함수"""
    def observe(obs: np.ndarray) -> np.ndarray:
        obs = np.array(obs, dtype=float, copy=True)
        obs[:, list(indices)] = 0.0
        return obs
    return observe


def main():
    analysis = analyze_bandit()
    print("=" * 80)
    print("📊 교란 밴딧 분석")
    print("=" * 80)
    print(analysis.to_frame()[['action', 'true_value', 'confounded_estimate', 'bias_gap']].to_string(index=False))
    print(f"\n  참 최적 행동: a{analysis.true_argmax}")
    print(f"  교란 추정 최적 행동: a{analysis.confounded_argmax}")


if __name__ == "__main__":
    main()
