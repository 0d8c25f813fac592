"""
벤치마크 기본 설정값
"""

# 포맷 버전
DATASET_FORMAT_VERSION = "b4mrl-ds/1"
MODEL_FORMAT_VERSION = "b4mrl-model/1"
POLICY_FORMAT_VERSION = "b4mrl-policy/1"

# 시드
DEFAULT_SEEDS = [0, 1, 2]
REFERENCE_SEED = 0          # 참조 점수(random/expert)는 실행 시드와 무관하게 고정
EVAL_SEED_OFFSET = 10_000   # 평가 에피소드 시드는 학습 시드와 겹치지 않게

# 정규화 참조 측정
REFERENCE_EPISODES = 100
TIER_EVAL_EPISODES = 20
MEDIUM_TARGET_SCORE = 40.0

# 데이터셋 크기
DATASET_SIZES = {
    'pendulum': 100_000,
    'windygrid': 20_000,
    'bandit': 10_000,
}

# Q 함수 특징 (환경별)
Q_FEATURES = {
    # 진자: (θ, ω) 격자 집계, θ 15° 칸, ω 1 rad/s 칸
    'pendulum': {'kind': 'angle_grid', 'bins': [24, 14], 'limit': 7.0},
    'windygrid': {'kind': 'tabular'},
    'bandit': {'kind': 'tabular'},
}

# 동역학 모델 특징 (관측 + 행동 입력)
MODEL_FEATURES = {
    'pendulum': {'kind': 'random_fourier', 'count': 200, 'bandwidth': 1.0, 'scale': [1.0, 1.0, 4.0, 2.0]},
    'windygrid': {'kind': 'tabular'},
    'bandit': {'kind': 'tabular'},
}

MODEL_DEFAULTS = {
    'n_members': 5,
    'ridge': 1e-3,
    'holdout_fraction': 0.1,
    'bootstrap': True,
    'penalty_mode': 'disagreement',
}

# 에이전트 기본값 (환경별로 덮어씀)
AGENT_DEFAULTS = {
    'action_grid_size': 9,
    'gamma': 0.99,
    'ridge': 1e-3,
    'fq_iterations': 30,
    'batch_size': 20_000,
    'sweeps': 40,
    'steps_per_sweep': 1_000,
    'epsilon_start': 1.0,
    'epsilon_end': 0.05,
    'eval_episodes': 5,
    'bc_threshold': 0.1,
    'bc_bins': 10,
    'penalty_coef': 0.0,
    'rollout_horizon': 5,
    'rollout_batch': 64,
    'model_epochs': 10,
    'model_ratio': 0.5,
    'rollout_epsilon': 0.1,
}

ENV_AGENT_OVERRIDES = {
    'pendulum': {
        'fq_iterations': 40,
        'batch_size': 40_000,
        'sweeps': 80,
        'steps_per_sweep': 1_500,
    },
    'windygrid': {
        'gamma': 0.95,
        'fq_iterations': 150,
        'sweeps': 20,
        'steps_per_sweep': 2_000,
        'eval_episodes': 20,
        'rollout_batch': 256,
    },
    'bandit': {
        'gamma': 0.5,
        'fq_iterations': 1,
        'sweeps': 5,
        'steps_per_sweep': 500,
    },
}

# 챌린지 수준 (sim2real / offline2real)
CHALLENGE_LEVELS = {
    'transition': {
        'pendulum': [
            ('g2x', {'gravity': 19.62}),
            ('f03x', {'friction': 0.015}),
        ],
        'windygrid': [
            ('wind2x', {'wind_prob': 0.8}),
            ('wind03x', {'wind_prob': 0.12}),
        ],
    },
    'obs_noise': {'low': 0.01, 'high': 0.05},
    'action_noise': {'low': 0.2, 'high': 0.5},
    'hidden_dims': {
        'pendulum': {'low': 0, 'high': 2},
        'windygrid': {'low': 0, 'high': 2},
    },
    'history_k': 3,
}

DATASET_TIERS = ['random', 'medium', 'medium_replay', 'medium_expert']
AGENT_NAMES = ['online_q', 'offline_bcq', 'mopo_lite', 'hymopo']

# 결과 파일
RESULTS_COLUMNS = [
    'benchmark_id', 'agent', 'seed', 'raw_return', 'normalized_score',
    'wall_time', 'config_hash', 'dataset_hash',
]
DATASET_CACHE_DIR = "datasets/cache"
REFS_CACHE_PATH = "results/refs_cache.yaml"

# 차트 기본 설정
CHART_DEFAULTS = {
    'figsize': (10, 6),
    'dpi': 120,
    'font_size': 11,
}
