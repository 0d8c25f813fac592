"""
벤치마크 실행기

설정 하나 = (환경, sim2real 오차, 데이터셋, 에이전트, 시드 목록).
학습은 오차가 있는 시뮬레이터와 데이터셋만 보고, 평가는 항상 오차 없는 참 환경에서 한다.
"""
import copy
import hashlib
import itertools
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import pandas as pd

from core.agents import AgentConfig, train_hymopo, train_mopo_lite, train_offline_bcq, train_online_q
from core.agents import evaluate_policy
from core.config import (
    AGENT_NAMES, CHALLENGE_LEVELS, DATASET_CACHE_DIR, DATASET_TIERS, DEFAULT_SEEDS, EVAL_SEED_OFFSET,
    REFS_CACHE_PATH, RESULTS_COLUMNS,
)
from core.environments import ENV_REGISTRY, Env, make_env
from core.errors import ConfigError
from core.normalization import ReferencePair, compute_reference_pair
from core.perturb import PerturbSpec, apply_perturbations, parse_perturbations, perturbation_label
from data.dataset import Dataset, dataset_hash, read_dataset, write_dataset
from data.generate_datasets import build_tier_dataset
from data.recipes import DatasetRecipe, load_yaml

__all__ = [
    'BenchConfig', 'RunResult', 'load_bench_configs', 'expand_grid', 'challenge_grid',
    'run_single', 'run_benchmark', 'obtain_dataset', 'append_results', 'read_results',
    'results_frame', 'compute_reference_pair',
]

DATASET_AGENTS = ('offline_bcq', 'mopo_lite', 'hymopo')
DEFAULT_EVAL_EPISODES = 10
DEFAULT_OUTPUT = "results/results.csv"


# ===== 설정 =====

@dataclass
class BenchConfig:
    """
    벤치마크 설정 하나

    Args:
        env: 환경 이름
        agent: online_q | offline_bcq | mopo_lite | hymopo
        benchmark_id: 결과 식별자 (기본값: '<시뮬레이터 라벨>__<데이터셋 라벨>')
        env_params: 참 환경 파라미터 덮어쓰기
        sim2real: 학습용 시뮬레이터에 적용할 PerturbSpec 목록
        dataset: 데이터셋 파일 경로 또는 생성 레시피
        agent_config: AgentConfig 덮어쓰기
        seeds: 실행 시드 목록
        eval_episodes: 참 환경 평가 에피소드 수
        output: 결과 CSV 경로
        dataset_dir: 생성 데이터셋 캐시 디렉토리
        refs_cache: 참조 점수 캐시 파일 (None이면 메모리 캐시만)
    """
    env: str
    agent: str
    benchmark_id: Optional[str] = None
    env_params: Dict[str, Any] = field(default_factory=dict)
    sim2real: List[PerturbSpec] = field(default_factory=list)
    dataset: Optional[Union[str, DatasetRecipe]] = None
    agent_config: Dict[str, Any] = field(default_factory=dict)
    seeds: List[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    eval_episodes: int = DEFAULT_EVAL_EPISODES
    output: str = DEFAULT_OUTPUT
    dataset_dir: str = DATASET_CACHE_DIR
    refs_cache: Optional[str] = REFS_CACHE_PATH

    def __post_init__(self):
        if self.benchmark_id is None:
            self.benchmark_id = f"{self.sim_label}__{self.dataset_label}"

    @property
    def sim_label(self) -> str:
        return perturbation_label(self.sim2real)

    @property
    def dataset_label(self) -> str:
        if self.dataset is None:
            return "none"
        if isinstance(self.dataset, DatasetRecipe):
            return self.dataset.label
        return Path(self.dataset).stem

    def validate(self):
        if self.env not in ENV_REGISTRY:
            raise ConfigError(f"알 수 없는 환경입니다: {self.env} (사용 가능: {', '.join(ENV_REGISTRY)})")
        if self.agent not in AGENT_NAMES:
            raise ConfigError(f"알 수 없는 에이전트입니다: {self.agent} (사용 가능: {', '.join(AGENT_NAMES)})")
        if self.agent in DATASET_AGENTS and self.dataset is None:
            raise ConfigError(f"{self.agent} 에이전트에는 dataset이 필요합니다 ({self.benchmark_id})")
        if not self.seeds:
            raise ConfigError("seeds가 비어 있습니다")
        if int(self.eval_episodes) < 1:
            raise ConfigError(f"eval_episodes는 1 이상이어야 합니다: {self.eval_episodes}")
        try:
            make_env(self.env, self.env_params)
        except ValueError as e:
            raise ConfigError(f"환경 파라미터 오류: {e}") from e
        AgentConfig.for_env(self.env, self.agent_config)
        if isinstance(self.dataset, DatasetRecipe) and self.dataset.env != self.env:
            raise ConfigError(f"데이터셋 레시피 환경({self.dataset.env})이 벤치마크 환경({self.env})과 다릅니다")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BenchConfig":
        """
        딕셔너리 → 설정 (알 수 없는 키는 ConfigError)
        """
        if not isinstance(data, dict):
            raise ConfigError(f"벤치마크 설정은 매핑이어야 합니다: {data!r}")
        names = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"벤치마크 설정에 없는 키입니다: {', '.join(unknown)}")
        for key in ('env', 'agent'):
            if key not in data:
                raise ConfigError(f"벤치마크 설정에 {key}가 없습니다")

        values = dict(data)
        values['sim2real'] = parse_perturbations(data.get('sim2real'))
        values['env_params'] = dict(data.get('env_params') or {})
        values['agent_config'] = dict(data.get('agent_config') or {})
        if 'seeds' in data:
            seeds = data['seeds']
            if not isinstance(seeds, list) or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
                raise ConfigError(f"seeds는 정수 목록이어야 합니다: {seeds!r}")
        dataset = data.get('dataset')
        if isinstance(dataset, dict):
            recipe = dict(dataset)
            recipe.setdefault('env_params', values['env_params'])
            values['dataset'] = DatasetRecipe.from_dict(recipe, env_name=data['env'])
        elif dataset is not None and not isinstance(dataset, str):
            raise ConfigError(f"dataset은 파일 경로나 레시피여야 합니다: {dataset!r}")

        config = cls(**values)
        config.validate()
        return config

    def to_dict(self) -> Dict[str, Any]:
        dataset = self.dataset.to_dict() if isinstance(self.dataset, DatasetRecipe) else self.dataset
        return {
            'benchmark_id': self.benchmark_id,
            'env': self.env,
            'env_params': dict(self.env_params),
            'sim2real': [s.to_dict() for s in self.sim2real],
            'dataset': dataset,
            'agent': self.agent,
            'agent_config': dict(self.agent_config),
            'seeds': list(self.seeds),
            'eval_episodes': int(self.eval_episodes),
            'output': self.output,
            'dataset_dir': self.dataset_dir,
            'refs_cache': self.refs_cache,
        }

    @property
    def config_hash(self) -> str:
        """시드/출력 경로를 뺀 설정의 sha256 앞 16자리"""
        data = self.to_dict()
        for key in ('seeds', 'output', 'dataset_dir', 'refs_cache'):
            data.pop(key)
        return hashlib.sha256(json.dumps(data, sort_keys=True, default=str).encode('utf-8')).hexdigest()[:16]

    def with_seeds(self, seeds: Sequence[int]) -> "BenchConfig":
        clone = copy.deepcopy(self)
        clone.seeds = [int(s) for s in seeds]
        return clone

    def true_env(self) -> Env:
        return make_env(self.env, self.env_params)

    def simulator(self) -> Env:
        return apply_perturbations(self.true_env(), self.sim2real)


GRID_KEYS = ('sim2real', 'dataset', 'agent')


def expand_grid(defaults: Dict[str, Any], grid: Dict[str, List[Any]]) -> List[BenchConfig]:
    """
    defaults + grid → 설정 목록 (sim2real × dataset × agent 곱)

    online_q는 데이터셋을 쓰지 않지만 표의 각 칸을 채우도록 데이터셋 축마다 한 번씩 만든다.
    """
    unknown = sorted(set(grid) - set(GRID_KEYS))
    if unknown:
        raise ConfigError(f"grid에 허용되지 않는 키입니다: {', '.join(unknown)} (사용 가능: {', '.join(GRID_KEYS)})")
    axes = []
    for key in GRID_KEYS:
        options = grid.get(key)
        if options is None:
            axes.append([defaults.get(key)] if key in defaults else [None])
        elif not isinstance(options, list) or not options:
            raise ConfigError(f"grid.{key}는 비어 있지 않은 목록이어야 합니다")
        else:
            axes.append(options)

    configs = []
    for sim2real, dataset, agent in itertools.product(*axes):
        data = {k: v for k, v in defaults.items() if k not in GRID_KEYS}
        if sim2real is not None:
            data['sim2real'] = sim2real
        if dataset is not None:
            data['dataset'] = dataset
        if agent is not None:
            data['agent'] = agent
        configs.append(BenchConfig.from_dict(data))
    return configs


def load_bench_configs(path: str) -> List[BenchConfig]:
    """
    벤치마크 설정 파일 읽기

    지원 형식:
      - 설정 매핑 하나
      - 설정 매핑 목록
      - {defaults: {...}, grid: {sim2real: [...], dataset: [...], agent: [...]}}

    Raises:
        ConfigError: 형식 오류나 알 수 없는 키
    """
    data = load_yaml(path)
    if isinstance(data, list):
        return [BenchConfig.from_dict(item) for item in data]
    if not isinstance(data, dict):
        raise ConfigError(f"벤치마크 설정 파일 형식이 올바르지 않습니다: {path}")
    if 'grid' in data:
        unknown = sorted(set(data) - {'defaults', 'grid'})
        if unknown:
            raise ConfigError(f"grid 설정 파일에 없는 키입니다: {', '.join(unknown)}")
        return expand_grid(data.get('defaults') or {}, data['grid'])
    return [BenchConfig.from_dict(data)]


def challenge_grid(challenge: int, env_name: str, agents: Sequence[str] = ('online_q', 'offline_bcq', 'hymopo'),
                   tiers: Sequence[str] = tuple(DATASET_TIERS), seeds: Sequence[int] = tuple(DEFAULT_SEEDS),
                   **overrides) -> List[BenchConfig]:
    """
    네 가지 챌린지 격자

    1. 전이 파라미터 오차 (환경별 두 수준)
    2. 관측 노이즈 σ_low/σ_high + 숨김 차원 h_low/h_high
    3. 행동 노이즈 0.2/0.5 (연속 행동 환경만)
    4. 데이터셋 오염 (노이즈 σ_low/σ_high, 숨김 h_low/h_high) + 히스토리 교란 데이터셋

    Args:
        challenge: 1~4
        env_name: 환경 이름
        agents: 에이전트 목록
        tiers: 데이터셋 tier 목록
        seeds: 시드 목록
        overrides: 각 설정에 공통으로 넣을 값 (output, agent_config, eval_episodes 등)
    """
    exact: List[Dict[str, Any]] = []
    clean = [{'tier': tier} for tier in tiers]
    noise, hidden = CHALLENGE_LEVELS['obs_noise'], CHALLENGE_LEVELS['hidden_dims'].get(env_name)

    if challenge == 1:
        levels = CHALLENGE_LEVELS['transition'].get(env_name)
        if not levels:
            raise ConfigError(f"{env_name}에는 전이 오차 수준이 정의되어 있지 않습니다")
        sims = [[{'kind': 'transition', 'overrides': dict(overrides_)}] for _, overrides_ in levels]
        datasets = clean
    elif challenge == 2:
        if hidden is None:
            raise ConfigError(f"{env_name}에는 숨김 차원 수준이 정의되어 있지 않습니다")
        sims = [[{'kind': 'obs_noise', 'sigma': noise['low']}], [{'kind': 'obs_noise', 'sigma': noise['high']}],
                [{'kind': 'hidden_dims', 'indices': [hidden['low']]}],
                [{'kind': 'hidden_dims', 'indices': [hidden['high']]}]]
        datasets = clean
    elif challenge == 3:
        if make_env(env_name).action_kind != 'continuous':
            raise ConfigError(f"행동 노이즈 챌린지는 연속 행동 환경에서만 정의됩니다: {env_name}")
        action = CHALLENGE_LEVELS['action_noise']
        sims = [[{'kind': 'action_noise', 'sigma': action['low']}], [{'kind': 'action_noise', 'sigma': action['high']}]]
        datasets = clean
    elif challenge == 4:
        if hidden is None:
            raise ConfigError(f"{env_name}에는 숨김 차원 수준이 정의되어 있지 않습니다")
        sims = [exact]
        corruptions = [
            [{'kind': 'obs_noise', 'sigma': noise['low']}],
            [{'kind': 'obs_noise', 'sigma': noise['high']}],
            [{'kind': 'hidden_dims', 'indices': [hidden['low']]}],
            [{'kind': 'hidden_dims', 'indices': [hidden['high']]}],
        ]
        datasets = [{'tier': tier, 'corruption': c} for tier in tiers for c in corruptions]
        datasets += [{'tier': tier, 'history_k': CHALLENGE_LEVELS['history_k']} for tier in tiers]
    else:
        raise ConfigError(f"챌린지 번호는 1~4입니다: {challenge}")

    defaults = {'env': env_name, 'seeds': list(seeds), **overrides}
    return expand_grid(defaults, {'sim2real': sims, 'dataset': datasets, 'agent': list(agents)})


# ===== 실행 =====

@dataclass
class RunResult:
    benchmark_id: str
    agent: str
    seed: int
    raw_return: float
    normalized_score: float
    wall_time: float
    config_hash: str
    dataset_hash: str = ""
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_row(self) -> Dict[str, Any]:
        return {column: getattr(self, column) for column in RESULTS_COLUMNS}


def _dataset_cache_path(config: BenchConfig, recipe: DatasetRecipe, seed: int) -> Path:
    return Path(config.dataset_dir) / f"{config.env}_{recipe.label}_{recipe.recipe_hash(seed)}.jsonl"


def obtain_dataset(config: BenchConfig, env: Env, seed: int, refs: Optional[ReferencePair] = None,
                   verbose: bool = False) -> Dataset:
    """
    파일 경로면 읽고, 레시피면 캐시를 찾은 뒤 없으면 생성해서 저장

    Raises:
        ConfigError: 데이터셋 환경이 벤치마크 환경과 다를 때
    """
    if isinstance(config.dataset, DatasetRecipe):
        path = _dataset_cache_path(config, config.dataset, seed)
        if path.exists():
            if verbose:
                print(f"📂 캐시된 데이터셋: {path}")
            dataset = read_dataset(path)
        else:
            dataset = build_tier_dataset(env, config.dataset, seed, refs=refs,
                                         refs_cache=config.refs_cache, verbose=verbose)
            write_dataset(dataset, path)
    else:
        dataset = read_dataset(config.dataset)

    if dataset.meta.env_name != config.env:
        raise ConfigError(f"데이터셋 환경({dataset.meta.env_name})이 벤치마크 환경({config.env})과 다릅니다")
    return dataset


def run_single(config: BenchConfig, seed: int, verbose: bool = False) -> RunResult:
    """
    (설정, 시드) 하나 실행. 실패는 예외 대신 error가 채워진 RunResult로 돌려준다.
    """
    start = time.perf_counter()
    digest = ""
    try:
        true_env = config.true_env()
        refs = compute_reference_pair(true_env, cache_path=config.refs_cache)
        agent_config = AgentConfig.for_env(config.env, config.agent_config)

        dataset = None
        if config.agent in DATASET_AGENTS:
            dataset = obtain_dataset(config, true_env, seed, refs=refs, verbose=verbose)
            digest = dataset_hash(dataset)

        if config.agent == 'online_q':
            result = train_online_q(config.simulator(), agent_config, seed, verbose=verbose)
        elif config.agent == 'offline_bcq':
            result = train_offline_bcq(dataset, agent_config, seed)
        elif config.agent == 'mopo_lite':
            result = train_mopo_lite(dataset, agent_config, seed, verbose=verbose)
        else:
            result = train_hymopo(dataset, config.simulator(), agent_config, seed, verbose=verbose)

        raw, _ = evaluate_policy(true_env, result.policy, config.eval_episodes, EVAL_SEED_OFFSET + seed)
        return RunResult(
            benchmark_id=config.benchmark_id, agent=config.agent, seed=int(seed),
            raw_return=raw, normalized_score=refs.normalize(raw),
            wall_time=time.perf_counter() - start, config_hash=config.config_hash, dataset_hash=digest,
        )
    except Exception as e:
        return RunResult(
            benchmark_id=config.benchmark_id, agent=config.agent, seed=int(seed),
            raw_return=float('nan'), normalized_score=float('nan'),
            wall_time=time.perf_counter() - start, config_hash=config.config_hash, dataset_hash=digest,
            error=f"{type(e).__name__}: {e}",
        )


def _run_task(task) -> RunResult:
    config, seed = task
    return run_single(config, seed)


def run_benchmark(configs: Union[BenchConfig, Sequence[BenchConfig]], jobs: int = 1, verbose: bool = False,
                  write: bool = True) -> List[RunResult]:
    """
    (설정 × 시드) 실행 후 결과 파일에 추가

    참조 점수는 작업을 나누기 전에 메인 프로세스에서 계산해 캐시 파일 쓰기가 한 곳에서만 일어나게 한다.

    Args:
        configs: 설정 하나 또는 목록
        jobs: 병렬 프로세스 수 (1이면 순차 실행)
        verbose: 진행 상황 출력
        write: 성공한 결과를 각 설정의 output CSV에 추가

    Returns:
        작업 순서대로의 RunResult 목록 (실패 포함)
    """
    if isinstance(configs, BenchConfig):
        configs = [configs]
    for config in configs:
        config.validate()

    seen = set()
    for config in configs:
        key = (config.env, json.dumps(config.env_params, sort_keys=True, default=str), config.refs_cache)
        if key not in seen:
            seen.add(key)
            compute_reference_pair(config.true_env(), cache_path=config.refs_cache, verbose=verbose)

    tasks = [(config, int(seed)) for config in configs for seed in config.seeds]
    if verbose:
        print(f"🚀 {len(configs)}개 설정 × 시드 = {len(tasks)}개 실행 (jobs={jobs})")

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            results = list(executor.map(_run_task, tasks))
    else:
        results = []
        for i, (config, seed) in enumerate(tasks):
            if verbose:
                print(f"[{i + 1}/{len(tasks)}] {config.benchmark_id} / {config.agent} / seed {seed}")
            results.append(run_single(config, seed, verbose=verbose))

    if verbose:
        for result in results:
            if result.ok:
                print(f"  ✅ {result.benchmark_id} {result.agent} seed={result.seed}: "
                      f"{result.normalized_score:.1f} ({result.wall_time:.1f}s)")
            else:
                print(f"  ❌ {result.benchmark_id} {result.agent} seed={result.seed}: {result.error}")

    if write:
        by_output: Dict[str, List[RunResult]] = {}
        for (config, _), result in zip(tasks, results):
            by_output.setdefault(config.output, []).append(result)
        for output, group in by_output.items():
            append_results(group, output)
    return results


# ===== 결과 파일 =====

def results_frame(results: Sequence[RunResult]) -> pd.DataFrame:
    """성공한 결과만 결과 파일 열 순서로"""
    rows = [r.to_row() for r in results if r.ok]
    return pd.DataFrame(rows, columns=RESULTS_COLUMNS)


def append_results(results: Sequence[RunResult], path: str) -> Path:
    """
    결과 CSV에 추가 (파일이 없으면 헤더와 함께 생성)
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = results_frame(results)
    exists = path.exists() and path.stat().st_size > 0
    frame.to_csv(path, mode='a' if exists else 'w', header=not exists, index=False, float_format='%.17g')
    return path


def read_results(path: str) -> pd.DataFrame:
    """
    결과 CSV 읽기

    Raises:
        ValueError: 헤더가 결과 파일 형식과 다를 때
    """
    frame = pd.read_csv(path, dtype={'benchmark_id': str, 'agent': str, 'config_hash': str, 'dataset_hash': str},
                        keep_default_na=False, na_values=[''])
    if list(frame.columns) != RESULTS_COLUMNS:
        raise ValueError(f"결과 파일 헤더가 올바르지 않습니다: {list(frame.columns)}")
    frame['dataset_hash'] = frame['dataset_hash'].fillna("")
    return frame


def failure_summary(results: Sequence[RunResult]) -> pd.DataFrame:
    """실패한 실행 목록 (benchmark_id, agent, seed, error)"""
    rows = [{'benchmark_id': r.benchmark_id, 'agent': r.agent, 'seed': r.seed, 'error': r.error}
            for r in results if not r.ok]
    return pd.DataFrame(rows, columns=['benchmark_id', 'agent', 'seed', 'error'])

