"""
테스트 11: 벤치마크 설정과 실행기
- 설정 검증, 챌린지 격자, 결과 파일, 실패 기록, 작은 windygrid 실행
"""
import math

import pytest


def _small_agent_config():
    return {'sweeps': 2, 'steps_per_sweep': 200, 'fq_iterations': 10, 'eval_episodes': 1,
            'model_epochs': 1, 'rollout_batch': 8, 'rollout_horizon': 2, 'model': {'n_members': 2}}


def _bench_dict(tmp_path, refs_cache, **extra):
    data = {
        'env': 'windygrid',
        'agent': 'offline_bcq',
        'dataset': {'tier': 'random', 'n_records': 500},
        'agent_config': _small_agent_config(),
        'seeds': [0],
        'eval_episodes': 3,
        'output': str(tmp_path / "results.csv"),
        'dataset_dir': str(tmp_path / "datasets"),
        'refs_cache': refs_cache,
    }
    data.update(extra)
    return data


class TestBenchConfig:
    def test_default_benchmark_id(self, tmp_path, seeded_refs_cache):
        from core.benchmark import BenchConfig

        config = BenchConfig.from_dict(_bench_dict(tmp_path, seeded_refs_cache))
        assert config.benchmark_id == "exact__random"

    def test_sim_label_in_id(self, tmp_path, seeded_refs_cache):
        from core.benchmark import BenchConfig

        config = BenchConfig.from_dict(_bench_dict(
            tmp_path, seeded_refs_cache, sim2real=[{'kind': 'transition', 'overrides': {'wind_prob': 0.8}}]))
        assert config.benchmark_id == "wind_prob=0.8__random"
        assert config.simulator().params.wind_prob == 0.8
        assert config.true_env().params.wind_prob == 0.4

    @pytest.mark.parametrize("changes", [
        {'agent': 'sac'},
        {'env': 'cartpole'},
        {'seeds': []},
        {'seeds': [0, 'one']},
        {'eval_episodes': 0},
        {'agent_config': {'learning_rate': 0.1}},
        {'env_params': {'wind_speed': 2}},
        {'dataset': None},
        {'color': 'blue'},
    ])
    def test_invalid(self, tmp_path, seeded_refs_cache, changes):
        from core.benchmark import BenchConfig
        from core.errors import ConfigError

        with pytest.raises(ConfigError):
            BenchConfig.from_dict(_bench_dict(tmp_path, seeded_refs_cache, **changes))

    def test_config_hash_ignores_seeds_and_output(self, tmp_path, seeded_refs_cache):
        from core.benchmark import BenchConfig

        a = BenchConfig.from_dict(_bench_dict(tmp_path, seeded_refs_cache))
        b = BenchConfig.from_dict(_bench_dict(tmp_path, seeded_refs_cache, seeds=[5, 6], output="other.csv"))
        c = BenchConfig.from_dict(_bench_dict(tmp_path, seeded_refs_cache, eval_episodes=4))
        assert a.config_hash == b.config_hash
        assert a.config_hash != c.config_hash

    def test_with_seeds(self, tmp_path, seeded_refs_cache):
        from core.benchmark import BenchConfig

        config = BenchConfig.from_dict(_bench_dict(tmp_path, seeded_refs_cache))
        assert config.with_seeds([3]).seeds == [3]
        assert config.seeds == [0]


class TestGrids:
    def test_challenge_one_pendulum(self):
        """2 전이 수준 × 4 tier × 3 에이전트 = 24"""
        from core.benchmark import challenge_grid

        configs = challenge_grid(1, 'pendulum')
        assert len(configs) == 24
        assert {c.sim_label for c in configs} == {'gravity=19.62', 'friction=0.015'}

    def test_challenge_three_requires_continuous(self):
        from core.benchmark import challenge_grid
        from core.errors import ConfigError

        with pytest.raises(ConfigError):
            challenge_grid(3, 'windygrid')

    def test_challenge_four_adds_history_datasets(self):
        """tier × (4 오염 + 히스토리 교란) 데이터셋, 시뮬레이터는 오차 없음"""
        from core.benchmark import challenge_grid

        configs = challenge_grid(4, 'windygrid', agents=('offline_bcq',), tiers=('random',))
        assert len(configs) == 5
        assert {c.sim_label for c in configs} == {'exact'}
        assert any(c.dataset.history_k == 3 for c in configs)

    def test_invalid_challenge(self):
        from core.benchmark import challenge_grid
        from core.errors import ConfigError

        with pytest.raises(ConfigError):
            challenge_grid(5, 'pendulum')

    def test_grid_file(self, tmp_path):
        from core.benchmark import load_bench_configs

        path = tmp_path / "bench.yaml"
        path.write_text(
            "defaults:\n  env: windygrid\n  seeds: [0, 1]\n"
            "grid:\n  agent: [online_q, offline_bcq]\n  dataset:\n    - {tier: random}\n    - {tier: expert}\n",
            encoding='utf-8')
        configs = load_bench_configs(str(path))
        assert len(configs) == 4
        assert sorted({c.benchmark_id for c in configs}) == ['exact__expert', 'exact__random']

    def test_unknown_grid_key(self):
        from core.benchmark import expand_grid
        from core.errors import ConfigError

        with pytest.raises(ConfigError):
            expand_grid({'env': 'windygrid'}, {'seeds': [[0], [1]]})


class TestResultsFile:
    def _result(self, seed=0, score=50.0, error=None):
        from core.benchmark import RunResult

        return RunResult(benchmark_id="exact__random", agent="offline_bcq", seed=seed, raw_return=-20.0,
                         normalized_score=score, wall_time=1.5, config_hash="abc", dataset_hash="def",
                         error=error)

    def test_append_and_read(self, tmp_path):
        from core.benchmark import append_results, read_results
        from core.config import RESULTS_COLUMNS

        path = tmp_path / "results.csv"
        append_results([self._result(0)], str(path))
        append_results([self._result(1, 60.0)], str(path))
        frame = read_results(str(path))
        assert list(frame.columns) == RESULTS_COLUMNS
        assert list(frame['seed']) == [0, 1]
        assert list(frame['normalized_score']) == [50.0, 60.0]

    def test_failed_runs_not_written(self, tmp_path):
        from core.benchmark import append_results, failure_summary, read_results

        results = [self._result(0), self._result(1, float('nan'), error="ValueError: boom")]
        path = append_results(results, str(tmp_path / "results.csv"))
        assert len(read_results(str(path))) == 1
        failures = failure_summary(results)
        assert list(failures['seed']) == [1]
        assert failures['error'].iloc[0] == "ValueError: boom"

    def test_bad_header(self, tmp_path):
        from core.benchmark import read_results

        path = tmp_path / "results.csv"
        path.write_text("a,b\n1,2\n", encoding='utf-8')
        with pytest.raises(ValueError):
            read_results(str(path))


class TestRun:
    def test_offline_run_writes_results(self, tmp_path, seeded_refs_cache):
        from core.benchmark import BenchConfig, read_results, run_benchmark

        config = BenchConfig.from_dict(_bench_dict(tmp_path, seeded_refs_cache))
        results = run_benchmark(config)
        assert len(results) == 1
        result = results[0]
        assert result.ok, result.error
        assert result.normalized_score == pytest.approx(100.0 * (result.raw_return + 40.0) / 40.0)
        assert result.dataset_hash != ""

        frame = read_results(config.output)
        assert len(frame) == 1
        assert frame['benchmark_id'].iloc[0] == "exact__random"

    def test_dataset_cached_between_runs(self, tmp_path, seeded_refs_cache):
        """같은 레시피/시드 → 캐시 파일을 다시 읽어 같은 데이터셋, 같은 결과"""
        from core.benchmark import BenchConfig, run_single

        config = BenchConfig.from_dict(_bench_dict(tmp_path, seeded_refs_cache))
        first = run_single(config, 0)
        cached = list((tmp_path / "datasets").glob("*.jsonl"))
        second = run_single(config, 0)
        assert len(cached) == 1
        assert first.dataset_hash == second.dataset_hash
        assert first.raw_return == second.raw_return

    def test_hybrid_run_with_transition_error(self, tmp_path, seeded_refs_cache):
        from core.benchmark import BenchConfig, run_single

        config = BenchConfig.from_dict(_bench_dict(
            tmp_path, seeded_refs_cache, agent='hymopo',
            sim2real=[{'kind': 'transition', 'overrides': {'wind_prob': 0.8}}]))
        result = run_single(config, 0)
        assert result.ok, result.error
        assert math.isfinite(result.normalized_score)

    def test_online_run_without_dataset(self, tmp_path, seeded_refs_cache):
        from core.benchmark import BenchConfig, run_single

        config = BenchConfig.from_dict(_bench_dict(tmp_path, seeded_refs_cache, agent='online_q', dataset=None))
        assert config.benchmark_id == "exact__none"
        result = run_single(config, 0)
        assert result.ok, result.error
        assert result.dataset_hash == ""

    def test_error_captured(self, tmp_path, seeded_refs_cache):
        """없는 데이터셋 파일 → 예외 대신 error가 채워진 결과"""
        from core.benchmark import BenchConfig, run_benchmark

        config = BenchConfig.from_dict(_bench_dict(tmp_path, seeded_refs_cache,
                                                   dataset=str(tmp_path / "missing.jsonl")))
        results = run_benchmark(config)
        assert not results[0].ok
        assert "FileNotFoundError" in results[0].error
        assert math.isnan(results[0].raw_return)

    def test_dataset_env_mismatch(self, tmp_path, seeded_refs_cache, uniform_pendulum_dataset):
        from core.benchmark import BenchConfig, run_single
        from data.dataset import write_dataset

        path = write_dataset(uniform_pendulum_dataset, str(tmp_path / "pendulum.jsonl"))
        config = BenchConfig.from_dict(_bench_dict(tmp_path, seeded_refs_cache, dataset=str(path)))
        result = run_single(config, 0)
        assert "ConfigError" in result.error
