"""
테스트 8: 데이터셋 생성 (스크립트 행동 정책, 특권/히스토리 수집, 레시피)
"""
import numpy as np
import pytest


class TestScriptedBehaviors:
    def test_wind_aware_rules(self):
        """바람 없으면 세로, 바람 불면 가로로 목표에 다가감"""
        from core.environments import WindyGridParams
        from data.generate_datasets import wind_aware_behavior

        policy = wind_aware_behavior(WindyGridParams(), epsilon=0.0)
        assert policy.act(np.array([0.0, 0.0, 0.0])) == 0   # 위
        assert policy.act(np.array([0.0, 0.0, 1.0])) == 3   # 오른쪽
        assert policy.act(np.array([4.0, 0.0, 1.0])) == 0   # 가로가 맞으면 세로
        assert policy.act(np.array([0.0, 4.0, 0.0])) == 3   # 세로가 맞으면 가로

    def test_wind_blind_ignores_observed_wind(self):
        from core.environments import WindyGridParams
        from data.generate_datasets import wind_blind_behavior

        policy = wind_blind_behavior(WindyGridParams(), epsilon=0.0)
        calm = policy.action_probs(np.array([1.0, 1.0, 0.0]))
        windy = policy.action_probs(np.array([1.0, 1.0, 1.0]))
        assert np.array_equal(calm, windy)
        assert calm[0] == pytest.approx([0.6, 0.0, 0.0, 0.4])

    def test_bandit_behavior(self):
        from data.generate_datasets import bandit_behavior

        policy = bandit_behavior()
        assert policy.act(np.array([0.0])) == 1
        assert policy.act(np.array([1.0])) == 0


class TestCollection:
    def test_exact_record_count_and_meta(self, windygrid_env):
        from core.agents import UniformPolicy
        from data.generate_datasets import collect_dataset

        dataset = collect_dataset(windygrid_env, UniformPolicy(np.arange(4)), 777, 'observed', seed=0,
                                  tier='random')
        assert len(dataset) == 777
        assert dataset.meta.record_count == 777
        assert dataset.meta.env_name == 'windygrid'
        assert dataset.meta.behavior_mode == 'observed'

    def test_deterministic_given_seed(self, windygrid_env):
        from core.agents import UniformPolicy
        from data.generate_datasets import collect_dataset

        a = collect_dataset(windygrid_env, UniformPolicy(np.arange(4)), 300, 'observed', seed=4, tier='random')
        b = collect_dataset(windygrid_env, UniformPolicy(np.arange(4)), 300, 'observed', seed=4, tier='random')
        assert a == b

    def test_unknown_behavior_mode(self, windygrid_env):
        from core.agents import UniformPolicy
        from data.generate_datasets import collect_dataset

        with pytest.raises(ValueError):
            collect_dataset(windygrid_env, UniformPolicy(np.arange(4)), 10, 'oracle', seed=0)

    def test_privileged_bandit_actions_follow_z(self, bandit_env):
        """특권 수집: 관측은 비었지만 행동은 z에 따라 결정됨 (보상으로 확인)"""
        from data.generate_datasets import bandit_behavior, collect_dataset

        dataset = collect_dataset(bandit_env, bandit_behavior(), 20_000, 'privileged', seed=0)
        b = dataset.batch
        assert dataset.meta.behavior_mode == 'privileged'
        assert b.obs.shape == (20_000, 0)
        # a0은 z=1에서만 선택되므로 P(r=1|a0) ≈ 1/3
        assert b.rewards[b.actions == 0].mean() == pytest.approx(1 / 3, abs=0.03)
        assert b.rewards[b.actions == 1].mean() == pytest.approx(1 / 4, abs=0.03)

    def test_history_confounded_meta(self, windygrid_env):
        """k>1이면 privileged + history_confounded, 기록 관측은 현재 관측만"""
        from data.generate_datasets import collect_history_confounded, wind_aware_behavior

        policy = wind_aware_behavior(windygrid_env.params)
        dataset = collect_history_confounded(windygrid_env, 3, policy, 200, seed=0)
        assert dataset.meta.behavior_mode == 'privileged'
        assert dataset.meta.corruption == [{'kind': 'history_confounded', 'k': 3}]
        assert dataset.batch.obs.shape == (200, 3)

    def test_history_of_one_equals_observed(self, windygrid_env):
        from data.generate_datasets import collect_dataset, collect_history_confounded, wind_aware_behavior

        policy = wind_aware_behavior(windygrid_env.params)
        plain = collect_dataset(windygrid_env, policy, 200, 'observed', seed=1)
        windowed = collect_history_confounded(windygrid_env, 1, policy, 200, seed=1)
        assert plain == windowed


class TestRecipes:
    def test_defaults(self):
        from data.recipes import DatasetRecipe

        recipe = DatasetRecipe.from_dict({'env': 'windygrid', 'tier': 'random'})
        assert recipe.n_records == 20_000
        assert recipe.label == 'random'

    def test_env_from_benchmark(self):
        from data.recipes import DatasetRecipe

        recipe = DatasetRecipe.from_dict({'tier': 'expert'}, env_name='pendulum')
        assert recipe.env == 'pendulum'
        assert recipe.n_records == 100_000

    def test_label(self):
        from data.recipes import DatasetRecipe

        recipe = DatasetRecipe.from_dict({
            'env': 'windygrid', 'tier': 'scripted', 'behavior': 'wind_aware', 'behavior_mode': 'privileged',
            'hide_during_collection': [2], 'corruption': [{'kind': 'obs_noise', 'sigma': 0.05}],
        })
        assert recipe.label == 'wind_aware-priv-hide2-noise0.05'

    @pytest.mark.parametrize("data", [
        {'env': 'windygrid', 'tier': 'legendary'},
        {'env': 'windygrid', 'tier': 'scripted'},
        {'env': 'windygrid', 'tier': 'random', 'behavior': 'wind_aware'},
        {'env': 'windygrid', 'tier': 'random', 'n_records': 0},
        {'env': 'windygrid', 'tier': 'random', 'history_k': 0},
        {'env': 'windygrid', 'tier': 'random', 'corruption': [{'kind': 'obs_noise', 'scale': 1.0}]},
        {'env': 'windygrid', 'tier': 'random', 'seeds': [0]},
        {'tier': 'random'},
    ])
    def test_invalid(self, data):
        from core.errors import ConfigError
        from data.recipes import DatasetRecipe

        with pytest.raises(ConfigError):
            DatasetRecipe.from_dict(data)

    def test_hash_ignores_output(self):
        from data.recipes import DatasetRecipe

        a = DatasetRecipe.from_dict({'env': 'windygrid', 'tier': 'random', 'output': 'a.jsonl'})
        b = DatasetRecipe.from_dict({'env': 'windygrid', 'tier': 'random', 'output': 'b.jsonl'})
        assert a.recipe_hash(0) == b.recipe_hash(0)
        assert a.recipe_hash(0) != a.recipe_hash(1)

    def test_load_recipes_file(self, tmp_path):
        from data.recipes import load_recipes

        path = tmp_path / "recipes.yaml"
        path.write_text("recipes:\n  - env: bandit\n    tier: scripted\n    behavior: bandit_reference\n"
                        "    behavior_mode: privileged\n    n_records: 100\n", encoding='utf-8')
        recipes = load_recipes(str(path))
        assert len(recipes) == 1
        assert recipes[0].behavior == 'bandit_reference'


class TestBuildTierDataset:
    def test_scripted_privileged_hidden(self, windygrid_env):
        """바람을 보고 행동하되 기록에서는 숨긴 교란 데이터셋"""
        from data.generate_datasets import build_tier_dataset
        from data.recipes import DatasetRecipe

        recipe = DatasetRecipe.from_dict({
            'env': 'windygrid', 'tier': 'scripted', 'behavior': 'wind_aware', 'behavior_mode': 'privileged',
            'hide_during_collection': [2], 'n_records': 500,
        })
        dataset = build_tier_dataset(windygrid_env, recipe, seed=0)
        assert len(dataset) == 500
        assert np.all(dataset.batch.obs[:, 2] == 0.0)
        assert dataset.meta.behavior_mode == 'privileged'

    def test_random_tier_with_noise(self, windygrid_env):
        from data.generate_datasets import build_tier_dataset
        from data.recipes import DatasetRecipe

        recipe = DatasetRecipe.from_dict({
            'env': 'windygrid', 'tier': 'random', 'n_records': 300,
            'corruption': [{'kind': 'obs_noise', 'sigma': 0.05}],
        })
        dataset = build_tier_dataset(windygrid_env, recipe, seed=0)
        assert dataset.meta.tier == 'random'
        assert dataset.meta.corruption[0]['kind'] == 'obs_noise'

    def test_unknown_tier_policy(self, windygrid_env):
        from data.generate_datasets import train_tier_policy

        with pytest.raises(ValueError):
            train_tier_policy(windygrid_env, 'medium_replay')

    def test_medium_unreachable_raises(self, refs_cache_path):
        """보상이 항상 0인 밴딧에서는 정규화 목표에 도달할 수 없다"""
        from core.environments import BanditSpec, ConfoundedBanditEnv
        from core.errors import TierTrainingError
        from core.normalization import ReferencePair
        from data.generate_datasets import train_tier_policy

        env = ConfoundedBanditEnv(BanditSpec.constant(0))
        budget = {'sweeps': 2, 'steps_per_sweep': 20, 'eval_episodes': 1}
        with pytest.raises(TierTrainingError):
            train_tier_policy(env, 'medium', budget, seed=0, refs=ReferencePair(0.0, 1.0), refs_cache=refs_cache_path)
