"""
테스트 3: 특징 맵 (tabular one-hot, 진자 각도 격자, 랜덤 푸리에, 다항)
"""
import numpy as np
import pytest


class TestTabularFeatures:
    """격자 칸 one-hot + 편향 열"""

    def test_one_hot_with_bias(self):
        from core.features import FeatureMap

        fmap = FeatureMap(kind='tabular', input_dim=2, lows=[0, 0], sizes=[3, 2])
        phi = fmap.transform(np.array([[0, 0], [2, 1], [1, 0]]))
        assert phi.shape == (3, 7)
        assert np.array_equal(phi[:, -1], np.ones(3))
        assert np.array_equal(phi[:, :-1].sum(axis=1), np.ones(3))
        assert phi[1, 5] == 1.0

    def test_out_of_grid_clipped(self):
        """격자 밖 입력은 가장 가까운 칸"""
        from core.features import FeatureMap

        fmap = FeatureMap(kind='tabular', input_dim=1, lows=[0], sizes=[4])
        assert list(fmap.cell_index(np.array([[-3.0], [9.0], [1.4]]))) == [0, 3, 1]

    def test_empty_input(self):
        """관측 차원 0 (밴딧) → 칸 하나 + 편향"""
        from core.features import FeatureMap

        fmap = FeatureMap(kind='tabular', input_dim=0, lows=[], sizes=[])
        phi = fmap.transform(np.zeros((4, 0)))
        assert phi.shape == (4, 2)

    def test_requires_grid(self):
        from core.features import build_feature_map

        with pytest.raises(ValueError):
            build_feature_map({'kind': 'tabular'}, input_dim=3)


class TestAngleGridFeatures:
    """(cosθ, sinθ, ω) → (θ, ω) 칸 one-hot + 편향 열"""

    def test_cells(self):
        from core.features import FeatureMap

        fmap = FeatureMap(kind='angle_grid', input_dim=3, bins=[4, 2], limit=2.0)
        obs = np.array([[1.0, 0.0, 0.5],     # θ=0, ω=0.5 → θ칸 2, ω칸 1
                        [-1.0, 0.0, -0.5],   # θ=π → 끝 θ칸 3, ω칸 0
                        [0.0, -1.0, 9.0]])   # θ=-π/2 → θ칸 1, 범위 밖 ω → 끝 칸 1
        phi = fmap.transform(obs)
        assert phi.shape == (3, 9)
        assert list(np.argmax(phi[:, :-1], axis=1)) == [5, 6, 3]
        assert np.array_equal(phi[:, -1], np.ones(3))
        assert np.array_equal(phi.sum(axis=1), np.full(3, 2.0))

    def test_upright_boundary(self):
        """칸 수가 짝수면 θ=0 양쪽이 다른 칸 (왼쪽/오른쪽 기울기 구분)"""
        from core.features import FeatureMap

        fmap = FeatureMap(kind='angle_grid', input_dim=3, bins=[24, 14], limit=7.0)
        left, right = fmap.angle_cells(np.array([[1.0, -0.01, 0.2], [1.0, 0.01, 0.2]]))[:, 0]
        assert left != right

    def test_history_blocks(self):
        """k개 관측을 이은 입력은 묶음마다 칸 하나"""
        from core.features import build_feature_map

        fmap = build_feature_map({'kind': 'angle_grid', 'bins': [4, 2], 'limit': 2.0}, input_dim=6)
        assert fmap.output_dim == 2 * 8 + 1
        phi = fmap.transform(np.array([[1.0, 0.0, 0.5, 1.0, 0.0, 0.5]]))
        assert phi.sum() == 3.0
        assert phi[0, 5] == 1.0 and phi[0, 8 + 5] == 1.0

    def test_pendulum_default(self):
        from core.config import Q_FEATURES
        from core.features import build_feature_map

        fmap = build_feature_map(Q_FEATURES['pendulum'], input_dim=3)
        assert fmap.kind == 'angle_grid'
        assert fmap.output_dim == 24 * 14 + 1

    def test_round_trip_dict(self):
        from core.features import FeatureMap

        fmap = FeatureMap(kind='angle_grid', input_dim=3, bins=[6, 4], limit=3.0)
        clone = FeatureMap.from_dict(fmap.to_dict())
        x = np.random.default_rng(0).normal(size=(20, 3))
        assert np.array_equal(fmap.transform(x), clone.transform(x))

    def test_requires_blocks_of_three(self):
        from core.features import FeatureMap

        with pytest.raises(ValueError):
            FeatureMap(kind='angle_grid', input_dim=4)


class TestRandomFourierFeatures:
    def test_output_dim(self):
        from core.features import build_feature_map

        fmap = build_feature_map({'kind': 'random_fourier', 'count': 50}, input_dim=3, seed=1)
        assert fmap.output_dim == 51
        assert fmap.transform(np.zeros((5, 3))).shape == (5, 51)

    def test_same_seed_same_features(self):
        from core.features import FeatureMap, build_feature_map

        fmap = build_feature_map({'kind': 'random_fourier', 'count': 20, 'bandwidth': 0.5}, input_dim=2, seed=3)
        clone = FeatureMap.from_dict(fmap.to_dict())
        x = np.random.default_rng(0).normal(size=(10, 2))
        assert np.array_equal(fmap.transform(x), clone.transform(x))

    def test_different_seed_different_features(self):
        from core.features import build_feature_map

        x = np.ones((1, 2))
        a = build_feature_map({'kind': 'random_fourier', 'count': 20}, input_dim=2, seed=0)
        b = a.with_seed(1)
        assert not np.array_equal(a.transform(x), b.transform(x))

    def test_history_scale_tiled(self):
        """k개 관측을 이은 입력이면 scale을 k번 반복"""
        from core.features import build_feature_map

        fmap = build_feature_map({'kind': 'random_fourier', 'count': 10, 'scale': [1.0, 1.0, 4.0]},
                                 input_dim=9, seed=0)
        assert fmap.scale == [1.0, 1.0, 4.0] * 3


class TestFeatureMapValidation:
    def test_unknown_kind(self):
        from core.features import FeatureMap

        with pytest.raises(ValueError):
            FeatureMap(kind='wavelet', input_dim=2)

    def test_scale_length_mismatch(self):
        from core.features import FeatureMap

        with pytest.raises(ValueError):
            FeatureMap(kind='polynomial', input_dim=2, scale=[1.0, 2.0, 3.0])

    def test_input_dim_mismatch(self):
        from core.features import FeatureMap

        fmap = FeatureMap(kind='polynomial', input_dim=2, degree=2)
        with pytest.raises(ValueError):
            fmap.transform(np.zeros((3, 4)))

    def test_polynomial_dim(self):
        """2차 다항 (입력 2개) → 1 + 2 + 3 = 6"""
        from core.features import FeatureMap

        assert FeatureMap(kind='polynomial', input_dim=2, degree=2).output_dim == 6
