"""
특징 맵 (Q 함수와 동역학 모델 공용)

- polynomial: 다항 특징 (sklearn PolynomialFeatures, bias 포함)
- random_fourier: RBF 커널 근사 랜덤 푸리에 특징 (sklearn RBFSampler) + bias
- tabular: 격자 좌표 one-hot + bias (windygrid, bandit)
- angle_grid: (cosθ, sinθ, ω) 묶음을 (θ, ω) 격자 칸 one-hot + bias로 (진자 상태 집계)
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from sklearn.kernel_approximation import RBFSampler
from sklearn.preprocessing import PolynomialFeatures

FEATURE_KINDS = ('polynomial', 'random_fourier', 'tabular', 'angle_grid')
ANGLE_BLOCK = 3


@dataclass
class FeatureMap:
    """
    입력 벡터 → 특징 벡터

    Args:
        kind: 'polynomial' | 'random_fourier' | 'tabular' | 'angle_grid'
        input_dim: 입력 차원
        degree: 다항 차수 (polynomial)
        count: 랜덤 특징 개수 (random_fourier)
        bandwidth: RBF 커널 폭 (random_fourier)
        seed: 랜덤 특징 시드
        scale: 입력을 나눌 차원별 스케일
        lows, sizes: 격자 하한과 차원별 칸 수 (tabular)
        bins: (θ 칸 수, ω 칸 수) (angle_grid)
        limit: ω 격자 범위 [-limit, limit], 밖은 끝 칸 (angle_grid)
    """
    kind: str
    input_dim: int
    degree: int = 2
    count: int = 100
    bandwidth: float = 1.0
    seed: int = 0
    scale: Optional[List[float]] = None
    lows: Optional[List[float]] = None
    sizes: Optional[List[int]] = None
    bins: Optional[List[int]] = None
    limit: float = 8.0
    _transformer: Any = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ValueError(f"알 수 없는 특징 종류입니다: {self.kind} (사용 가능: {', '.join(FEATURE_KINDS)})")
        if self.scale is not None:
            self.scale = [float(s) for s in self.scale]
            if len(self.scale) != self.input_dim:
                raise ValueError(f"scale 길이({len(self.scale)})가 입력 차원({self.input_dim})과 다릅니다")
        if self.kind == 'tabular':
            if self.lows is None or self.sizes is None:
                raise ValueError("tabular 특징에는 lows와 sizes가 필요합니다")
            self.lows = [float(v) for v in self.lows]
            self.sizes = [int(v) for v in self.sizes]
            if len(self.sizes) != self.input_dim:
                raise ValueError(f"격자 차원({len(self.sizes)})이 입력 차원({self.input_dim})과 다릅니다")
        elif self.kind == 'angle_grid':
            if self.input_dim < ANGLE_BLOCK or self.input_dim % ANGLE_BLOCK:
                raise ValueError(f"angle_grid 입력은 (cosθ, sinθ, ω) 묶음이어야 합니다: 입력 차원 {self.input_dim}")
            self.bins = [int(v) for v in (self.bins or [24, 14])]
            if len(self.bins) != 2 or min(self.bins) < 1 or not self.limit > 0:
                raise ValueError(f"angle_grid bins는 양수 2개, limit은 양수여야 합니다: {self.bins}, {self.limit}")
        elif self.kind == 'polynomial':
            self._transformer = PolynomialFeatures(degree=self.degree, include_bias=True)
            self._transformer.fit(np.zeros((1, self.input_dim)))
        else:
            self._transformer = RBFSampler(
                gamma=1.0 / (2.0 * self.bandwidth ** 2),
                n_components=self.count,
                random_state=self.seed,
            )
            self._transformer.fit(np.zeros((1, self.input_dim)))

    @property
    def output_dim(self) -> int:
        if self.kind == 'tabular':
            return self.n_cells + 1
        if self.kind == 'angle_grid':
            return (self.input_dim // ANGLE_BLOCK) * self.bins[0] * self.bins[1] + 1
        if self.kind == 'polynomial':
            return int(self._transformer.n_output_features_)
        return self.count + 1

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.sizes)) if self.sizes else 1

    def _as_rows(self, inputs: np.ndarray) -> np.ndarray:
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        if inputs.shape[1] != self.input_dim:
            raise ValueError(f"입력 차원({inputs.shape[1]})이 특징 맵 입력 차원({self.input_dim})과 다릅니다")
        return inputs

    def _scaled(self, inputs: np.ndarray) -> np.ndarray:
        inputs = self._as_rows(inputs)
        if self.scale is None:
            return inputs
        return inputs / np.asarray(self.scale)

    def cell_index(self, inputs: np.ndarray) -> np.ndarray:
        """격자 칸 번호 (반올림 후 범위로 클리핑)"""
        inputs = self._as_rows(inputs)
        if self.input_dim == 0:
            return np.zeros(inputs.shape[0], dtype=np.int64)
        sizes = np.asarray(self.sizes)
        coords = np.clip(np.rint(inputs - np.asarray(self.lows)), 0, sizes - 1).astype(np.int64)
        return np.ravel_multi_index(tuple(coords.T), tuple(sizes))

    def angle_cells(self, inputs: np.ndarray) -> np.ndarray:
        """
        묶음별 (θ, ω) 칸 번호

        θ = atan2(sinθ, cosθ)를 (-π, π] 등분, ω는 [-limit, limit] 등분 (밖은 끝 칸).
        칸 수가 짝수면 θ=0과 ω=0이 칸 경계다.

        Returns:
            (n, 묶음 수) int - 묶음 j의 칸은 j × (θ 칸 수 × ω 칸 수)부터 시작
        """
        inputs = self._as_rows(inputs)
        n_theta, n_omega = self.bins
        blocks = inputs.reshape(inputs.shape[0], self.input_dim // ANGLE_BLOCK, ANGLE_BLOCK)
        theta = np.arctan2(blocks[..., 1], blocks[..., 0])
        t_idx = np.clip(np.floor((theta + np.pi) * n_theta / (2.0 * np.pi)), 0, n_theta - 1)
        w_idx = np.clip(np.floor((blocks[..., 2] + self.limit) * n_omega / (2.0 * self.limit)), 0, n_omega - 1)
        offsets = n_theta * n_omega * np.arange(blocks.shape[1])
        return (t_idx * n_omega + w_idx).astype(np.int64) + offsets

    def transform(self, inputs: np.ndarray) -> np.ndarray:
        inputs = self._scaled(inputs)
        n = inputs.shape[0]
        if self.kind == 'tabular':
            out = np.zeros((n, self.output_dim))
            out[np.arange(n), self.cell_index(inputs)] = 1.0
            out[:, -1] = 1.0
            return out
        if self.kind == 'angle_grid':
            out = np.zeros((n, self.output_dim))
            out[np.arange(n)[:, None], self.angle_cells(inputs)] = 1.0
            out[:, -1] = 1.0
            return out
        if self.kind == 'polynomial':
            return self._transformer.transform(inputs)
        return np.hstack([self._transformer.transform(inputs), np.ones((n, 1))])

    def with_seed(self, seed: int) -> "FeatureMap":
        data = self.to_dict()
        data['seed'] = int(seed)
        return FeatureMap.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': self.kind, 'input_dim': self.input_dim, 'degree': self.degree,
            'count': self.count, 'bandwidth': self.bandwidth, 'seed': self.seed,
            'scale': self.scale, 'lows': self.lows, 'sizes': self.sizes,
            'bins': self.bins, 'limit': self.limit,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FeatureMap":
        return cls(**data)


def build_feature_map(spec: Dict[str, Any], input_dim: int, seed: int = 0,
                      grid: Optional[tuple] = None) -> FeatureMap:
    """
    설정 딕셔너리로 특징 맵 생성

    Args:
        spec: {'kind': ..., 'count': ..., 'bandwidth': ..., 'scale': [...]} (core.config의 *_FEATURES 항목)
        input_dim: 입력 차원
        seed: 랜덤 특징 시드
        grid: tabular일 때 (lows, sizes)

    Returns:
        FeatureMap
    """
    kind = spec.get('kind', 'random_fourier')
    scale = spec.get('scale')
    if scale is not None and len(scale) != input_dim and len(scale) > 0 and input_dim % len(scale) == 0:
        # 히스토리 관측 (k개 연결)
        scale = list(scale) * (input_dim // len(scale))
    if kind == 'tabular':
        if grid is None:
            raise ValueError("tabular 특징은 열거 가능한 관측 격자가 있는 환경에서만 쓸 수 있습니다")
        lows, sizes = grid
        return FeatureMap(kind='tabular', input_dim=input_dim, lows=list(lows), sizes=list(sizes))
    if kind == 'angle_grid':
        return FeatureMap(kind='angle_grid', input_dim=input_dim, bins=list(spec.get('bins', [24, 14])),
                          limit=float(spec.get('limit', 8.0)))
    return FeatureMap(
        kind=kind,
        input_dim=input_dim,
        degree=int(spec.get('degree', 2)),
        count=int(spec.get('count', 100)),
        bandwidth=float(spec.get('bandwidth', 1.0)),
        seed=int(seed),
        scale=scale,
    )
