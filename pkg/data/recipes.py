"""
데이터셋 레시피 (YAML)

예시:
  - env: windygrid
    tier: scripted
    behavior: wind_aware
    behavior_mode: privileged
    hide_during_collection: [2]
    n_records: 20000
    output: datasets/windygrid_confounded.jsonl
"""
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional

import yaml

from core.config import DATASET_SIZES
from core.errors import ConfigError

RECIPE_TIERS = ('random', 'medium', 'medium_replay', 'medium_expert', 'expert', 'scripted')
SCRIPTED_BEHAVIOR_NAMES = ('wind_aware', 'wind_blind', 'bandit_reference')
CORRUPTION_KINDS = {'obs_noise': {'sigma', 'seed'}, 'hidden_dims': {'indices'}}


def load_yaml(file_path: str) -> Any:
    """
    YAML 파일을 읽어서 반환합니다.

    Args:
        file_path: YAML 파일 경로

    Returns:
        파싱된 데이터
    """
    with open(file_path, 'r', encoding='utf-8') as f:
        return yaml.safe_load(f)


@dataclass
class DatasetRecipe:
    env: str
    tier: str
    n_records: Optional[int] = None
    env_params: Dict[str, Any] = field(default_factory=dict)
    behavior_mode: str = 'observed'
    behavior: Optional[str] = None
    epsilon: Optional[float] = None
    hide_during_collection: List[int] = field(default_factory=list)
    history_k: int = 1
    action_delay: int = 0
    corruption: List[Dict[str, Any]] = field(default_factory=list)
    budget: Dict[str, Any] = field(default_factory=dict)
    output: Optional[str] = None

    def __post_init__(self):
        if self.n_records is None:
            self.n_records = DATASET_SIZES.get(self.env, 10_000)
        self.hide_during_collection = [int(i) for i in self.hide_during_collection]

    def validate(self):
        if self.tier not in RECIPE_TIERS:
            raise ConfigError(f"알 수 없는 tier입니다: {self.tier} (사용 가능: {', '.join(RECIPE_TIERS)})")
        if self.tier == 'scripted' and self.behavior not in SCRIPTED_BEHAVIOR_NAMES:
            raise ConfigError(f"scripted tier에는 behavior가 필요합니다 (사용 가능: {', '.join(SCRIPTED_BEHAVIOR_NAMES)})")
        if self.tier != 'scripted' and self.behavior is not None:
            raise ConfigError(f"behavior는 scripted tier에서만 쓸 수 있습니다: {self.behavior}")
        if self.behavior_mode not in ('observed', 'privileged'):
            raise ConfigError(f"알 수 없는 behavior_mode입니다: {self.behavior_mode}")
        if int(self.n_records) < 1:
            raise ConfigError(f"n_records는 1 이상이어야 합니다: {self.n_records}")
        if int(self.history_k) < 1:
            raise ConfigError(f"history_k는 1 이상이어야 합니다: {self.history_k}")
        if int(self.action_delay) < 0:
            raise ConfigError(f"action_delay는 0 이상이어야 합니다: {self.action_delay}")
        if self.epsilon is not None and not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError(f"epsilon은 [0, 1] 범위여야 합니다: {self.epsilon}")
        for item in self.corruption:
            kind = item.get('kind') if isinstance(item, dict) else None
            if kind not in CORRUPTION_KINDS:
                raise ConfigError(f"알 수 없는 데이터셋 오염 항목입니다: {item}")
            unknown = sorted(set(item) - CORRUPTION_KINDS[kind] - {'kind'})
            if unknown:
                raise ConfigError(f"{kind}에 허용되지 않는 키입니다: {', '.join(unknown)}")

    @classmethod
    def from_dict(cls, data: Dict[str, Any], env_name: Optional[str] = None) -> "DatasetRecipe":
        """
        딕셔너리 → 레시피 (알 수 없는 키는 오류)

        Args:
            data: 레시피 딕셔너리
            env_name: 벤치마크 설정에서 온 환경 이름 (레시피에 env가 없을 때)
        """
        if not isinstance(data, dict):
            raise ConfigError(f"데이터셋 레시피는 매핑이어야 합니다: {data!r}")
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"데이터셋 레시피에 없는 키입니다: {', '.join(unknown)}")
        values = dict(data)
        if 'env' not in values:
            if env_name is None:
                raise ConfigError("데이터셋 레시피에 env가 없습니다")
            values['env'] = env_name
        if 'tier' not in values:
            raise ConfigError("데이터셋 레시피에 tier가 없습니다")
        recipe = cls(**values)
        recipe.validate()
        return recipe

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def recipe_hash(self, seed: int) -> str:
        """캐시 키 (output 경로 제외)"""
        data = self.to_dict()
        data.pop('output')
        data['seed'] = int(seed)
        return hashlib.sha256(json.dumps(data, sort_keys=True, default=str).encode('utf-8')).hexdigest()[:16]

    @property
    def label(self) -> str:
        parts = [self.behavior if self.tier == 'scripted' else self.tier]
        if self.behavior_mode == 'privileged':
            parts.append('priv')
        if self.hide_during_collection:
            parts.append("hide" + "-".join(str(i) for i in self.hide_during_collection))
        if self.history_k > 1:
            parts.append(f"hist{self.history_k}")
        if self.action_delay:
            parts.append(f"delay{self.action_delay}")
        for item in self.corruption:
            if item['kind'] == 'obs_noise':
                parts.append(f"noise{item['sigma']:g}")
            else:
                parts.append("zero" + "-".join(str(i) for i in item.get('indices', [])))
        return "-".join(parts)


def load_recipes(path: str) -> List[DatasetRecipe]:
    """
    레시피 파일 읽기 (리스트 또는 {'recipes': [...]})

    Raises:
        ConfigError: 형식 오류
    """
    data = load_yaml(path)
    if isinstance(data, dict) and 'recipes' in data:
        data = data['recipes']
    if not isinstance(data, list):
        raise ConfigError(f"레시피 파일은 레시피 목록이어야 합니다: {path}")
    return [DatasetRecipe.from_dict(item) for item in data]
