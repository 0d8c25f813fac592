"""
오프라인 데이터셋 타입과 JSON-lines 입출력

파일 형식:
  1번째 줄: 메타데이터 객체 (format_version "b4mrl-ds/1")
  2번째 줄부터: 레코드 {"o": [...], "a": ..., "r": ..., "o2": [...], "d": bool}
실수는 repr 표기(왕복 시 비트 단위 동일)로 저장한다.
"""
import copy
import hashlib
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional

import numpy as np

from core.config import DATASET_FORMAT_VERSION
from core.errors import DatasetDimensionError, DatasetFormatError, DatasetVersionError
from core.transitions import TransitionBatch

BEHAVIOR_MODES = ('observed', 'privileged')
TIER_LABELS = ('random', 'medium', 'medium_replay', 'medium_expert', 'expert', 'scripted')
RECORD_KEYS = ('o', 'a', 'r', 'o2', 'd')


@dataclass
class TransitionRecord:
    obs: np.ndarray
    action: Any
    reward: float
    next_obs: np.ndarray
    done: bool


@dataclass
class DatasetMeta:
    env_name: str
    env_params: Dict[str, Any]
    tier: str
    behavior_mode: str
    seed: int
    record_count: int
    obs_dim: int
    action_kind: str
    action_dim: int
    corruption: List[Dict[str, Any]] = field(default_factory=list)
    format_version: str = DATASET_FORMAT_VERSION

    def validate(self):
        if self.tier not in TIER_LABELS:
            raise ValueError(f"알 수 없는 tier입니다: {self.tier}")
        if self.behavior_mode not in BEHAVIOR_MODES:
            raise ValueError(f"알 수 없는 behavior_mode입니다: {self.behavior_mode}")
        confounded = any(c.get('kind') == 'history_confounded' for c in self.corruption)
        if confounded and self.behavior_mode != 'privileged':
            raise ValueError("교란된 데이터셋은 behavior_mode가 privileged여야 합니다")

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(asdict(self))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DatasetMeta":
        return cls(**data)


class Dataset:
    """
    메타데이터 + 배열 기반 전이 (불변으로 취급)

    Args:
        meta: DatasetMeta (record_count는 배열 길이와 일치해야 함)
        batch: TransitionBatch
    """

    def __init__(self, meta: DatasetMeta, batch: TransitionBatch):
        if len(batch) == 0:
            raise ValueError("데이터셋은 비어 있을 수 없습니다")
        if meta.record_count != len(batch):
            raise ValueError(f"record_count({meta.record_count})가 레코드 수({len(batch)})와 다릅니다")
        if batch.obs_dim != meta.obs_dim or batch.next_obs.shape[1] != meta.obs_dim:
            raise ValueError(f"관측 차원이 메타데이터({meta.obs_dim})와 다릅니다")
        if not np.all(np.isfinite(batch.rewards)):
            raise ValueError("보상에 유한하지 않은 값이 있습니다")
        meta.validate()
        self.meta = meta
        self.batch = batch

    def __len__(self) -> int:
        return len(self.batch)

    @property
    def records(self) -> Iterator[TransitionRecord]:
        discrete = self.meta.action_kind == 'discrete'
        for i in range(len(self)):
            action = int(self.batch.actions[i]) if discrete else self.batch.actions[i].copy()
            yield TransitionRecord(
                obs=self.batch.obs[i].copy(), action=action, reward=float(self.batch.rewards[i]),
                next_obs=self.batch.next_obs[i].copy(), done=bool(self.batch.dones[i]),
            )

    def with_batch(self, batch: TransitionBatch, **meta_updates) -> "Dataset":
        """배열을 바꾼 새 데이터셋 (메타 일부 갱신)"""
        meta = DatasetMeta.from_dict({**self.meta.to_dict(), **meta_updates, 'record_count': len(batch)})
        return Dataset(meta, batch)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.meta.to_dict() == other.meta.to_dict()
            and all(
                np.array_equal(getattr(self.batch, name), getattr(other.batch, name))
                for name in ('obs', 'actions', 'rewards', 'next_obs', 'dones')
            )
        )

    def __repr__(self) -> str:
        return (f"Dataset({self.meta.env_name}, tier={self.meta.tier}, n={len(self)}, "
                f"mode={self.meta.behavior_mode}, corruption={self.meta.corruption})")


def concatenate_datasets(datasets: List[Dataset], tier: str) -> Dataset:
    """같은 환경의 데이터셋 이어 붙이기 (첫 데이터셋의 메타 기준)"""
    first = datasets[0]
    for other in datasets[1:]:
        if other.meta.obs_dim != first.meta.obs_dim or other.meta.env_name != first.meta.env_name:
            raise ValueError("환경이나 관측 차원이 다른 데이터셋은 합칠 수 없습니다")
    batch = TransitionBatch.concatenate([d.batch for d in datasets])
    return first.with_batch(batch, tier=tier)


# ===== 직렬화 =====

def _record_line(obs, action, reward, next_obs, done, discrete: bool) -> str:
    return json.dumps({
        'o': [float(v) for v in obs],
        'a': int(action) if discrete else [float(v) for v in np.atleast_1d(action)],
        'r': float(reward),
        'o2': [float(v) for v in next_obs],
        'd': bool(done),
    }, allow_nan=False)


def write_dataset(dataset: Dataset, path: str) -> Path:
    """
    데이터셋을 JSON-lines 파일로 저장

    같은 디렉터리의 임시 파일에 다 쓴 뒤 os.replace로 옮긴다. 다른 프로세스는 완성된 파일만 본다.

    Returns:
        저장한 경로
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    discrete = dataset.meta.action_kind == 'discrete'
    b = dataset.batch
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, 'w', encoding='utf-8') as f:
            f.write(json.dumps(dataset.meta.to_dict(), ensure_ascii=False, allow_nan=False) + "\n")
            for i in range(len(dataset)):
                line = _record_line(b.obs[i], b.actions[i], b.rewards[i], b.next_obs[i], b.dones[i], discrete)
                f.write(line + "\n")
        os.chmod(tmp_name, 0o644)
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    return path


def _parse_line(line: str, line_number: int) -> Dict[str, Any]:
    try:
        value = json.loads(line)
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"JSON 파싱 실패: {e.msg}", line_number) from e
    if not isinstance(value, dict):
        raise DatasetFormatError("객체가 아닌 줄입니다", line_number)
    return value


def _vector(record: Dict[str, Any], key: str, dim: int, line_number: int) -> List[float]:
    value = record[key]
    if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        raise DatasetFormatError(f"'{key}'는 숫자 목록이어야 합니다", line_number)
    if len(value) != dim:
        raise DatasetDimensionError(f"'{key}' 차원 {len(value)} ≠ 메타데이터 {dim}", line_number)
    if not all(math.isfinite(v) for v in value):
        raise DatasetFormatError(f"'{key}'에 유한하지 않은 값이 있습니다", line_number)
    return value


def read_dataset(path: str) -> Dataset:
    """
    JSON-lines 데이터셋 읽기

    Raises:
        DatasetVersionError: format_version 불일치
        DatasetFormatError: JSON 오류, 필수 키 누락, 레코드 수 불일치 (줄 번호 포함)
        DatasetDimensionError: 관측/행동 차원 불일치 (줄 번호 포함)
    """
    path = Path(path)
    with open(path, 'r', encoding='utf-8') as f:
        lines = f.read().splitlines()
    if not lines:
        raise DatasetFormatError("빈 파일입니다", 1)

    header = _parse_line(lines[0], 1)
    version = header.get('format_version')
    if version != DATASET_FORMAT_VERSION:
        raise DatasetVersionError(f"format_version {version!r} ≠ {DATASET_FORMAT_VERSION!r}", 1)
    try:
        meta = DatasetMeta.from_dict(header)
    except TypeError as e:
        raise DatasetFormatError(f"메타데이터 키가 올바르지 않습니다: {e}", 1) from e

    discrete = meta.action_kind == 'discrete'
    obs, actions, rewards, next_obs, dones = [], [], [], [], []
    for offset, line in enumerate(lines[1:]):
        line_number = offset + 2
        if not line.strip():
            raise DatasetFormatError("빈 줄입니다", line_number)
        record = _parse_line(line, line_number)
        missing = [k for k in RECORD_KEYS if k not in record]
        if missing:
            raise DatasetFormatError(f"필수 키 누락: {', '.join(missing)}", line_number)
        obs.append(_vector(record, 'o', meta.obs_dim, line_number))
        next_obs.append(_vector(record, 'o2', meta.obs_dim, line_number))
        if discrete:
            if not isinstance(record['a'], int) or isinstance(record['a'], bool):
                raise DatasetFormatError("이산 행동 'a'는 정수여야 합니다", line_number)
            actions.append(record['a'])
        else:
            actions.append(_vector(record, 'a', meta.action_dim, line_number))
        reward = record['r']
        if not isinstance(reward, (int, float)) or isinstance(reward, bool) or not math.isfinite(reward):
            raise DatasetFormatError("'r'은 유한한 실수여야 합니다", line_number)
        rewards.append(float(reward))
        if not isinstance(record['d'], bool):
            raise DatasetFormatError("'d'는 true/false여야 합니다", line_number)
        dones.append(record['d'])

    n = len(rewards)
    if n != meta.record_count:
        raise DatasetFormatError(f"레코드 수 {n} ≠ 메타데이터 record_count {meta.record_count}", len(lines) + 1)
    if n == 0:
        raise DatasetFormatError("레코드가 없습니다", 2)

    batch = TransitionBatch(
        obs=np.asarray(obs, dtype=float).reshape(n, meta.obs_dim),
        actions=np.asarray(actions, dtype=np.int64) if discrete
        else np.asarray(actions, dtype=float).reshape(n, meta.action_dim),
        rewards=np.asarray(rewards, dtype=float),
        next_obs=np.asarray(next_obs, dtype=float).reshape(n, meta.obs_dim),
        dones=np.asarray(dones, dtype=bool),
    )
    return Dataset(meta, batch)


def dataset_hash(dataset: Dataset) -> str:
    """메타데이터 + 배열 내용의 sha256 앞 16자리"""
    digest = hashlib.sha256()
    digest.update(json.dumps(dataset.meta.to_dict(), sort_keys=True).encode('utf-8'))
    b = dataset.batch
    for array in (b.obs, b.actions, b.rewards, b.next_obs, b.dones):
        digest.update(np.ascontiguousarray(array).tobytes())
    return digest.hexdigest()[:16]
