"""
테스트 6: 데이터셋 JSON-lines 입출력
- 왕복 시 비트 단위 동일, 버전/형식/차원 오류와 줄 번호
"""
import json

import numpy as np
import pytest


def _write_lines(path, lines):
    with open(path, 'w', encoding='utf-8') as f:
        for line in lines:
            f.write(line + "\n")


def _lines(path):
    with open(path, 'r', encoding='utf-8') as f:
        return f.read().splitlines()


class TestRoundTrip:
    def test_windygrid_round_trip(self, uniform_windygrid_dataset, tmp_path):
        from data.dataset import read_dataset, write_dataset

        path = write_dataset(uniform_windygrid_dataset, str(tmp_path / "grid.jsonl"))
        loaded = read_dataset(str(path))
        assert loaded == uniform_windygrid_dataset
        assert loaded.batch.actions.dtype.kind == 'i'

    def test_continuous_round_trip_bit_exact(self, uniform_pendulum_dataset, tmp_path):
        """진자 관측/보상 실수가 비트 단위로 같다"""
        from data.dataset import read_dataset, write_dataset

        path = write_dataset(uniform_pendulum_dataset, str(tmp_path / "pendulum.jsonl"))
        loaded = read_dataset(str(path))
        assert loaded.batch.obs.tobytes() == uniform_pendulum_dataset.batch.obs.tobytes()
        assert loaded.batch.rewards.tobytes() == uniform_pendulum_dataset.batch.rewards.tobytes()
        assert loaded.batch.actions.shape == (1000, 1)

    def test_header_line(self, uniform_windygrid_dataset, tmp_path):
        from data.dataset import write_dataset

        path = write_dataset(uniform_windygrid_dataset, str(tmp_path / "grid.jsonl"))
        lines = _lines(path)
        header = json.loads(lines[0])
        assert header['format_version'] == "b4mrl-ds/1"
        assert header['record_count'] == 2000
        assert len(lines) == 2001
        assert set(json.loads(lines[1])) == {'o', 'a', 'r', 'o2', 'd'}

    def test_records_view(self, uniform_windygrid_dataset):
        first = next(iter(uniform_windygrid_dataset.records))
        assert isinstance(first.action, int)
        assert np.array_equal(first.obs, uniform_windygrid_dataset.batch.obs[0])


class TestAtomicWrite:
    """임시 파일에 다 쓴 뒤 교체 - 읽는 쪽은 완성된 파일만 본다"""

    def test_no_temp_file_left(self, uniform_windygrid_dataset, tmp_path):
        from data.dataset import write_dataset

        write_dataset(uniform_windygrid_dataset, str(tmp_path / "cache" / "grid.jsonl"))
        assert [p.name for p in (tmp_path / "cache").iterdir()] == ["grid.jsonl"]

    def test_failed_write_keeps_previous_file(self, uniform_windygrid_dataset, tmp_path, monkeypatch):
        """쓰는 도중 실패하면 기존 파일은 그대로이고 임시 파일도 남지 않는다"""
        import data.dataset as dataset_module
        from data.dataset import read_dataset, write_dataset

        path = tmp_path / "grid.jsonl"
        small = uniform_windygrid_dataset.with_batch(uniform_windygrid_dataset.batch.head(100))
        write_dataset(small, str(path))

        original = dataset_module._record_line
        calls = {'n': 0}

        def failing(*args):
            calls['n'] += 1
            if calls['n'] > 50:
                raise OSError("디스크 가득 참")
            return original(*args)

        monkeypatch.setattr(dataset_module, '_record_line', failing)
        with pytest.raises(OSError):
            write_dataset(uniform_windygrid_dataset, str(path))
        assert [p.name for p in tmp_path.iterdir()] == ["grid.jsonl"]
        assert len(read_dataset(str(path))) == 100

    def test_partial_file_never_visible(self, uniform_windygrid_dataset, tmp_path, monkeypatch):
        """처음 쓰는 경로는 실패하면 아예 생기지 않는다 (캐시 확인이 반쯤 쓴 파일을 읽지 않음)"""
        import data.dataset as dataset_module
        from data.dataset import write_dataset

        def failing(*args):
            raise OSError("중단")

        monkeypatch.setattr(dataset_module, '_record_line', failing)
        with pytest.raises(OSError):
            write_dataset(uniform_windygrid_dataset, str(tmp_path / "grid.jsonl"))
        assert not (tmp_path / "grid.jsonl").exists()
        assert list(tmp_path.iterdir()) == []


class TestReadErrors:
    def _saved(self, dataset, tmp_path):
        from data.dataset import write_dataset

        path = tmp_path / "data.jsonl"
        write_dataset(dataset.with_batch(dataset.batch.head(3)), str(path))
        return path

    def test_version_mismatch(self, uniform_windygrid_dataset, tmp_path):
        from core.errors import DatasetVersionError
        from data.dataset import read_dataset

        path = self._saved(uniform_windygrid_dataset, tmp_path)
        lines = _lines(path)
        header = json.loads(lines[0])
        header['format_version'] = "b4mrl-ds/0"
        _write_lines(path, [json.dumps(header)] + lines[1:])
        with pytest.raises(DatasetVersionError) as excinfo:
            read_dataset(str(path))
        assert excinfo.value.line_number == 1

    def test_missing_key_reports_line(self, uniform_windygrid_dataset, tmp_path):
        """세 번째 레코드(4번째 줄)에서 'r' 누락"""
        from core.errors import DatasetFormatError
        from data.dataset import read_dataset

        path = self._saved(uniform_windygrid_dataset, tmp_path)
        lines = _lines(path)
        record = json.loads(lines[3])
        del record['r']
        lines[3] = json.dumps(record)
        _write_lines(path, lines)
        with pytest.raises(DatasetFormatError) as excinfo:
            read_dataset(str(path))
        assert excinfo.value.line_number == 4

    def test_dimension_mismatch_reports_line(self, uniform_windygrid_dataset, tmp_path):
        from core.errors import DatasetDimensionError
        from data.dataset import read_dataset

        path = self._saved(uniform_windygrid_dataset, tmp_path)
        lines = _lines(path)
        record = json.loads(lines[2])
        record['o2'] = record['o2'] + [0.0]
        lines[2] = json.dumps(record)
        _write_lines(path, lines)
        with pytest.raises(DatasetDimensionError) as excinfo:
            read_dataset(str(path))
        assert excinfo.value.line_number == 3

    def test_broken_json(self, uniform_windygrid_dataset, tmp_path):
        from core.errors import DatasetFormatError
        from data.dataset import read_dataset

        path = self._saved(uniform_windygrid_dataset, tmp_path)
        lines = _lines(path)
        lines[1] = lines[1][:-3]
        _write_lines(path, lines)
        with pytest.raises(DatasetFormatError) as excinfo:
            read_dataset(str(path))
        assert excinfo.value.line_number == 2

    def test_record_count_mismatch(self, uniform_windygrid_dataset, tmp_path):
        """레코드를 하나 지우면 메타데이터 record_count와 달라진다"""
        from core.errors import DatasetFormatError
        from data.dataset import read_dataset

        path = self._saved(uniform_windygrid_dataset, tmp_path)
        _write_lines(path, _lines(path)[:-1])
        with pytest.raises(DatasetFormatError):
            read_dataset(str(path))

    def test_boolean_action_rejected(self, uniform_windygrid_dataset, tmp_path):
        from core.errors import DatasetFormatError
        from data.dataset import read_dataset

        path = self._saved(uniform_windygrid_dataset, tmp_path)
        lines = _lines(path)
        record = json.loads(lines[1])
        record['a'] = True
        lines[1] = json.dumps(record)
        _write_lines(path, lines)
        with pytest.raises(DatasetFormatError):
            read_dataset(str(path))


class TestDatasetInvariants:
    def test_record_count_must_match(self, uniform_windygrid_dataset):
        from data.dataset import Dataset, DatasetMeta

        meta = DatasetMeta.from_dict({**uniform_windygrid_dataset.meta.to_dict(), 'record_count': 5})
        with pytest.raises(ValueError):
            Dataset(meta, uniform_windygrid_dataset.batch)

    def test_non_finite_reward_rejected(self, uniform_windygrid_dataset):
        from core.transitions import TransitionBatch

        b = uniform_windygrid_dataset.batch.head(4)
        bad = TransitionBatch(obs=b.obs, actions=b.actions, rewards=np.array([0.0, np.nan, 0.0, 0.0]),
                              next_obs=b.next_obs, dones=b.dones)
        with pytest.raises(ValueError):
            uniform_windygrid_dataset.with_batch(bad)

    def test_confounded_requires_privileged(self, uniform_windygrid_dataset):
        with pytest.raises(ValueError):
            uniform_windygrid_dataset.with_batch(uniform_windygrid_dataset.batch,
                                                 corruption=[{'kind': 'history_confounded', 'k': 3}])

    def test_concatenate(self, uniform_windygrid_dataset):
        from data.dataset import concatenate_datasets

        merged = concatenate_datasets([uniform_windygrid_dataset, uniform_windygrid_dataset], tier='medium_expert')
        assert len(merged) == 4000
        assert merged.meta.tier == 'medium_expert'

    def test_concatenate_rejects_other_env(self, uniform_windygrid_dataset, uniform_pendulum_dataset):
        from data.dataset import concatenate_datasets

        with pytest.raises(ValueError):
            concatenate_datasets([uniform_windygrid_dataset, uniform_pendulum_dataset], tier='medium_expert')

    def test_hash_tracks_content(self, uniform_windygrid_dataset):
        from data.dataset import dataset_hash

        same = uniform_windygrid_dataset.with_batch(uniform_windygrid_dataset.batch)
        shorter = uniform_windygrid_dataset.with_batch(uniform_windygrid_dataset.batch.head(10))
        assert dataset_hash(same) == dataset_hash(uniform_windygrid_dataset)
        assert dataset_hash(shorter) != dataset_hash(uniform_windygrid_dataset)
