"""
벤치마크 전역 예외 정의

검증 실패는 ValueError 계열, 학습/실행 실패는 RuntimeError 계열로 구분
"""
from typing import Optional


class EnvironmentStateError(RuntimeError):
    """reset 없이 step 호출, done 이후 step 호출 등 환경 사용 순서 위반"""


class UnknownParameterError(ValueError):
    """환경 파라미터 집합에 없는 이름"""


class ConfigError(ValueError):
    """벤치마크/레시피 설정 검증 실패 (알 수 없는 키 포함)"""


class DatasetError(ValueError):
    """
    데이터셋 파일 파싱 오류의 공통 부모

    Args:
        message: 오류 설명
        line_number: 문제가 된 줄 번호 (1부터 시작)
    """

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"{line_number}번째 줄: {message}"
        super().__init__(message)


class DatasetVersionError(DatasetError):
    """format_version 불일치"""


class DatasetFormatError(DatasetError):
    """JSON 파싱 불가, 필수 키 누락, 레코드 수 불일치"""


class DatasetDimensionError(DatasetError):
    """관측/행동 차원이 메타데이터와 다름"""


class SingularModelError(ValueError):
    """정규방정식이 특이 행렬이라 풀 수 없음"""


class UndefinedEstimandError(ValueError):
    """행동 정책이 한 번도 선택하지 않는 행동의 조건부 추정량"""


class NotEnumerableError(ValueError):
    """상태/행동을 열거할 수 없는 환경에 대한 정확해 요청"""


class TierTrainingError(RuntimeError):
    """예산 안에서 목표 tier 점수에 도달하지 못함"""
