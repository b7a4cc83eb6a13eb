"""
Error Types
CATE 추정 라이브러리 예외 계층
"""
from typing import Optional


class CateError(Exception):
    """라이브러리 공통 기본 예외"""


class ConfigError(CateError):
    """설정 파일/설정 값 오류 (CLI 종료 코드 2)"""


class DataError(CateError):
    """입력 데이터 오류 (CLI 종료 코드 3)"""

    def __init__(self, message: str, row: Optional[int] = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class KernelConstructionError(CateError):
    """커널 생성 또는 적률 검증 실패"""


class QuadratureError(CateError):
    """수치 적분 미수렴"""


class DegenerateMass(CateError):
    """커널 가중치 합이 하한보다 작음 (국소 이웃이 비어 있음)"""

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message if index is None else f"{message} (index={index})")
        self.index = index


class RankDeficient(CateError):
    """설계 행렬의 열 계수 부족"""


class Separation(CateError):
    """로지스틱 우도 발산 (완전 분리)"""


class MaxIterations(CateError):
    """반복 해법이 최대 반복 횟수 내에 수렴하지 않음"""


class UnsupportedRank(CateError):
    """지원하지 않는 방향 차원 요청"""


class SamplerMismatch(CateError):
    """조건부 표본추출기가 지정한 x1 과 다른 값을 생성"""
