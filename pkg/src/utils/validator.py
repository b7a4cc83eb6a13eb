"""
Input Validation Utilities
입력 검증 유틸리티
"""
import os
from typing import List, Tuple

import numpy as np
import pandas as pd

from ..models.sample_set import SampleSet
from ..models.sim_schema import EstimateJob
from .errors import DataError


class DataValidator:
    """설정/데이터 파일 검증기"""

    @staticmethod
    def validate_file(path: str, extensions: Tuple[str, ...] = ('.csv',)) -> Tuple[bool, str]:
        """
        파일 유효성 검증

        Args:
            path: 파일 경로
            extensions: 허용 확장자

        Returns:
            (유효 여부, 메시지)
        """
        # 파일 존재 확인
        if not os.path.exists(path):
            return False, f"파일이 존재하지 않습니다: {path}"

        # 확장자 확인
        if not path.lower().endswith(extensions):
            return False, f"지원하지 않는 확장자입니다 (허용: {', '.join(extensions)}): {path}"

        # 파일 크기 확인
        if os.path.getsize(path) == 0:
            return False, "빈 파일입니다"

        return True, "유효한 파일"

    @staticmethod
    def validate_roles(header: List[str], job: EstimateJob) -> Tuple[bool, str]:
        """
        열 역할 검증 (y, d, x, x1 이 모두 헤더에 있고 x1 ⊂ x)

        Args:
            header: CSV 헤더
            job: 추정 작업

        Returns:
            (유효 여부, 메시지)
        """
        for name in [job.y, job.d, *job.x, *job.x1]:
            if name not in header:
                return False, f"열 '{name}' 이 CSV 헤더에 없습니다"
        missing = [c for c in job.x1 if c not in job.x]
        if missing:
            return False, f"x1 열 {missing} 이 x 에 포함되어야 합니다"
        if job.y in job.x or job.d in job.x:
            return False, "y/d 열은 x 에 포함될 수 없습니다"
        if len(set(job.x)) != len(job.x):
            return False, "x 열 이름이 중복됩니다"
        return True, "유효한 열 역할"


def load_sample(job: EstimateJob) -> SampleSet:
    """
    CSV 를 읽어 SampleSet 구성

    숫자가 아닌 값, 결측, 0/1 이 아닌 D 는 데이터 행 번호 (헤더 다음 행이 1) 와 함께 거부한다.

    Args:
        job: 추정 작업

    Returns:
        SampleSet
    """
    is_valid, msg = DataValidator.validate_file(job.csv_path)
    if not is_valid:
        raise DataError(msg)

    try:
        frame = pd.read_csv(job.csv_path, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"CSV 파싱 실패: {e}") from None

    is_valid, msg = DataValidator.validate_roles(list(frame.columns), job)
    if not is_valid:
        raise DataError(msg)

    columns = [job.y, job.d, *job.x]
    numeric = frame[columns].apply(pd.to_numeric, errors='coerce')
    bad = numeric.isna() | ~np.isfinite(numeric.fillna(0.0))
    if bad.to_numpy().any():
        row = int(np.nonzero(bad.any(axis=1).to_numpy())[0][0])
        column = bad.columns[bad.iloc[row].to_numpy()][0]
        raise DataError(f"열 '{column}' 값 {frame[column].iloc[row]!r} 이 유한한 숫자가 아닙니다", row=row + 1)

    D = numeric[job.d].to_numpy()
    not_binary = np.nonzero((D != 0.0) & (D != 1.0))[0]
    if not_binary.size:
        row = int(not_binary[0])
        raise DataError(f"D 열 '{job.d}' 값 {frame[job.d].iloc[row]!r} 이 0/1 이 아닙니다", row=row + 1)

    x1_idx = tuple(job.x.index(c) for c in job.x1)
    return SampleSet(
        X=numeric[job.x].to_numpy(),
        Y=numeric[job.y].to_numpy(),
        D=D,
        x1_idx=x1_idx,
        columns=list(job.x),
    )
