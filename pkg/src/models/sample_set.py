"""
Sample Set Model
관측 데이터 (X, Y, D) 데이터 모델
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..utils.errors import DataError


def _frozen(values, ndim: int, name: str) -> np.ndarray:
    array = np.array(values, dtype=float)
    if ndim == 2 and array.ndim == 1:
        array = array[:, None]
    if array.ndim != ndim:
        raise DataError(f"{name} 는 {ndim}차원 배열이어야 합니다 (ndim={array.ndim})")
    array.setflags(write=False)
    return array


@dataclass
class SampleSet:
    """
    관측 데이터

    Y ≡ D·Y(1) + (1-D)·Y(0) 만 관측된다.
    x1_idx 는 조건부 부분벡터 X₁ 의 열 번호 (길이 k, 1 ≤ k < p).
    """
    X: np.ndarray
    Y: np.ndarray
    D: np.ndarray
    x1_idx: Tuple[int, ...]
    columns: Optional[List[str]] = None
    allow_single_arm: bool = False

    def __post_init__(self):
        self.X = _frozen(self.X, 2, "X")
        self.Y = _frozen(self.Y, 1, "Y")
        self.D = _frozen(self.D, 1, "D")
        self.x1_idx = tuple(int(i) for i in self.x1_idx)
        if self.columns is None:
            self.columns = [f"x{j + 1}" for j in range(self.X.shape[1])]
        self.validate()

    def validate(self):
        """불변 조건 검사 (위반 시 DataError)"""
        n, p = self.X.shape
        if self.Y.shape[0] != n or self.D.shape[0] != n:
            raise DataError(f"X/Y/D 길이가 다릅니다: {n}, {self.Y.shape[0]}, {self.D.shape[0]}")
        if n == 0:
            raise DataError("빈 표본입니다")
        for name, array in (("X", self.X), ("Y", self.Y)):
            bad = np.where(~np.isfinite(array).reshape(n, -1).all(axis=1))[0]
            if bad.size:
                raise DataError(f"{name} 에 유한하지 않은 값이 있습니다", row=int(bad[0]))
        bad = np.where((self.D != 0.0) & (self.D != 1.0))[0]
        if bad.size:
            raise DataError(f"D 값은 0 또는 1 이어야 합니다: {self.D[bad[0]]}", row=int(bad[0]))
        if not self.allow_single_arm:
            treated = int(self.D.sum())
            if treated == 0 or treated == n:
                raise DataError("처리군과 대조군이 모두 비어 있지 않아야 합니다")
        k = len(self.x1_idx)
        if not 1 <= k < p:
            raise DataError(f"x1_idx 길이 k 는 1 ≤ k < p 이어야 합니다 (k={k}, p={p})")
        if len(set(self.x1_idx)) != k:
            raise DataError(f"x1_idx 항목이 중복됩니다: {self.x1_idx}")
        if any(i < 0 or i >= p for i in self.x1_idx):
            raise DataError(f"x1_idx 범위 초과: {self.x1_idx} (p={p})")
        if len(self.columns) != p:
            raise DataError(f"열 이름 수 {len(self.columns)} 가 p={p} 와 다릅니다")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def k(self) -> int:
        return len(self.x1_idx)

    @property
    def X1(self) -> np.ndarray:
        """조건부 부분벡터 X₁ (n×k)"""
        return self.X[:, list(self.x1_idx)]

    def arm_mask(self, arm: int) -> np.ndarray:
        """처리 상태 arm 인 관측치 마스크"""
        if arm not in (0, 1):
            raise ValueError(f"arm 은 0 또는 1 이어야 합니다: {arm}")
        return self.D == float(arm)

    def column_index(self, name: str) -> int:
        """열 이름 → 열 번호"""
        try:
            return self.columns.index(name)
        except ValueError:
            raise DataError(f"알 수 없는 열 이름: {name}") from None

    def permuted(self, order: Sequence[int]) -> "SampleSet":
        """관측치 순서를 바꾼 사본"""
        order = np.asarray(order)
        return SampleSet(
            X=self.X[order], Y=self.Y[order], D=self.D[order],
            x1_idx=self.x1_idx, columns=list(self.columns),
            allow_single_arm=self.allow_single_arm,
        )

    def with_outcome(self, Y: np.ndarray) -> "SampleSet":
        """결과변수만 바꾼 사본"""
        return SampleSet(
            X=self.X, Y=Y, D=self.D, x1_idx=self.x1_idx,
            columns=list(self.columns), allow_single_arm=self.allow_single_arm,
        )
