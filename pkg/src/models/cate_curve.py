"""
CATE Curve Models
CATE 추정 곡선 및 의사 결과변수 데이터 모델
"""
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .sim_schema import BandwidthPlan


@dataclass
class PseudoOutcome:
    """
    2단계 평활에 들어가는 관측치별 값

    회귀 추정량은 m̂₁(Xᵢ), m̂₀(Xᵢ) 를, IPW 추정량은 변환값 ψᵢ 를 가진다.
    """
    values: np.ndarray
    m1: Optional[np.ndarray] = None
    m0: Optional[np.ndarray] = None

    @classmethod
    def from_means(cls, m1: np.ndarray, m0: np.ndarray) -> "PseudoOutcome":
        m1 = np.asarray(m1, dtype=float)
        m0 = np.asarray(m0, dtype=float)
        return cls(values=m1 - m0, m1=m1, m0=m0)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.isfinite(self.values).all():
            bad = int(np.nonzero(~np.isfinite(self.values))[0][0])
            raise ValueError(f"의사 결과변수에 유한하지 않은 값이 있습니다 (index={bad})")

    def __len__(self) -> int:
        return self.values.shape[0]

    def residuals(self, Y: np.ndarray, D: np.ndarray):
        """처리군별 잔차 (ε₁ᵢ, ε₀ᵢ), 해당 처리군이 아니면 NaN"""
        if self.m1 is None or self.m0 is None:
            raise ValueError("IPW 의사 결과변수에는 잔차가 없습니다")
        eps1 = np.where(D == 1.0, Y - self.m1, np.nan)
        eps0 = np.where(D == 0.0, Y - self.m0, np.nan)
        return eps1, eps0


@dataclass
class CateCurve:
    """
    격자 위 CATE 추정 곡선 τ̂(x₁)

    missing 은 국소 이웃이 비어 추정하지 못한 격자점 번호이며 해당 값은 NaN 이다.
    """
    estimator: str
    grid: np.ndarray  # m×k
    estimates: np.ndarray
    plan: BandwidthPlan
    n: int
    k: int
    missing: List[int] = field(default_factory=list)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        if self.grid.ndim == 1:
            self.grid = self.grid[:, None]
        self.estimates = np.asarray(self.estimates, dtype=float)
        if self.grid.shape[0] != self.estimates.shape[0]:
            raise ValueError(f"격자 수 {self.grid.shape[0]} 와 추정값 수 {self.estimates.shape[0]} 가 다릅니다")

    def __len__(self) -> int:
        return self.estimates.shape[0]

    @property
    def is_complete(self) -> bool:
        return not self.missing

    def scaled_deviation(self, truth: np.ndarray) -> np.ndarray:
        """T(x₁) = √(n h₁ᵏ)(τ̂(x₁) − τ(x₁))"""
        return np.sqrt(self.n * self.plan.h1 ** self.k) * (self.estimates - np.asarray(truth, dtype=float))
