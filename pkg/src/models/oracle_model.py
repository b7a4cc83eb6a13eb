"""
Oracle Models
참 데이터 생성 법칙과 점근 분산 프로파일 데이터 모델
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Tuple

import numpy as np

ArrayFn = Callable[[np.ndarray], np.ndarray]

SIGMA_KINDS = ("O", "P", "S1", "S2", "S3", "S4", "N", "IPW")


@dataclass(frozen=True)
class OracleModel:
    """
    참 모형

    함수 인자는 모두 n×p 공변량 행렬이며 길이 n 배열을 돌려준다.
    prop_index1/prop_index0 는 p(β₁ᵀX), p(β₀ᵀX) 즉 E[D | βₜᵀX] 이다.
    """
    model_id: int
    p: int
    x1_idx: Tuple[int, ...]
    m1: ArrayFn
    m0: ArrayFn
    propensity: ArrayFn
    var1: ArrayFn
    var0: ArrayFn
    beta1: np.ndarray
    beta0: np.ndarray
    prop_index1: ArrayFn
    prop_index0: ArrayFn
    # (x1, size, rng) -> size×p, X₁ 좌표가 x1 로 고정된 조건부 표본
    sample_given_x1: Callable[[np.ndarray, int, np.random.Generator], np.ndarray]
    tau: Callable[[np.ndarray], float]
    density_x1: Callable[[np.ndarray], float]

    def effect(self, X: np.ndarray) -> np.ndarray:
        """m₁(X) − m₀(X)"""
        return self.m1(X) - self.m0(X)


@dataclass
class VarianceProfile:
    """격자점 하나에서의 점근 분산 σ² 종류별 값과 MC 표준오차"""
    x1: np.ndarray
    sigma_sq: Dict[str, float]
    mc_se: Dict[str, float]
    f_x1: float
    k1_norm_sq: float
    mc_draws: int

    def get(self, kind: str) -> float:
        return self.sigma_sq[kind]


@dataclass
class RankingCheck:
    """σ²_a ≤ σ²_b 부등식 하나의 검사 결과"""
    x1: Tuple[float, ...]
    lower: str
    upper: str
    margin: float  # σ²_b − σ²_a
    tolerance: float  # 3·√(se_a² + se_b²)
    passed: bool


@dataclass
class RankingReport:
    """격자 전체에 대한 효율 순위 검사 보고서"""
    checks: List[RankingCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def violations(self) -> List[RankingCheck]:
        return [c for c in self.checks if not c.passed]
