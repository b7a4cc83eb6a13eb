"""
First Stage Models
1단계 추정 (기저, 방향, 성향점수) 데이터 모델
"""
import re
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from ..utils.errors import ConfigError, DataError

TRUE_FUNCTION = "true-function"
PARAMETRIC_LOGISTIC = "parametric-logistic"
SINGLE_INDEX = "single-index"
NONPARAMETRIC = "nonparametric"

# 성향점수 종류 → IPW 추정량 약칭
PROPENSITY_ESTIMATOR_IDS = {
    TRUE_FUNCTION: "O",
    PARAMETRIC_LOGISTIC: "P",
    SINGLE_INDEX: "S",
    NONPARAMETRIC: "N",
}

_FACTOR = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_.]*)\s*(?:\^\s*(\d+))?\s*$")


@dataclass(frozen=True)
class BasisTerm:
    """기저 항 하나: Π (열 ^ 차수), 빈 곱이면 상수항"""
    name: str
    factors: Tuple[Tuple[int, int], ...]

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        out = np.ones(X.shape[0])
        for column, power in self.factors:
            out = out * X[:, column] ** power
        return out


@dataclass(frozen=True)
class BasisSpec:
    """
    매개 결과모형 mₜ(X, αₜ) 의 특성 사상

    항 표기: "1", "x1", "x1^2", "x1*x2" (열 이름 기준)
    """
    terms: Tuple[BasisTerm, ...]

    @classmethod
    def parse(cls, terms: List[str], columns: List[str]) -> "BasisSpec":
        """
        문자열 항 목록을 해석

        Args:
            terms: 항 문자열 리스트
            columns: 공변량 열 이름

        Returns:
            BasisSpec
        """
        if not terms:
            raise ConfigError("기저 항이 최소 하나 필요합니다")
        parsed = []
        for text in terms:
            text = str(text).strip()
            if text == "1":
                parsed.append(BasisTerm(name="1", factors=()))
                continue
            factors = []
            for piece in text.split("*"):
                match = _FACTOR.match(piece)
                if not match:
                    raise ConfigError(f"기저 항 형식 오류: {text!r}")
                name, power = match.group(1), int(match.group(2) or 1)
                if name not in columns:
                    raise ConfigError(f"기저 항 {text!r} 의 열 {name!r} 이 없습니다")
                if power < 1:
                    raise ConfigError(f"기저 항 차수는 1 이상이어야 합니다: {text!r}")
                factors.append((columns.index(name), power))
            parsed.append(BasisTerm(name=text, factors=tuple(factors)))
        return cls(terms=tuple(parsed))

    @property
    def names(self) -> List[str]:
        return [t.name for t in self.terms]

    def __len__(self) -> int:
        return len(self.terms)

    def design(self, X: np.ndarray) -> np.ndarray:
        """n×(항 수) 설계 행렬"""
        X = np.asarray(X, dtype=float)
        matrix = np.column_stack([t.evaluate(X) for t in self.terms])
        bad = np.where(~np.isfinite(matrix).all(axis=1))[0]
        if bad.size:
            raise DataError("기저 항 값이 유한하지 않습니다", row=int(bad[0]))
        return matrix


@dataclass(frozen=True)
class OutcomeFit:
    """최소제곱 결과모형 적합 결과 m̂ₜ(x) = basis(x)ᵀα̂ₜ"""
    arm: int
    basis: BasisSpec
    alpha: np.ndarray

    def __call__(self, X) -> np.ndarray:
        return self.basis.design(np.atleast_2d(X)) @ self.alpha


@dataclass(frozen=True)
class DirectionSet:
    """
    처리군별 중심 평균 부분공간 방향 β₁ (p×r(1)), β₀ (p×r(0))

    r(t)=0 이면 p×0 행렬이며 해당 처리군은 표본평균을 사용한다.
    """
    beta1: np.ndarray
    beta0: np.ndarray
    source: str = "known"  # known | estimated

    def __post_init__(self):
        for name in ("beta1", "beta0"):
            beta = np.array(getattr(self, name), dtype=float)
            if beta.ndim == 1:
                beta = beta[:, None]
            if not np.isfinite(beta).all():
                raise DataError(f"{name} 에 유한하지 않은 값이 있습니다")
            if beta.shape[1] > 0 and np.linalg.matrix_rank(beta) < beta.shape[1]:
                raise DataError(f"{name} 열이 선형독립이 아닙니다")
            beta.setflags(write=False)
            object.__setattr__(self, name, beta)
        if self.beta1.shape[0] != self.beta0.shape[0]:
            raise DataError(f"방향 행렬 행 수가 다릅니다: {self.beta1.shape[0]} vs {self.beta0.shape[0]}")

    @property
    def r1(self) -> int:
        return self.beta1.shape[1]

    @property
    def r0(self) -> int:
        return self.beta0.shape[1]

    @property
    def r_max(self) -> int:
        return max(self.r1, self.r0)

    def for_arm(self, arm: int) -> np.ndarray:
        return self.beta1 if arm == 1 else self.beta0


@dataclass(frozen=True)
class PropensityModel:
    """
    적합된 성향점수 모형

    predictor 는 클리핑 전 확률을 돌려주고, predict 는 항상 [c, 1-c] 값을 돌려준다.
    """
    kind: str
    predictor: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    clip: float = 0.01
    params: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in PROPENSITY_ESTIMATOR_IDS:
            raise ConfigError(f"알 수 없는 성향점수 종류: {self.kind}")
        if not 0.0 < self.clip < 0.5:
            raise ConfigError(f"클리핑 상수 c 는 (0, 0.5) 범위여야 합니다: {self.clip}")

    @property
    def estimator_id(self) -> str:
        return PROPENSITY_ESTIMATOR_IDS[self.kind]

    def raw(self, X) -> np.ndarray:
        """클리핑 전 확률"""
        return np.asarray(self.predictor(np.atleast_2d(np.asarray(X, dtype=float))), dtype=float)

    def predict(self, X) -> np.ndarray:
        """[c, 1-c] 로 클리핑된 확률"""
        return np.clip(self.raw(X), self.clip, 1.0 - self.clip)

    def clipped_fraction(self, X) -> float:
        raw = self.raw(X)
        return float(np.mean((raw < self.clip) | (raw > 1.0 - self.clip)))
