"""
First Stage Estimation
매개 결과모형, 성향점수 모형, 차원 축소 방향 추정
"""
import logging
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit

from ..models.firststage_models import (
    NONPARAMETRIC,
    PARAMETRIC_LOGISTIC,
    SINGLE_INDEX,
    TRUE_FUNCTION,
    BasisSpec,
    DirectionSet,
    OutcomeFit,
    PropensityModel,
)
from ..models.kernel_spec import KernelSpec
from ..models.sample_set import SampleSet
from ..models.sim_schema import NW_FLOOR
from ..utils.errors import DataError, MaxIterations, RankDeficient, Separation, UnsupportedRank
from .smoothing import nw_regress_many

logger = logging.getLogger(__name__)

DEFAULT_CLIP = 0.01
LOGISTIC_MAX_ITER = 100
LOGISTIC_TOL = 1e-8
# 계수가 이 값을 넘으면 우도가 발산(분리)한 것으로 본다
SEPARATION_BOUND = 1e3
# 관측치당 평균 로그우도가 이보다 크면 (거의 완벽한 예측) 분리로 본다
SEPARATION_LOGLIK = -1e-6


def _normalize_direction(v: np.ndarray) -> np.ndarray:
    """단위 노름, 첫 번째 0 아닌 원소가 양수가 되도록 정규화"""
    norm = np.linalg.norm(v)
    if not norm > 0:
        raise RankDeficient("방향 벡터가 0 입니다")
    v = v / norm
    nonzero = np.nonzero(np.abs(v) > 1e-14)[0]
    if nonzero.size and v[nonzero[0]] < 0:
        v = -v
    return v


def _solve_ls(design: np.ndarray, y: np.ndarray, what: str) -> np.ndarray:
    m, q = design.shape
    if m < q:
        raise RankDeficient(f"{what}: 관측치 수 {m} 가 항 수 {q} 보다 적습니다")
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < q:
        raise RankDeficient(f"{what}: 설계 행렬 계수 {rank} < {q}")
    return coef


def fit_outcome_ls(
    data: SampleSet,
    arm: int,
    basis: BasisSpec,
    weights: Optional[np.ndarray] = None,
) -> OutcomeFit:
    """
    처리군 arm 에서 최소제곱으로 α̂ₜ 적합

    Args:
        data: 관측 데이터
        arm: 0 또는 1
        basis: 기저 명세
        weights: 선택적 관측치 가중치 (길이 n, 없으면 단위 가중치)

    Returns:
        OutcomeFit (계수와 호출 가능한 평균 함수)
    """
    mask = data.arm_mask(arm)
    design = basis.design(data.X[mask])
    y = data.Y[mask]
    if weights is not None:
        w = np.asarray(weights, dtype=float)[mask]
        if np.any(w < 0) or not np.isfinite(w).all():
            raise DataError("최소제곱 가중치는 유한한 음이 아닌 값이어야 합니다")
        root = np.sqrt(w)
        design, y = design * root[:, None], y * root

    alpha = _solve_ls(design, y, f"처리군 {arm} 결과모형")
    logger.debug(f"처리군 {arm} 결과모형 계수: {dict(zip(basis.names, np.round(alpha, 6)))}")
    return OutcomeFit(arm=arm, basis=basis, alpha=alpha)


def _logistic_design(X: np.ndarray, features: Optional[Sequence[int]]) -> np.ndarray:
    columns = X if features is None else X[:, list(features)]
    return np.column_stack([np.ones(X.shape[0]), columns])


def _loglik(design: np.ndarray, d: np.ndarray, theta: np.ndarray) -> float:
    eta = design @ theta
    return float(np.sum(d * eta - np.logaddexp(0.0, eta)))


def fit_logistic(design: np.ndarray, d: np.ndarray,
                 max_iter: int = LOGISTIC_MAX_ITER, tol: float = LOGISTIC_TOL) -> np.ndarray:
    """
    감쇠 Newton 반복에 의한 로지스틱 최대우도 적합

    Args:
        design: 절편 열을 포함한 n×q 설계 행렬
        d: 0/1 반응
        max_iter: 최대 반복 횟수
        tol: 기울기 ∞-노름 허용 오차

    Returns:
        계수 벡터

    Raises:
        Separation: 우도가 발산하는 경우
        MaxIterations: max_iter 내 미수렴
    """
    theta = np.zeros(design.shape[1])
    current = _loglik(design, d, theta)
    for iteration in range(1, max_iter + 1):
        prob = expit(design @ theta)
        gradient = design.T @ (d - prob)
        if np.max(np.abs(gradient)) < tol:
            if current > SEPARATION_LOGLIK * design.shape[0]:
                raise Separation("로지스틱 적합이 모든 관측치를 완벽히 분리합니다")
            logger.debug(f"로지스틱 수렴: {iteration - 1}회 반복")
            return theta
        weight = prob * (1.0 - prob)
        hessian = design.T @ (weight[:, None] * design)
        try:
            step = np.linalg.solve(hessian, gradient)
        except np.linalg.LinAlgError:
            raise Separation("로지스틱 헤시안이 특이 행렬입니다 (완전 분리 의심)") from None

        # 우도가 증가할 때까지 단계 절반 감쇠
        scale = 1.0
        while True:
            candidate = theta + scale * step
            value = _loglik(design, d, candidate)
            if value >= current or scale < 1e-10:
                break
            scale *= 0.5
        if np.max(np.abs(candidate)) > SEPARATION_BOUND or value > SEPARATION_LOGLIK * design.shape[0]:
            raise Separation(f"로지스틱 우도 발산 (|θ|∞={np.max(np.abs(candidate)):.3g})")
        if np.max(np.abs(candidate - theta)) < 1e-15 * (1.0 + np.max(np.abs(theta))):
            # 더 이상 움직이지 않지만 기울기는 충분히 작음
            if np.max(np.abs(gradient)) < 1e-6:
                return candidate
        theta, current = candidate, value
    raise MaxIterations(f"로지스틱 적합이 {max_iter}회 내에 수렴하지 않았습니다")


def _require_both_arms(data: SampleSet):
    treated = int(data.D.sum())
    if treated == 0 or treated == data.n:
        raise DataError("로지스틱 성향점수 적합에는 두 처리군이 모두 필요합니다")


def fit_propensity_logistic(
    data: SampleSet,
    features: Optional[Sequence[int]] = None,
    clip: float = DEFAULT_CLIP,
) -> PropensityModel:
    """
    매개 로지스틱 성향점수 모형 (PCATE 용)

    Args:
        data: 관측 데이터
        features: 사용할 공변량 열 번호 (None 이면 전체, [] 이면 절편만)
        clip: 클리핑 상수 c

    Returns:
        PropensityModel (kind=parametric-logistic)
    """
    _require_both_arms(data)
    theta = fit_logistic(_logistic_design(data.X, features), data.D)
    features = None if features is None else tuple(features)

    def predictor(X: np.ndarray) -> np.ndarray:
        return expit(_logistic_design(X, features) @ theta)

    return PropensityModel(kind=PARAMETRIC_LOGISTIC, predictor=predictor, clip=clip,
                           params={"coef": theta})


def fit_propensity_nonparametric(
    data: SampleSet,
    h2: float,
    kernel: KernelSpec,
    clip: float = DEFAULT_CLIP,
    floor: float = NW_FLOOR,
) -> PropensityModel:
    """
    D 를 X 에 대해 NW 회귀한 비모수 성향점수 (NCATE 용)

    Args:
        data: 관측 데이터
        h2: 대역폭
        kernel: dim=p 커널
        clip: 클리핑 상수 c
        floor: NW 분모 절대 하한

    Returns:
        PropensityModel (kind=nonparametric)
    """
    points, responses = data.X, data.D

    def predictor(X: np.ndarray) -> np.ndarray:
        return nw_regress_many(points, responses, X, h2, kernel, floor=floor)

    return PropensityModel(kind=NONPARAMETRIC, predictor=predictor, clip=clip)


def fit_propensity_single_index(
    data: SampleSet,
    h4: float,
    kernel: KernelSpec,
    clip: float = DEFAULT_CLIP,
    floor: float = NW_FLOOR,
) -> PropensityModel:
    """
    단일 지수 성향점수 (SCATE 용)

    방향은 로지스틱 기울기 벡터를 정규화한 것, 확률은 지수 위에서 D 의 NW 회귀.

    Args:
        data: 관측 데이터
        h4: 대역폭
        kernel: dim=1 커널
        clip: 클리핑 상수 c
        floor: NW 분모 절대 하한

    Returns:
        PropensityModel (kind=single-index)
    """
    _require_both_arms(data)
    theta = fit_logistic(_logistic_design(data.X, None), data.D)
    direction = _normalize_direction(theta[1:])
    index = data.X @ direction
    responses = data.D

    def predictor(X: np.ndarray) -> np.ndarray:
        return nw_regress_many(index, responses, X @ direction, h4, kernel, floor=floor)

    logger.debug(f"단일 지수 성향점수 방향: {np.round(direction, 4)}")
    return PropensityModel(kind=SINGLE_INDEX, predictor=predictor, clip=clip,
                           params={"direction": direction})


def true_propensity(p: Callable[[np.ndarray], np.ndarray], clip: float = DEFAULT_CLIP) -> PropensityModel:
    """참 성향점수 함수로 만든 모형 (OCATE 용)"""
    return PropensityModel(kind=TRUE_FUNCTION, predictor=p, clip=clip)


def estimate_directions(
    data: SampleSet,
    arm: int,
    method: str = "index-ls",
    matrix: Optional[np.ndarray] = None,
    r: int = 1,
) -> np.ndarray:
    """
    처리군 arm 의 중심 평균 부분공간 방향 추정

    Args:
        data: 관측 데이터
        arm: 0 또는 1
        method: "known" (matrix 그대로 사용) 또는 "index-ls"
        matrix: known 방법의 p×r 행렬
        r: index-ls 방법의 방향 수 (0 또는 1)

    Returns:
        p×r 방향 행렬 (r=0 이면 p×0)
    """
    if method == "known":
        if matrix is None:
            raise DataError("known 방향에는 행렬이 필요합니다")
        beta = np.array(matrix, dtype=float)
        if beta.ndim == 1:
            beta = beta[:, None]
        if beta.shape[0] != data.p:
            raise DataError(f"방향 행렬 행 수 {beta.shape[0]} 가 p={data.p} 와 다릅니다")
        if beta.shape[1] > 0 and np.linalg.matrix_rank(beta) < beta.shape[1]:
            raise RankDeficient("known 방향 행렬의 열이 선형독립이 아닙니다")
        return beta

    if method != "index-ls":
        raise DataError(f"알 수 없는 방향 추정 방법: {method}")
    if r == 0:
        return np.zeros((data.p, 0))
    if r != 1:
        raise UnsupportedRank(f"index-ls 는 r=1 만 지원합니다 (요청 r={r})")

    mask = data.arm_mask(arm)
    if int(mask.sum()) <= data.p:
        raise RankDeficient(f"처리군 {arm} 관측치 수 {int(mask.sum())} 가 p={data.p} 이하입니다")
    design = np.column_stack([np.ones(int(mask.sum())), data.X[mask]])
    coef = _solve_ls(design, data.Y[mask], f"처리군 {arm} 지수 방향")
    direction = _normalize_direction(coef[1:])
    logger.debug(f"처리군 {arm} 지수 방향: {np.round(direction, 4)}")
    return direction[:, None]


def build_directions(
    data: SampleSet,
    spec1: dict,
    spec0: dict,
) -> DirectionSet:
    """
    처리군별 방향 명세로 DirectionSet 구성

    명세 형식: {"method": "known", "matrix": [[...]]} / {"method": "index-ls", "r": 1} / {"r": 0}
    """
    betas, estimated = [], False
    for arm, spec in ((1, spec1), (0, spec0)):
        spec = spec or {"r": 0}
        method = spec.get("method", "index-ls")
        beta = estimate_directions(data, arm, method, spec.get("matrix"), int(spec.get("r", 1)))
        estimated = estimated or (method == "index-ls" and beta.shape[1] > 0)
        betas.append(beta)
    source = "estimated" if estimated else "known"
    return DirectionSet(beta1=betas[0], beta0=betas[1], source=source)
