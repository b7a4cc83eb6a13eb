"""
Kernel Smoothing
Nadaraya–Watson 국소 상수 회귀 및 커널 밀도 추정
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..models.kernel_spec import KernelSpec
from ..models.sample_set import SampleSet
from ..models.sim_schema import NW_FLOOR
from ..utils.errors import DegenerateMass

logger = logging.getLogger(__name__)

# 한 번에 처리할 질의점 수
QUERY_BLOCK = 256


def _as_matrix(points) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    return points


def _check_inputs(points: np.ndarray, h: float, kernel: KernelSpec):
    if not h > 0:
        raise ValueError(f"대역폭은 양수여야 합니다: {h}")
    if points.shape[0] < 1:
        raise ValueError("표본점이 비어 있습니다")
    if points.shape[1] != kernel.dim:
        raise ValueError(f"표본 차원 {points.shape[1]} 과 커널 차원 {kernel.dim} 이 다릅니다")


def nw_regress_many(
    points,
    responses,
    queries,
    h: float,
    kernel: KernelSpec,
    exclude: Optional[np.ndarray] = None,
    floor: float = NW_FLOOR,
) -> np.ndarray:
    """
    여러 질의점에서의 Nadaraya–Watson 추정

    Σⱼ K((Xⱼ−x)/h)·Yⱼ / Σⱼ K((Xⱼ−x)/h). 자기 자신 항은 기본적으로 포함한다.

    Args:
        points: m×d 표본점
        responses: 길이 m 반응값
        queries: q×d 질의점
        h: 대역폭
        kernel: dim=d 커널
        exclude: 길이 q 정수 배열, 질의 i 에서 제외할 표본 번호 (-1 이면 제외 없음)
        floor: |Σⱼ K((Xⱼ−x)/h)| 의 절대 하한

    Returns:
        길이 q 추정값

    Raises:
        DegenerateMass: 국소 이웃이 비어 있는 질의점 (index=질의 번호)
    """
    points = _as_matrix(points)
    queries = _as_matrix(queries)
    responses = np.asarray(responses, dtype=float)
    _check_inputs(points, h, kernel)
    if responses.shape[0] != points.shape[0]:
        raise ValueError(f"반응값 길이 {responses.shape[0]} 가 표본 수 {points.shape[0]} 와 다릅니다")

    result = np.empty(queries.shape[0])
    for start in range(0, queries.shape[0], QUERY_BLOCK):
        block = queries[start:start + QUERY_BLOCK]
        u = (points[None, :, :] - block[:, None, :]) / h
        weights, log_scale = kernel.relative_weights(u, axis=-1)
        if exclude is not None:
            rows = np.asarray(exclude[start:start + QUERY_BLOCK])
            hit = rows >= 0
            weights[np.nonzero(hit)[0], rows[hit]] = 0.0

        # |Σⱼ K((Xⱼ−x)/h)| 를 로그 척도로 하한과 비교
        denom = weights.sum(axis=1)
        with np.errstate(divide="ignore"):
            log_mass = np.log(np.abs(denom)) + log_scale[:, 0]
            bad = ~(log_mass >= np.log(floor)) | (denom == 0.0)
        if bad.any():
            index = start + int(np.nonzero(bad)[0][0])
            raise DegenerateMass(f"커널 가중치 합이 하한 {floor:g} 미만입니다 (h={h:.4g})", index=index)
        result[start:start + block.shape[0]] = weights @ responses / denom
    return result


def nw_regress(points, responses, query, h: float, kernel: KernelSpec, floor: float = NW_FLOOR) -> float:
    """
    단일 질의점 Nadaraya–Watson 추정

    Args:
        points: m×d 표본점
        responses: 길이 m 반응값
        query: d 벡터
        h: 대역폭
        kernel: dim=d 커널
        floor: |Σⱼ K((Xⱼ−x)/h)| 의 절대 하한

    Returns:
        추정값
    """
    query = np.atleast_1d(np.asarray(query, dtype=float))
    return float(nw_regress_many(points, responses, query[None, :], h, kernel, floor=floor)[0])


def kde_many(points, queries, h: float, kernel: KernelSpec) -> np.ndarray:
    """여러 질의점에서의 커널 밀도 추정 (1/(m·h^d)) Σⱼ K((Xⱼ−x)/h)"""
    points = _as_matrix(points)
    queries = _as_matrix(queries)
    _check_inputs(points, h, kernel)
    m, d = points.shape

    result = np.empty(queries.shape[0])
    for start in range(0, queries.shape[0], QUERY_BLOCK):
        block = queries[start:start + QUERY_BLOCK]
        u = (points[None, :, :] - block[:, None, :]) / h
        result[start:start + block.shape[0]] = kernel(u).sum(axis=1)
    return result / (m * h ** d)


def kde(points, query, h: float, kernel: KernelSpec) -> float:
    """단일 질의점 커널 밀도 추정 (0 도 유효한 값)"""
    query = np.atleast_1d(np.asarray(query, dtype=float))
    return float(kde_many(points, query[None, :], h, kernel)[0])


@dataclass(frozen=True)
class MeanFunction:
    """
    처리군별 조건부 평균 추정 함수 m̂ₜ

    표본 스냅샷을 보관하므로 여러 스레드에서 공유할 수 있다.
    projection 이 None 이면 전체 X, p×r 행렬이면 지수 βᵀX,
    r=0 이면 처리군 표본평균 상수 함수이다.
    """
    arm: int
    points: np.ndarray
    responses: np.ndarray
    rows: np.ndarray  # 표본 내 원래 행 번호
    h: float
    kernel: Optional[KernelSpec]
    projection: Optional[np.ndarray] = None
    floor: float = NW_FLOOR

    @property
    def is_constant(self) -> bool:
        return self.projection is not None and self.projection.shape[1] == 0

    def project(self, X) -> np.ndarray:
        X = _as_matrix(X)
        if self.projection is None:
            return X
        return X @ self.projection

    def __call__(self, X, self_rows: Optional[np.ndarray] = None) -> np.ndarray:
        """
        질의점에서 m̂ₜ 평가

        Args:
            X: q×p 공변량 행렬
            self_rows: 길이 q, 질의 i 의 원래 표본 행 번호 (leave-one-out 용, -1 이면 없음)

        Returns:
            길이 q 추정값
        """
        X = _as_matrix(X)
        if self.is_constant:
            if self_rows is None:
                return np.full(X.shape[0], float(np.mean(self.responses)))
            total = float(np.sum(self.responses))
            m = self.responses.shape[0]
            lookup = self._lookup(self_rows)
            out = np.full(X.shape[0], total / m)
            hit = lookup >= 0
            if hit.any():
                if m < 2:
                    raise DegenerateMass("leave-one-out 평균에 남는 관측치가 없습니다",
                                         index=int(np.nonzero(hit)[0][0]))
                out[hit] = (total - self.responses[lookup[hit]]) / (m - 1)
            return out
        exclude = None if self_rows is None else self._lookup(self_rows)
        return nw_regress_many(
            self.points, self.responses, self.project(X), self.h, self.kernel, exclude=exclude,
            floor=self.floor,
        )

    def _lookup(self, self_rows: np.ndarray) -> np.ndarray:
        """원래 행 번호 → 부분표본 번호 (없으면 -1)"""
        positions = np.full(int(max(self.rows.max(initial=-1), np.max(self_rows, initial=-1))) + 2, -1)
        positions[self.rows] = np.arange(self.rows.shape[0])
        self_rows = np.asarray(self_rows)
        return np.where(self_rows >= 0, positions[self_rows], -1)


def subsample_mean_fn(
    data: SampleSet,
    arm: int,
    projection: Optional[np.ndarray],
    h: Optional[float],
    kernel: Optional[KernelSpec],
    floor: float = NW_FLOOR,
) -> MeanFunction:
    """
    처리군 arm 부분표본으로 m̂ₜ 적합

    Args:
        data: 관측 데이터
        arm: 0 또는 1
        projection: None(전체 X) / p×r 방향 행렬 / p×0 (상수 함수)
        h: 대역폭 (상수 함수면 무시)
        kernel: dim 이 투영 차원과 같은 커널 (상수 함수면 무시)
        floor: NW 분모 절대 하한

    Returns:
        호출 가능한 MeanFunction
    """
    mask = data.arm_mask(arm)
    rows = np.nonzero(mask)[0]
    if rows.size == 0:
        raise DegenerateMass(f"처리군 {arm} 부분표본이 비어 있습니다")

    if projection is not None:
        projection = np.array(projection, dtype=float)
        if projection.ndim == 1:
            projection = projection[:, None]
        if projection.shape[0] != data.p:
            raise ValueError(f"투영 행렬 행 수 {projection.shape[0]} 가 p={data.p} 와 다릅니다")
        projection.setflags(write=False)

    responses = data.Y[rows].copy()
    responses.setflags(write=False)
    if projection is not None and projection.shape[1] == 0:
        logger.debug(f"처리군 {arm}: 0차원 투영, 표본평균 사용")
        return MeanFunction(arm=arm, points=data.X[rows][:, :0], responses=responses,
                            rows=rows, h=float(h or 1.0), kernel=None, projection=projection)

    points = data.X[rows] if projection is None else data.X[rows] @ projection
    points.setflags(write=False)
    if kernel is None or kernel.dim != points.shape[1]:
        raise ValueError(f"커널 차원이 투영 차원 {points.shape[1]} 과 다릅니다")
    return MeanFunction(arm=arm, points=points, responses=responses, rows=rows,
                        h=float(h), kernel=kernel, projection=projection, floor=floor)
