"""
CATE Estimators
2단계 CATE 추정량: 공통 2단계 평활기, 회귀 기반 OR/PR/SR/NR, IPW 기반 O/P/S/N
"""
import logging
from typing import Callable, Optional

import numpy as np

from ..models.cate_curve import CateCurve, PseudoOutcome
from ..models.firststage_models import BasisSpec, DirectionSet, PropensityModel
from ..models.kernel_spec import KernelSpec
from ..models.sample_set import SampleSet
from ..models.sim_schema import BandwidthPlan, long_name
from ..utils.errors import DegenerateMass
from .firststage import fit_outcome_ls
from .kernels import make_kernel
from .smoothing import nw_regress_many, subsample_mean_fn

logger = logging.getLogger(__name__)

RAISE = "raise"
MISSING = "missing"


def _grid_matrix(grid, k: int) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim == 0:
        grid = grid[None]
    if grid.ndim == 1:
        grid = grid[:, None] if k == 1 else grid[None, :]
    if grid.shape[1] != k:
        raise ValueError(f"격자점 차원 {grid.shape[1]} 이 k={k} 와 다릅니다")
    return grid


def second_step_smooth(
    pseudo: PseudoOutcome,
    data: SampleSet,
    grid,
    h1: float,
    kernel: KernelSpec,
    estimator: str = "OR",
    plan: Optional[BandwidthPlan] = None,
    on_degenerate: str = RAISE,
) -> CateCurve:
    """
    X₁ 위에서 의사 결과변수를 K₁ 가중 평균

    Args:
        pseudo: 길이 n 의사 결과변수
        data: 관측 데이터
        grid: m×k 격자 (k=1 이면 길이 m 도 허용)
        h1: 2단계 대역폭
        kernel: dim=k, 차수 s₁ 커널
        estimator: 추정량 약칭
        plan: 곡선 메타데이터에 기록할 대역폭 계획 (nw_floor 도 여기서 읽는다)
        on_degenerate: "raise" 또는 "missing" (해당 격자점을 NaN 으로 남김)

    Returns:
        CateCurve
    """
    if kernel.dim != data.k:
        raise ValueError(f"K₁ 차원 {kernel.dim} 이 k={data.k} 와 다릅니다")
    if len(pseudo) != data.n:
        raise ValueError(f"의사 결과변수 길이 {len(pseudo)} 가 n={data.n} 과 다릅니다")
    if plan is None:
        plan = BandwidthPlan(h1=h1, h2=h1, h4=h1, s1=kernel.order, s2=kernel.order,
                             s4=kernel.order, family=kernel.family)

    points = _grid_matrix(grid, data.k)
    X1 = data.X1
    missing = []
    try:
        estimates = nw_regress_many(X1, pseudo.values, points, h1, kernel, floor=plan.nw_floor)
    except DegenerateMass:
        if on_degenerate != MISSING:
            raise
        estimates = np.full(points.shape[0], np.nan)
        for i, point in enumerate(points):
            try:
                estimates[i] = nw_regress_many(X1, pseudo.values, point[None, :], h1, kernel,
                                               floor=plan.nw_floor)[0]
            except DegenerateMass:
                logger.warning(f"{long_name(estimator)}: 격자점 {point.tolist()} 에서 국소 이웃이 비어 결측 처리")
                missing.append(i)

    return CateCurve(estimator=long_name(estimator), grid=points, estimates=estimates,
                     plan=plan, n=data.n, k=data.k, missing=missing)


def _second_step(pseudo, data, grid, plan: BandwidthPlan, estimator: str, on_degenerate: str) -> CateCurve:
    kernel = make_kernel(plan.family, plan.s1, data.k)
    return second_step_smooth(pseudo, data, grid, plan.h1, kernel, estimator=estimator,
                              plan=plan, on_degenerate=on_degenerate)


def orcate(
    data: SampleSet,
    true_effect: Callable[[np.ndarray], np.ndarray],
    grid,
    plan: BandwidthPlan,
    on_degenerate: str = RAISE,
) -> CateCurve:
    """참 m₁ − m₀ 를 그대로 평활하는 ORCATE"""
    values = np.asarray(true_effect(data.X), dtype=float)
    return _second_step(PseudoOutcome(values=values), data, grid, plan, "OR", on_degenerate)


def prcate(
    data: SampleSet,
    basis1: BasisSpec,
    basis0: BasisSpec,
    grid,
    plan: BandwidthPlan,
    on_degenerate: str = RAISE,
) -> CateCurve:
    """
    매개 결과모형 기반 PRCATE

    처리군별 최소제곱 적합 m̂ₜ 를 모든 Xᵢ 에서 평가한 차이를 평활한다.
    """
    fit1 = fit_outcome_ls(data, 1, basis1)
    fit0 = fit_outcome_ls(data, 0, basis0)
    pseudo = PseudoOutcome.from_means(fit1(data.X), fit0(data.X))
    return _second_step(pseudo, data, grid, plan, "PR", on_degenerate)


def _self_rows(data: SampleSet, plan: BandwidthPlan) -> Optional[np.ndarray]:
    return np.arange(data.n) if plan.leave_one_out else None


def nrcate(
    data: SampleSet,
    grid,
    plan: BandwidthPlan,
    on_degenerate: str = RAISE,
) -> CateCurve:
    """
    비모수 결과모형 기반 NRCATE

    m̂ₜ 는 전체 X 위 NW 회귀 (h₂, 차수 s₂ 곱 커널).
    1단계 DegenerateMass 는 관측치 번호를 담아 그대로 전달된다.
    """
    kernel = make_kernel(plan.family, plan.s2, data.p)
    self_rows = _self_rows(data, plan)
    m1 = subsample_mean_fn(data, 1, None, plan.h2, kernel, plan.nw_floor)(data.X, self_rows)
    m0 = subsample_mean_fn(data, 0, None, plan.h2, kernel, plan.nw_floor)(data.X, self_rows)
    return _second_step(PseudoOutcome.from_means(m1, m0), data, grid, plan, "NR", on_degenerate)


def srcate(
    data: SampleSet,
    directions: DirectionSet,
    grid,
    plan: BandwidthPlan,
    on_degenerate: str = RAISE,
) -> CateCurve:
    """
    준모수 결과모형 기반 SRCATE

    m̂ₜ 는 βₜᵀX 위 NW 회귀 (h₄, 차수 s₄), r(t)=0 이면 처리군 표본평균.
    """
    if directions.beta1.shape[0] != data.p:
        raise ValueError(f"방향 행렬 행 수 {directions.beta1.shape[0]} 가 p={data.p} 와 다릅니다")
    self_rows = _self_rows(data, plan)
    means = []
    for arm in (1, 0):
        beta = directions.for_arm(arm)
        kernel = make_kernel(plan.family, plan.s4, beta.shape[1]) if beta.shape[1] else None
        means.append(subsample_mean_fn(data, arm, beta, plan.h4, kernel, plan.nw_floor)(data.X, self_rows))
    return _second_step(PseudoOutcome.from_means(*means), data, grid, plan, "SR", on_degenerate)


def ipw_transform(data: SampleSet, prop: PropensityModel) -> np.ndarray:
    """ψᵢ = DᵢYᵢ/p̂(Xᵢ) − (1−Dᵢ)Yᵢ/(1−p̂(Xᵢ))"""
    p_hat = prop.predict(data.X)
    fraction = prop.clipped_fraction(data.X)
    if fraction > 0.05:
        logger.warning(f"성향점수 {fraction:.1%} 가 클리핑되었습니다 ({prop.kind})")
    return data.D * data.Y / p_hat - (1.0 - data.D) * data.Y / (1.0 - p_hat)


def ipw_cate(
    data: SampleSet,
    prop: PropensityModel,
    grid,
    plan: BandwidthPlan,
    on_degenerate: str = RAISE,
) -> CateCurve:
    """
    IPW 기반 CATE (성향점수 종류에 따라 OCATE/PCATE/SCATE/NCATE)

    회귀 추정량과 같은 2단계 평활기를 사용한다.
    """
    pseudo = PseudoOutcome(values=ipw_transform(data, prop))
    return _second_step(pseudo, data, grid, plan, prop.estimator_id, on_degenerate)
