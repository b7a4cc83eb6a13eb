"""
Asymptotic Variance
영향 함수 Ψ₁–Ψ₄, 조건부 Monte Carlo 점근 분산, 효율 순위 검사
"""
import logging
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..models.oracle_model import (
    SIGMA_KINDS,
    OracleModel,
    RankingCheck,
    RankingReport,
    VarianceProfile,
)
from ..utils.errors import SamplerMismatch

logger = logging.getLogger(__name__)

DEFAULT_MC_DRAWS = 100_000
MIN_MC_DRAWS = 10_000
RANKING_SE_MULTIPLIER = 3.0

# σ²_a ≤ σ²_b 순서로 검사하는 부등식 사슬
RANKING_CHAINS = (
    ("O", "S2", "S4", "N"),
    ("O", "S3", "S4", "N"),
    ("N", "IPW"),
)
# 정의상 같아야 하는 쌍
EQUALITIES = (("O", "P"), ("O", "S1"))


def _rows(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x


def psi(variant: int, model: OracleModel, x, y, d) -> np.ndarray:
    """
    영향 함수 Ψ 평가

    Args:
        variant: 1 (참 성향점수), 2 (처리군 잔차만, p(β₁ᵀx)),
                 3 (대조군 잔차만, p(β₀ᵀx)), 4 (둘 다)
        model: 참 모형
        x: p 벡터 또는 n×p 행렬
        y: 결과값
        d: 처리 여부

    Returns:
        Ψ 값 (행 단위 배열)
    """
    X = _rows(x)
    y = np.asarray(y, dtype=float)
    d = np.asarray(d, dtype=float)
    m1, m0 = model.m1(X), model.m0(X)
    out = m1 - m0
    if variant == 1:
        p = model.propensity(X)
        return out + d * (y - m1) / p - (1.0 - d) * (y - m0) / (1.0 - p)
    if variant not in (2, 3, 4):
        raise ValueError(f"Ψ 종류는 1–4 중 하나여야 합니다: {variant}")
    if variant in (2, 4):
        out = out + d * (y - m1) / model.prop_index1(X)
    if variant in (3, 4):
        out = out - (1.0 - d) * (y - m0) / (1.0 - model.prop_index0(X))
    return out


def _stream(seed: int, key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(key,))))


def _conditional_draws(model: OracleModel, x1: np.ndarray, mc_draws: int,
                       rng: np.random.Generator) -> np.ndarray:
    X = model.sample_given_x1(x1, mc_draws, rng)
    drawn = X[:, list(model.x1_idx)]
    if not np.allclose(drawn, x1[None, :], rtol=0.0, atol=1e-12):
        raise SamplerMismatch(f"조건부 표본의 X₁ 이 {x1.tolist()} 과 다릅니다")
    return X


def _summands(model: OracleModel, X: np.ndarray, tau: float) -> dict:
    """σ² 종류별 조건부 기댓값의 피적분 값 (공통 난수)"""
    m1, m0 = model.m1(X), model.m0(X)
    v1, v0 = model.var1(X), model.var0(X)
    p = model.propensity(X)
    base = (m1 - m0 - tau) ** 2
    arm1 = v1 / model.prop_index1(X)
    arm0 = v0 / (1.0 - model.prop_index0(X))
    full = base + v1 / p + v0 / (1.0 - p)
    return {
        "O": base,
        "P": base,
        "S1": base,
        "S2": base + arm1,
        "S3": base + arm0,
        "S4": base + arm1 + arm0,
        "N": full,
        "IPW": full + p * (1.0 - p) * (m1 / p + m0 / (1.0 - p)) ** 2,
    }


def sigma_sq(
    kind: str,
    model: OracleModel,
    x1,
    mc_draws: int = DEFAULT_MC_DRAWS,
    seed: int = 0,
) -> Tuple[float, float]:
    """
    조건부 Monte Carlo 로 σ²_kind(x₁) 계산

    Args:
        kind: O, P, S1–S4, N, IPW
        model: 참 모형
        x1: 조건 값 (k 벡터 또는 스칼라)
        mc_draws: MC 표본 수 (10⁴ 이상)
        seed: 난수 시드

    Returns:
        (추정값, MC 표준오차)
    """
    if kind not in SIGMA_KINDS:
        raise ValueError(f"알 수 없는 σ² 종류: {kind}")
    profile = variance_profile(model, x1, mc_draws=mc_draws, seed=seed, kinds=(kind,))
    return profile.sigma_sq[kind], profile.mc_se[kind]


def variance_profile(
    model: OracleModel,
    x1,
    mc_draws: int = DEFAULT_MC_DRAWS,
    seed: int = 0,
    k1_norm_sq: float = float("nan"),
    kinds: Sequence[str] = SIGMA_KINDS,
    stream_key: int = 0,
) -> VarianceProfile:
    """
    격자점 하나의 σ² 프로파일 (모든 종류가 같은 MC 표본을 공유)

    Args:
        model: 참 모형
        x1: 조건 값
        mc_draws: MC 표본 수
        seed: 난수 시드
        k1_norm_sq: ‖K₁‖₂² (기록용)
        kinds: 계산할 σ² 종류
        stream_key: 격자점별 독립 난수열 번호

    Returns:
        VarianceProfile
    """
    if mc_draws < MIN_MC_DRAWS:
        raise ValueError(f"MC 표본 수는 {MIN_MC_DRAWS} 이상이어야 합니다: {mc_draws}")
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    X = _conditional_draws(model, x1, mc_draws, _stream(seed, stream_key))
    summands = _summands(model, X, float(model.tau(x1)))

    values, errors = {}, {}
    for kind in kinds:
        s = summands[kind]
        values[kind] = float(np.mean(s))
        errors[kind] = float(np.std(s, ddof=1) / np.sqrt(mc_draws))
    logger.debug(f"σ² 프로파일 x1={x1.tolist()}: " + ", ".join(f"{k}={v:.5g}" for k, v in values.items()))
    return VarianceProfile(x1=x1, sigma_sq=values, mc_se=errors, f_x1=float(model.density_x1(x1)),
                           k1_norm_sq=k1_norm_sq, mc_draws=mc_draws)


def profiles_over_grid(
    model: OracleModel,
    grid: Iterable,
    mc_draws: int = DEFAULT_MC_DRAWS,
    seed: int = 0,
    k1_norm_sq: float = float("nan"),
) -> List[VarianceProfile]:
    """격자 전체 프로파일 (격자점마다 독립 난수열)"""
    return [
        variance_profile(model, x1, mc_draws=mc_draws, seed=seed, k1_norm_sq=k1_norm_sq, stream_key=i)
        for i, x1 in enumerate(grid)
    ]


def asy_sd(
    sigma_sq_value: float,
    f_x1: float,
    k1_norm_sq: float,
    n: Optional[int] = None,
    h1: Optional[float] = None,
    k: int = 1,
    scaled: bool = True,
) -> float:
    """
    이론 표준편차 √(‖K₁‖₂²·σ²/f(x₁))

    scaled=False 이면 τ̂ 자체의 표준편차 (√(n h₁ᵏ) 로 나눈 값) 를 돌려준다.
    """
    if not f_x1 > 0:
        raise ValueError(f"밀도 f(x₁) 는 양수여야 합니다: {f_x1}")
    if sigma_sq_value < 0:
        raise ValueError(f"σ² 는 음수일 수 없습니다: {sigma_sq_value}")
    value = float(np.sqrt(k1_norm_sq * sigma_sq_value / f_x1))
    if scaled:
        return value
    if n is None or h1 is None:
        raise ValueError("scaled=False 에는 n 과 h1 이 필요합니다")
    return value / np.sqrt(n * h1 ** k)


def ranking_check(
    profiles: Sequence[VarianceProfile],
    chains: Sequence[Sequence[str]] = RANKING_CHAINS,
    multiplier: float = RANKING_SE_MULTIPLIER,
) -> RankingReport:
    """
    효율 순위 부등식 검사

    각 인접 쌍 σ²_a ≤ σ²_b 를 3·√(se_a² + se_b²) 허용 오차로 확인한다.
    프로파일에 없는 종류가 포함된 사슬은 건너뛴다.
    """
    report = RankingReport()
    pairs = list(EQUALITIES)
    for chain in chains:
        pairs.extend(zip(chain[:-1], chain[1:]))

    for profile in profiles:
        point = tuple(float(v) for v in np.atleast_1d(profile.x1))
        for lower, upper in pairs:
            if lower not in profile.sigma_sq or upper not in profile.sigma_sq:
                continue
            margin = profile.sigma_sq[upper] - profile.sigma_sq[lower]
            tol = multiplier * float(np.hypot(profile.mc_se[lower], profile.mc_se[upper]))
            passed = margin >= -tol
            report.checks.append(RankingCheck(point, lower, upper, margin, tol, passed))
            if not passed:
                logger.warning(f"순위 위반 x1={point}: σ²_{lower} > σ²_{upper} (margin={margin:.4g}, tol={tol:.4g})")
    return report
