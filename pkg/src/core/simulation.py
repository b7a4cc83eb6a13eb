"""
Simulation Engine
모형 1–3 데이터 생성, 참 τ, 대역폭 규칙, Monte Carlo 반복 실행
"""
import logging
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.special import expit

from ..models.cate_curve import CateCurve
from ..models.firststage_models import BasisSpec, DirectionSet
from ..models.oracle_model import OracleModel
from ..models.sample_set import SampleSet
from ..models.sim_schema import (
    ConditionStatus,
    ReportRow,
    SimConfig,
    SimReport,
    long_name,
)
from ..utils.errors import ConfigError, DegenerateMass, MaxIterations, Separation
from .asymptotics import asy_sd, profiles_over_grid, ranking_check
from .estimators import ipw_cate, nrcate, orcate, prcate, srcate
from .firststage import (
    estimate_directions,
    fit_propensity_logistic,
    fit_propensity_nonparametric,
    fit_propensity_single_index,
    true_propensity,
)
from .kernels import kernel_l2_norm_sq, make_kernel

NOISE_SD = 0.25
# 모형별 (p, r(1), r(0))
MODEL_DIMENSIONS = {1: (2, 2, 0), 2: (4, 1, 0), 3: (3, 1, 0)}
# 반복을 버리는 수치 퇴화 예외
DROPPABLE = (DegenerateMass, Separation, MaxIterations)
MARGINAL_PROPENSITY_DRAWS = 400_000
CONDITION_EPS = 1e-12


def _check_model(model: int):
    if model not in MODEL_DIMENSIONS:
        raise ConfigError(f"알 수 없는 모형 번호: {model}")


def replication_stream(seed: int, replication: int) -> np.random.Generator:
    """(seed, 반복 번호) 로 결정되는 독립 난수열"""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(replication,))))


def _covariates(model: int, X1: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """X₁ 이 주어졌을 때 나머지 공변량 생성"""
    size = X1.shape[0]
    if model == 1:
        X2 = (1.0 + 2.0 * X1) ** 2 + rng.uniform(-0.5, 0.5, size)
        return np.column_stack([X1, X2])
    if model == 2:
        noise = rng.uniform(-0.5, 0.5, (size, 3))
        X2 = 1.0 + X1 ** 2 + noise[:, 0]
        X3 = (1.0 + X1) ** 2 + noise[:, 1]
        X4 = (-1.0 + X1) ** 2 + noise[:, 2]
        return np.column_stack([X1, X2, X3, X4])
    noise = rng.uniform(-0.5, 0.5, (size, 2))
    X2 = 1.0 + X1 ** 2 + noise[:, 0]
    X3 = (1.0 + X1) * (-1.0 + X1) + noise[:, 1]
    return np.column_stack([X1, X2, X3])


def _mean_treated(model: int, X: np.ndarray) -> np.ndarray:
    if model == 1:
        return X[:, 0] ** 2 + X[:, 1]
    if model == 2:
        return X.sum(axis=1)
    return X[:, 1] + X[:, 2]


def _propensity(model: int, X: np.ndarray) -> np.ndarray:
    if model == 1:
        return expit(X[:, 0] + X[:, 1])
    if model == 2:
        return expit(0.5 * X.sum(axis=1))
    return expit(X[:, 1] + X[:, 2])


def true_tau(model: int, x1) -> float:
    """
    참 CATE τ(x₁)

    모형 1: x₁² + (1+2x₁)², 모형 2: 3x₁² + x₁ + 3, 모형 3: 2x₁²
    """
    _check_model(model)
    x = float(np.atleast_1d(np.asarray(x1, dtype=float))[0])
    if model == 1:
        return x * x + (1.0 + 2.0 * x) ** 2
    if model == 2:
        return 3.0 * x * x + x + 3.0
    return 2.0 * x * x


@lru_cache(maxsize=None)
def marginal_propensity(model: int) -> float:
    """E[p(X)] (고정 시드 MC), r(0)=0 인 대조군의 p(β₀ᵀX)"""
    rng = replication_stream(20240601, model)
    X1 = rng.uniform(-0.5, 0.5, MARGINAL_PROPENSITY_DRAWS)
    return float(np.mean(_propensity(model, _covariates(model, X1, rng))))


def true_directions(model: int) -> Tuple[np.ndarray, np.ndarray]:
    """참 방향 (β₁, β₀), 대조군은 모든 모형에서 r(0)=0"""
    _check_model(model)
    p = MODEL_DIMENSIONS[model][0]
    if model == 1:
        beta1 = np.eye(2)
    elif model == 2:
        beta1 = np.full((4, 1), 0.5)
    else:
        beta1 = np.array([[0.0], [1.0], [1.0]]) / np.sqrt(2.0)
    return beta1, np.zeros((p, 0))


def oracle_model(model: int) -> OracleModel:
    """모형 번호의 참 모형"""
    _check_model(model)
    p = MODEL_DIMENSIONS[model][0]
    beta1, beta0 = true_directions(model)
    marginal = marginal_propensity(model)

    def sample_given_x1(x1, size, rng):
        X1 = np.full(size, float(np.atleast_1d(x1)[0]))
        return _covariates(model, X1, rng)

    return OracleModel(
        model_id=model,
        p=p,
        x1_idx=(0,),
        m1=lambda X: _mean_treated(model, X),
        m0=lambda X: np.zeros(X.shape[0]),
        propensity=lambda X: _propensity(model, X),
        var1=lambda X: np.full(X.shape[0], NOISE_SD ** 2),
        var0=lambda X: np.zeros(X.shape[0]),
        beta1=beta1,
        beta0=beta0,
        # 세 모형 모두 p(X) 가 β₁ᵀX 의 함수
        prop_index1=lambda X: _propensity(model, X),
        prop_index0=lambda X: np.full(X.shape[0], marginal),
        sample_given_x1=sample_given_x1,
        tau=lambda x1: true_tau(model, x1),
        density_x1=lambda x1: 1.0 if abs(float(np.atleast_1d(x1)[0])) < 0.5 else 0.0,
    )


def generate_model(model: int, n: int, rng: np.random.Generator) -> Tuple[SampleSet, OracleModel]:
    """
    모형 데이터 생성

    Args:
        model: 1, 2, 3
        n: 표본 크기
        rng: 난수 생성기

    Returns:
        (SampleSet, OracleModel)
    """
    _check_model(model)
    if n < 1:
        raise ConfigError(f"n 은 1 이상이어야 합니다: {n}")
    X1 = rng.uniform(-0.5, 0.5, n)
    X = _covariates(model, X1, rng)
    Y1 = _mean_treated(model, X) + rng.normal(0.0, NOISE_SD, n)
    D = (rng.uniform(size=n) < _propensity(model, X)).astype(float)
    Y = D * Y1
    columns = [f"x{j + 1}" for j in range(X.shape[1])]
    data = SampleSet(X=X, Y=Y, D=D, x1_idx=(0,), columns=columns, allow_single_arm=True)
    return data, oracle_model(model)


def default_orders(k: int, p: int, r_max: int) -> Dict[str, int]:
    """
    커널 차수 기본값

    s₂ = p (짝수) 또는 p+1 (홀수), s₁ = s₂+2, s₄ = r_max 또는 r_max+1 (최소 2)
    """
    s2 = p if p % 2 == 0 else p + 1
    s4 = r_max if r_max % 2 == 0 else r_max + 1
    return {"s1": s2 + 2, "s2": s2, "s4": max(s4, 2)}


def check_order_rules(k: int, p: int, r_max: int, orders: Dict[str, int]) -> List[str]:
    """차수 규칙 위반 목록 (s₂ ≥ p, s₁ ≥ s₂+2, s₄ ≥ r_max, 모두 짝수)"""
    problems = []
    for role, value in orders.items():
        if value % 2:
            problems.append(f"{role}={value} 는 짝수가 아닙니다")
    if orders["s2"] < p:
        problems.append(f"s2={orders['s2']} < p={p}")
    if orders["s1"] < orders["s2"] + 2:
        problems.append(f"s1={orders['s1']} < s2+2={orders['s2'] + 2}")
    if orders["s4"] < r_max:
        problems.append(f"s4={orders['s4']} < r_max={r_max}")
    return problems


def rate_exponent(role: str, k: int, p: int, r_max: int, orders: Dict[str, int],
                  delta: float = 0.0) -> float:
    """h = a·n^(−1/e) 의 e (δ 포함)"""
    if role == "h1":
        return k + 2 * orders["s1"] - delta
    if role == "h2":
        return p + orders["s2"] + delta
    if role == "h4":
        return r_max + orders["s4"] + delta
    raise ConfigError(f"알 수 없는 대역폭 역할: {role}")


def bandwidth_rule(role: str, a: float, n: int, k: int, p: int, r_max: int,
                   orders: Optional[Dict[str, int]] = None,
                   exponent: Optional[float] = None) -> Tuple[float, float]:
    """
    대역폭 규칙 h = a·n^(−1/e)

    Args:
        role: h1, h2, h4
        a: 기준 상수 (양수)
        n: 표본 크기
        k, p, r_max: 차원
        orders: 커널 차수 (없으면 기본값)
        exponent: 명시적 e (없으면 δ=0 규칙에서 계산)

    Returns:
        (h, e)
    """
    if not a > 0:
        raise ConfigError(f"대역폭 기준 상수 a 는 양수여야 합니다: {a}")
    orders = orders or default_orders(k, p, r_max)
    e = float(exponent) if exponent is not None else float(rate_exponent(role, k, p, r_max, orders))
    if not e > 0:
        raise ConfigError(f"대역폭 지수 e 는 양수여야 합니다: {e}")
    return a * n ** (-1.0 / e), e


def _status(value: float, want_negative: bool) -> str:
    if abs(value) <= CONDITION_EPS:
        return "boundary"
    return "holds" if (value < 0) == want_negative else "fails"


def check_conditions(exponents: Dict[str, float], k: int, p: int, r_max: int,
                     orders: Dict[str, int]) -> List[ConditionStatus]:
    """
    대역폭 조건 (A1), (A3), (A4), (A6), (A7) 의 n 지수 판정

    h = a·n^(−α) 일 때 각 극한 표현의 n 지수를 계산한다.
    규칙에서 온 대역폭만 (exponents 에 있는 역할만) 판정한다.
    """
    alpha = {role: 1.0 / e for role, e in exponents.items()}
    s1, s2, s4 = orders["s1"], orders["s2"], orders["s4"]
    results = []

    def add(condition, expression, value, want_negative):
        results.append(ConditionStatus(condition, expression, float(value), _status(value, want_negative)))

    if "h1" in alpha:
        a1 = alpha["h1"]
        add("A1", "n·h1^k → ∞", 1 - k * a1, False)
        add("A1", "n·h1^(2s1+k) → 0", 1 - (2 * s1 + k) * a1, True)
    if "h2" in alpha:
        a2 = alpha["h2"]
        add("A3", "log n/(n·h2^(p+s2)) → 0", 1 - (p + s2) * a2, False)
        if "h1" in alpha:
            add("A4", "h2^(2s2)·h1^(-2s2-k) → 0", -2 * s2 * a2 + (2 * s2 + k) * alpha["h1"], True)
            add("A4", "n·h1^k·h2^(2s2) → 0", 1 - k * alpha["h1"] - 2 * s2 * a2, True)
    if "h4" in alpha:
        a4 = alpha["h4"]
        add("A6", "log n/(n·h4^(r+s4)) → 0", 1 - (r_max + s4) * a4, False)
        if "h1" in alpha:
            add("A7", "h4^(2s4)·h1^(-2s4-k) → 0", -2 * s4 * a4 + (2 * s4 + k) * alpha["h1"], True)
            add("A7", "n·h1^k·h4^(2s4) → 0", 1 - k * alpha["h1"] - 2 * s4 * a4, True)
    return results


def model_bases(model: int, columns: List[str]) -> Tuple[BasisSpec, BasisSpec]:
    """올바르게 지정된 PRCATE 기저 (처리군, 대조군)"""
    _check_model(model)
    if model == 1:
        terms1 = ["1", "x1^2", "x2"]
    elif model == 2:
        terms1 = ["1", "x1", "x2", "x3", "x4"]
    else:
        terms1 = ["1", "x2", "x3"]
    return BasisSpec.parse(terms1, columns), BasisSpec.parse(["1"], columns)


def model_directions(model: int, data: SampleSet, policy: str) -> DirectionSet:
    """SRCATE 방향: known 이면 참 방향, index-ls 이면 처리군 최소제곱 지수"""
    beta1, beta0 = true_directions(model)
    if policy == "index-ls":
        if beta1.shape[1] > 1:
            raise ConfigError(f"모형 {model} 은 r(1)={beta1.shape[1]} 이라 index-ls 방향을 쓸 수 없습니다")
        beta1 = estimate_directions(data, 1, "index-ls", r=1)
        return DirectionSet(beta1=beta1, beta0=beta0, source="estimated")
    return DirectionSet(beta1=beta1, beta0=beta0, source="known")


def run_estimators(config: SimConfig, data: SampleSet, oracle: OracleModel) -> Dict[str, CateCurve]:
    """한 데이터셋에서 설정된 모든 추정량의 격자 곡선"""
    plan, grid = config.plan, np.asarray(config.grid)
    results = {}
    for est in config.estimators:
        if est == "OR":
            curve = orcate(data, oracle.effect, grid, plan)
        elif est == "PR":
            basis1, basis0 = model_bases(config.model, data.columns)
            curve = prcate(data, basis1, basis0, grid, plan)
        elif est == "NR":
            curve = nrcate(data, grid, plan)
        elif est == "SR":
            curve = srcate(data, model_directions(config.model, data, config.direction_policy), grid, plan)
        elif est == "O":
            curve = ipw_cate(data, true_propensity(oracle.propensity, config.clip), grid, plan)
        elif est == "P":
            curve = ipw_cate(data, fit_propensity_logistic(data, clip=config.clip), grid, plan)
        elif est == "S":
            kernel = make_kernel(plan.family, plan.s4, 1)
            prop = fit_propensity_single_index(data, plan.h4, kernel, config.clip, plan.nw_floor)
            curve = ipw_cate(data, prop, grid, plan)
        elif est == "N":
            kernel = make_kernel(plan.family, plan.s2, data.p)
            prop = fit_propensity_nonparametric(data, plan.h2, kernel, config.clip, plan.nw_floor)
            curve = ipw_cate(data, prop, grid, plan)
        else:
            raise ConfigError(f"알 수 없는 추정량: {est}")
        results[est] = curve
    return results


def _replication_worker(args) -> Tuple[int, Optional[Dict[str, np.ndarray]], Optional[str]]:
    """
    반복 하나 실행 (프로세스 풀에서 피클 가능하도록 모듈 수준 함수)

    Returns:
        (반복 번호, 추정량별 T 배열 또는 None, 제외 사유)
    """
    config, replication = args
    rng = replication_stream(config.seed, replication)
    data, oracle = generate_model(config.model, config.n, rng)
    truth = np.array([true_tau(config.model, x) for x in config.grid])
    try:
        if data.D.min() == data.D.max():
            raise DegenerateMass("한 처리군이 비어 있습니다")
        curves = run_estimators(config, data, oracle)
    except DROPPABLE as e:
        return replication, None, f"{type(e).__name__}: {e}"
    return replication, {est: curve.scaled_deviation(truth) for est, curve in curves.items()}, None


def summarize(T: np.ndarray) -> Tuple[float, float, float]:
    """
    척도 통계량 요약

    BIAS = mean(T), SD = (R-1) 분모 표본 표준편차 (R=1 이면 0), MSE = mean(T²)
    """
    R = T.shape[0]
    bias = float(np.mean(T))
    sd = float(np.std(T, ddof=1)) if R > 1 else 0.0
    mse = float(np.mean(T * T))
    return sd, bias, mse


class SimulationEngine:
    """
    Monte Carlo 시뮬레이션 실행기

    반복마다 (seed, 반복 번호) 난수열을 쓰고 결과를 반복 번호 순서로 모으므로
    작업자 수와 무관하게 같은 보고서를 만든다.
    """

    def __init__(self, config: SimConfig):
        self.logger = logging.getLogger(__name__)
        config.validate()
        self.config = config

        # 통계
        self.stats = {
            'replications': 0,
            'kept': 0,
            'dropped': 0,
            'elapsed': 0.0,
        }

    def _collect(self) -> Dict[int, Tuple[Optional[Dict[str, np.ndarray]], Optional[str]]]:
        """반복 번호 → (T 배열 사전 또는 None, 제외 사유)"""
        config = self.config
        R = config.replications
        outcomes = {}
        step = max(1, R // 10)
        tasks = [(config, rep) for rep in range(R)]

        if config.workers > 1:
            with ProcessPoolExecutor(max_workers=config.workers) as executor:
                futures = [executor.submit(_replication_worker, task) for task in tasks]
                for done, future in enumerate(as_completed(futures), start=1):
                    rep, values, reason = future.result()
                    outcomes[rep] = (values, reason)
                    if done % step == 0:
                        self.logger.info(f"  진행: {done}/{R}")
        else:
            for task in tasks:
                rep, values, reason = _replication_worker(task)
                outcomes[rep] = (values, reason)
                if (rep + 1) % step == 0:
                    self.logger.info(f"  진행: {rep + 1}/{R}")
        return outcomes

    def run(self) -> SimReport:
        """
        모든 반복을 실행하고 추정량 × 격자점 SD/BIAS/MSE 표를 만든다

        Returns:
            SimReport

        Raises:
            DegenerateMass: 모든 반복이 제외된 경우
        """
        config = self.config
        start = time.time()
        R = config.replications
        self.logger.info(f"시뮬레이션 시작: 모형 {config.model}, n={config.n}, R={R}, 작업자 {config.workers}")

        outcomes = self._collect()
        kept, reasons = [], []
        for rep in range(R):
            values, reason = outcomes[rep]
            if values is None:
                reasons.append(f"replication {rep}: {reason}")
                self.logger.warning(f"반복 {rep} 제외: {reason}")
            else:
                kept.append(values)
        dropped = R - len(kept)
        self.stats.update(replications=R, kept=len(kept), dropped=dropped)
        if not kept:
            raise DegenerateMass(f"모든 반복({R})이 수치 퇴화로 제외되었습니다")

        rows = []
        for est in config.estimators:
            T = np.stack([values[est] for values in kept])
            for j, x in enumerate(config.grid):
                sd, bias, mse = summarize(T[:, j])
                rows.append(ReportRow(estimator=long_name(est), x1=float(x), sd=sd, bias=bias, mse=mse,
                                      replications=len(kept), dropped=dropped))

        self.stats['elapsed'] = time.time() - start
        self.logger.info(f"시뮬레이션 완료: {self.stats['elapsed']:.1f}초, 제외 {dropped}/{R}")
        return SimReport(model=config.model, rows=rows, replications=len(kept), dropped=dropped,
                         config=config.echo(), drop_reasons=reasons)

    def check_dropped(self, report: SimReport):
        """제외 비율이 max_dropped_fraction 을 넘으면 DegenerateMass"""
        fraction = report.dropped / self.config.replications
        if fraction > self.config.max_dropped_fraction:
            raise DegenerateMass(
                f"제외된 반복 비율 {fraction:.3f} 이 한도 {self.config.max_dropped_fraction} 를 넘었습니다"
            )

    def profiles(self) -> List[dict]:
        """
        격자점별 σ² 프로파일과 이론 표준편차

        Returns:
            행 사전 리스트 (x1, kind, sigma_sq, mc_se, f_x1, k1_norm_sq, asy_sd)
        """
        config = self.config
        oracle = oracle_model(config.model)
        k1_norm_sq = kernel_l2_norm_sq(make_kernel(config.plan.family, config.plan.s1, 1))
        grid = [np.array([x]) for x in config.grid]
        profiles = profiles_over_grid(oracle, grid, mc_draws=config.mc_draws, seed=config.seed,
                                      k1_norm_sq=k1_norm_sq)
        ranking = ranking_check(profiles)
        self.logger.info(f"효율 순위 검사: {len(ranking.checks) - len(ranking.violations)}/{len(ranking.checks)} 통과")
        rows = []
        for profile in profiles:
            for kind, value in profile.sigma_sq.items():
                rows.append({
                    "x1": float(profile.x1[0]),
                    "kind": kind,
                    "sigma_sq": value,
                    "mc_se": profile.mc_se[kind],
                    "f_x1": profile.f_x1,
                    "k1_norm_sq": k1_norm_sq,
                    "asy_sd": asy_sd(value, profile.f_x1, k1_norm_sq),
                })
        return rows


def run_replications(config: SimConfig) -> SimReport:
    """Monte Carlo 반복 실행 (SimulationEngine(config).run())"""
    return SimulationEngine(config).run()


def theoretical_profiles(config: SimConfig) -> List[dict]:
    """격자점별 이론 분산 프로파일 (SimulationEngine(config).profiles())"""
    return SimulationEngine(config).profiles()
