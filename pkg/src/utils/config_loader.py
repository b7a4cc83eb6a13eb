"""
Configuration Loader
YAML 설정 파일 → 설정 객체 변환 및 대역폭 조건 검사
"""
import logging
import os
from typing import Dict, List, Optional, Tuple

import numpy as np
import yaml

from ..models.sim_schema import (
    DEFAULT_GRID,
    ESTIMATOR_ORDER,
    NW_FLOOR,
    BandwidthPlan,
    ConditionStatus,
    EstimateJob,
    SimConfig,
    long_name,
)
from ..core.simulation import (
    MODEL_DIMENSIONS,
    bandwidth_rule,
    check_conditions,
    check_order_rules,
    default_orders,
    rate_exponent,
)
from .errors import ConfigError

logger = logging.getLogger(__name__)

DEFAULTS_PATH = os.path.join("config", "defaults.yaml")

# defaults.yaml 이 없을 때 쓰는 값
BUILTIN_DEFAULTS = {
    "propensity": {"clip": 0.01},
    "kernel": {"family": "gaussian", "nw_floor": NW_FLOOR},
    "simulation": {
        "grid": list(DEFAULT_GRID),
        "workers": 1,
        "seed": 0,
        "max_dropped_fraction": 0.1,
        "mc_draws": 100_000,
        "direction_policy": "known",
    },
    "estimate": {
        "grid_quantiles": [0.025, 0.975],
        "grid_points": 40,
        "leave_one_out": False,
    },
}
ROLES = ("h1", "h2", "h4")


def load_yaml(config_path: str) -> dict:
    """YAML 파일 읽기 (없거나 형식 오류면 ConfigError)"""
    if not os.path.exists(config_path):
        raise ConfigError(f"설정 파일이 존재하지 않습니다: {config_path}")
    try:
        with open(config_path, 'r', encoding='utf-8') as f:
            config = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"YAML 형식 오류: {config_path}: {e}") from None
    if not isinstance(config, dict):
        raise ConfigError(f"설정 파일 최상위는 매핑이어야 합니다: {config_path}")
    return config


def _merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_defaults(path: Optional[str] = None) -> dict:
    """
    수치 기본값 로드

    우선순위: 인자 경로 > CATE_DEFAULTS 환경 변수 > config/defaults.yaml > 내장 기본값
    """
    path = path or os.getenv("CATE_DEFAULTS") or DEFAULTS_PATH
    if not os.path.exists(path):
        logger.debug(f"기본값 파일 없음, 내장 기본값 사용: {path}")
        return BUILTIN_DEFAULTS
    return _merge(BUILTIN_DEFAULTS, load_yaml(path))


def _section(config: dict, name: str) -> dict:
    section = config.get(name) or {}
    if not isinstance(section, dict):
        raise ConfigError(f"[{name}] 섹션은 매핑이어야 합니다")
    return section


def _number(value, what: str) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"{what} 는 숫자여야 합니다: {value!r}")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{what} 는 숫자여야 합니다: {value!r}") from None


def _int(value, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{what} 는 정수여야 합니다: {value!r}")
    return value


def _estimators(values) -> Tuple[str, ...]:
    if values is None:
        return ESTIMATOR_ORDER
    if isinstance(values, str):
        values = [values]
    out = []
    for value in values:
        value = str(value).upper()
        value = value[:-4] if value.endswith("CATE") and len(value) > 4 else value
        long_name(value)
        if value not in out:
            out.append(value)
    if not out:
        raise ConfigError("추정량 목록이 비어 있습니다")
    return tuple(out)


def _orders(section: dict, defaults: Dict[str, int]) -> Dict[str, int]:
    orders = dict(defaults)
    for role, value in (section.get("orders") or {}).items():
        if role not in orders:
            raise ConfigError(f"알 수 없는 커널 차수 항목: {role}")
        orders[role] = _int(value, f"orders.{role}")
    return orders


def resolve_bandwidths(
    section: dict,
    n: int,
    k: int,
    p: int,
    r_max: int,
    orders: Dict[str, int],
    scales: Optional[Dict[str, float]] = None,
) -> Tuple[Dict[str, float], Dict[str, str], Dict[str, float]]:
    """
    [bandwidths] 섹션 해석

    항목 형식: {value: h} / {a, exponent} / {a} (δ 포함 규칙 지수) / {a, exponent, scale: sd}

    Args:
        section: 대역폭 섹션
        n, k, p, r_max: 표본 크기와 차원
        orders: 커널 차수
        scales: 역할별 scale: sd 값 (사용자 데이터 추정에서만)

    Returns:
        (역할별 h, 역할별 출처, 규칙 기반 역할의 지수 e)
    """
    delta = section.get("delta") or {}
    values, provenance, exponents = {}, {}, {}
    for index, role in enumerate(ROLES, start=1):
        spec = section.get(role)
        if spec is None:
            raise ConfigError(f"대역폭 {role} 설정이 없습니다")
        if not isinstance(spec, dict):
            spec = {"value": spec}
        if "value" in spec:
            values[role] = _number(spec["value"], f"{role}.value")
            if not values[role] > 0:
                raise ConfigError(f"대역폭 {role} 는 양수여야 합니다: {values[role]}")
            provenance[role] = "explicit"
            continue

        a = _number(spec.get("a"), f"{role}.a")
        if "exponent" in spec:
            e = _number(spec["exponent"], f"{role}.exponent")
        else:
            d = _number(delta.get(f"d{index}", 0.0), f"delta.d{index}")
            e = rate_exponent(role, k, p, r_max, orders, d)
        scale_text = ""
        if spec.get("scale") is not None:
            if spec["scale"] != "sd":
                raise ConfigError(f"{role}.scale 은 'sd' 만 지원합니다: {spec['scale']!r}")
            if not scales or role not in scales:
                raise ConfigError(f"{role}.scale 은 데이터 추정에서만 쓸 수 있습니다")
            a = a * scales[role]
            scale_text = "*sd"
        h, e = bandwidth_rule(role, a, n, k, p, r_max, orders, exponent=e)
        values[role] = h
        exponents[role] = e
        provenance[role] = f"rule({spec.get('a')}{scale_text}, n^-1/{e:g})"
    return values, provenance, exponents


def check_plan(
    exponents: Dict[str, float],
    k: int,
    p: int,
    r_max: int,
    orders: Dict[str, int],
    override: bool,
) -> List[ConditionStatus]:
    """
    차수 규칙 위반은 override 가 없으면 ConfigError, 대역폭 조건 실패는 경고

    Returns:
        조건 판정 리스트
    """
    problems = check_order_rules(k, p, r_max, orders)
    if problems:
        message = "; ".join(problems)
        if not override:
            raise ConfigError(f"커널 차수 규칙 위반: {message} (override: true 로 무시 가능)")
        logger.warning(f"커널 차수 규칙 위반 (override): {message}")

    statuses = check_conditions(exponents, k, p, r_max, orders)
    for status in statuses:
        if status.status == "fails":
            logger.warning(f"조건 ({status.condition}) 실패: {status.expression} (n 지수 {status.exponent:+.4g})")
        elif status.status == "boundary":
            logger.info(f"조건 ({status.condition}) 경계: {status.expression} (δ=0 지수)")
    return statuses


def _nw_floor(section: dict, defaults: dict) -> float:
    """bandwidths.nw_floor > defaults kernel.nw_floor"""
    value = section.get("nw_floor", defaults["kernel"].get("nw_floor", NW_FLOOR))
    return _number(value, "bandwidths.nw_floor")


def _grid(values, what: str) -> Tuple[float, ...]:
    if not isinstance(values, (list, tuple)) or not values:
        raise ConfigError(f"{what} 는 비어 있지 않은 리스트여야 합니다")
    return tuple(_number(v, what) for v in values)


def load_sim_config(config_path: str, defaults: Optional[dict] = None) -> SimConfig:
    """
    시뮬레이션 설정 로드

    Args:
        config_path: YAML 경로
        defaults: 기본값 (없으면 load_defaults())

    Returns:
        검증된 SimConfig
    """
    defaults = defaults or load_defaults()
    config = load_yaml(config_path)
    sim = _merge(defaults["simulation"], _section(config, "simulation"))
    bandwidths = _section(config, "bandwidths")
    output = _section(config, "output")

    model = _int(sim.get("model"), "simulation.model")
    if model not in MODEL_DIMENSIONS:
        raise ConfigError(f"모형 번호는 1, 2, 3 중 하나여야 합니다: {model}")
    n = _int(sim.get("n"), "simulation.n")
    p, r1, r0 = MODEL_DIMENSIONS[model]
    k, r_max = 1, max(r1, r0)

    orders = _orders(bandwidths, default_orders(k, p, r_max))
    values, provenance, exponents = resolve_bandwidths(bandwidths, n, k, p, r_max, orders)
    check_plan(exponents, k, p, r_max, orders, bool(bandwidths.get("override", False)))

    family = str(bandwidths.get("kernel_family") or sim.get("kernel_family")
                 or defaults["kernel"]["family"])
    plan = BandwidthPlan(h1=values["h1"], h2=values["h2"], h4=values["h4"],
                         s1=orders["s1"], s2=orders["s2"], s4=orders["s4"],
                         family=family, provenance=provenance,
                         nw_floor=_nw_floor(bandwidths, defaults))

    workers = os.getenv("CATE_WORKERS") or sim.get("workers", 1)
    try:
        workers = int(workers)
    except ValueError:
        raise ConfigError(f"작업자 수는 정수여야 합니다: {workers!r}") from None

    sim_config = SimConfig(
        model=model,
        n=n,
        replications=_int(sim.get("replications"), "simulation.replications"),
        plan=plan,
        grid=_grid(sim.get("grid"), "simulation.grid"),
        estimators=_estimators(sim.get("estimators")),
        direction_policy=str(sim.get("direction_policy", "known")),
        seed=_int(sim.get("seed", 0), "simulation.seed"),
        workers=workers,
        clip=_number(sim.get("clip", defaults["propensity"]["clip"]), "simulation.clip"),
        max_dropped_fraction=_number(sim.get("max_dropped_fraction"), "simulation.max_dropped_fraction"),
        variance_profile=bool(output.get("variance_profile", False)),
        mc_draws=_int(sim.get("mc_draws"), "simulation.mc_draws"),
        output_dir=str(output.get("dir", "output")),
        name=os.path.splitext(os.path.basename(config_path))[0],
    )
    sim_config.validate()
    if model == 1 and "SR" in sim_config.estimators and sim_config.direction_policy == "index-ls":
        raise ConfigError("모형 1 은 r(1)=2 이므로 SRCATE 에 direction_policy: known 이 필요합니다")
    return sim_config


def load_estimate_job(config_path: str, defaults: Optional[dict] = None) -> EstimateJob:
    """
    사용자 데이터 추정 작업 설정 로드

    대역폭은 데이터가 필요하므로 여기서는 원래 명세만 보관한다.
    """
    defaults = defaults or load_defaults()
    config = load_yaml(config_path)
    est = _merge(defaults["estimate"], _section(config, "estimate"))
    bandwidths = _section(config, "bandwidths")
    output = _section(config, "output")

    roles = est.get("roles") or {}
    for role in ("y", "d", "x", "x1"):
        if role not in roles:
            raise ConfigError(f"estimate.roles.{role} 가 없습니다")
    x = roles["x"] if isinstance(roles["x"], list) else [roles["x"]]
    x1 = roles["x1"] if isinstance(roles["x1"], list) else [roles["x1"]]

    csv_path = est.get("csv")
    if not csv_path:
        raise ConfigError("estimate.csv 경로가 없습니다")
    if not os.path.isabs(csv_path):
        csv_path = os.path.join(os.path.dirname(os.path.abspath(config_path)), csv_path)

    grid = est.get("grid")
    grid_values, quantiles, points = None, est["grid_quantiles"], est["grid_points"]
    if isinstance(grid, dict):
        quantiles = grid.get("quantiles", quantiles)
        points = grid.get("points", points)
    elif grid is not None:
        grid_values = [_number(v, "estimate.grid") for v in grid]
    if len(quantiles) != 2 or not 0.0 <= quantiles[0] < quantiles[1] <= 1.0:
        raise ConfigError(f"격자 분위수 범위가 잘못되었습니다: {quantiles}")

    return EstimateJob(
        csv_path=csv_path,
        y=str(roles["y"]),
        d=str(roles["d"]),
        x=[str(c) for c in x],
        x1=[str(c) for c in x1],
        estimators=_estimators(est.get("estimators")),
        bandwidths=bandwidths,
        orders=dict(bandwidths.get("orders") or {}),
        family=str(bandwidths.get("kernel_family") or defaults["kernel"]["family"]),
        grid=grid_values,
        grid_quantiles=(float(quantiles[0]), float(quantiles[1])),
        grid_points=_int(points, "estimate.grid.points"),
        bases=dict(est.get("bases") or {}),
        directions=dict(est.get("directions") or {}),
        clip=_number(est.get("clip", defaults["propensity"]["clip"]), "estimate.clip"),
        leave_one_out=bool(est.get("leave_one_out", False)),
        output_dir=str(output.get("dir", "output")),
        plot_data=bool(output.get("plot_data", True)),
        override=bool(bandwidths.get("override", False)),
        nw_floor=_nw_floor(bandwidths, defaults),
    )


def estimate_plan(job: EstimateJob, n: int, k: int, p: int, r_max: int,
                  scales: Dict[str, float]) -> BandwidthPlan:
    """데이터 차원과 척도로 추정 작업의 BandwidthPlan 확정"""
    orders = _orders({"orders": job.orders}, default_orders(k, p, r_max))
    values, provenance, exponents = resolve_bandwidths(job.bandwidths, n, k, p, r_max, orders, scales)
    check_plan(exponents, k, p, r_max, orders, job.override)
    return BandwidthPlan(h1=values["h1"], h2=values["h2"], h4=values["h4"],
                         s1=orders["s1"], s2=orders["s2"], s4=orders["s4"],
                         family=job.family, provenance=provenance, leave_one_out=job.leave_one_out,
                         nw_floor=job.nw_floor)


def quantile_grid(values: np.ndarray, quantiles: Tuple[float, float], points: int) -> np.ndarray:
    """분위수 구간 안의 등간격 격자"""
    lo, hi = np.quantile(values, quantiles)
    return np.linspace(lo, hi, points)
