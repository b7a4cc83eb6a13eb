"""
Simulation Schema Models
대역폭 계획, 시뮬레이션/추정 작업 설정, 결과 보고서 데이터 모델
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from ..utils.errors import ConfigError

# 설정 파일 약칭 → 출력 이름
ESTIMATOR_NAMES = {
    "OR": "ORCATE",
    "PR": "PRCATE",
    "SR": "SRCATE",
    "NR": "NRCATE",
    "O": "OCATE",
    "P": "PCATE",
    "S": "SCATE",
    "N": "NCATE",
}
ESTIMATOR_ORDER = tuple(ESTIMATOR_NAMES)
REGRESSION_IDS = ("OR", "PR", "SR", "NR")
IPW_IDS = ("O", "P", "S", "N")

DEFAULT_GRID = (-0.4, -0.2, 0.0, 0.2, 0.4)

# NW 분모 |Σⱼ K((Xⱼ−x)/h)| 의 기본 절대 하한
NW_FLOOR = 1e-12


def long_name(short_id: str) -> str:
    try:
        return ESTIMATOR_NAMES[short_id]
    except KeyError:
        raise ConfigError(f"알 수 없는 추정량: {short_id}") from None


@dataclass(frozen=True)
class BandwidthPlan:
    """
    대역폭 h₁, h₂, h₄ 와 커널 차수 s₁, s₂, s₄

    h₁/s₁ 은 2단계 평활, h₂/s₂ 는 전체 X 비모수 1단계,
    h₄/s₄ 는 지수 βₜᵀX 위의 1단계에 쓰인다.
    """
    h1: float
    h2: float
    h4: float
    s1: int
    s2: int
    s4: int
    family: str = "gaussian"
    provenance: Dict[str, str] = field(default_factory=dict, compare=False)
    leave_one_out: bool = False
    nw_floor: float = NW_FLOOR

    def __post_init__(self):
        for role in ("h1", "h2", "h4"):
            value = getattr(self, role)
            if not (isinstance(value, (int, float)) and value > 0):
                raise ConfigError(f"대역폭 {role} 는 양수여야 합니다: {value!r}")
        for role in ("s1", "s2", "s4"):
            value = getattr(self, role)
            if isinstance(value, bool) or not isinstance(value, int) or value <= 0 or value % 2:
                raise ConfigError(f"커널 차수 {role} 는 양의 짝수여야 합니다: {value!r}")
        if isinstance(self.nw_floor, bool) or not (isinstance(self.nw_floor, (int, float)) and self.nw_floor >= 0):
            raise ConfigError(f"nw_floor 는 0 이상의 수여야 합니다: {self.nw_floor!r}")

    def describe(self) -> Dict[str, str]:
        """보고서용 요약"""
        out = {}
        for role, order in (("h1", "s1"), ("h2", "s2"), ("h4", "s4")):
            source = self.provenance.get(role, "explicit")
            out[role] = f"{getattr(self, role):.6g} ({source}, {order}={getattr(self, order)})"
        out["family"] = self.family
        out["nw_floor"] = f"{self.nw_floor:g}"
        return out


@dataclass
class SimConfig:
    """Monte Carlo 시뮬레이션 설정"""
    model: int
    n: int
    replications: int
    plan: BandwidthPlan
    grid: Tuple[float, ...] = DEFAULT_GRID
    estimators: Tuple[str, ...] = ESTIMATOR_ORDER
    direction_policy: str = "known"
    seed: int = 0
    workers: int = 1
    clip: float = 0.01
    max_dropped_fraction: float = 0.1
    variance_profile: bool = False
    mc_draws: int = 100_000
    output_dir: str = "output"
    name: str = "simulation"

    def validate(self):
        if self.model not in (1, 2, 3):
            raise ConfigError(f"모형 번호는 1, 2, 3 중 하나여야 합니다: {self.model}")
        if self.n < 20:
            raise ConfigError(f"n 은 20 이상이어야 합니다: {self.n}")
        if self.replications < 1:
            raise ConfigError(f"replications 는 1 이상이어야 합니다: {self.replications}")
        if not self.grid:
            raise ConfigError("격자가 비어 있습니다")
        if any(not -0.5 < x < 0.5 for x in self.grid):
            raise ConfigError(f"격자점은 (-0.5, 0.5) 안에 있어야 합니다: {self.grid}")
        for est in self.estimators:
            long_name(est)
        if self.direction_policy not in ("known", "index-ls"):
            raise ConfigError(f"알 수 없는 방향 정책: {self.direction_policy}")
        if self.workers < 1:
            raise ConfigError(f"workers 는 1 이상이어야 합니다: {self.workers}")

    def echo(self) -> Dict[str, str]:
        """보고서 머리말용 설정 요약"""
        out = {
            "model": str(self.model),
            "n": str(self.n),
            "replications": str(self.replications),
            "seed": str(self.seed),
            "grid": ",".join(f"{x:g}" for x in self.grid),
            "estimators": ",".join(self.estimators),
            "direction_policy": self.direction_policy,
        }
        out.update(self.plan.describe())
        return out


@dataclass
class ConditionStatus:
    """대역폭 조건 하나의 극한 지수 판정 (holds / boundary / fails)"""
    condition: str
    expression: str
    exponent: float  # n 의 지수, 음수면 0 으로, 양수면 ∞ 로 간다
    status: str


@dataclass
class ReportRow:
    """(추정량, 격자점) 별 척도 통계량 T = √(nh₁ᵏ)(τ̂−τ) 의 요약"""
    estimator: str
    x1: float
    sd: float
    bias: float
    mse: float
    replications: int
    dropped: int


@dataclass
class SimReport:
    """시뮬레이션 결과 보고서"""
    model: int
    rows: List[ReportRow]
    replications: int
    dropped: int
    config: Dict[str, str] = field(default_factory=dict)
    drop_reasons: List[str] = field(default_factory=list)

    def cell(self, estimator: str, x1: float) -> ReportRow:
        for row in self.rows:
            if row.estimator in (estimator, ESTIMATOR_NAMES.get(estimator)) and abs(row.x1 - x1) < 1e-12:
                return row
        raise KeyError(f"{estimator} @ {x1}")

    @property
    def estimators(self) -> List[str]:
        seen = []
        for row in self.rows:
            if row.estimator not in seen:
                seen.append(row.estimator)
        return seen

    @property
    def grid(self) -> List[float]:
        seen = []
        for row in self.rows:
            if row.x1 not in seen:
                seen.append(row.x1)
        return seen


@dataclass
class EstimateJob:
    """사용자 CSV 데이터 추정 작업"""
    csv_path: str
    y: str
    d: str
    x: List[str]
    x1: List[str]
    estimators: Tuple[str, ...]
    bandwidths: Dict[str, dict]
    orders: Dict[str, int] = field(default_factory=dict)
    family: str = "gaussian"
    grid: Optional[List[float]] = None
    grid_quantiles: Tuple[float, float] = (0.025, 0.975)
    grid_points: int = 40
    bases: Dict[str, List[str]] = field(default_factory=dict)
    directions: Dict[str, dict] = field(default_factory=dict)
    clip: float = 0.01
    leave_one_out: bool = False
    output_dir: str = "output"
    plot_data: bool = True
    override: bool = False
    nw_floor: float = NW_FLOOR
