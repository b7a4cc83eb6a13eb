"""
Kernel Construction
고차 커널 생성 및 수치 적률 검증
"""
import itertools
import logging
from dataclasses import dataclass, replace
from functools import lru_cache
from math import factorial
from typing import Callable, List, Tuple

import numpy as np
from numpy.polynomial import hermite_e, legendre
from scipy import integrate

from ..models.kernel_spec import COMPACT, GAUSSIAN, KernelSpec
from ..utils.errors import KernelConstructionError, QuadratureError

logger = logging.getLogger(__name__)

# gaussian 계열 적분 구간 (꼬리 1e-30 미만)
GAUSSIAN_BOUND = 12.0
GAUSSIAN_TOL = 1e-8
COMPACT_TOL = 1e-6
PRODUCT_TOL = 1e-6
ORDER_MOMENT_FLOOR = 1e-3


@dataclass
class MomentCheck:
    """적률 검증 항목"""
    power: Tuple[int, ...]
    value: float
    expected: str  # "1", "0", "nonzero"
    tolerance: float
    passed: bool


class Quadrature:
    """커널 적분 규칙"""

    @staticmethod
    def adaptive(func: Callable[[float], float], bound: float = GAUSSIAN_BOUND,
                 tol: float = 1e-12) -> float:
        """
        [-bound, bound] 적응 구적

        Args:
            func: 피적분 함수
            bound: 적분 구간 반폭
            tol: 절대 허용 오차

        Returns:
            적분값
        """
        result = integrate.quad(
            func, -bound, bound, epsabs=tol, epsrel=1e-12, limit=400, full_output=1
        )
        value, abserr = result[0], result[1]
        # len > 3 이면 quad 가 경고 메시지를 함께 돌려준 경우
        if len(result) > 3 and abserr > 1e-10:
            raise QuadratureError(f"적응 구적 미수렴: {result[3]} (abserr={abserr:.3e})")
        return float(value)

    @staticmethod
    def legendre(func: Callable[[np.ndarray], np.ndarray], degree: int) -> float:
        """[-1, 1] 위의 차수 degree 다항식을 정확히 적분하는 Gauss–Legendre 규칙"""
        nodes, weights = legendre.leggauss(degree // 2 + 2)
        return float(np.sum(weights * func(nodes)))


def _check_order(order) -> int:
    if isinstance(order, bool) or not isinstance(order, (int, np.integer)):
        raise KernelConstructionError(f"커널 차수는 정수여야 합니다: {order!r}")
    if order <= 0 or order % 2 != 0:
        raise KernelConstructionError(f"커널 차수는 양의 짝수여야 합니다: {order}")
    return int(order)


def univariate_moment(kernel: KernelSpec, power: int) -> float:
    """∫ u^power K(u) du (단변량 인자)"""
    if kernel.family == GAUSSIAN:
        return Quadrature.adaptive(lambda u: u ** power * float(kernel.univariate(u)))
    return Quadrature.legendre(
        lambda u: u ** power * kernel.univariate(u), power + 2 * kernel.order
    )


def _univariate_moments(kernel: KernelSpec) -> Tuple[float, ...]:
    return tuple(univariate_moment(kernel, p) for p in range(kernel.order + 1))


def moment_checks(kernel: KernelSpec) -> List[MomentCheck]:
    """
    선언된 차수의 적률 조건 검증

    곱 커널은 다중지수 적률이 단변량 적률의 곱이므로
    캐시된 단변량 적률로 모든 1 ≤ Σp < s 조합을 확인한다.

    Args:
        kernel: 검증할 커널

    Returns:
        적률 검증 항목 리스트
    """
    moments = kernel.moments or _univariate_moments(kernel)
    s, d = kernel.order, kernel.dim
    if d == 1:
        tol = GAUSSIAN_TOL if kernel.family == GAUSSIAN else COMPACT_TOL
    else:
        tol = PRODUCT_TOL

    if d <= 3:
        powers = [p for p in itertools.product(range(s), repeat=d) if sum(p) < s]
    else:
        # 다중지수 적률은 축 방향 적률의 곱이라 축 방향만 보면 충분하다
        powers = [(p,) + (0,) * (d - 1) for p in range(s)]

    checks = []
    for power in powers:
        total = sum(power)
        value = float(np.prod([moments[p] for p in power]))
        if total == 0:
            checks.append(MomentCheck(power, value, "1", tol, abs(value - 1.0) <= tol))
        else:
            checks.append(MomentCheck(power, value, "0", tol, abs(value) <= tol))

    top = (s,) + (0,) * (d - 1)
    value = float(moments[s])
    checks.append(MomentCheck(top, value, "nonzero", ORDER_MOMENT_FLOOR,
                              abs(value) >= ORDER_MOMENT_FLOOR))
    return checks


def _verified(kernel: KernelSpec) -> KernelSpec:
    kernel = replace(kernel, moments=_univariate_moments(kernel))
    failed = [c for c in moment_checks(kernel) if not c.passed]
    if failed:
        first = failed[0]
        raise KernelConstructionError(
            f"{kernel.family} 차수 {kernel.order} 커널 적률 조건 실패: "
            f"power={first.power}, value={first.value:.3e}"
        )
    logger.debug(f"커널 검증 완료: {kernel.family} s={kernel.order} dim={kernel.dim}")
    return kernel


@lru_cache(maxsize=None)
def make_gaussian_kernel(order: int, smoothness: int = None) -> KernelSpec:
    """
    Gaussian 기반 고차 커널

    차수 2r 커널 = φ(u)·Σ_{j<r} (-1)^j / (2^j j!) · He_{2j}(u)

    Args:
        order: 양의 짝수 차수
        smoothness: s* 메타데이터

    Returns:
        검증된 단변량 KernelSpec
    """
    order = _check_order(order)
    r = order // 2
    herme = np.zeros(2 * r - 1)
    for j in range(r):
        herme[2 * j] = (-1) ** j / (2 ** j * factorial(j))
    power = hermite_e.herme2poly(herme)
    coeffs = tuple(float(c) for c in power[0::2])
    kernel = KernelSpec(family=GAUSSIAN, order=order, coeffs=coeffs, smoothness=smoothness)
    return _verified(kernel)


@lru_cache(maxsize=None)
def make_compact_kernel(order: int, smoothness: int = None) -> KernelSpec:
    """
    [-1, 1] 지지 다항식 커널

    K(u) = (1-u²)·Σ_{j<s/2} c_j u^{2j}, 적률 방정식으로 c_j 결정.
    차수 2 는 Epanechnikov 커널이다.
    """
    order = _check_order(order)
    r = order // 2
    # ∫ u^{2m} (1-u²) du on [-1, 1]
    def mass(m: int) -> float:
        return 2.0 / (2 * m + 1) - 2.0 / (2 * m + 3)

    system = np.array([[mass(i + j) for j in range(r)] for i in range(r)])
    target = np.zeros(r)
    target[0] = 1.0
    c = np.linalg.solve(system, target)
    coeffs = np.convolve(c, [1.0, -1.0])
    kernel = KernelSpec(
        family=COMPACT,
        order=order,
        coeffs=tuple(float(v) for v in coeffs),
        smoothness=smoothness,
        boundary_derivatives=order + 1,
    )
    return _verified(kernel)


def product_kernel(base: KernelSpec, dim: int) -> KernelSpec:
    """
    곱 커널 K(u) = Π_j base(u_j)

    Args:
        base: 단변량 커널
        dim: 차원

    Returns:
        차수가 base 와 같은 dim 차원 커널
    """
    if base.dim != 1:
        raise KernelConstructionError(f"곱 커널의 기저는 단변량이어야 합니다 (dim={base.dim})")
    if dim < 1:
        raise KernelConstructionError(f"곱 커널 차원은 1 이상이어야 합니다: {dim}")
    if dim == 1:
        return base
    kernel = replace(base, dim=dim)
    failed = [c for c in moment_checks(kernel) if not c.passed]
    if failed:
        raise KernelConstructionError(f"곱 커널 적률 조건 실패: power={failed[0].power}")
    return kernel


@lru_cache(maxsize=None)
def make_kernel(family: str, order: int, dim: int = 1) -> KernelSpec:
    """계열/차수/차원으로 커널 생성 (캐시)"""
    if family == GAUSSIAN:
        base = make_gaussian_kernel(order)
    elif family == COMPACT:
        base = make_compact_kernel(order)
    else:
        raise KernelConstructionError(f"알 수 없는 커널 계열: {family}")
    return product_kernel(base, dim)


def kernel_l2_norm_sq(kernel: KernelSpec) -> float:
    """
    ‖K‖₂² = ∫ K(u)² du

    곱 커널은 단변량 값의 dim 제곱이다.
    """
    if kernel.family == GAUSSIAN:
        value = Quadrature.adaptive(lambda u: float(kernel.univariate(u)) ** 2)
    else:
        value = Quadrature.legendre(lambda u: kernel.univariate(u) ** 2, 2 * kernel.order)
    if not value > 0:
        raise QuadratureError(f"‖K‖² 계산 결과가 양수가 아닙니다: {value}")
    return value ** kernel.dim
