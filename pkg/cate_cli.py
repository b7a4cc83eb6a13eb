#!/usr/bin/env python3
"""
CATE Estimation CLI

두 단계 커널 CATE 추정량의 시뮬레이션/추정/커널 검증 명령행 도구
- simulate: 모형 1–3 Monte Carlo 반복, SD/BIAS/MSE 표
- estimate: 사용자 CSV 데이터의 CATE 곡선
- kernel-check: 고차 커널 적률 검증

Usage:
    python3 cate_cli.py simulate config/model1_panel1.yaml
    python3 cate_cli.py estimate config/estimate_example.yaml
    python3 cate_cli.py kernel-check --family gaussian --order 4
"""
import argparse
import os
import sys
from typing import Dict, List

import numpy as np
from dotenv import load_dotenv

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.core.estimators import MISSING, ipw_cate, nrcate, prcate, srcate
from src.core.firststage import (
    build_directions,
    fit_propensity_logistic,
    fit_propensity_nonparametric,
    fit_propensity_single_index,
)
from src.core.kernels import kernel_l2_norm_sq, make_kernel, moment_checks
from src.core.report_writer import ReportWriter
from src.core.simulation import SimulationEngine
from src.models.firststage_models import BasisSpec, DirectionSet
from src.models.sample_set import SampleSet
from src.models.sim_schema import EstimateJob, long_name
from src.utils.config_loader import (
    estimate_plan,
    load_defaults,
    load_estimate_job,
    load_sim_config,
    quantile_grid,
)
from src.utils.errors import (
    CateError,
    ConfigError,
    DataError,
    DegenerateMass,
    KernelConstructionError,
    UnsupportedRank,
)
from src.utils.logger import setup_logger
from src.utils.validator import load_sample

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DEGENERATE = 4

EXIT_CODES = (
    (ConfigError, EXIT_CONFIG),
    (KernelConstructionError, EXIT_CONFIG),
    (UnsupportedRank, EXIT_CONFIG),
    (DataError, EXIT_DATA),
    (DegenerateMass, EXIT_DEGENERATE),
    (OSError, EXIT_CONFIG),
)


def exit_code_for(error: Exception) -> int:
    for kind, code in EXIT_CODES:
        if isinstance(error, kind):
            return code
    return EXIT_FAILURE


def report_error(error: Exception, code: int):
    """stderr 에 기계 판독용 한 줄 출력"""
    detail = str(error).replace("\\", "\\\\").replace('"', '\\"').replace("\n", " ")
    print(f'error: kind={type(error).__name__} code={code} detail="{detail}"', file=sys.stderr)


def cmd_simulate(args, logger) -> int:
    """시뮬레이션 실행 및 보고서 출력"""
    config = load_sim_config(args.config, load_defaults())
    if args.workers:
        config.workers = args.workers
    if args.output_dir:
        config.output_dir = args.output_dir

    logger.info("=== CATE 시뮬레이션 ===")
    for key, value in config.echo().items():
        logger.info(f"  {key}: {value}")

    engine = SimulationEngine(config)
    report = engine.run()
    writer = ReportWriter(config.output_dir)
    paths = [writer.write_report_csv(report), writer.write_text_table(report)]
    relative = writer.write_relative_efficiency(report)
    if relative:
        paths.append(relative)
    if config.variance_profile:
        logger.info("이론 분산 프로파일 계산 중...")
        paths.append(writer.write_variance_profile(engine.profiles()))

    logger.info("=" * 60)
    logger.info(f"유지된 반복: {report.replications}, 제외: {report.dropped}")
    for path in paths:
        logger.info(f"출력: {path}")
    logger.info("=" * 60)

    engine.check_dropped(report)
    return EXIT_OK


def _estimate_scales(data: SampleSet, directions: DirectionSet) -> Dict[str, float]:
    """scale: sd 규칙의 역할별 표준편차"""
    X1_sd = float(np.max(np.std(data.X1, axis=0, ddof=1)))
    X_sd = float(np.mean(np.std(data.X, axis=0, ddof=1)))
    index_sds = [
        float(np.std(data.X @ beta[:, j], ddof=1))
        for beta in (directions.beta1, directions.beta0)
        for j in range(beta.shape[1])
    ] if directions is not None else []
    return {"h1": X1_sd, "h2": X_sd, "h4": max(index_sds) if index_sds else X_sd}


def _bases(job: EstimateJob, columns: List[str]):
    default = ["1", *columns]
    return (BasisSpec.parse(job.bases.get("treated", default), columns),
            BasisSpec.parse(job.bases.get("control", default), columns))


def cmd_estimate(args, logger) -> int:
    """사용자 데이터 CATE 곡선 추정"""
    job = load_estimate_job(args.config, load_defaults())
    if args.output_dir:
        job.output_dir = args.output_dir
    for est in ("OR", "O"):
        if est in job.estimators:
            raise ConfigError(f"{long_name(est)} 는 참 모형이 필요해 estimate 에서 쓸 수 없습니다")

    logger.info("=== CATE 추정 ===")
    logger.info(f"데이터: {job.csv_path}")
    data = load_sample(job)
    logger.info(f"n={data.n}, p={data.p}, k={data.k}, 처리군 {int(data.D.sum())}명")

    directions = None
    if "SR" in job.estimators:
        default = {"method": "index-ls", "r": 1}
        directions = build_directions(data, job.directions.get("treated", default),
                                      job.directions.get("control", default))
    r_max = directions.r_max if directions is not None else 1
    plan = estimate_plan(job, data.n, data.k, data.p, r_max, _estimate_scales(data, directions))
    for key, value in plan.describe().items():
        logger.info(f"  {key}: {value}")

    if job.grid is not None:
        grid = np.asarray(job.grid, dtype=float)
    elif data.k == 1:
        grid = quantile_grid(data.X1[:, 0], job.grid_quantiles, job.grid_points)
    else:
        raise ConfigError("k > 1 이면 estimate.grid 를 명시해야 합니다")
    if grid.ndim == 1 and data.k > 1:
        grid = grid.reshape(-1, data.k)

    curves = []
    for est in job.estimators:
        logger.info(f"{long_name(est)} 계산 중...")
        if est == "PR":
            curve = prcate(data, *_bases(job, data.columns), grid, plan, on_degenerate=MISSING)
        elif est == "NR":
            curve = nrcate(data, grid, plan, on_degenerate=MISSING)
        elif est == "SR":
            curve = srcate(data, directions, grid, plan, on_degenerate=MISSING)
        elif est == "P":
            curve = ipw_cate(data, fit_propensity_logistic(data, clip=job.clip), grid, plan,
                             on_degenerate=MISSING)
        elif est == "S":
            prop = fit_propensity_single_index(data, plan.h4, make_kernel(plan.family, plan.s4, 1), job.clip,
                                               plan.nw_floor)
            curve = ipw_cate(data, prop, grid, plan, on_degenerate=MISSING)
        else:
            prop = fit_propensity_nonparametric(data, plan.h2, make_kernel(plan.family, plan.s2, data.p),
                                                job.clip, plan.nw_floor)
            curve = ipw_cate(data, prop, grid, plan, on_degenerate=MISSING)
        if curve.missing:
            logger.warning(f"{curve.estimator}: 결측 격자점 {len(curve.missing)}/{len(curve)}")
        curves.append(curve)

    writer = ReportWriter(job.output_dir)
    x1_names = [data.columns[i] for i in data.x1_idx]
    paths = [writer.write_curves_csv(curves, x1_names)]
    if job.plot_data:
        paths.extend(writer.write_plot_data(curves))
    for path in paths:
        logger.info(f"출력: {path}")
    return EXIT_OK


def cmd_kernel_check(args, logger) -> int:
    """커널 적률 보고서 출력"""
    kernel = make_kernel(args.family, args.order, args.dim)
    checks = moment_checks(kernel)

    print(f"kernel: family={kernel.family} order={kernel.order} dim={kernel.dim} support={kernel.support}")
    for check in checks:
        mark = "✓" if check.passed else "✗"
        power = ",".join(str(p) for p in check.power)
        print(f"  {mark} moment({power}) = {check.value:+.3e}  expected {check.expected} (tol {check.tolerance:g})")
    print(f"  ‖K‖₂² = {kernel_l2_norm_sq(kernel):.9g}")

    passed = all(c.passed for c in checks)
    logger.debug(f"커널 검증 {'통과' if passed else '실패'}")
    return EXIT_OK if passed else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='두 단계 커널 CATE 추정 도구')
    parser.add_argument('--log-level', default=None, help='로그 레벨 (기본: CATE_LOG_LEVEL 또는 INFO)')
    parser.add_argument('--log-file', default=None, help='로그 파일')
    subparsers = parser.add_subparsers(dest='command', required=True)

    simulate = subparsers.add_parser('simulate', help='Monte Carlo 시뮬레이션')
    simulate.add_argument('config', help='시뮬레이션 YAML 설정')
    simulate.add_argument('--workers', type=int, default=None, help='작업자 프로세스 수')
    simulate.add_argument('--output-dir', default=None, help='출력 디렉토리')

    estimate = subparsers.add_parser('estimate', help='CSV 데이터 CATE 추정')
    estimate.add_argument('config', help='추정 YAML 설정')
    estimate.add_argument('--output-dir', default=None, help='출력 디렉토리')

    kernel = subparsers.add_parser('kernel-check', help='커널 적률 검증')
    kernel.add_argument('--family', choices=['gaussian', 'compact'], default='gaussian', help='커널 계열')
    kernel.add_argument('--order', type=int, required=True, help='커널 차수 (양의 짝수)')
    kernel.add_argument('--dim', type=int, default=1, help='곱 커널 차원')
    return parser


COMMANDS = {
    'simulate': cmd_simulate,
    'estimate': cmd_estimate,
    'kernel-check': cmd_kernel_check,
}


def main(argv=None) -> int:
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK

    logger = setup_logger(level=args.log_level, log_file=args.log_file)
    try:
        return COMMANDS[args.command](args, logger)
    except (CateError, OSError) as e:
        code = exit_code_for(e)
        logger.error(f"{type(e).__name__}: {e}")
        report_error(e, code)
        return code


if __name__ == '__main__':
    sys.exit(main())
