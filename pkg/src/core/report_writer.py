"""
Report Writer - Output Generation
시뮬레이션 보고서, CATE 곡선, 플롯 데이터 출력
"""
import csv
import logging
import os
from typing import Dict, Iterable, List

import numpy as np

from ..models.cate_curve import CateCurve
from ..models.sim_schema import ReportRow, SimReport

METRICS = ("SD", "BIAS", "MSE")
REPORT_HEADER = ["model", "estimator", "x1", "metric", "value", "R", "dropped"]


def fmt(value: float) -> str:
    """9 유효숫자 문자열"""
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return "NA"
    return f"{float(value):.9g}"


class ReportWriter:
    """보고서 파일 쓰기/읽기"""

    def __init__(self, output_dir: str = "output"):
        """
        Args:
            output_dir: 출력 디렉토리
        """
        self.output_dir = output_dir
        self.logger = logging.getLogger(__name__)

    def path(self, name: str) -> str:
        os.makedirs(self.output_dir, exist_ok=True)
        return os.path.join(self.output_dir, name)

    def write_report_csv(self, report: SimReport, name: str = "report.csv") -> str:
        """
        SimReport 를 긴 형식 CSV 로 쓰기 (추정량 × 격자점 × 척도 행)

        Args:
            report: 시뮬레이션 보고서
            name: 파일 이름

        Returns:
            파일 경로
        """
        csv_path = self.path(name)
        self.logger.info(f"CSV 파일 생성: {csv_path}")
        with open(csv_path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(REPORT_HEADER)
            for row in report.rows:
                for metric, value in zip(METRICS, (row.sd, row.bias, row.mse)):
                    writer.writerow([
                        report.model,
                        row.estimator,
                        fmt(row.x1),
                        metric,
                        fmt(value),
                        row.replications,
                        row.dropped,
                    ])
        return csv_path

    @staticmethod
    def read_report_csv(csv_path: str) -> SimReport:
        """write_report_csv 로 쓴 파일을 SimReport 로 복원"""
        cells: Dict[tuple, Dict[str, float]] = {}
        meta: Dict[tuple, tuple] = {}
        model = 0
        with open(csv_path, newline='', encoding='utf-8') as f:
            for record in csv.DictReader(f):
                model = int(record["model"])
                key = (record["estimator"], float(record["x1"]))
                cells.setdefault(key, {})[record["metric"]] = float(record["value"])
                meta[key] = (int(record["R"]), int(record["dropped"]))

        rows = []
        for key, metrics in cells.items():
            R, dropped = meta[key]
            rows.append(ReportRow(estimator=key[0], x1=key[1], sd=metrics["SD"], bias=metrics["BIAS"],
                                  mse=metrics["MSE"], replications=R, dropped=dropped))
        R, dropped = next(iter(meta.values())) if meta else (0, 0)
        return SimReport(model=model, rows=rows, replications=R, dropped=dropped)

    def write_text_table(self, report: SimReport, name: str = "report.txt") -> str:
        """격자점 × 척도 행, 추정량 열의 정렬된 텍스트 표"""
        text_path = self.path(name)
        estimators = report.estimators
        width = max(10, max(len(e) for e in estimators) + 2)

        lines = [f"The distribution of sqrt(n*h1)[tau_hat(x1) - tau(x1)] for model {report.model}"]
        for key, value in report.config.items():
            lines.append(f"  {key}: {value}")
        lines.append(f"  replications kept: {report.replications}, dropped: {report.dropped}")
        lines.append("")
        header = f"{'x1':>8} {'metric':>6} " + "".join(f"{e:>{width}}" for e in estimators)
        lines.append(header)
        lines.append("-" * len(header))
        for x in report.grid:
            for metric in METRICS:
                cells = []
                for est in estimators:
                    row = report.cell(est, x)
                    value = {"SD": row.sd, "BIAS": row.bias, "MSE": row.mse}[metric]
                    cells.append(f"{value:>{width}.3f}")
                lines.append(f"{x:>8.2f} {metric:>6} " + "".join(cells))

        with open(text_path, 'w', encoding='utf-8') as f:
            f.write("\n".join(lines) + "\n")
        self.logger.info(f"텍스트 표 생성 완료: {text_path}")
        return text_path

    def write_relative_efficiency(self, report: SimReport, baseline: str = "NRCATE",
                                  name: str = "relative_efficiency.csv") -> str:
        """
        격자점별 SD / SD(baseline) (효율 비교 그림 데이터)

        baseline 추정량이 보고서에 없으면 쓰지 않는다.
        """
        if baseline not in report.estimators:
            self.logger.info(f"{baseline} 이 없어 상대 효율 파일을 건너뜁니다")
            return ""
        csv_path = self.path(name)
        with open(csv_path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(["estimator", "x1", "sd_ratio"])
            for x in report.grid:
                base = report.cell(baseline, x).sd
                for est in report.estimators:
                    sd = report.cell(est, x).sd
                    writer.writerow([est, fmt(x), fmt(sd / base if base > 0 else float("nan"))])
        self.logger.info(f"상대 효율 파일 생성 완료: {csv_path}")
        return csv_path

    def write_variance_profile(self, rows: List[dict], name: str = "variance_profile.csv") -> str:
        """이론 σ² 프로파일 CSV"""
        csv_path = self.path(name)
        columns = ["x1", "kind", "sigma_sq", "mc_se", "f_x1", "k1_norm_sq", "asy_sd"]
        with open(csv_path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(columns)
            for row in rows:
                writer.writerow([row["kind"] if c == "kind" else fmt(row[c]) for c in columns])
        self.logger.info(f"분산 프로파일 생성 완료: {csv_path}")
        return csv_path

    def write_curves_csv(self, curves: Iterable[CateCurve], x1_names: List[str],
                         name: str = "curves.csv") -> str:
        """CATE 곡선 CSV (estimator, x1..., estimate), 결측 격자점은 NA"""
        csv_path = self.path(name)
        with open(csv_path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(["estimator", *x1_names, "estimate"])
            for curve in curves:
                for point, value in zip(curve.grid, curve.estimates):
                    writer.writerow([curve.estimator, *(fmt(v) for v in point), fmt(value)])
        self.logger.info(f"곡선 CSV 생성 완료: {csv_path}")
        return csv_path

    def write_plot_data(self, curves: Iterable[CateCurve]) -> List[str]:
        """추정량별 (x1, tau_hat) 플롯 데이터 파일 (k=1 곡선만)"""
        paths = []
        for curve in curves:
            if curve.k != 1:
                self.logger.info(f"{curve.estimator}: k={curve.k} 곡선은 플롯 데이터를 만들지 않습니다")
                continue
            csv_path = self.path(f"plot_{curve.estimator}.csv")
            with open(csv_path, 'w', newline='', encoding='utf-8') as f:
                writer = csv.writer(f, lineterminator='\n')
                writer.writerow(["x1", "tau_hat"])
                for point, value in zip(curve.grid[:, 0], curve.estimates):
                    writer.writerow([fmt(point), fmt(value)])
            paths.append(csv_path)
        return paths
