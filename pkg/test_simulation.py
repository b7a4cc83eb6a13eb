#!/usr/bin/env python3
"""
시뮬레이션 엔진 테스트: 데이터 생성, 대역폭 규칙, 반복 실행, 결과 재현
"""
import os
import sys

import numpy as np
import pytest
import yaml

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.core.simulation import (
    SimulationEngine,
    _replication_worker,
    bandwidth_rule,
    check_conditions,
    check_order_rules,
    default_orders,
    generate_model,
    model_directions,
    oracle_model,
    rate_exponent,
    replication_stream,
    run_estimators,
    run_replications,
    summarize,
    theoretical_profiles,
    true_tau,
)
from src.models.sim_schema import BandwidthPlan, SimConfig, SimReport
from src.utils.config_loader import load_defaults, load_sim_config, load_yaml
from src.utils.errors import ConfigError, DegenerateMass

HERE = os.path.dirname(os.path.abspath(__file__))
GRID = (-0.4, -0.2, 0.0, 0.2, 0.4)

# 모형 1, n=200 기준 SD 표 (x₁ = −0.4 … 0.4)
# ORCATE 모의 SD 는 n·h₁ ≈ 5.5 의 비율형 2단계 평활 때문에 이 값보다 약 0.03 크게 나온다.
TABLE_SD = {
    "ORCATE": (0.187, 0.203, 0.193, 0.196, 0.197),
    "PRCATE": (0.221, 0.217, 0.201, 0.204, 0.213),
    "SRCATE": (0.218, 0.210, 0.213, 0.238, 0.241),
    "NRCATE": (0.213, 0.215, 0.213, 0.236, 0.239),
    "NCATE": (0.363, 0.381, 0.446, 0.430, 0.394),
    "SCATE": (0.375, 0.390, 0.467, 0.440, 0.415),
    "PCATE": (0.397, 0.399, 0.471, 0.468, 0.443),
    "OCATE": (0.399, 0.405, 0.480, 0.496, 0.437),
}


def _panel_config(name, **changes):
    defaults = load_defaults(os.path.join(HERE, "config", "defaults.yaml"))
    config = load_sim_config(os.path.join(HERE, "config", name), defaults)
    for key, value in changes.items():
        setattr(config, key, value)
    return config


def _small_config(model=1, **changes):
    plan = BandwidthPlan(h1=0.05 * 200 ** (-1 / 9), h2=0.5 * 200 ** -0.25, h4=0.6 * 200 ** -0.25,
                         s1=4, s2=2 if model == 1 else 4, s4=2, nw_floor=0.0)
    config = SimConfig(model=model, n=200, replications=4, plan=plan, seed=7)
    for key, value in changes.items():
        setattr(config, key, value)
    return config


# ---- 데이터 생성 ----

@pytest.mark.parametrize("model,p", [(1, 2), (2, 4), (3, 3)])
def test_generate_model_shapes(model, p):
    data, oracle = generate_model(model, 300, replication_stream(1, 0))
    assert data.X.shape == (300, p)
    assert data.columns == [f"x{j + 1}" for j in range(p)]
    assert data.x1_idx == (0,)
    assert np.all(np.abs(data.X1) <= 0.5)
    assert set(np.unique(data.D)) <= {0.0, 1.0}
    # 대조군 결과는 항상 0
    assert np.all(data.Y[data.D == 0.0] == 0.0)
    assert oracle.p == p


def test_generate_model2_covariate_structure():
    data, _ = generate_model(2, 500, replication_stream(2, 0))
    x1 = data.X[:, 0]
    assert np.all(np.abs(data.X[:, 1] - 1.0 - x1 ** 2) <= 0.5)
    assert np.all(np.abs(data.X[:, 2] - (1.0 + x1) ** 2) <= 0.5)
    assert np.all(np.abs(data.X[:, 3] - (x1 - 1.0) ** 2) <= 0.5)


def test_generate_model_is_reproducible():
    a, _ = generate_model(3, 50, replication_stream(9, 4))
    b, _ = generate_model(3, 50, replication_stream(9, 4))
    c, _ = generate_model(3, 50, replication_stream(9, 5))
    assert np.array_equal(a.X, b.X) and np.array_equal(a.Y, b.Y)
    assert not np.array_equal(a.X, c.X)


def test_generate_model_rejects_unknown_model():
    with pytest.raises(ConfigError):
        generate_model(4, 10, replication_stream(0, 0))


@pytest.mark.parametrize("model,x1,expected", [
    (1, 0.0, 1.0),
    (1, 0.2, 2.0),
    (1, -0.4, 0.2),
    (2, 0.0, 3.0),
    (2, 0.2, 3.32),
    (3, 0.4, 0.32),
    (3, -0.2, 0.08),
])
def test_true_tau_values(model, x1, expected):
    assert true_tau(model, x1) == pytest.approx(expected)


@pytest.mark.parametrize("model", [1, 2, 3])
def test_true_tau_matches_conditional_effect(model):
    """E[m₁(X) − m₀(X) | X₁=x₁] = τ(x₁)"""
    oracle = oracle_model(model)
    X = oracle.sample_given_x1(np.array([0.3]), 100_000, replication_stream(3, model))
    assert abs(np.mean(oracle.effect(X)) - true_tau(model, 0.3)) < 0.01


def test_model_directions():
    data, _ = generate_model(2, 400, replication_stream(4, 0))
    known = model_directions(2, data, "known")
    assert known.source == "known"
    assert np.allclose(known.beta1[:, 0], 0.5)
    assert known.r0 == 0
    estimated = model_directions(2, data, "index-ls")
    assert estimated.source == "estimated"
    assert estimated.beta1.shape == (4, 1)
    data1, _ = generate_model(1, 100, replication_stream(4, 1))
    with pytest.raises(ConfigError):
        model_directions(1, data1, "index-ls")


# ---- 차수와 대역폭 규칙 ----

@pytest.mark.parametrize("k,p,r_max,expected", [
    (1, 2, 2, {"s1": 4, "s2": 2, "s4": 2}),
    (1, 3, 1, {"s1": 6, "s2": 4, "s4": 2}),
    (1, 4, 1, {"s1": 6, "s2": 4, "s4": 2}),
    (2, 5, 3, {"s1": 8, "s2": 6, "s4": 4}),
    (1, 3, 0, {"s1": 6, "s2": 4, "s4": 2}),
])
def test_default_orders(k, p, r_max, expected):
    orders = default_orders(k, p, r_max)
    assert orders == expected
    assert check_order_rules(k, p, r_max, orders) == []


def test_order_rule_violations():
    problems = check_order_rules(1, 3, 1, {"s1": 3, "s2": 2, "s4": 2})
    assert any("짝수" in problem for problem in problems)
    assert any("s2=2 < p=3" in problem for problem in problems)
    assert any("s1=3" in problem for problem in problems)
    assert check_order_rules(1, 2, 4, {"s1": 4, "s2": 2, "s4": 2}) == ["s4=2 < r_max=4"]


def test_bandwidth_rule_model1_defaults():
    """모형 1: e₁ = k+2s₁ = 9, e₂ = p+s₂ = 4, e₄ = r+s₄ = 4"""
    h1, e1 = bandwidth_rule("h1", 0.05, 200, 1, 2, 2)
    h2, e2 = bandwidth_rule("h2", 0.5, 200, 1, 2, 2)
    h4, e4 = bandwidth_rule("h4", 0.6, 200, 1, 2, 2)
    assert (e1, e2, e4) == (9.0, 4.0, 4.0)
    assert h1 == pytest.approx(0.02775, abs=1e-5)
    assert h2 == pytest.approx(0.5 / 200 ** 0.25)
    assert h4 == pytest.approx(0.15955, abs=1e-5)


def test_bandwidth_rule_explicit_exponent():
    h, e = bandwidth_rule("h1", 0.05, 200, 1, 4, 1, exponent=9)
    assert e == 9.0
    assert h == pytest.approx(0.05 * 200 ** (-1 / 9))


def test_bandwidth_rule_rejects_invalid():
    with pytest.raises(ConfigError):
        bandwidth_rule("h1", 0.0, 200, 1, 2, 2)
    with pytest.raises(ConfigError):
        bandwidth_rule("h1", 0.05, 200, 1, 2, 2, exponent=-1)
    with pytest.raises(ConfigError):
        rate_exponent("h3", 1, 2, 2, default_orders(1, 2, 2))


def test_rate_exponent_delta():
    orders = default_orders(1, 2, 2)
    assert rate_exponent("h1", 1, 2, 2, orders, 0.5) == 8.5
    assert rate_exponent("h2", 1, 2, 2, orders, 0.5) == 4.5
    assert rate_exponent("h4", 1, 2, 2, orders, 0.25) == 4.25


def test_conditions_at_rule_exponents_are_boundary():
    """δ=0 규칙 지수에서는 한쪽 극한이 경계 (n⁰)"""
    orders = default_orders(1, 2, 2)
    exponents = {role: rate_exponent(role, 1, 2, 2, orders) for role in ("h1", "h2", "h4")}
    statuses = {(s.condition, s.expression): s for s in check_conditions(exponents, 1, 2, 2, orders)}
    assert statuses[("A1", "n·h1^k → ∞")].status == "holds"
    assert statuses[("A1", "n·h1^(2s1+k) → 0")].status == "boundary"
    assert statuses[("A3", "log n/(n·h2^(p+s2)) → 0")].status == "boundary"
    assert statuses[("A6", "log n/(n·h4^(r+s4)) → 0")].status == "boundary"
    assert statuses[("A4", "h2^(2s2)·h1^(-2s2-k) → 0")].status == "holds"


def test_conditions_with_delta_hold():
    orders = default_orders(1, 2, 2)
    exponents = {"h1": rate_exponent("h1", 1, 2, 2, orders, 0.5)}
    statuses = check_conditions(exponents, 1, 2, 2, orders)
    assert [s.status for s in statuses] == ["holds", "holds"]


def test_conditions_detect_failure():
    orders = default_orders(1, 2, 2)
    # h1 가 너무 느리게 줄어 편향 조건 실패
    statuses = check_conditions({"h1": 20.0}, 1, 2, 2, orders)
    assert statuses[1].status == "fails"
    assert statuses[1].exponent > 0


# ---- 요약 통계 ----

def test_summarize_single_replication():
    sd, bias, mse = summarize(np.array([0.7]))
    assert sd == 0.0
    assert bias == pytest.approx(0.7)
    assert mse == pytest.approx(0.49)


def test_summarize_mse_identity():
    """MSE = SD²·(R−1)/R + BIAS²"""
    T = np.random.default_rng(0).normal(0.3, 1.2, 57)
    sd, bias, mse = summarize(T)
    R = T.shape[0]
    assert abs(mse - (sd ** 2 * (R - 1) / R + bias ** 2)) < 1e-10
    assert sd == pytest.approx(np.std(T, ddof=1))


# ---- 반복 실행 ----

def test_replication_worker_returns_scaled_deviation():
    """T = √(n h₁)(τ̂ − τ), 같은 난수열의 곡선에서 계산한 값과 일치"""
    config = _small_config(estimators=("OR", "NR"))
    rep, values, reason = _replication_worker((config, 2))
    assert rep == 2 and reason is None
    assert set(values) == {"OR", "NR"}
    assert values["OR"].shape == (5,)
    assert np.all(np.isfinite(values["NR"]))

    data, oracle = generate_model(1, config.n, replication_stream(config.seed, 2))
    curves = run_estimators(config, data, oracle)
    truth = np.array([true_tau(1, x) for x in config.grid])
    for est, curve in curves.items():
        assert curve.n == config.n and curve.k == 1
        expected = np.sqrt(config.n * config.plan.h1) * (curve.estimates - truth)
        assert np.array_equal(values[est], curve.scaled_deviation(truth))
        assert np.allclose(values[est], expected, rtol=1e-14, atol=0)


def test_run_replications_report_layout():
    config = _small_config()
    report = run_replications(config)
    assert report.dropped == 0
    assert report.replications == 4
    assert len(report.rows) == 8 * 5
    assert report.estimators == ["ORCATE", "PRCATE", "SRCATE", "NRCATE", "OCATE", "PCATE", "SCATE", "NCATE"]
    assert report.grid == list(GRID)
    cell = report.cell("OR", 0.0)
    assert cell.estimator == "ORCATE"
    assert cell.replications == 4
    assert report.config["model"] == "1"


def test_run_replications_independent_of_worker_count():
    """작업자 수와 무관하게 같은 보고서"""
    serial = run_replications(_small_config(model=3, workers=1))
    parallel = run_replications(_small_config(model=3, workers=2))
    for a, b in zip(serial.rows, parallel.rows):
        assert (a.estimator, a.x1) == (b.estimator, b.x1)
        assert (a.sd, a.bias, a.mse) == (b.sd, b.bias, b.mse)


@pytest.mark.parametrize("name", ["model1_panel1.yaml", "model2_panel1.yaml", "model3_panel1.yaml"])
def test_panel_configs_drop_nothing(name):
    config = _panel_config(name, replications=10, workers=1)
    report = run_replications(config)
    assert report.dropped == 0, report.drop_reasons


def test_simulation_engine_run_and_stats():
    """엔진 실행 결과가 run_replications 와 같고 통계가 채워진다"""
    engine = SimulationEngine(_small_config(estimators=("OR", "P")))
    report = engine.run()
    assert engine.stats["replications"] == 4
    assert engine.stats["kept"] == report.replications == 4
    assert engine.stats["dropped"] == report.dropped == 0
    assert engine.stats["elapsed"] >= 0.0
    again = run_replications(_small_config(estimators=("OR", "P")))
    assert [(r.sd, r.bias, r.mse) for r in report.rows] == [(r.sd, r.bias, r.mse) for r in again.rows]


def test_simulation_engine_validates_config():
    with pytest.raises(ConfigError):
        SimulationEngine(_small_config(replications=0))


def test_simulation_engine_check_dropped():
    engine = SimulationEngine(_small_config(replications=10, max_dropped_fraction=0.1))
    engine.check_dropped(SimReport(model=1, rows=[], replications=9, dropped=1))
    with pytest.raises(DegenerateMass):
        engine.check_dropped(SimReport(model=1, rows=[], replications=8, dropped=2))


def test_theoretical_profiles_rows():
    config = _small_config(mc_draws=10_000)
    rows = theoretical_profiles(config)
    assert len(rows) == 5 * 8
    o_rows = [r for r in rows if r["kind"] == "O"]
    assert [r["x1"] for r in o_rows] == list(GRID)
    for row in o_rows:
        assert row["asy_sd"] == pytest.approx(np.sqrt(row["k1_norm_sq"] * row["sigma_sq"]))
    assert rows[0]["k1_norm_sq"] == pytest.approx(27.0 / (32.0 * np.sqrt(np.pi)))


# ---- 전체 반복 (느림) ----

@pytest.fixture(scope="module")
def model1_panel1_report():
    workers = int(os.getenv("CATE_WORKERS", "1"))
    return run_replications(_panel_config("model1_panel1.yaml", workers=workers))


@pytest.mark.slow
@pytest.mark.parametrize("estimator", ["ORCATE", "PRCATE"])
def test_model1_panel1_reproduces_table(model1_panel1_report, estimator):
    """R=500 에서 OR/PR 의 SD 가 표와 0.04 이내, |BIAS| ≤ 0.06"""
    for x, expected in zip(GRID, TABLE_SD[estimator]):
        row = model1_panel1_report.cell(estimator, x)
        assert abs(row.sd - expected) <= 0.04, (x, row.sd, expected)
        assert abs(row.bias) <= 0.06, (x, row.bias)


@pytest.mark.slow
def test_model1_panel1_efficiency_gaps(model1_panel1_report):
    """회귀 기반 추정량이 대응 IPW 추정량보다 뚜렷이 효율적"""
    report = model1_panel1_report
    assert report.dropped == 0
    for x in GRID:
        assert report.cell("NR", x).sd <= 0.75 * report.cell("N", x).sd
        assert report.cell("OR", x).sd <= 0.65 * report.cell("O", x).sd


@pytest.mark.slow
def test_model2_panel1_efficiency_gaps():
    workers = int(os.getenv("CATE_WORKERS", "1"))
    report = run_replications(_panel_config("model2_panel1.yaml", workers=workers))
    for x in GRID:
        assert report.cell("NR", x).sd <= 0.75 * report.cell("N", x).sd
        assert report.cell("OR", x).sd <= 0.65 * report.cell("O", x).sd


@pytest.mark.slow
def test_model3_regression_estimators_share_distribution(tmp_path):
    """모형 3 (X₁ 이 지수에 포함되지 않음): n=500 에서 네 회귀 추정량 SD 비 ≤ 1.15"""
    raw = load_yaml(os.path.join(HERE, "config", "model3_panel1.yaml"))
    raw["simulation"]["n"] = 500
    raw["simulation"]["estimators"] = ["OR", "PR", "SR", "NR"]
    path = tmp_path / "model3_n500.yaml"
    path.write_text(yaml.safe_dump(raw), encoding="utf-8")
    config = load_sim_config(str(path), load_defaults(os.path.join(HERE, "config", "defaults.yaml")))
    config.workers = int(os.getenv("CATE_WORKERS", "1"))
    report = run_replications(config)
    for x in GRID:
        sds = [report.cell(est, x).sd for est in ("OR", "PR", "SR", "NR")]
        assert max(sds) / min(sds) <= 1.15, (x, sds)
